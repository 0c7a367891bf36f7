#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "pgnas/autodiff.hpp"
#include "pgnas/checkpoint.hpp"
#include "pgnas/errors.hpp"
#include "pgnas/nn_ops.hpp"
#include "pgnas/rng.hpp"
#include "pgnas/search_space.hpp"
#include "pgnas/tensor.hpp"

namespace pgnas {

struct InitConfig {
    double p_init = 0.9;
    double weight_scale = 1.0;     // multiplies the fan-in bound
    bool per_channel_keep = false; // one keep logit per slice instead of per (layer, size) group
};

// The one-shot model: deterministic kernel weights plus keep-probability
// logits, one logit per (layer, kernel size) group by default. Keep
// probabilities live as logits so p stays strictly inside (0,1) and its
// gradients stay finite.
class SuperNet {
  public:
    static SuperNet build(const SearchSpaceSpec& spec, uint64_t seed, const InitConfig& init) {
        spec.validate();
        if (!(init.p_init > 0.0 && init.p_init < 1.0)) {
            throw ConfigError("p_init must lie strictly in (0,1), got " + double_to_text(init.p_init));
        }
        if (!(init.weight_scale > 0.0)) throw ConfigError("weight_scale must be positive");
        SuperNet net;
        net.spec_ = spec;
        net.init_ = init;
        net.seed_ = seed;
        const double rho0 = nn::logit(init.p_init);
        for (size_t l = 0; l < spec.layers.size(); ++l) {
            const LayerSpec& ls = spec.layers[l];
            for (int s : ls.kernel_sizes) {
                const int fan_in = ls.in_channels * s * s;
                const double bound = init.weight_scale * std::sqrt(3.0 / fan_in);
                CounterRng rng(seed, "init/kernel/l" + std::to_string(l) + "/s" + std::to_string(s));
                Tensor k({ls.in_channels, ls.out_channels, s, s});
                for (double& v : k.values()) v = bound * (2.0 * rng.uniform() - 1.0);
                net.kernels_.push_back(std::move(k));
                net.keep_logits_.push_back(init.per_channel_keep
                                               ? Tensor::full({ls.in_channels}, rho0)
                                               : Tensor::scalar(rho0));
            }
        }
        const int h_last = spec.layers.back().out_channels;
        const double head_bound = init.weight_scale * std::sqrt(3.0 / h_last);
        CounterRng head_rng(seed, "init/head");
        net.head_w_ = Tensor({h_last, spec.num_classes});
        for (double& v : net.head_w_.values()) v = head_bound * (2.0 * head_rng.uniform() - 1.0);
        net.head_b_ = Tensor({spec.num_classes});
        return net;
    }

    const SearchSpaceSpec& space() const { return spec_; }
    const InitConfig& init_config() const { return init_; }
    uint64_t seed() const { return seed_; }
    bool per_channel_keep() const { return init_.per_channel_keep; }

    int num_groups() const { return static_cast<int>(kernels_.size()); }
    Tensor& kernel(int gi) { return kernels_[static_cast<size_t>(gi)]; }
    const Tensor& kernel(int gi) const { return kernels_[static_cast<size_t>(gi)]; }
    Tensor& keep_logits(int gi) { return keep_logits_[static_cast<size_t>(gi)]; }
    const Tensor& keep_logits(int gi) const { return keep_logits_[static_cast<size_t>(gi)]; }
    Tensor& head_weight() { return head_w_; }
    const Tensor& head_weight() const { return head_w_; }
    Tensor& head_bias() { return head_b_; }
    const Tensor& head_bias() const { return head_b_; }

    // Clamped away from the boundary: the float sigmoid saturates to exactly
    // 0/1 past |rho| ~ 37, which would break logit(p) in the samplers.
    double keep_prob(int gi, int k) const {
        const Tensor& rho = keep_logits_[static_cast<size_t>(gi)];
        const double p = nn::sigmoid(rho[rho.numel() == 1 ? 0 : static_cast<size_t>(k)]);
        return std::min(1.0 - 1e-12, std::max(1e-12, p));
    }

    // Keep probability per slice in canonical order.
    std::vector<double> keep_probs_per_slice() const {
        std::vector<double> p;
        p.reserve(static_cast<size_t>(spec_.total_slices()));
        for (int g = 0; g < num_groups(); ++g) {
            for (int k = 0; k < spec_.group_channels(g); ++k) p.push_back(keep_prob(g, k));
        }
        return p;
    }

    // Sum over slices of p * (out_channels * s * s) plus the head.
    double expected_param_count() const {
        double n = static_cast<double>(spec_.head_param_count());
        for (int g = 0; g < num_groups(); ++g) {
            const int l = spec_.group_layer(g);
            const int s = spec_.group_kernel_size(g);
            const double slice = static_cast<double>(spec_.layers[static_cast<size_t>(l)].out_channels) * s * s;
            for (int k = 0; k < spec_.group_channels(g); ++k) n += keep_prob(g, k) * slice;
        }
        return n;
    }

    // ---- forward ----------------------------------------------------------

    // Masked inference without a tape. Each kernel slice is scaled by its
    // mask value before convolution; parallel kernel-size branches are summed.
    Tensor forward_masked(const Tensor& batch, const MaskSample& mask) const {
        check_mask(mask);
        Tensor x = batch;
        int gi = 0;
        size_t off = 0;
        for (const LayerSpec& ls : spec_.layers) {
            Tensor out;
            for (size_t b = 0; b < ls.kernel_sizes.size(); ++b, ++gi) {
                const int s = ls.kernel_sizes[b];
                Tensor m({ls.in_channels});
                for (int k = 0; k < ls.in_channels; ++k) m[static_cast<size_t>(k)] = mask.values[off++];
                Tensor masked = nn::mask_mul_forward(kernels_[static_cast<size_t>(gi)], m);
                Tensor y = nn::conv2d_forward(x, masked, 1, (s - 1) / 2);
                if (out.empty()) {
                    out = std::move(y);
                } else {
                    for (size_t i = 0; i < out.numel(); ++i) out[i] += y[i];
                }
            }
            x = ls.activation == "relu" ? nn::relu_forward(out) : std::move(out);
        }
        return nn::dense_forward(nn::global_avg_pool_forward(x), head_w_, head_b_);
    }

    // ---- autodiff wiring ----------------------------------------------------

    struct GraphNodes {
        std::vector<Graph::NodeId> kernels;
        std::vector<Graph::NodeId> rhos;
        Graph::NodeId head_w = -1;
        Graph::NodeId head_b = -1;
    };

    // Registers every trainable tensor on the graph under its canonical name.
    GraphNodes register_params(Graph& g) const {
        GraphNodes n;
        for (int gi = 0; gi < num_groups(); ++gi) {
            n.kernels.push_back(g.param(kernel_name(gi), kernels_[static_cast<size_t>(gi)]));
            n.rhos.push_back(g.param(rho_name(gi), keep_logits_[static_cast<size_t>(gi)]));
        }
        n.head_w = g.param("head/weight", head_w_);
        n.head_b = g.param("head/bias", head_b_);
        return n;
    }

    // Masked forward on the tape. group_masks holds one node per group with a
    // mask vector of length in_channels (relaxed samples or hard constants).
    Graph::NodeId forward_on_graph(Graph& g, const GraphNodes& nodes, Graph::NodeId x,
                                   const std::vector<Graph::NodeId>& group_masks) const {
        if (group_masks.size() != kernels_.size()) {
            throw ShapeError("expected " + std::to_string(kernels_.size()) + " group masks, got " +
                             std::to_string(group_masks.size()));
        }
        int gi = 0;
        for (const LayerSpec& ls : spec_.layers) {
            Graph::NodeId out = -1;
            for (size_t b = 0; b < ls.kernel_sizes.size(); ++b, ++gi) {
                const int s = ls.kernel_sizes[b];
                Graph::NodeId masked = g.mask_mul(nodes.kernels[static_cast<size_t>(gi)],
                                                  group_masks[static_cast<size_t>(gi)]);
                Graph::NodeId y = g.conv2d(x, masked, 1, (s - 1) / 2);
                out = out < 0 ? y : g.add(out, y);
            }
            x = ls.activation == "relu" ? g.relu(out) : out;
        }
        return g.dense(g.global_avg_pool(x), nodes.head_w, nodes.head_b);
    }

    std::string kernel_name(int gi) const {
        return "kernel/l" + std::to_string(spec_.group_layer(gi)) + "/s" +
               std::to_string(spec_.group_kernel_size(gi));
    }
    std::string rho_name(int gi) const {
        return "rho/l" + std::to_string(spec_.group_layer(gi)) + "/s" +
               std::to_string(spec_.group_kernel_size(gi));
    }

    // Applies a parameter update produced under the names of register_params.
    template <typename Fn>  // Fn: (const std::string& name, Tensor& value)
    void for_each_param(Fn&& fn) {
        for (int gi = 0; gi < num_groups(); ++gi) {
            fn(kernel_name(gi), kernels_[static_cast<size_t>(gi)]);
            fn(rho_name(gi), keep_logits_[static_cast<size_t>(gi)]);
        }
        fn(std::string("head/weight"), head_w_);
        fn(std::string("head/bias"), head_b_);
    }

    // Digest over all trainable state; search must leave it unchanged.
    uint64_t weights_digest() const {
        uint64_t h = 0xcbf29ce484222325ull;
        for (const Tensor& t : kernels_) h = t.digest(h);
        for (const Tensor& t : keep_logits_) h = t.digest(h);
        h = head_w_.digest(h);
        return head_b_.digest(h);
    }

    // ---- checkpoint ---------------------------------------------------------

    CheckpointData to_checkpoint() const {
        CheckpointData ck;
        ck.space_digest = spec_.digest();
        for (int gi = 0; gi < num_groups(); ++gi) {
            ck.tensors.emplace_back(kernel_name(gi), kernels_[static_cast<size_t>(gi)]);
        }
        ck.tensors.emplace_back("head/weight", head_w_);
        ck.tensors.emplace_back("head/bias", head_b_);
        for (int gi = 0; gi < num_groups(); ++gi) {
            const Tensor& rho = keep_logits_[static_cast<size_t>(gi)];
            if (rho.numel() == 1) {
                ck.keep_logits.emplace_back(rho_name(gi), rho[0]);
            } else {
                for (size_t k = 0; k < rho.numel(); ++k) {
                    ck.keep_logits.emplace_back(rho_name(gi) + "/k" + std::to_string(k), rho[k]);
                }
            }
        }
        ck.aux.emplace_back("net/seed", seed_);
        ck.aux.emplace_back("net/per_channel_keep", init_.per_channel_keep ? 1 : 0);
        return ck;
    }

    static SuperNet from_checkpoint(const SearchSpaceSpec& spec, const CheckpointData& ck) {
        spec.validate();
        if (ck.space_digest != spec.digest()) {
            throw DataError("checkpoint space digest " + hex64(ck.space_digest) +
                            " does not match spec digest " + hex64(spec.digest()));
        }
        SuperNet net;
        net.spec_ = spec;
        net.init_.per_channel_keep = ck.find_aux("net/per_channel_keep") &&
                                     *ck.find_aux("net/per_channel_keep") != 0;
        if (const uint64_t* s = ck.find_aux("net/seed")) net.seed_ = *s;
        for (size_t l = 0; l < spec.layers.size(); ++l) {
            const LayerSpec& ls = spec.layers[l];
            for (int s : ls.kernel_sizes) {
                const std::string kname = "kernel/l" + std::to_string(l) + "/s" + std::to_string(s);
                const Tensor* k = ck.find_tensor(kname);
                if (!k) throw DataError("checkpoint missing tensor '" + kname + "'");
                const std::vector<int> want = {ls.in_channels, ls.out_channels, s, s};
                if (k->shape() != want) {
                    throw DataError("checkpoint tensor '" + kname + "' has shape " + k->shape_str() +
                                    ", expected " + Tensor::shape_text(want));
                }
                net.kernels_.push_back(*k);
                const std::string rname = "rho/l" + std::to_string(l) + "/s" + std::to_string(s);
                if (const double* rho = ck.find_keep_logit(rname)) {
                    net.keep_logits_.push_back(Tensor::scalar(*rho));
                } else {
                    Tensor rhos({ls.in_channels});
                    for (int k2 = 0; k2 < ls.in_channels; ++k2) {
                        const double* v = ck.find_keep_logit(rname + "/k" + std::to_string(k2));
                        if (!v) throw DataError("checkpoint missing keep logit '" + rname + "'");
                        rhos[static_cast<size_t>(k2)] = *v;
                    }
                    net.keep_logits_.push_back(std::move(rhos));
                }
            }
        }
        const Tensor* hw = ck.find_tensor("head/weight");
        const Tensor* hb = ck.find_tensor("head/bias");
        if (!hw || !hb) throw DataError("checkpoint missing head tensors");
        net.head_w_ = *hw;
        net.head_b_ = *hb;
        return net;
    }

  private:
    void check_mask(const MaskSample& mask) const {
        if (static_cast<int>(mask.values.size()) != spec_.total_slices()) {
            throw ShapeError("mask has " + std::to_string(mask.values.size()) + " values, space has " +
                             std::to_string(spec_.total_slices()) + " slices");
        }
    }

    SearchSpaceSpec spec_;
    InitConfig init_;
    uint64_t seed_ = 0;
    std::vector<Tensor> kernels_;      // per group: [in_channels x out_channels x s x s]
    std::vector<Tensor> keep_logits_;  // per group: {1} shared or {in_channels}
    Tensor head_w_, head_b_;
};

// Standalone sub-network holding only the active slices, weights copied
// verbatim. Evaluation needs no trainable state.
class PrunedNet {
  public:
    PrunedNet(const SuperNet& net, const Architecture& arch) {
        const SearchSpaceSpec& spec = net.space();
        if (static_cast<int>(arch.active.size()) != spec.total_slices()) {
            throw ShapeError("architecture does not match the search space");
        }
        if (arch.active_count() == 0) throw ConfigError("cannot prune an empty architecture");
        spec_ = spec;
        param_count_ = arch.count_params(spec);
        int gi = 0;
        int off = 0;
        for (const LayerSpec& ls : spec.layers) {
            Layer layer;
            layer.activation = ls.activation;
            layer.out_channels = ls.out_channels;
            for (int s : ls.kernel_sizes) {
                Branch br;
                br.kernel_size = s;
                for (int k = 0; k < ls.in_channels; ++k) {
                    if (arch.active[static_cast<size_t>(off + k)]) br.channels.push_back(k);
                }
                if (!br.channels.empty()) {
                    const Tensor& full = net.kernel(gi);
                    br.kernel = Tensor({static_cast<int>(br.channels.size()), ls.out_channels, s, s});
                    const size_t row = full.numel() / static_cast<size_t>(ls.in_channels);
                    for (size_t a = 0; a < br.channels.size(); ++a) {
                        const double* src = full.data() + static_cast<size_t>(br.channels[a]) * row;
                        std::copy(src, src + row, br.kernel.data() + a * row);
                    }
                    layer.branches.push_back(std::move(br));
                }
                ++gi;
                off += ls.in_channels;
            }
            layers_.push_back(std::move(layer));
        }
        head_w_ = net.head_weight();
        head_b_ = net.head_bias();
    }

    Tensor forward(const Tensor& batch) const {
        Tensor x = batch;
        const int bsz = batch.dim(0);
        for (const Layer& layer : layers_) {
            const int oh = x.dim(2), ow = x.dim(3);  // stride 1, same padding
            Tensor out({bsz, layer.out_channels, oh, ow});
            for (const Branch& br : layer.branches) {
                Tensor gathered = gather_channels(x, br.channels);
                Tensor y = nn::conv2d_forward(gathered, br.kernel, 1, (br.kernel_size - 1) / 2);
                for (size_t i = 0; i < out.numel(); ++i) out[i] += y[i];
            }
            x = layer.activation == "relu" ? nn::relu_forward(out) : std::move(out);
        }
        return nn::dense_forward(nn::global_avg_pool_forward(x), head_w_, head_b_);
    }

    int64_t param_count() const { return param_count_; }

  private:
    struct Branch {
        int kernel_size = 0;
        std::vector<int> channels;  // source input channels, ascending
        Tensor kernel;              // [active x out_channels x s x s]
    };
    struct Layer {
        std::vector<Branch> branches;
        std::string activation;
        int out_channels = 0;
    };

    static Tensor gather_channels(const Tensor& x, const std::vector<int>& channels) {
        const int bsz = x.dim(0), h = x.dim(2), w = x.dim(3);
        Tensor out({bsz, static_cast<int>(channels.size()), h, w});
        const size_t plane = static_cast<size_t>(h) * w;
        for (int b = 0; b < bsz; ++b) {
            for (size_t c = 0; c < channels.size(); ++c) {
                const double* src = x.data() + (static_cast<size_t>(b) * x.dim(1) +
                                                static_cast<size_t>(channels[c])) *
                                                   plane;
                double* dst = out.data() + (static_cast<size_t>(b) * channels.size() + c) * plane;
                std::copy(src, src + plane, dst);
            }
        }
        return out;
    }

    SearchSpaceSpec spec_;
    std::vector<Layer> layers_;
    Tensor head_w_, head_b_;
    int64_t param_count_ = 0;
};

inline PrunedNet prune(const SuperNet& net, const Architecture& arch) { return PrunedNet(net, arch); }

}  // namespace pgnas
