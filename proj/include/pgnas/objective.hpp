#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pgnas/autodiff.hpp"
#include "pgnas/errors.hpp"
#include "pgnas/nn_ops.hpp"
#include "pgnas/sampler.hpp"
#include "pgnas/supernet.hpp"

namespace pgnas {

// Spike-and-slab prior configuration. The architecture-drop prior is pinned
// at zero (the prior architecture is the whole super-network); only the
// Gaussian length scale d and the training-set size N vary.
struct PriorConfig {
    double length_scale = 1.0;                           // d, shared default
    std::map<std::string, double> length_scale_overrides;  // key "l<layer>/s<size>"
    double architecture_drop_prior = 0.0;                // u, must stay 0
    int64_t dataset_size = 1;                            // N

    enum class EntropyVariant { as_printed, full_bernoulli };
    EntropyVariant entropy = EntropyVariant::as_printed;

    void validate() const {
        if (!(length_scale > 0.0)) throw ConfigError("prior length scale must be positive");
        for (const auto& [k, v] : length_scale_overrides) {
            if (!(v > 0.0)) throw ConfigError("prior length scale override '" + k + "' must be positive");
        }
        if (architecture_drop_prior != 0.0) {
            throw ConfigError("architecture drop prior u must be 0");
        }
        if (dataset_size < 1) throw ConfigError("dataset_size must be >= 1");
    }

    double d_for(int layer, int kernel_size) const {
        auto it = length_scale_overrides.find("l" + std::to_string(layer) + "/s" +
                                              std::to_string(kernel_size));
        return it == length_scale_overrides.end() ? length_scale : it->second;
    }
};

struct LossBreakdown {
    double data_nll = 0.0;
    double entropy_term = 0.0;
    double adaptive_l2 = 0.0;
    double total = 0.0;
};

namespace objective {

inline void check_finite(double v, const char* term) {
    if (!std::isfinite(v)) {
        throw NumericError(std::string("loss term '") + term + "' is not finite");
    }
}

inline Tensor slice_example(const Tensor& x, int i) {
    std::vector<int> shape = x.shape();
    shape[0] = 1;
    const size_t stride = x.numel() / static_cast<size_t>(x.dim(0));
    std::vector<double> v(x.data() + static_cast<size_t>(i) * stride,
                          x.data() + (static_cast<size_t>(i) + 1) * stride);
    return Tensor(std::move(shape), std::move(v));
}

// ---- no-tape evaluations ---------------------------------------------------

// Mean cross entropy over the minibatch, one mask per example.
inline double data_nll(const SuperNet& net, const Tensor& x, const std::vector<int>& labels,
                       const std::vector<MaskSample>& masks) {
    const int bsz = x.dim(0);
    if (masks.size() != 1 && static_cast<int>(masks.size()) != bsz) {
        throw ShapeError("need 1 or " + std::to_string(bsz) + " masks, got " +
                         std::to_string(masks.size()));
    }
    if (masks.size() == 1) {
        Tensor logits = net.forward_masked(x, masks[0]);
        return nn::softmax_cross_entropy_forward(logits, labels);
    }
    double acc = 0.0;
    for (int i = 0; i < bsz; ++i) {
        Tensor xi = slice_example(x, i);
        Tensor logits = net.forward_masked(xi, masks[static_cast<size_t>(i)]);
        acc += nn::softmax_cross_entropy_forward(logits, {labels[static_cast<size_t>(i)]});
    }
    return acc / bsz;
}

inline double group_entropy_sum(const SuperNet& net, int gi, PriorConfig::EntropyVariant variant) {
    const SearchSpaceSpec& spec = net.space();
    const Tensor& rho = net.keep_logits(gi);
    const bool shared = rho.numel() == 1;
    const double kfac = shared ? static_cast<double>(spec.group_channels(gi)) : 1.0;
    double acc = 0.0;
    for (size_t i = 0; i < rho.numel(); ++i) {
        const double p = (1.0 - 2e-12) * nn::sigmoid(rho[i]) + 1e-12;  // matches entropy_node
        const double q = 1.0 - p;
        const double inner = variant == PriorConfig::EntropyVariant::as_printed
                                 ? p * std::log(p)
                                 : -(p * std::log(p) + q * std::log(q));
        acc += kfac * inner;
    }
    return acc;
}

// -(1/N) sum over groups of k_l^s * p log p (the printed form), or with the
// full Bernoulli entropy substituted for p log p when configured.
inline double entropy_term(const SuperNet& net, const PriorConfig& prior) {
    double h = 0.0;
    for (int gi = 0; gi < net.num_groups(); ++gi) {
        h += group_entropy_sum(net, gi, prior.entropy);
    }
    return -h / static_cast<double>(prior.dataset_size);
}

// sum over slices of d^2 (1 - p) / (2N) * ||m||^2. The (1 - p) factor couples
// weight decay to architecture selection; gradients reach both m and rho.
inline double adaptive_l2(const SuperNet& net, const PriorConfig& prior) {
    const SearchSpaceSpec& spec = net.space();
    const double n2 = 2.0 * static_cast<double>(prior.dataset_size);
    double acc = 0.0;
    for (int gi = 0; gi < net.num_groups(); ++gi) {
        const double d = prior.d_for(spec.group_layer(gi), spec.group_kernel_size(gi));
        const Tensor& kernel = net.kernel(gi);
        const Tensor& rho = net.keep_logits(gi);
        const int rows = kernel.dim(0);
        const size_t block = kernel.numel() / static_cast<size_t>(rows);
        for (int k = 0; k < rows; ++k) {
            const double p = nn::sigmoid(rho[rho.numel() == 1 ? 0 : static_cast<size_t>(k)]);
            const double* w = kernel.data() + static_cast<size_t>(k) * block;
            double sq = 0.0;
            for (size_t i = 0; i < block; ++i) sq += w[i] * w[i];
            acc += d * d * (1.0 - p) / n2 * sq;
        }
    }
    return acc;
}

inline LossBreakdown total_loss(const SuperNet& net, const Tensor& x,
                                const std::vector<int>& labels,
                                const std::vector<MaskSample>& masks, const PriorConfig& prior) {
    prior.validate();
    LossBreakdown lb;
    lb.data_nll = data_nll(net, x, labels, masks);
    lb.entropy_term = entropy_term(net, prior);
    lb.adaptive_l2 = adaptive_l2(net, prior);
    check_finite(lb.data_nll, "data_nll");
    check_finite(lb.entropy_term, "entropy_term");
    check_finite(lb.adaptive_l2, "adaptive_l2");
    lb.total = lb.data_nll + lb.entropy_term + lb.adaptive_l2;
    return lb;
}

// ---- tape construction -------------------------------------------------------

struct LossNodes {
    Graph::NodeId data_nll = -1;
    Graph::NodeId entropy_term = -1;
    Graph::NodeId adaptive_l2 = -1;
    Graph::NodeId total = -1;
};

// Group mask nodes for one relaxed sample: eps = sigmoid((rho + noise)/tau),
// differentiable w.r.t. rho through the pathwise rule.
inline std::vector<Graph::NodeId> mask_nodes(Graph& g, const SuperNet& net,
                                             const SuperNet::GraphNodes& nodes,
                                             const MaskSample& mask) {
    if (mask.is_hard()) throw NumericError("training masks must be relaxed samples");
    const SearchSpaceSpec& spec = net.space();
    std::vector<Graph::NodeId> eps;
    eps.reserve(static_cast<size_t>(net.num_groups()));
    for (int gi = 0; gi < net.num_groups(); ++gi) {
        const int off = spec.group_slice_offset(gi);
        const int kc = spec.group_channels(gi);
        Tensor noise({kc});
        for (int k = 0; k < kc; ++k) {
            noise[static_cast<size_t>(k)] = mask.logit_noise[static_cast<size_t>(off + k)];
        }
        eps.push_back(g.binary_concrete(nodes.rhos[static_cast<size_t>(gi)], std::move(noise), mask.tau));
    }
    return eps;
}

inline Graph::NodeId data_nll_node(Graph& g, const SuperNet& net,
                                   const SuperNet::GraphNodes& nodes, const Tensor& x,
                                   const std::vector<int>& labels,
                                   const std::vector<MaskSample>& masks) {
    const int bsz = x.dim(0);
    if (masks.size() == 1) {
        Graph::NodeId logits =
            net.forward_on_graph(g, nodes, g.constant(x), mask_nodes(g, net, nodes, masks[0]));
        return g.softmax_cross_entropy(logits, labels);
    }
    if (static_cast<int>(masks.size()) != bsz) {
        throw ShapeError("need 1 or " + std::to_string(bsz) + " masks, got " +
                         std::to_string(masks.size()));
    }
    Graph::NodeId acc = -1;
    for (int i = 0; i < bsz; ++i) {
        Graph::NodeId logits = net.forward_on_graph(
            g, nodes, g.constant(slice_example(x, i)),
            mask_nodes(g, net, nodes, masks[static_cast<size_t>(i)]));
        Graph::NodeId li = g.softmax_cross_entropy(logits, {labels[static_cast<size_t>(i)]});
        acc = acc < 0 ? li : g.add(acc, li);
    }
    return g.affine(acc, 1.0 / bsz, 0.0);
}

inline Graph::NodeId entropy_node(Graph& g, const SuperNet& net,
                                  const SuperNet::GraphNodes& nodes, const PriorConfig& prior) {
    const SearchSpaceSpec& spec = net.space();
    Graph::NodeId h = -1;
    for (int gi = 0; gi < net.num_groups(); ++gi) {
        // nudged off [0,1] so log stays defined when the sigmoid saturates
        Graph::NodeId p = g.affine(g.sigmoid(nodes.rhos[static_cast<size_t>(gi)]),
                                   1.0 - 2e-12, 1e-12);
        const bool shared = g.value(p).numel() == 1;
        const double kfac = shared ? static_cast<double>(spec.group_channels(gi)) : 1.0;
        Graph::NodeId inner;
        if (prior.entropy == PriorConfig::EntropyVariant::as_printed) {
            inner = g.affine(g.sum(g.mul(p, g.log(p))), kfac, 0.0);
        } else {
            Graph::NodeId q = g.affine(p, -1.0, 1.0);
            inner = g.affine(g.add(g.sum(g.mul(p, g.log(p))), g.sum(g.mul(q, g.log(q)))), -kfac, 0.0);
        }
        h = h < 0 ? inner : g.add(h, inner);
    }
    return g.affine(h, -1.0 / static_cast<double>(prior.dataset_size), 0.0);
}

inline Graph::NodeId adaptive_l2_node(Graph& g, const SuperNet& net,
                                      const SuperNet::GraphNodes& nodes,
                                      const PriorConfig& prior) {
    const SearchSpaceSpec& spec = net.space();
    const double n2 = 2.0 * static_cast<double>(prior.dataset_size);
    Graph::NodeId acc = -1;
    for (int gi = 0; gi < net.num_groups(); ++gi) {
        const double d = prior.d_for(spec.group_layer(gi), spec.group_kernel_size(gi));
        const double c = d * d / n2;
        Graph::NodeId p = g.sigmoid(nodes.rhos[static_cast<size_t>(gi)]);
        Graph::NodeId coeff = g.affine(p, -c, c);  // d^2 (1-p) / (2N)
        Graph::NodeId contrib;
        if (g.value(p).numel() == 1) {
            contrib = g.mul(coeff, g.sum_squares(nodes.kernels[static_cast<size_t>(gi)]));
        } else {
            contrib = g.sum(g.mul(coeff, g.sum_squares_rows(nodes.kernels[static_cast<size_t>(gi)])));
        }
        acc = acc < 0 ? contrib : g.add(acc, contrib);
    }
    return acc;
}

// Assembles the Monte-Carlo training objective on the tape. Returns the term
// nodes; backward on .total yields gradients for every kernel and keep logit.
// The regularizer switches exist for baseline comparisons; a disabled term
// contributes a constant zero.
inline LossNodes build_loss(Graph& g, const SuperNet& net, const SuperNet::GraphNodes& nodes,
                            const Tensor& x, const std::vector<int>& labels,
                            const std::vector<MaskSample>& masks, const PriorConfig& prior,
                            bool with_entropy = true, bool with_adaptive_l2 = true) {
    prior.validate();
    LossNodes ln;
    ln.data_nll = data_nll_node(g, net, nodes, x, labels, masks);
    ln.entropy_term = with_entropy ? entropy_node(g, net, nodes, prior)
                                   : g.constant(Tensor::scalar(0.0));
    ln.adaptive_l2 = with_adaptive_l2 ? adaptive_l2_node(g, net, nodes, prior)
                                      : g.constant(Tensor::scalar(0.0));
    ln.total = g.add(g.add(ln.data_nll, ln.entropy_term), ln.adaptive_l2);
    return ln;
}

inline LossBreakdown breakdown_of(const Graph& g, const LossNodes& ln) {
    LossBreakdown lb;
    lb.data_nll = g.value(ln.data_nll).scalar_value();
    lb.entropy_term = g.value(ln.entropy_term).scalar_value();
    lb.adaptive_l2 = g.value(ln.adaptive_l2).scalar_value();
    lb.total = g.value(ln.total).scalar_value();
    check_finite(lb.data_nll, "data_nll");
    check_finite(lb.entropy_term, "entropy_term");
    check_finite(lb.adaptive_l2, "adaptive_l2");
    return lb;
}

}  // namespace objective

}  // namespace pgnas
