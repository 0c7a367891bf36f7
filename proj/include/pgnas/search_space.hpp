#pragma once

#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "pgnas/errors.hpp"
#include "pgnas/serialize.hpp"

namespace pgnas {

struct LayerSpec {
    int in_channels = 0;
    int out_channels = 0;
    std::vector<int> kernel_sizes;   // odd, strictly increasing
    std::string activation = "relu"; // "relu" | "none"
    bool classifier_head = false;    // the head attaches after this layer; last layer only
};

// Declarative super-network topology. Every layer holds one convolution
// branch per kernel size; branch outputs are summed, so the channel count
// seen downstream is out_channels regardless of which branches survive.
// The classifier head (global average pool + dense) follows the last layer.
//
// Canonical slice order — used by masks, samplers, checkpoints and the
// enumeration bitmask alike — is (layer asc, kernel size asc, input channel asc).
struct SearchSpaceSpec {
    std::vector<LayerSpec> layers;
    int num_classes = 0;
    std::vector<int> input_shape;  // {C, H, W}

    std::vector<std::string> validate_errors() const {
        std::vector<std::string> errs;
        if (layers.empty()) errs.push_back("space: at least one layer required");
        if (num_classes < 2) errs.push_back("space: num_classes must be >= 2");
        if (input_shape.size() != 3) {
            errs.push_back("space: input_shape must be {channels, height, width}");
        } else {
            for (int d : input_shape)
                if (d <= 0) errs.push_back("space: input_shape dimensions must be positive");
        }
        for (size_t l = 0; l < layers.size(); ++l) {
            const LayerSpec& ls = layers[l];
            const std::string at = "space: layer " + std::to_string(l);
            if (ls.in_channels <= 0) errs.push_back(at + ": in_channels must be positive");
            if (ls.out_channels <= 0) errs.push_back(at + ": out_channels must be positive");
            if (ls.kernel_sizes.empty()) errs.push_back(at + ": needs at least one kernel size");
            int prev = 0;
            for (int s : ls.kernel_sizes) {
                if (s <= 0 || s % 2 == 0) errs.push_back(at + ": kernel size " + std::to_string(s) + " must be odd");
                if (s <= prev) errs.push_back(at + ": kernel sizes must be strictly increasing");
                prev = s;
            }
            if (ls.activation != "relu" && ls.activation != "none") {
                errs.push_back(at + ": unknown activation '" + ls.activation + "'");
            }
            if (ls.classifier_head && l + 1 != layers.size()) {
                errs.push_back(at + ": classifier_head flag is only valid on the last layer");
            }
            if (l == 0) {
                if (input_shape.size() == 3 && ls.in_channels != input_shape[0]) {
                    errs.push_back(at + ": in_channels " + std::to_string(ls.in_channels) +
                                   " does not match input channels " + std::to_string(input_shape[0]));
                }
            } else if (ls.in_channels != layers[l - 1].out_channels) {
                errs.push_back(at + ": in_channels " + std::to_string(ls.in_channels) +
                               " does not match previous out_channels " +
                               std::to_string(layers[l - 1].out_channels));
            }
        }
        return errs;
    }

    void validate() const {
        auto errs = validate_errors();
        if (errs.empty()) return;
        std::string all;
        for (const auto& e : errs) all += (all.empty() ? "" : "\n") + e;
        throw ConfigError(all);
    }

    // ---- group/slice bookkeeping -----------------------------------------
    // A group is one (layer, kernel size) pair and owns in_channels slices.

    int num_groups() const {
        int n = 0;
        for (const auto& l : layers) n += static_cast<int>(l.kernel_sizes.size());
        return n;
    }

    int group_layer(int gi) const { return locate(gi).first; }
    int group_kernel_size(int gi) const {
        auto [l, si] = locate(gi);
        return layers[static_cast<size_t>(l)].kernel_sizes[static_cast<size_t>(si)];
    }
    int group_channels(int gi) const {
        return layers[static_cast<size_t>(locate(gi).first)].in_channels;
    }

    int total_slices() const {
        int n = 0;
        for (const auto& l : layers) n += l.in_channels * static_cast<int>(l.kernel_sizes.size());
        return n;
    }

    int group_slice_offset(int gi) const {
        int off = 0;
        for (int g = 0; g < gi; ++g) off += group_channels(g);
        return off;
    }

    int group_index(int layer, int kernel_size) const {
        int gi = 0;
        for (size_t l = 0; l < layers.size(); ++l) {
            for (int s : layers[l].kernel_sizes) {
                if (static_cast<int>(l) == layer && s == kernel_size) return gi;
                ++gi;
            }
        }
        throw ConfigError("no group for layer " + std::to_string(layer) + " kernel size " +
                          std::to_string(kernel_size));
    }

    int64_t head_param_count() const {
        return layers.empty() ? 0
                              : static_cast<int64_t>(layers.back().out_channels) * num_classes +
                                    num_classes;
    }

    int64_t full_param_count() const {
        int64_t n = head_param_count();
        for (const auto& l : layers) {
            for (int s : l.kernel_sizes) {
                n += static_cast<int64_t>(l.in_channels) * l.out_channels * s * s;
            }
        }
        return n;
    }

    std::string canonical_text() const {
        std::ostringstream os;
        os << "space v1\n";
        os << "input";
        for (int d : input_shape) os << " " << d;
        os << "\nclasses " << num_classes << "\n";
        for (const auto& l : layers) {
            os << "layer " << l.in_channels << " " << l.out_channels << " " << l.activation
               << (l.classifier_head ? " head" : "") << " kernels";
            for (int s : l.kernel_sizes) os << " " << s;
            os << "\n";
        }
        return os.str();
    }

    uint64_t digest() const { return digest_string(canonical_text()); }

  private:
    std::pair<int, int> locate(int gi) const {  // -> (layer, size index)
        int g = gi;
        for (size_t l = 0; l < layers.size(); ++l) {
            const int ns = static_cast<int>(layers[l].kernel_sizes.size());
            if (g < ns) return {static_cast<int>(l), g};
            g -= ns;
        }
        throw ConfigError("group index " + std::to_string(gi) + " out of range");
    }
};

// One draw of the architecture mask. Relaxed draws keep their logistic noise
// so the pathwise derivative and the tau -> 0 limit can be replayed.
struct MaskSample {
    enum class Mode { relaxed, hard };
    Mode mode = Mode::hard;
    uint64_t seed = 0;
    double tau = 0.0;                 // relaxed mode only
    std::vector<double> values;       // canonical slice order
    std::vector<double> logit_noise;  // relaxed mode only

    bool is_hard() const { return mode == Mode::hard; }
};

struct Temperature {
    double tau;
    explicit Temperature(double t) : tau(t) {
        if (!(t > 0.0)) throw NumericError("temperature must be positive, got " + double_to_text(t));
    }
};

// Binary kernel-activation map in canonical slice order; the search output.
struct Architecture {
    std::vector<uint8_t> active;
    int64_t param_count = 0;

    static Architecture from_bits(const SearchSpaceSpec& spec, std::vector<uint8_t> bits) {
        if (static_cast<int>(bits.size()) != spec.total_slices()) {
            throw ConfigError("architecture has " + std::to_string(bits.size()) + " bits, space has " +
                              std::to_string(spec.total_slices()) + " slices");
        }
        Architecture a;
        a.active = std::move(bits);
        a.param_count = a.count_params(spec);
        return a;
    }

    static Architecture from_mask(const SearchSpaceSpec& spec, const MaskSample& mask) {
        if (!mask.is_hard()) throw NumericError("architecture derivation requires a hard mask");
        std::vector<uint8_t> bits(mask.values.size());
        for (size_t i = 0; i < mask.values.size(); ++i) bits[i] = mask.values[i] != 0.0 ? 1 : 0;
        return from_bits(spec, std::move(bits));
    }

    int active_count() const {
        int n = 0;
        for (uint8_t b : active) n += b;
        return n;
    }

    // Signal reaches the head iff every layer keeps at least one slice:
    // branch outputs are summed, so one live slice lights up all of a
    // layer's output channels, while a fully dropped layer emits zeros that
    // no later kernel can recover (convolutions carry no bias).
    bool feeds_head(const SearchSpaceSpec& spec) const {
        size_t off = 0;
        for (const auto& layer : spec.layers) {
            const size_t span = layer.kernel_sizes.size() * static_cast<size_t>(layer.in_channels);
            bool any = false;
            for (size_t i = 0; i < span; ++i) any = any || active[off + i] != 0;
            if (!any) return false;
            off += span;
        }
        return true;
    }

    int64_t count_params(const SearchSpaceSpec& spec) const {
        int64_t n = spec.head_param_count();
        int idx = 0;
        for (const auto& l : spec.layers) {
            for (int s : l.kernel_sizes) {
                for (int k = 0; k < l.in_channels; ++k, ++idx) {
                    if (active[static_cast<size_t>(idx)]) {
                        n += static_cast<int64_t>(l.out_channels) * s * s;
                    }
                }
            }
        }
        return n;
    }

    double dropped_channel_fraction() const {
        if (active.empty()) return 0.0;
        return 1.0 - static_cast<double>(active_count()) / static_cast<double>(active.size());
    }

    // Fraction of (layer, kernel size) groups whose slices are all inactive.
    double dropped_operation_fraction(const SearchSpaceSpec& spec) const {
        const int ng = spec.num_groups();
        if (ng == 0) return 0.0;
        int dropped = 0;
        for (int g = 0; g < ng; ++g) {
            const int off = spec.group_slice_offset(g);
            const int kc = spec.group_channels(g);
            bool any = false;
            for (int k = 0; k < kc; ++k) any = any || active[static_cast<size_t>(off + k)] != 0;
            dropped += any ? 0 : 1;
        }
        return static_cast<double>(dropped) / ng;
    }

    uint64_t digest() const {
        return digest_bytes(active.data(), active.size());
    }

    std::string to_text(const SearchSpaceSpec& spec) const {
        std::ostringstream os;
        os << "pgnas-architecture v1\n";
        os << "space_digest " << hex64(spec.digest()) << "\n";
        os << "param_count " << param_count << "\n";
        os << "active " << active_count() << "\n";
        int idx = 0;
        for (size_t l = 0; l < spec.layers.size(); ++l) {
            for (int s : spec.layers[l].kernel_sizes) {
                for (int k = 0; k < spec.layers[l].in_channels; ++k, ++idx) {
                    if (active[static_cast<size_t>(idx)]) os << l << " " << k << " " << s << "\n";
                }
            }
        }
        return os.str();
    }

    static Architecture from_text(const SearchSpaceSpec& spec, const std::string& text) {
        std::istringstream is(text);
        std::string line;
        if (!std::getline(is, line) || line != "pgnas-architecture v1") {
            throw DataError("architecture file: bad header");
        }
        std::string word, digest_hex;
        is >> word >> digest_hex;
        if (word != "space_digest") throw DataError("architecture file: missing space_digest");
        if (digest_hex != hex64(spec.digest())) {
            throw DataError("architecture file: space digest mismatch (" + digest_hex + " vs " +
                            hex64(spec.digest()) + ")");
        }
        int64_t params = 0;
        int count = 0;
        is >> word >> params;
        if (word != "param_count") throw DataError("architecture file: missing param_count");
        is >> word >> count;
        if (word != "active") throw DataError("architecture file: missing active count");
        std::vector<uint8_t> bits(static_cast<size_t>(spec.total_slices()), 0);
        for (int i = 0; i < count; ++i) {
            int l = -1, k = -1, s = -1;
            if (!(is >> l >> k >> s)) throw DataError("architecture file: truncated slice list");
            const int gi = spec.group_index(l, s);
            if (k < 0 || k >= spec.group_channels(gi)) {
                throw DataError("architecture file: channel " + std::to_string(k) +
                                " out of range in layer " + std::to_string(l));
            }
            bits[static_cast<size_t>(spec.group_slice_offset(gi) + k)] = 1;
        }
        Architecture a = from_bits(spec, std::move(bits));
        if (a.param_count != params) {
            throw DataError("architecture file: param_count " + std::to_string(params) +
                            " does not match derived " + std::to_string(a.param_count));
        }
        return a;
    }
};

}  // namespace pgnas
