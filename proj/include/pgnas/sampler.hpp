#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pgnas/errors.hpp"
#include "pgnas/nn_ops.hpp"
#include "pgnas/rng.hpp"
#include "pgnas/search_space.hpp"

namespace pgnas {

// Mask sampling. Relaxed draws use the binary-Concrete transform with
// logistic noise,
//   eps = sigmoid((logit(p) + logit(r)) / tau),   r ~ Uniform(0,1),
// one independent draw per kernel slice. Hard draws consume the same uniform
// stream and keep a slice iff r > 1 - p, so the tau -> 0 limit of a relaxed
// sample rounds to exactly the hard sample drawn from the same seed.
namespace sampler {

inline void check_probs(const std::vector<double>& p) {
    for (double v : p) {
        if (!(v > 0.0 && v < 1.0)) {
            throw NumericError("keep probability must lie strictly in (0,1), got " +
                               double_to_text(v));
        }
    }
}

// The relaxation itself, on logit scale.
inline double concrete_transform(double logit_p, double logit_r, double tau) {
    return nn::sigmoid((logit_p + logit_r) / tau);
}

inline MaskSample sample_relaxed(const std::vector<double>& p, Temperature tau, CounterRng& rng,
                                 uint64_t seed_used = 0) {
    check_probs(p);
    MaskSample m;
    m.mode = MaskSample::Mode::relaxed;
    m.seed = seed_used;
    m.tau = tau.tau;
    m.values.resize(p.size());
    m.logit_noise.resize(p.size());
    for (size_t i = 0; i < p.size(); ++i) {
        const double noise = nn::logit(rng.uniform());
        m.logit_noise[i] = noise;
        m.values[i] = concrete_transform(nn::logit(p[i]), noise, tau.tau);
    }
    return m;
}

inline MaskSample sample_hard(const std::vector<double>& p, CounterRng& rng,
                              uint64_t seed_used = 0) {
    check_probs(p);
    MaskSample m;
    m.mode = MaskSample::Mode::hard;
    m.seed = seed_used;
    m.values.resize(p.size());
    for (size_t i = 0; i < p.size(); ++i) {
        m.values[i] = rng.uniform() > 1.0 - p[i] ? 1.0 : 0.0;
    }
    return m;
}

// Pathwise derivative d eps / d logit(p) at the stored noise: eps(1-eps)/tau.
inline std::vector<double> pathwise_grad(const MaskSample& relaxed, Temperature tau) {
    if (relaxed.is_hard()) {
        throw NumericError("pathwise gradient is undefined for hard masks");
    }
    std::vector<double> g(relaxed.values.size());
    for (size_t i = 0; i < g.size(); ++i) {
        const double e = relaxed.values[i];
        g[i] = e * (1.0 - e) / tau.tau;
    }
    return g;
}

}  // namespace sampler

}  // namespace pgnas
