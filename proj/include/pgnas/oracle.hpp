#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "pgnas/data.hpp"
#include "pgnas/errors.hpp"
#include "pgnas/search.hpp"
#include "pgnas/search_space.hpp"
#include "pgnas/supernet.hpp"

namespace pgnas {

// Ground-truth machinery: exhaustive enumeration over every sub-architecture
// of a small super-network, fixed-probability sampling baselines, and a
// paired sign test for run comparisons.
namespace oracle {

inline constexpr int kEnumerationCap = 20;  // 2^20 evaluations bounds desk runtime

struct EnumerationEntry {
    uint32_t bits = 0;  // slice i active iff bit i set (canonical slice order)
    Architecture arch;
    double accuracy = 0.0;
    double loss = 0.0;
    int64_t param_count = 0;
};

struct EnumerationResult {
    std::vector<EnumerationEntry> entries;  // sorted by the ranking contract
    int rejected = 0;                       // architectures with no path to the head

    const EnumerationEntry& best() const { return entries.front(); }
};

inline bool entry_ranks_before(const EnumerationEntry& a, const EnumerationEntry& b) {
    if (a.accuracy != b.accuracy) return a.accuracy > b.accuracy;
    if (a.loss != b.loss) return a.loss < b.loss;
    if (a.param_count != b.param_count) return a.param_count < b.param_count;
    return a.bits < b.bits;
}

// Evaluates every architecture with inherited weights via prune. Headless
// architectures (including the empty one) are rejected, matching the
// sampler's degenerate-candidate rule.
inline EnumerationResult enumerate_all(const SuperNet& snapshot, const Dataset& val,
                                       int max_choices = kEnumerationCap) {
    const SearchSpaceSpec& spec = snapshot.space();
    const int k = spec.total_slices();
    if (k > max_choices || k > kEnumerationCap) {
        throw ConfigError("enumeration over " + std::to_string(k) + " choices exceeds the cap of " +
                          std::to_string(std::min(max_choices, kEnumerationCap)));
    }
    EnumerationResult out;
    const uint32_t limit = 1u << k;
    for (uint32_t bits = 1; bits < limit; ++bits) {
        std::vector<uint8_t> act(static_cast<size_t>(k));
        for (int i = 0; i < k; ++i) act[static_cast<size_t>(i)] = (bits >> i) & 1u;
        Architecture arch = Architecture::from_bits(spec, std::move(act));
        if (!arch.feeds_head(spec)) {
            ++out.rejected;
            continue;
        }
        PrunedNet net = prune(snapshot, arch);
        search::Metrics m =
            search::evaluate_metrics([&](const Tensor& x) { return net.forward(x); }, val);
        EnumerationEntry e;
        e.bits = bits;
        e.arch = std::move(arch);
        e.accuracy = m.accuracy;
        e.loss = m.loss;
        e.param_count = e.arch.param_count;
        out.entries.push_back(std::move(e));
    }
    std::sort(out.entries.begin(), out.entries.end(), entry_ranks_before);
    return out;
}

// Fixed-probability sampling baseline, evaluated and ranked exactly like the
// guided search.
inline search::SearchResult random_baseline_search(const SuperNet& snapshot, int c, double p_fixed,
                                                   const Dataset& val, uint64_t seed,
                                                   bool reject_empty = true) {
    if (!(p_fixed > 0.0 && p_fixed < 1.0)) {
        throw ConfigError("p_fixed must lie strictly in (0,1)");
    }
    SearchConfig cfg;
    cfg.num_candidates = c;
    cfg.seed = seed;
    cfg.reject_empty = reject_empty;
    const std::vector<double> p(static_cast<size_t>(snapshot.space().total_slices()), p_fixed);
    std::vector<MaskSample> masks = search::sample_candidate_masks(snapshot.space(), p, cfg);
    search::SearchResult out;
    out.reports.reserve(masks.size());
    for (size_t i = 0; i < masks.size(); ++i) {
        CandidateReport r = search::evaluate_candidate(snapshot, masks[i], val);
        r.index = static_cast<int>(i);
        out.reports.push_back(std::move(r));
    }
    out.best_index = search::rank_and_select(out.reports);
    return out;
}

inline CandidateReport random_baseline(const SuperNet& snapshot, int c, double p_fixed,
                                       const Dataset& val, uint64_t seed) {
    return random_baseline_search(snapshot, c, p_fixed, val, seed).best();
}

struct RunComparison {
    int seeds = 0;
    int wins = 0;    // guided strictly better
    int losses = 0;  // random strictly better
    int ties = 0;
    double win_rate = 0.0;  // ties split evenly
    double guided_median = 0.0;
    double random_median = 0.0;
    double sign_test_p = 1.0;  // one-sided, ties dropped
};

inline double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// P(Bin(n, 1/2) >= k), exact.
inline double binomial_upper_tail(int n, int k) {
    if (k <= 0) return 1.0;
    double coeff = 1.0;  // C(n, 0)
    double sum = 0.0;
    for (int i = 0; i <= n; ++i) {
        if (i >= k) sum += coeff;
        coeff = coeff * (n - i) / (i + 1);
    }
    return sum * std::pow(0.5, n);
}

// Paired per-seed comparison of best-candidate scores (higher is better).
inline RunComparison compare_runs(const std::vector<double>& guided_best,
                                  const std::vector<double>& random_best) {
    if (guided_best.size() != random_best.size() || guided_best.empty()) {
        throw ConfigError("compare_runs needs paired, non-empty result lists");
    }
    RunComparison c;
    c.seeds = static_cast<int>(guided_best.size());
    for (size_t i = 0; i < guided_best.size(); ++i) {
        if (guided_best[i] > random_best[i]) {
            ++c.wins;
        } else if (guided_best[i] < random_best[i]) {
            ++c.losses;
        } else {
            ++c.ties;
        }
    }
    c.win_rate = (c.wins + 0.5 * c.ties) / c.seeds;
    c.guided_median = median_of(guided_best);
    c.random_median = median_of(random_best);
    c.sign_test_p = binomial_upper_tail(c.wins + c.losses, c.wins);
    return c;
}

inline std::string comparison_line(const RunComparison& c) {
    return "{\"summary\":true,\"seeds\":" + std::to_string(c.seeds) +
           ",\"wins\":" + std::to_string(c.wins) + ",\"losses\":" + std::to_string(c.losses) +
           ",\"ties\":" + std::to_string(c.ties) + ",\"win_rate\":" + double_to_text(c.win_rate) +
           ",\"guided_median\":" + double_to_text(c.guided_median) +
           ",\"random_median\":" + double_to_text(c.random_median) +
           ",\"sign_test_p\":" + double_to_text(c.sign_test_p) + "}";
}

}  // namespace oracle

}  // namespace pgnas
