#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "pgnas/data.hpp"
#include "pgnas/errors.hpp"
#include "pgnas/rng.hpp"
#include "pgnas/sampler.hpp"
#include "pgnas/search_space.hpp"
#include "pgnas/serialize.hpp"
#include "pgnas/supernet.hpp"

namespace pgnas {

struct SearchConfig {
    int num_candidates = 200;  // C
    uint64_t seed = 0;
    bool reject_empty = true;  // resample candidates with no path to the head
    int max_retries = 100;

    void validate() const {
        if (num_candidates < 1) throw ConfigError("num_candidates must be >= 1");
        if (max_retries < 1) throw ConfigError("max_retries must be >= 1");
    }
};

// Ranking record for one sampled candidate. Wall time is measured for the
// caller but never serialized; report files depend only on the seed.
struct CandidateReport {
    int index = -1;
    uint64_t seed = 0;
    Architecture arch;
    double accuracy = 0.0;
    double loss = 0.0;
    int64_t param_count = 0;
    double wall_ms = 0.0;
};

namespace search {

struct Metrics {
    double accuracy = 0.0;
    double loss = 0.0;
};

// Accuracy (argmax, ties to the lowest class index) and mean cross entropy.
template <typename ForwardFn>
Metrics evaluate_metrics(ForwardFn&& forward, const Dataset& val, int chunk = 256) {
    if (val.size() == 0) throw DataError("validation set is empty");
    int correct = 0;
    double loss_sum = 0.0;
    std::vector<int> ids;
    for (int start = 0; start < val.size(); start += chunk) {
        const int m = std::min(chunk, val.size() - start);
        ids.resize(static_cast<size_t>(m));
        std::iota(ids.begin(), ids.end(), start);
        Batch b = val.gather(ids);
        Tensor logits = forward(b.x);
        loss_sum += nn::softmax_cross_entropy_forward(logits, b.labels) * m;
        const int classes = logits.dim(1);
        for (int i = 0; i < m; ++i) {
            int best = 0;
            for (int j = 1; j < classes; ++j) {
                if (logits.at(i, j) > logits.at(i, best)) best = j;
            }
            if (best == b.labels[static_cast<size_t>(i)]) ++correct;
        }
    }
    Metrics out;
    out.accuracy = static_cast<double>(correct) / val.size();
    out.loss = loss_sum / val.size();
    return out;
}

// Hard masks drawn from the given per-slice keep probabilities; candidate i
// is replayable from hash(seed, i) alone, so the list for a smaller C is a
// prefix of the list for a larger C.
inline std::vector<MaskSample> sample_candidate_masks(const SearchSpaceSpec& spec,
                                                      const std::vector<double>& p,
                                                      const SearchConfig& cfg) {
    cfg.validate();
    std::vector<MaskSample> masks;
    masks.reserve(static_cast<size_t>(cfg.num_candidates));
    for (int i = 0; i < cfg.num_candidates; ++i) {
        const uint64_t base = hash_combine(cfg.seed, static_cast<uint64_t>(i));
        MaskSample m;
        bool ok = false;
        for (int retry = 0; retry < cfg.max_retries; ++retry) {
            const uint64_t sd = retry == 0 ? base : hash_combine(base, static_cast<uint64_t>(retry));
            CounterRng rng(sd, "search/candidate");
            m = sampler::sample_hard(p, rng, sd);
            if (!cfg.reject_empty || Architecture::from_mask(spec, m).feeds_head(spec)) {
                ok = true;
                break;
            }
        }
        if (!ok) {
            throw NumericError("candidate " + std::to_string(i) + ": no architecture reached the head in " +
                               std::to_string(cfg.max_retries) + " draws");
        }
        masks.push_back(std::move(m));
    }
    return masks;
}

// Guided sampling: hard masks from the learned keep probabilities.
inline std::vector<MaskSample> sample_candidates(const SuperNet& snapshot, const SearchConfig& cfg) {
    return sample_candidate_masks(snapshot.space(), snapshot.keep_probs_per_slice(), cfg);
}

// Inherited-weight evaluation: the snapshot is read-only and no update of any
// kind happens here.
inline CandidateReport evaluate_candidate(const SuperNet& snapshot, const MaskSample& mask,
                                          const Dataset& val) {
    if (!mask.is_hard()) throw NumericError("candidate evaluation requires a hard mask");
    const auto t0 = std::chrono::steady_clock::now();
    CandidateReport r;
    r.seed = mask.seed;
    r.arch = Architecture::from_mask(snapshot.space(), mask);
    r.param_count = r.arch.param_count;
    Metrics m = evaluate_metrics([&](const Tensor& x) { return snapshot.forward_masked(x, mask); }, val);
    r.accuracy = m.accuracy;
    r.loss = m.loss;
    r.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

// Ranking contract: accuracy first, ties by lower loss, then fewer
// parameters, then lower candidate index.
inline bool ranks_before(const CandidateReport& a, const CandidateReport& b) {
    if (a.accuracy != b.accuracy) return a.accuracy > b.accuracy;
    if (a.loss != b.loss) return a.loss < b.loss;
    if (a.param_count != b.param_count) return a.param_count < b.param_count;
    return a.index < b.index;
}

inline size_t rank_and_select(const std::vector<CandidateReport>& reports) {
    if (reports.empty()) throw ConfigError("rank_and_select needs at least one report");
    size_t best = 0;
    for (size_t i = 1; i < reports.size(); ++i) {
        if (ranks_before(reports[i], reports[best])) best = i;
    }
    return best;
}

inline Architecture derive_architecture(const SearchSpaceSpec& spec, const MaskSample& best_mask) {
    return Architecture::from_mask(spec, best_mask);
}

struct SearchResult {
    std::vector<CandidateReport> reports;
    size_t best_index = 0;

    const CandidateReport& best() const { return reports[best_index]; }
};

// Full posterior-guided search pass. Verifies the no-fine-tune guarantee:
// the snapshot digest must be identical before and after.
inline SearchResult run_search(const SuperNet& snapshot, const Dataset& val,
                               const SearchConfig& cfg) {
    const uint64_t digest_before = snapshot.weights_digest();
    std::vector<MaskSample> masks = sample_candidates(snapshot, cfg);
    SearchResult out;
    out.reports.reserve(masks.size());
    for (size_t i = 0; i < masks.size(); ++i) {
        CandidateReport r = evaluate_candidate(snapshot, masks[i], val);
        r.index = static_cast<int>(i);
        out.reports.push_back(std::move(r));
    }
    out.best_index = rank_and_select(out.reports);
    if (snapshot.weights_digest() != digest_before) {
        throw NumericError("snapshot changed during search; weight inheritance violated");
    }
    return out;
}

inline std::string mask_bits_string(const Architecture& arch) {
    std::string s(arch.active.size(), '0');
    for (size_t i = 0; i < arch.active.size(); ++i) s[i] = arch.active[i] ? '1' : '0';
    return s;
}

inline std::string report_line(const CandidateReport& r) {
    std::string s = "{\"index\":" + std::to_string(r.index) + ",\"seed\":\"" + hex64(r.seed) +
                    "\",\"accuracy\":" + double_to_text(r.accuracy) +
                    ",\"loss\":" + double_to_text(r.loss) +
                    ",\"param_count\":" + std::to_string(r.param_count) + ",\"mask\":\"" +
                    mask_bits_string(r.arch) + "\",\"arch_digest\":\"" + hex64(r.arch.digest()) +
                    "\"}";
    return s;
}

// Line-delimited report: one candidate per line plus a final summary record.
inline void export_search_report(const std::filesystem::path& path,
                                 const std::vector<CandidateReport>& reports, size_t best_index,
                                 const SearchSpaceSpec& spec) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw DataError("cannot open '" + path.string() + "' for writing");
    for (const CandidateReport& r : reports) os << report_line(r) << "\n";
    const CandidateReport& best = reports[best_index];
    os << "{\"summary\":true,\"best_index\":" << best.index << ",\"best_accuracy\":"
       << double_to_text(best.accuracy) << ",\"best_loss\":" << double_to_text(best.loss)
       << ",\"arch_digest\":\"" << hex64(best.arch.digest()) << "\",\"dropped_channel_fraction\":"
       << double_to_text(best.arch.dropped_channel_fraction())
       << ",\"dropped_operation_fraction\":"
       << double_to_text(best.arch.dropped_operation_fraction(spec)) << ",\"space_digest\":\""
       << hex64(spec.digest()) << "\"}\n";
    if (!os) throw DataError("write failed for '" + path.string() + "'");
}

}  // namespace search

}  // namespace pgnas
