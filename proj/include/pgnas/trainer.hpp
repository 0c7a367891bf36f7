#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "pgnas/checkpoint.hpp"
#include "pgnas/data.hpp"
#include "pgnas/errors.hpp"
#include "pgnas/objective.hpp"
#include "pgnas/rng.hpp"
#include "pgnas/sampler.hpp"
#include "pgnas/supernet.hpp"

namespace pgnas {

struct TrainConfig {
    int minibatch = 32;
    double lr = 0.05;
    std::string lr_schedule = "constant";  // constant | cosine
    double momentum = 0.0;
    int64_t max_steps = 1000;
    std::string tau_schedule = "constant";  // constant | linear
    double tau_start = 0.2;
    double tau_end = 0.2;
    uint64_t seed = 0;
    int64_t checkpoint_every = 0;  // 0 disables periodic checkpoints
    int64_t convergence_window = 200;
    double convergence_tol = 1e-3;  // 0 disables the early stop
    bool per_example_masks = true;  // one mask per example; off shares one mask per minibatch
    bool use_entropy = true;
    bool use_adaptive_l2 = true;

    void validate() const {
        if (minibatch < 1) throw ConfigError("minibatch must be >= 1");
        if (!(lr >= 0.0)) throw ConfigError("learning rate must be >= 0");
        if (lr_schedule != "constant" && lr_schedule != "cosine") {
            throw ConfigError("unknown lr schedule '" + lr_schedule + "'");
        }
        if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must lie in [0,1)");
        if (max_steps < 0) throw ConfigError("max_steps must be >= 0");
        if (tau_schedule != "constant" && tau_schedule != "linear") {
            throw ConfigError("unknown tau schedule '" + tau_schedule + "'");
        }
        if (!(tau_start > 0.0) || !(tau_end > 0.0)) throw ConfigError("tau values must be positive");
        if (convergence_window < 1) throw ConfigError("convergence window must be >= 1");
        if (convergence_tol < 0.0) throw ConfigError("convergence tolerance must be >= 0");
    }

    double lr_at(int64_t step) const {
        if (lr_schedule == "cosine" && max_steps > 0) {
            const double t = static_cast<double>(step) / static_cast<double>(max_steps);
            return lr * 0.5 * (1.0 + std::cos(3.141592653589793238 * t));
        }
        return lr;
    }

    double tau_at(int64_t step) const {
        if (tau_schedule == "linear" && max_steps > 1) {
            const double t = static_cast<double>(step) / static_cast<double>(max_steps - 1);
            return tau_start + (tau_end - tau_start) * t;
        }
        return tau_start;
    }
};

struct StepRecord {
    int64_t step = 0;
    LossBreakdown loss;
    std::vector<double> mean_p;  // per layer
    double wall_ms = 0.0;
};

struct TrainLog {
    std::vector<StepRecord> records;

    void append(StepRecord r) {
        if (!records.empty() && r.step <= records.back().step) {
            throw ConfigError("train log steps must increase");
        }
        records.push_back(std::move(r));
    }

    void write_jsonl(const std::filesystem::path& path) const {
        std::ofstream os(path, std::ios::trunc);
        if (!os) throw DataError("cannot open '" + path.string() + "' for writing");
        for (const StepRecord& r : records) {
            os << "{\"step\":" << r.step << ",\"data_nll\":" << double_to_text(r.loss.data_nll)
               << ",\"entropy_term\":" << double_to_text(r.loss.entropy_term)
               << ",\"adaptive_l2\":" << double_to_text(r.loss.adaptive_l2)
               << ",\"total\":" << double_to_text(r.loss.total) << ",\"mean_p\":[";
            for (size_t i = 0; i < r.mean_p.size(); ++i) {
                os << (i ? "," : "") << double_to_text(r.mean_p[i]);
            }
            os << "],\"wall_ms\":" << double_to_text(r.wall_ms) << "}\n";
        }
        if (!os) throw DataError("write failed for '" + path.string() + "'");
    }
};

struct TrainOutcome {
    TrainLog log;
    int64_t steps_run = 0;
    bool converged = false;
};

// SGD training loop over both kernels and keep logits, the posterior
// approximation phase. Single writer: the trainer owns the net for the
// duration of run().
//
// Replay contract: all randomness comes from counter streams under
// cfg.seed — masks for step t are drawn from tag "train/mask/<t>", one
// relaxed sample per example (examples in batch order, slices in canonical
// order), and epoch e is shuffled under tag "train/shuffle/<e>". Resuming
// from a checkpoint therefore continues the exact uninterrupted trajectory.
class Trainer {
  public:
    Trainer(SuperNet& net, TrainConfig cfg, PriorConfig prior)
        : net_(net), cfg_(std::move(cfg)), prior_(std::move(prior)) {
        cfg_.validate();
        prior_.validate();
    }

    // One descent step; returns the pre-update loss breakdown.
    LossBreakdown step(const Batch& batch, int64_t step_index) {
        const double tau = cfg_.tau_at(step_index);
        const double lr = cfg_.lr_at(step_index);
        CounterRng rng(cfg_.seed, "train/mask/" + std::to_string(step_index));
        const std::vector<double> p = net_.keep_probs_per_slice();
        std::vector<MaskSample> masks;
        const int bsz = batch.x.dim(0);
        const int draws = cfg_.per_example_masks ? bsz : 1;
        masks.reserve(static_cast<size_t>(draws));
        for (int i = 0; i < draws; ++i) {
            masks.push_back(sampler::sample_relaxed(p, Temperature(tau), rng, cfg_.seed));
        }

        Graph g;
        SuperNet::GraphNodes nodes = net_.register_params(g);
        objective::LossNodes ln = objective::build_loss(g, net_, nodes, batch.x, batch.labels,
                                                        masks, prior_, cfg_.use_entropy,
                                                        cfg_.use_adaptive_l2);
        LossBreakdown lb = objective::breakdown_of(g, ln);
        g.backward(ln.total);

        net_.for_each_param([&](const std::string& name, Tensor& value) {
            const Tensor& grad = g.param_grad(name);
            if (cfg_.momentum > 0.0) {
                Tensor& v = velocity_[name];
                if (v.empty()) v = Tensor::zeros(value.shape());
                for (size_t i = 0; i < value.numel(); ++i) {
                    v[i] = cfg_.momentum * v[i] + grad[i];
                    value[i] -= lr * v[i];
                }
            } else {
                for (size_t i = 0; i < value.numel(); ++i) value[i] -= lr * grad[i];
            }
        });
        return lb;
    }

    // Loops over shuffled minibatches until max_steps or convergence
    // (relative change of the windowed mean total loss below tolerance).
    TrainOutcome run(const Dataset& train_set, const std::filesystem::path& checkpoint_path = {}) {
        if (train_set.size() == 0) throw DataError("training dataset is empty");
        const int m = std::min<int>(cfg_.minibatch, train_set.size());
        const int64_t batches_per_epoch = train_set.size() / m;

        TrainOutcome out;
        std::vector<int> order;
        int64_t order_epoch = -1;
        for (int64_t s = step_; s < cfg_.max_steps; ++s) {
            const auto t0 = std::chrono::steady_clock::now();
            const int64_t epoch = s / batches_per_epoch;
            const int64_t bi = s % batches_per_epoch;
            if (epoch != order_epoch) {
                order = shuffled_ids(train_set.size(), epoch);
                order_epoch = epoch;
            }
            std::vector<int> ids(order.begin() + static_cast<ptrdiff_t>(bi * m),
                                 order.begin() + static_cast<ptrdiff_t>((bi + 1) * m));
            Batch batch = train_set.gather(ids);

            LossBreakdown lb = step(batch, s);
            step_ = s + 1;
            history_.push_back(lb.total);
            const size_t keep = 2 * static_cast<size_t>(cfg_.convergence_window);
            while (history_.size() > keep) history_.pop_front();

            StepRecord rec;
            rec.step = s;
            rec.loss = lb;
            rec.mean_p = mean_p_per_layer();
            rec.wall_ms = std::chrono::duration<double, std::milli>(
                              std::chrono::steady_clock::now() - t0)
                              .count();
            log_.append(std::move(rec));

            if (cfg_.checkpoint_every > 0 && !checkpoint_path.empty() &&
                step_ % cfg_.checkpoint_every == 0) {
                save_state(checkpoint_path);
            }
            if (converged()) {
                out.converged = true;
                break;
            }
        }
        out.steps_run = step_;
        out.log = log_;
        return out;
    }

    int64_t current_step() const { return step_; }
    const TrainLog& log() const { return log_; }

    std::vector<double> mean_p_per_layer() const {
        const SearchSpaceSpec& spec = net_.space();
        std::vector<double> sums(spec.layers.size(), 0.0);
        std::vector<int> counts(spec.layers.size(), 0);
        for (int gi = 0; gi < net_.num_groups(); ++gi) {
            const size_t l = static_cast<size_t>(spec.group_layer(gi));
            for (int k = 0; k < spec.group_channels(gi); ++k) {
                sums[l] += net_.keep_prob(gi, k);
                counts[l] += 1;
            }
        }
        for (size_t l = 0; l < sums.size(); ++l) sums[l] /= counts[l];
        return sums;
    }

    // ---- checkpoint / resume ----------------------------------------------

    void save_state(const std::filesystem::path& path) const {
        CheckpointData ck = net_.to_checkpoint();
        for (const auto& [name, v] : velocity_) {
            ck.tensors.emplace_back("opt/v/" + name, v);
        }
        Tensor hist({std::max<int>(1, static_cast<int>(history_.size()))});
        for (size_t i = 0; i < history_.size(); ++i) hist[i] = history_[i];
        ck.tensors.emplace_back("trainer/loss_history", hist);
        ck.aux.emplace_back("trainer/step", static_cast<uint64_t>(step_));
        ck.aux.emplace_back("trainer/history_len", history_.size());
        write_checkpoint_file(path, ck);
    }

    void restore_state(const std::filesystem::path& path) {
        CheckpointData ck = read_checkpoint_file(path);
        net_ = SuperNet::from_checkpoint(net_.space(), ck);
        velocity_.clear();
        for (const auto& [name, t] : ck.tensors) {
            if (name.rfind("opt/v/", 0) == 0) velocity_[name.substr(6)] = t;
        }
        const uint64_t* st = ck.find_aux("trainer/step");
        if (!st) throw DataError("checkpoint lacks trainer state");
        step_ = static_cast<int64_t>(*st);
        history_.clear();
        if (const uint64_t* hl = ck.find_aux("trainer/history_len")) {
            const Tensor* h = ck.find_tensor("trainer/loss_history");
            if (!h) throw DataError("checkpoint lacks loss history");
            for (size_t i = 0; i < *hl; ++i) history_.push_back((*h)[i]);
        }
    }

  private:
    std::vector<int> shuffled_ids(int n, int64_t epoch) const {
        std::vector<int> ids(static_cast<size_t>(n));
        std::iota(ids.begin(), ids.end(), 0);
        CounterRng rng(cfg_.seed, "train/shuffle/" + std::to_string(epoch));
        for (int i = n - 1; i > 0; --i) {
            const int j = static_cast<int>(rng.bits() % static_cast<uint64_t>(i + 1));
            std::swap(ids[static_cast<size_t>(i)], ids[static_cast<size_t>(j)]);
        }
        return ids;
    }

    bool converged() const {
        const size_t w = static_cast<size_t>(cfg_.convergence_window);
        if (cfg_.convergence_tol <= 0.0 || history_.size() < 2 * w) return false;
        double recent = 0.0, previous = 0.0;
        for (size_t i = 0; i < w; ++i) {
            recent += history_[history_.size() - 1 - i];
            previous += history_[history_.size() - 1 - w - i];
        }
        recent /= static_cast<double>(w);
        previous /= static_cast<double>(w);
        return std::fabs(recent - previous) / std::max(std::fabs(previous), 1e-12) <
               cfg_.convergence_tol;
    }

    SuperNet& net_;
    TrainConfig cfg_;
    PriorConfig prior_;
    std::map<std::string, Tensor> velocity_;
    std::deque<double> history_;
    int64_t step_ = 0;
    TrainLog log_;
};

inline TrainOutcome train(SuperNet& net, const Dataset& train_set, const TrainConfig& cfg,
                          const PriorConfig& prior,
                          const std::filesystem::path& checkpoint_path = {}) {
    Trainer t(net, cfg, prior);
    return t.run(train_set, checkpoint_path);
}

}  // namespace pgnas
