#pragma once

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "pgnas/checkpoint.hpp"
#include "pgnas/config.hpp"
#include "pgnas/oracle.hpp"
#include "pgnas/search.hpp"
#include "pgnas/trainer.hpp"

namespace pgnas {

// Orchestration behind the CLI: train -> search -> report under a
// deterministic, seed-named run directory. Everything written here except
// wall times is a pure function of the configuration.
namespace runner {

inline constexpr uint32_t kReportFormatVersion = 1;
inline constexpr uint32_t kArchitectureFormatVersion = 1;
inline constexpr uint32_t kManifestFormatVersion = 1;

struct RunPaths {
    std::filesystem::path dir;
    std::filesystem::path config_file;
    std::filesystem::path checkpoint;
    std::filesystem::path train_log;
    std::filesystem::path report;
    std::filesystem::path architecture;
    std::filesystem::path enumeration;
    std::filesystem::path manifest;
};

inline RunPaths run_paths(const std::filesystem::path& dir) {
    RunPaths p;
    p.dir = dir;
    p.config_file = dir / "config.json";
    p.checkpoint = dir / "checkpoint.ckpt";
    p.train_log = dir / "trainlog.jsonl";
    p.report = dir / "search_report.jsonl";
    p.architecture = dir / "architecture.txt";
    p.enumeration = dir / "enumeration.jsonl";
    p.manifest = dir / "manifest.json";
    return p;
}

// <output root>/<name>-seed<seed>; no timestamps, so repeat runs collide on
// purpose and stay comparable.
inline std::filesystem::path resolve_run_dir(const ExperimentConfig& cfg,
                                             const std::string& out_override = "") {
    std::filesystem::path root;
    if (!out_override.empty()) {
        root = out_override;
    } else if (!cfg.output_dir.empty()) {
        root = cfg.output_dir;
    } else if (const char* env = std::getenv("PGNAS_OUTPUT_ROOT")) {
        root = env;
    } else {
        root = ".";
    }
    return root / (cfg.name + "-seed" + std::to_string(cfg.seed));
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw DataError("cannot open '" + path.string() + "' for writing");
    os << text;
    if (!os) throw DataError("write failed for '" + path.string() + "'");
}

struct TrainArtifacts {
    TrainOutcome outcome;
    double wall_ms = 0.0;
};

struct SearchArtifacts {
    search::SearchResult result;
    double wall_ms = 0.0;
};

inline TrainArtifacts train_phase(const ExperimentConfig& cfg, SuperNet& net,
                                  const config::DataBundle& data, const RunPaths& paths) {
    const auto t0 = std::chrono::steady_clock::now();
    PriorConfig prior = cfg.prior;
    if (prior.dataset_size <= 1) prior.dataset_size = data.train.size();
    TrainConfig tc = cfg.train;
    tc.seed = cfg.resolved_train_seed();
    Trainer trainer(net, tc, prior);
    TrainArtifacts out;
    out.outcome = trainer.run(data.train, paths.checkpoint);
    trainer.save_state(paths.checkpoint);
    out.outcome.log.write_jsonl(paths.train_log);
    out.wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

inline SearchArtifacts search_phase(const ExperimentConfig& cfg, const SuperNet& net,
                                    const Dataset& val, const RunPaths& paths) {
    const auto t0 = std::chrono::steady_clock::now();
    SearchConfig sc = cfg.search;
    sc.seed = cfg.resolved_search_seed();
    SearchArtifacts out;
    out.result = search::run_search(net, val, sc);
    search::export_search_report(paths.report, out.result.reports, out.result.best_index, cfg.space);
    write_text(paths.architecture, out.result.best().arch.to_text(cfg.space));
    out.wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

inline json manifest_json(const ExperimentConfig& cfg, const TrainArtifacts* train,
                          const SearchArtifacts* srch, double total_wall_ms) {
    json m;
    m["format_versions"] = {{"manifest", kManifestFormatVersion},
                            {"checkpoint", kCheckpointVersion},
                            {"report", kReportFormatVersion},
                            {"architecture", kArchitectureFormatVersion}};
    m["config"] = cfg.raw;
    m["config_digest"] = hex64(cfg.digest());
    m["space_digest"] = hex64(cfg.space.digest());
    m["seeds"] = {{"net", hex64(cfg.net_seed())},
                  {"train", hex64(cfg.resolved_train_seed())},
                  {"search", hex64(cfg.resolved_search_seed())},
                  {"split", hex64(cfg.resolved_split_seed())}};
    json wall;
    wall["total"] = total_wall_ms;
    if (train) {
        m["train"] = {{"steps_run", train->outcome.steps_run},
                      {"converged", train->outcome.converged},
                      {"final_total", train->outcome.log.records.empty()
                                          ? 0.0
                                          : train->outcome.log.records.back().loss.total}};
        wall["train"] = train->wall_ms;
    }
    if (srch) {
        const CandidateReport& best = srch->result.best();
        m["best"] = {{"index", best.index},
                     {"accuracy", best.accuracy},
                     {"loss", best.loss},
                     {"param_count", best.param_count},
                     {"arch_digest", hex64(best.arch.digest())}};
        wall["search"] = srch->wall_ms;
    }
    m["wall_ms"] = wall;
    return m;
}

struct RunResult {
    RunPaths paths;
    int64_t steps_run = 0;
    double best_accuracy = 0.0;
    uint64_t checkpoint_digest = 0;
};

// The end-to-end flow: dataset, supernet, posterior training, guided
// sampling and ranking, exported architecture, manifest.
inline RunResult run_experiment(const ExperimentConfig& cfg, const std::string& out_override = "") {
    const auto t0 = std::chrono::steady_clock::now();
    RunPaths paths = run_paths(resolve_run_dir(cfg, out_override));
    std::filesystem::create_directories(paths.dir);
    write_text(paths.config_file, cfg.raw.dump(2) + "\n");

    config::DataBundle data = config::assemble_data(cfg);
    SuperNet net = SuperNet::build(cfg.space, cfg.net_seed(), cfg.init);
    TrainArtifacts ta = train_phase(cfg, net, data, paths);
    SearchArtifacts sa = search_phase(cfg, net, data.val, paths);

    const double total =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    write_text(paths.manifest, manifest_json(cfg, &ta, &sa, total).dump(2) + "\n");

    RunResult r;
    r.paths = paths;
    r.steps_run = ta.outcome.steps_run;
    r.best_accuracy = sa.result.best().accuracy;
    r.checkpoint_digest = net.weights_digest();
    return r;
}

inline RunResult run_train_only(const ExperimentConfig& cfg, const std::string& out_override = "") {
    const auto t0 = std::chrono::steady_clock::now();
    RunPaths paths = run_paths(resolve_run_dir(cfg, out_override));
    std::filesystem::create_directories(paths.dir);
    write_text(paths.config_file, cfg.raw.dump(2) + "\n");
    config::DataBundle data = config::assemble_data(cfg);
    SuperNet net = SuperNet::build(cfg.space, cfg.net_seed(), cfg.init);
    TrainArtifacts ta = train_phase(cfg, net, data, paths);
    const double total =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    write_text(paths.manifest, manifest_json(cfg, &ta, nullptr, total).dump(2) + "\n");
    RunResult r;
    r.paths = paths;
    r.steps_run = ta.outcome.steps_run;
    r.checkpoint_digest = net.weights_digest();
    return r;
}

inline SuperNet load_snapshot(const ExperimentConfig& cfg, const std::filesystem::path& ckpt) {
    return SuperNet::from_checkpoint(cfg.space, read_checkpoint_file(ckpt));
}

inline RunResult run_search_only(const ExperimentConfig& cfg, const std::filesystem::path& ckpt,
                                 const std::string& out_override = "") {
    const auto t0 = std::chrono::steady_clock::now();
    RunPaths paths = run_paths(resolve_run_dir(cfg, out_override));
    std::filesystem::create_directories(paths.dir);
    config::DataBundle data = config::assemble_data(cfg);
    SuperNet net = load_snapshot(cfg, ckpt);
    SearchArtifacts sa = search_phase(cfg, net, data.val, paths);
    const double total =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    write_text(paths.manifest, manifest_json(cfg, nullptr, &sa, total).dump(2) + "\n");
    RunResult r;
    r.paths = paths;
    r.best_accuracy = sa.result.best().accuracy;
    r.checkpoint_digest = net.weights_digest();
    return r;
}

// Prune + inherited-weight evaluation of an exported architecture; returns
// the metrics document printed by the CLI.
inline json evaluate_architecture(const ExperimentConfig& cfg, const std::filesystem::path& ckpt,
                                  const std::filesystem::path& arch_file,
                                  const std::string& split = "val") {
    config::DataBundle data = config::assemble_data(cfg);
    const Dataset* ds = split == "train" ? &data.train : split == "test" ? &data.test : &data.val;
    if (split != "train" && split != "val" && split != "test") {
        throw ConfigError("unknown split '" + split + "'");
    }
    if (ds->size() == 0) throw DataError("split '" + split + "' is empty");
    SuperNet net = load_snapshot(cfg, ckpt);
    std::ifstream is(arch_file);
    if (!is) throw DataError("cannot open architecture '" + arch_file.string() + "'");
    std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    Architecture arch = Architecture::from_text(cfg.space, text);
    PrunedNet pruned = prune(net, arch);
    auto m = search::evaluate_metrics([&](const Tensor& x) { return pruned.forward(x); }, *ds);
    json out;
    out["split"] = split;
    out["examples"] = ds->size();
    out["accuracy"] = m.accuracy;
    out["loss"] = m.loss;
    out["param_count"] = arch.param_count;
    out["arch_digest"] = hex64(arch.digest());
    return out;
}

inline json enumerate_to_file(const ExperimentConfig& cfg, const std::filesystem::path& ckpt,
                              const std::filesystem::path& out_file) {
    config::DataBundle data = config::assemble_data(cfg);
    SuperNet net = load_snapshot(cfg, ckpt);
    oracle::EnumerationResult res = oracle::enumerate_all(net, data.val);
    std::ofstream os(out_file, std::ios::trunc);
    if (!os) throw DataError("cannot open '" + out_file.string() + "' for writing");
    for (const auto& e : res.entries) {
        os << "{\"bits\":" << e.bits << ",\"mask\":\"" << search::mask_bits_string(e.arch)
           << "\",\"accuracy\":" << double_to_text(e.accuracy)
           << ",\"loss\":" << double_to_text(e.loss) << ",\"param_count\":" << e.param_count
           << "}\n";
    }
    os << "{\"summary\":true,\"entries\":" << res.entries.size() << ",\"rejected\":" << res.rejected
       << ",\"best_accuracy\":" << double_to_text(res.best().accuracy) << ",\"best_mask\":\""
       << search::mask_bits_string(res.best().arch) << "\"}\n";
    if (!os) throw DataError("write failed for '" + out_file.string() + "'");
    json summary;
    summary["entries"] = res.entries.size();
    summary["rejected"] = res.rejected;
    summary["best_accuracy"] = res.best().accuracy;
    return summary;
}

}  // namespace runner

}  // namespace pgnas
