#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "pgnas/config.hpp"
#include "pgnas/runner.hpp"

using namespace pgnas;
namespace fs = std::filesystem;

namespace {

json minimal_doc() {
    return json::parse(R"({
      "name": "demo",
      "seed": 42,
      "space": {
        "input_shape": [2, 4, 4],
        "num_classes": 3,
        "layers": [
          {"in_channels": 2, "out_channels": 3, "kernel_sizes": [1, 3]},
          {"in_channels": 3, "out_channels": 3, "kernel_sizes": [3], "classifier_head": true}
        ]
      },
      "train": {"minibatch": 8, "lr": 0.1, "max_steps": 20},
      "prior": {"length_scale": 2.0},
      "search": {"num_candidates": 10},
      "data": {
        "kind": "planted",
        "planted": {"active": [[0,0,1],[0,1,3],[1,0,3],[1,2,3]], "teacher_seed": 3,
                     "noise": 0.05, "count": 120}
      }
    })");
}

}  // namespace

TEST(Config, MinimalDocumentParses) {
    ExperimentConfig cfg = config::from_json(minimal_doc());
    EXPECT_EQ(cfg.name, "demo");
    EXPECT_EQ(cfg.seed, 42u);
    EXPECT_EQ(cfg.space.total_slices(), 7);
    EXPECT_EQ(cfg.train.minibatch, 8);
    EXPECT_EQ(cfg.search.num_candidates, 10);
    EXPECT_EQ(cfg.data.kind, "planted");
    Architecture planted = cfg.planted_architecture();
    EXPECT_EQ(planted.active_count(), 4);
    EXPECT_TRUE(planted.feeds_head(cfg.space));
}

TEST(Config, DerivedSeedsAreStableAndDistinct) {
    ExperimentConfig cfg = config::from_json(minimal_doc());
    EXPECT_EQ(cfg.resolved_train_seed(), config::from_json(minimal_doc()).resolved_train_seed());
    EXPECT_NE(cfg.resolved_train_seed(), cfg.resolved_search_seed());
    EXPECT_NE(cfg.net_seed(), cfg.resolved_split_seed());
    json doc = minimal_doc();
    doc["train"]["seed"] = 7;
    EXPECT_EQ(config::from_json(doc).resolved_train_seed(), 7u);
}

TEST(Config, UnknownKeysAreHardErrorsListedTogether) {
    json doc = minimal_doc();
    doc["train"]["learning_rate"] = 0.1;  // typo for lr
    doc["serach"] = json::object();       // typo at top level
    doc["space"]["layers"][0]["kernel"] = 3;
    try {
        config::from_json(doc);
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("learning_rate"), std::string::npos);
        EXPECT_NE(msg.find("serach"), std::string::npos);
        EXPECT_NE(msg.find("kernel"), std::string::npos);
        EXPECT_NE(msg.find("3 problems"), std::string::npos);
    }
}

TEST(Config, ValueViolationsAreCollectedAtOnce) {
    json doc = minimal_doc();
    doc["train"]["lr"] = -1.0;
    doc["search"]["num_candidates"] = 0;
    doc["space"]["num_classes"] = 1;
    try {
        config::from_json(doc);
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("learning rate"), std::string::npos);
        EXPECT_NE(msg.find("num_candidates"), std::string::npos);
        EXPECT_NE(msg.find("num_classes"), std::string::npos);
    }
}

TEST(Config, MissingSectionsAreReported) {
    json doc;
    doc["seed"] = 1;
    try {
        config::from_json(doc);
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("space"), std::string::npos);
        EXPECT_NE(msg.find("data"), std::string::npos);
    }
}

TEST(Config, HeadlessPlantedArchitectureRejected) {
    json doc = minimal_doc();
    doc["data"]["planted"]["active"] = json::parse("[[0,0,1],[0,1,3]]");  // layer 1 dead
    EXPECT_THROW(config::from_json(doc), ConfigError);
}

TEST(Config, ParseSerializeRoundTripIsLossless) {
    json doc = minimal_doc();
    ExperimentConfig cfg = config::from_json(doc);
    json again = json::parse(cfg.raw.dump());
    EXPECT_EQ(again, doc);
    EXPECT_EQ(config::from_json(again).digest(), cfg.digest());
}

TEST(Config, DottedPathOverrides) {
    json doc = minimal_doc();
    config::apply_override(doc, "train.lr=0.25");
    config::apply_override(doc, "space.layers[0].out_channels=3");
    config::apply_override(doc, "search.reject_empty=false");
    config::apply_override(doc, "name=tuned");
    ExperimentConfig cfg = config::from_json(doc);
    EXPECT_DOUBLE_EQ(cfg.train.lr, 0.25);
    EXPECT_EQ(cfg.name, "tuned");
    EXPECT_FALSE(cfg.search.reject_empty);
    EXPECT_THROW(config::apply_override(doc, "no-equals-sign"), ConfigError);
    EXPECT_THROW(config::apply_override(doc, "space.layers[9].out_channels=3"), ConfigError);
}

TEST(Config, OverridesGoThroughFullValidation) {
    json doc = minimal_doc();
    config::apply_override(doc, "train.lr=-5");
    EXPECT_THROW(config::from_json(doc), ConfigError);
}

TEST(Config, LoadFromFileWithOverrides) {
    const fs::path p = fs::path(::testing::TempDir()) / "cfg.json";
    std::ofstream(p) << minimal_doc().dump(2);
    ExperimentConfig cfg = config::load(p, {"train.max_steps=5"});
    EXPECT_EQ(cfg.train.max_steps, 5);
    EXPECT_THROW(config::load(fs::path(::testing::TempDir()) / "missing.json"), ConfigError);
    const fs::path bad = fs::path(::testing::TempDir()) / "bad.json";
    std::ofstream(bad) << "{ not json";
    EXPECT_THROW(config::load(bad), ConfigError);
}

TEST(Config, PlantedDataAssemblySplitsDeterministically) {
    ExperimentConfig cfg = config::from_json(minimal_doc());
    config::DataBundle a = config::assemble_data(cfg);
    config::DataBundle b = config::assemble_data(cfg);
    EXPECT_EQ(a.train.values, b.train.values);
    EXPECT_EQ(a.val.labels, b.val.labels);
    EXPECT_EQ(a.train.size() + a.val.size() + a.test.size(), 120);
    EXPECT_GT(a.train.size(), 0);
    EXPECT_GT(a.val.size(), 0);
}

TEST(Config, EntropyVariantSelection) {
    json doc = minimal_doc();
    doc["prior"]["entropy_variant"] = "full_bernoulli";
    EXPECT_EQ(config::from_json(doc).prior.entropy, PriorConfig::EntropyVariant::full_bernoulli);
    doc["prior"]["entropy_variant"] = "unknown";
    EXPECT_THROW(config::from_json(doc), ConfigError);
}

TEST(Config, LengthScaleOverridesReachThePrior) {
    json doc = minimal_doc();
    doc["prior"]["length_scale_overrides"] = {{"l0/s3", 9.0}};
    ExperimentConfig cfg = config::from_json(doc);
    EXPECT_DOUBLE_EQ(cfg.prior.d_for(0, 3), 9.0);
    EXPECT_DOUBLE_EQ(cfg.prior.d_for(0, 1), 2.0);
}

TEST(Runner, EndToEndArtifactsAndEvalConsistency) {
    json doc = minimal_doc();
    doc["train"]["max_steps"] = 40;
    doc["train"]["momentum"] = 0.9;
    doc["data"]["planted"]["count"] = 300;
    doc["search"]["num_candidates"] = 15;
    ExperimentConfig cfg = config::from_json(doc);
    const fs::path root = fs::path(::testing::TempDir()) / "runner-e2e";
    fs::remove_all(root);
    runner::RunResult r = runner::run_experiment(cfg, root.string());

    for (const fs::path& p : {r.paths.config_file, r.paths.checkpoint, r.paths.train_log,
                              r.paths.report, r.paths.architecture, r.paths.manifest}) {
        EXPECT_TRUE(fs::exists(p)) << p;
    }

    // scoring the exported architecture with inherited weights reproduces the
    // best accuracy reported by the search
    json metrics = runner::evaluate_architecture(cfg, r.paths.checkpoint, r.paths.architecture);
    EXPECT_DOUBLE_EQ(metrics["accuracy"].get<double>(), r.best_accuracy);

    json summary = runner::enumerate_to_file(cfg, r.paths.checkpoint, r.paths.enumeration);
    EXPECT_GE(summary["best_accuracy"].get<double>(), r.best_accuracy);

    json manifest = json::parse(std::ifstream(r.paths.manifest));
    EXPECT_EQ(manifest["config"], cfg.raw);  // reproducible from the manifest alone
    EXPECT_EQ(manifest["best"]["accuracy"].get<double>(), r.best_accuracy);
}

TEST(Runner, OutputRootResolutionOrder) {
    ExperimentConfig cfg = config::from_json(minimal_doc());
    EXPECT_EQ(runner::resolve_run_dir(cfg, "/explicit"), fs::path("/explicit/demo-seed42"));
    setenv("PGNAS_OUTPUT_ROOT", "/from-env", 1);
    EXPECT_EQ(runner::resolve_run_dir(cfg), fs::path("/from-env/demo-seed42"));
    json doc = minimal_doc();
    doc["output_dir"] = "/from-config";
    EXPECT_EQ(runner::resolve_run_dir(config::from_json(doc)), fs::path("/from-config/demo-seed42"));
    unsetenv("PGNAS_OUTPUT_ROOT");
    EXPECT_EQ(runner::resolve_run_dir(cfg), fs::path("./demo-seed42"));
}

TEST(Runner, SearchOnlyReusesACheckpoint) {
    json doc = minimal_doc();
    doc["train"]["max_steps"] = 30;
    doc["data"]["planted"]["count"] = 240;
    doc["search"]["num_candidates"] = 8;
    ExperimentConfig cfg = config::from_json(doc);
    const fs::path root = fs::path(::testing::TempDir()) / "runner-search-only";
    fs::remove_all(root);
    runner::RunResult trained = runner::run_train_only(cfg, (root / "t").string());
    runner::RunResult searched =
        runner::run_search_only(cfg, trained.paths.checkpoint, (root / "s").string());
    EXPECT_TRUE(fs::exists(searched.paths.report));
    EXPECT_TRUE(fs::exists(searched.paths.architecture));
    EXPECT_EQ(searched.checkpoint_digest, trained.checkpoint_digest);
}
