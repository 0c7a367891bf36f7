// pgnas — posterior-guided architecture search over a trained super-network.
//
// Subcommands: train, search, eval, enumerate, run. Exit codes: 0 success,
// 2 configuration error, 3 data error, 4 numeric failure, 1 anything else.

#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pgnas/config.hpp"
#include "pgnas/errors.hpp"
#include "pgnas/runner.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitOther = 1;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string out_dir;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool with_out = true) {
    cmd->add_option("-c,--config", args.config_path, "experiment configuration (JSON)")
        ->required();
    cmd->add_option("--set", args.overrides,
                    "override a config key, dotted path syntax: train.lr=0.05 or "
                    "space.layers[0].out_channels=4 (repeatable)");
    if (with_out) {
        cmd->add_option("-o,--out", args.out_dir,
                        "output root (default: config output_dir, then $PGNAS_OUTPUT_ROOT, then .)");
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"posterior-guided neural architecture search"};
    app.require_subcommand(1);

    CommonArgs train_args, search_args, eval_args, enum_args, run_args;
    std::string ckpt_path, arch_path, split = "val", enum_out;

    CLI::App* cmd_train = app.add_subcommand("train", "approximate the posterior: train the super-network");
    add_common(cmd_train, train_args);

    CLI::App* cmd_search = app.add_subcommand("search", "sample and rank candidates from a checkpoint");
    add_common(cmd_search, search_args);
    cmd_search->add_option("-k,--checkpoint", ckpt_path, "trained super-network checkpoint")->required();

    CLI::App* cmd_eval = app.add_subcommand("eval", "prune to an exported architecture and evaluate it");
    add_common(cmd_eval, eval_args, /*with_out=*/false);
    cmd_eval->add_option("-k,--checkpoint", ckpt_path, "trained super-network checkpoint")->required();
    cmd_eval->add_option("-a,--arch", arch_path, "architecture file")->required();
    cmd_eval->add_option("--split", split, "dataset split to score: train|val|test");

    CLI::App* cmd_enum = app.add_subcommand("enumerate", "evaluate every sub-architecture (small spaces)");
    add_common(cmd_enum, enum_args);
    cmd_enum->add_option("-k,--checkpoint", ckpt_path, "trained super-network checkpoint")->required();
    cmd_enum->add_option("--file", enum_out, "output file (default: <run dir>/enumeration.jsonl)");

    CLI::App* cmd_run = app.add_subcommand("run", "train, search and report in one pass");
    add_common(cmd_run, run_args);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        using namespace pgnas;
        if (cmd_train->parsed()) {
            ExperimentConfig cfg = config::load(train_args.config_path, train_args.overrides);
            runner::RunResult r = runner::run_train_only(cfg, train_args.out_dir);
            std::cout << "checkpoint: " << r.paths.checkpoint.string() << "\n"
                      << "steps_run: " << r.steps_run << "\n";
        } else if (cmd_search->parsed()) {
            ExperimentConfig cfg = config::load(search_args.config_path, search_args.overrides);
            runner::RunResult r = runner::run_search_only(cfg, ckpt_path, search_args.out_dir);
            std::cout << "report: " << r.paths.report.string() << "\n"
                      << "architecture: " << r.paths.architecture.string() << "\n"
                      << "best_accuracy: " << double_to_text(r.best_accuracy) << "\n";
        } else if (cmd_eval->parsed()) {
            ExperimentConfig cfg = config::load(eval_args.config_path, eval_args.overrides);
            std::cout << runner::evaluate_architecture(cfg, ckpt_path, arch_path, split).dump(2)
                      << "\n";
        } else if (cmd_enum->parsed()) {
            ExperimentConfig cfg = config::load(enum_args.config_path, enum_args.overrides);
            runner::RunPaths paths =
                runner::run_paths(runner::resolve_run_dir(cfg, enum_args.out_dir));
            std::filesystem::create_directories(paths.dir);
            const std::filesystem::path out_file =
                enum_out.empty() ? paths.enumeration : std::filesystem::path(enum_out);
            std::cout << runner::enumerate_to_file(cfg, ckpt_path, out_file).dump(2) << "\n";
        } else if (cmd_run->parsed()) {
            ExperimentConfig cfg = config::load(run_args.config_path, run_args.overrides);
            runner::RunResult r = runner::run_experiment(cfg, run_args.out_dir);
            std::cout << "run_dir: " << r.paths.dir.string() << "\n"
                      << "best_accuracy: " << double_to_text(r.best_accuracy) << "\n"
                      << "manifest: " << r.paths.manifest.string() << "\n";
        }
        return kExitOk;
    } catch (const pgnas::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const pgnas::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const pgnas::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitOther;
    }
}
