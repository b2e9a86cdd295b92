// Copyright (c) 2026 the doge-lab authors
// SPDX-License-Identifier: Apache-2.0
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"

#include "doge/harness.hpp"

namespace fs = std::filesystem;

namespace {

struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<std::size_t> threads;
    std::optional<std::size_t> log_stride;

    void add_flags(CLI::App* cmd) {
        cmd->add_option("--seed", seed, "override the config seed");
        cmd->add_option("--out", out, "override the output directory");
        cmd->add_option("--threads", threads, "worker count (results are seed-deterministic regardless)");
        cmd->add_option("--log-stride", log_stride, "trajectory logging stride");
    }

    void apply(doge::RunConfig& cfg) const {
        if (seed) {
            cfg.seed = *seed;
            cfg.doge.seed = *seed;
            cfg.proxy_model.seed = static_cast<std::uint32_t>(*seed);
            cfg.base_model.seed = static_cast<std::uint32_t>(*seed + 1);
        }
        if (out) cfg.out_dir = *out;
        if (threads) cfg.threads = *threads;
        if (log_stride) cfg.log_stride = *log_stride;
    }
};

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw doge::DataError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"domain-reweighted pretraining laboratory"};
    app.require_subcommand(1);

    std::string config_path, checkpoint_path, corpus_path, run_dir;
    Overrides run_ov, cancel_ov, eval_ov, plot_ov;

    CLI::App* cmd_run = app.add_subcommand("run", "execute a run config");
    cmd_run->add_option("config", config_path, "run config JSON file")
        ->required()
        ->check(CLI::ExistingFile);
    run_ov.add_flags(cmd_run);

    CLI::App* cmd_eval = app.add_subcommand("eval", "evaluate a checkpoint");
    cmd_eval->add_option("checkpoint", checkpoint_path, "model checkpoint")
        ->required()
        ->check(CLI::ExistingFile);
    cmd_eval->add_option("corpus", corpus_path, "corpus directory or JSONL file")
        ->required()
        ->check(CLI::ExistingPath);
    eval_ov.add_flags(cmd_eval);

    CLI::App* cmd_cancel = app.add_subcommand("cancel", "measure cancellation scores");
    cmd_cancel->add_option("config", config_path, "run config JSON file")
        ->required()
        ->check(CLI::ExistingFile);
    cancel_ov.add_flags(cmd_cancel);

    CLI::App* cmd_plot = app.add_subcommand("plot", "emit plot CSVs for a finished run");
    cmd_plot->add_option("run_dir", run_dir, "run output directory")
        ->required()
        ->check(CLI::ExistingDirectory);
    plot_ov.add_flags(cmd_plot);

    CLI11_PARSE(app, argc, argv);

    try {
        if (cmd_run->parsed()) {
            doge::RunConfig cfg = doge::RunConfig::from_file(config_path);
            run_ov.apply(cfg);
            return doge::run(cfg);
        }
        if (cmd_eval->parsed()) {
            doge::RunConfig cfg;
            cfg.mode = doge::RunMode::Eval;
            cfg.checkpoint = checkpoint_path;
            cfg.corpus.kind = corpus_path.size() > 6 &&
                                      corpus_path.substr(corpus_path.size() - 6) ==
                                          ".jsonl"
                                  ? doge::CorpusKind::Jsonl
                                  : doge::CorpusKind::Directory;
            cfg.corpus.path = corpus_path;
            cfg.out_dir = "eval-out";
            if (const char* env_out = std::getenv("DOGE_OUT")) cfg.out_dir = env_out;
            eval_ov.apply(cfg);
            return doge::run(cfg);
        }
        if (cmd_cancel->parsed()) {
            doge::RunConfig cfg = doge::RunConfig::from_file(config_path);
            cfg.mode = doge::RunMode::Cancellation;
            cancel_ov.apply(cfg);
            return doge::run(cfg);
        }
        if (cmd_plot->parsed()) {
            std::string csv = slurp((fs::path(run_dir) / "trajectory.csv").string());
            doge::WeightTrajectory traj = doge::trajectory_from_csv(csv);
            std::string plot_dir = plot_ov.out.value_or(run_dir);
            if (const char* env_out = std::getenv("DOGE_OUT")) {
                if (!plot_ov.out) plot_dir = env_out;
            }
            doge::emit_plot_data(traj, plot_dir);
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
