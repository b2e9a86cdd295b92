// Copyright (c) 2026 the doge-lab authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "doge/cancellation.hpp"
#include "doge/data.hpp"
#include "doge/doge.hpp"
#include "doge/model.hpp"

namespace doge {

enum class RunMode {
    ProxyUniversal,
    ProxyOod,
    BaseTrain,
    Eval,
    Cancellation,
    FullPipeline,
};

enum class CorpusKind { Directory, Jsonl, Synthetic };

struct CorpusSource {
    CorpusKind kind = CorpusKind::Synthetic;
    std::string path;        // directory or jsonl file
    SyntheticSpec synthetic; // used when kind == Synthetic

    DomainCorpus load(std::size_t context) const;
};

struct RunConfig {
    RunMode mode = RunMode::FullPipeline;
    CorpusSource corpus;
    TransformerConfig proxy_model;
    TransformerConfig base_model;
    DogeHyperparams doge;
    Optimizer base_optimizer = Optimizer::Adam;
    std::size_t base_steps = 500;
    std::size_t base_batch = 16;
    double base_lr_max = 5e-4;
    double base_lr_min = 1e-4;
    std::uint64_t seed = 0;
    std::string out_dir = "run-out";
    std::size_t log_stride = 1;
    std::optional<std::size_t> curriculum_stages;  // K
    std::optional<std::string> mask_strategy;      // e.g. "low30"
    CancellationOptions cancellation;
    std::string checkpoint;     // eval / base-train resume input
    std::string weights_file;   // base-train input; empty = uniform
    std::size_t threads = 1;    // accepted; execution is deterministic regardless

    /// Parses the JSON config file. Relative paths are kept relative to
    /// the process working directory. DOGE_OUT overrides out_dir.
    static RunConfig from_file(const std::string& path);
    static RunConfig from_json_text(const std::string& text);
    /// ConfigError with a field path on any violation.
    void validate() const;
};

struct EvalReport {
    std::vector<std::string> domain_names;
    std::vector<double> losses;        // per-domain mean validation loss
    std::vector<double> perplexities;  // exp(loss), per domain
    double average_perplexity = 0.0;   // exp(mean of per-domain losses)
    double worst_perplexity = 0.0;
    std::vector<std::uint64_t> token_counts;  // training tokens per domain

    std::string to_json() const;
    /// Re-validates the ppl/loss identities on load.
    static EvalReport from_json(const std::string& text);
};

/// Mean loss per domain over every validation sequence, plus the
/// derived perplexities. `token_counts` is copied through if given.
EvalReport evaluate(const Model& model, const DomainCorpus& valid,
                    const std::vector<std::uint64_t>* token_counts = nullptr);

struct BaseTrainResult {
    Model model;
    std::vector<std::uint64_t> token_counts;  // non-PAD tokens per domain
};

/// Trains with mixture sampling under `stages` (a single stage spanning
/// all steps reproduces fixed-alpha training). Cosine schedule, clip
/// 1.0, optimizer as carried by `model`. `model.step()` may be nonzero
/// when resuming; training continues to `steps` total. Checkpoints land
/// in `out_dir` when non-empty.
BaseTrainResult train_base(Model model, const DomainCorpus& train,
                           const std::vector<StageWeights>& stages,
                           std::size_t steps, std::size_t batch, double lr_max,
                           double lr_min, std::uint64_t seed,
                           const std::string& out_dir = "",
                           std::size_t checkpoint_stride = 200);

/// Writes alpha_stepwise.csv, alpha_average.csv, and loss_curves.csv.
void emit_plot_data(const WeightTrajectory& trajectory, const std::string& out_dir);

/// Inverse of trajectory_to_csv (losses and scores included).
WeightTrajectory trajectory_from_csv(const std::string& text);

/// Executes the configured mode; returns 0 on success. Artifacts are
/// written under config.out_dir.
int run(const RunConfig& config);

}  // namespace doge
