// Copyright (c) 2026 the doge-lab authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "doge/data.hpp"
#include "doge/tensor.hpp"

namespace doge {

struct TransformerConfig {
    std::size_t layers = 2;
    std::size_t heads = 2;
    std::size_t embed_dim = 32;
    std::size_t hidden_dim = 128;
    std::size_t context = 64;
    std::size_t vocab = tokens::kVocab;
    std::uint32_t seed = 0;

    void validate() const;
    std::size_t param_count() const;
    bool operator==(const TransformerConfig&) const = default;
};

struct ParameterGroup {
    std::size_t id = 0;
    std::string name;
    Tensor param;
};

enum class Optimizer { Sgd, Adam };

/// Adam hyperparameters (AdamW-style decoupled weight decay).
struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

/// Optional subset of parameter groups, by ascending group id.
using GroupMask = std::vector<std::size_t>;

/// Cosine schedule with linear warmup over the first `warmup_frac` of
/// `total` steps. `step` is 0-based.
double cosine_lr(std::size_t step, std::size_t total, double lr_max, double lr_min,
                 double warmup_frac = 0.05);

/// Decoder-only transformer with per-matrix/bias parameter groups.
class Model {
  public:
    static Model init(const TransformerConfig& cfg, Optimizer opt = Optimizer::Sgd);

    const TransformerConfig& config() const { return cfg_; }
    Optimizer optimizer() const { return opt_; }
    std::uint64_t step() const { return step_; }

    const std::vector<ParameterGroup>& parameter_groups() const { return groups_; }
    std::size_t param_count() const { return total_params_; }

    /// Mean next-token cross-entropy over all predicted (non-PAD)
    /// positions of the batch, recorded on the tape.
    Tensor loss(Tape& tape, const Batch& batch) const;
    /// Forward-only convenience; leaves no gradients behind.
    double loss_value(const Batch& batch) const;

    void clear_grads();

    /// Deterministic concatenation of per-group gradients in group
    /// order, restricted to `mask` when given.
    FlatGradient flatten_gradients(const GroupMask* mask = nullptr) const;

    /// Clips `direction` at global norm 1.0, then applies one optimizer
    /// step of size `step_size`. Groups absent from `direction` are
    /// treated as zero and left untouched.
    void apply_update(const FlatGradient& direction, double step_size);

    /// Deep copy, including optimizer state.
    Model clone() const;

    void save_checkpoint(const std::string& path) const;
    static Model load_checkpoint(const std::string& path);

    /// Resolves group names to a sorted id mask; ContractError on
    /// unknown names.
    GroupMask mask_from_names(const std::vector<std::string>& names) const;

  private:
    TransformerConfig cfg_;
    std::vector<ParameterGroup> groups_;
    std::size_t total_params_ = 0;
    Optimizer opt_ = Optimizer::Sgd;
    AdamConfig adam_;
    std::uint64_t adam_t_ = 0;
    std::vector<std::vector<double>> adam_m_;
    std::vector<std::vector<double>> adam_v_;
    std::uint64_t step_ = 0;

    // group name -> index shortcuts built at init
    std::size_t gid(const std::string& name) const;
    Model() = default;
    void finish_groups();
};

}  // namespace doge
