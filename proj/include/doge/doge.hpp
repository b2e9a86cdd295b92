// Copyright (c) 2026 the doge-lab authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "doge/data.hpp"
#include "doge/model.hpp"
#include "doge/tensor.hpp"

namespace doge {

/// Point on the k-simplex.
struct DomainWeights {
    std::vector<double> values;

    static DomainWeights uniform(std::size_t k);
    std::size_t dim() const { return values.size(); }
    /// Entries non-negative and summing to 1 within 1e-9.
    void validate() const;
    void renormalize();
};

struct GeneralizationScores {
    std::vector<double> values;
    bool ood_target = false;
    bool normalized = false;
};

struct TrajectoryPoint {
    std::size_t step = 0;  // 1-based
    DomainWeights alpha;
    GeneralizationScores scores;
    std::vector<double> losses;  // per-domain batch losses at this step
};

struct WeightTrajectory {
    std::vector<TrajectoryPoint> points;
    bool ood_mode = false;
    std::vector<std::string> domain_names;
};

struct DogeHyperparams {
    std::size_t steps = 100;             // T
    std::size_t batch_per_domain = 8;    // b
    double lr_max = 5e-4;
    double lr_min = 1e-4;
    double warmup_frac = 0.05;
    double mu = 1.0;                     // Bregman coefficient
    double weight_eta_scale = 1.0;       // multiplier on eta in the alpha update
    bool normalize_scores = false;       // divide W by max |W_j|
    bool reuse_domain_grads = false;     // target = sum of per-domain grads
    std::optional<GroupMask> mask;       // restrict W to selected groups
    std::uint64_t seed = 0;              // sampling seed

    void validate() const;
};

struct ProxyResult {
    DomainWeights average_alpha;
    WeightTrajectory trajectory;
    Model model;
};

struct DomainGradients {
    std::vector<FlatGradient> grads;   // full (unmasked), domain order
    std::vector<FlatGradient> masked;  // empty unless a mask was given
    std::vector<double> losses;
};

/// Gradient of the mean loss on each domain's batch, in domain order.
DomainGradients per_domain_gradients(Model& model, const std::vector<Batch>& batches,
                                     const GroupMask* mask = nullptr);

/// Estimator of the summed domain gradient: one fresh uniform-mixture
/// batch of size b_total, scaled by k.
FlatGradient target_gradient_universal(Model& model, const DomainCorpus& corpus,
                                       std::size_t b_total, Rng& rng,
                                       const GroupMask* mask = nullptr);

/// W_j = <domain gradient j, target gradient>.
GeneralizationScores generalization_scores(const std::vector<FlatGradient>& domain_grads,
                                           const FlatGradient& target_grad,
                                           bool normalize = false,
                                           bool ood_target = false);

/// (out-of-domain influence, domain difficulty) for domain j; their sum
/// equals W_j against the summed gradient, bit-exactly in this
/// summation order.
std::pair<double, double> influence_decomposition(
    const std::vector<FlatGradient>& domain_grads, std::size_t j);

/// Multiplicative-weights (entropic mirror descent) step, computed in
/// log space with a max shift.
DomainWeights update_domain_weights(const DomainWeights& alpha_prev,
                                    const std::vector<double>& scores, double eta,
                                    double mu);

/// One reweighted model step: direction = sum_i alpha_i * grad_i.
void reweighted_step(Model& model, const std::vector<FlatGradient>& domain_grads,
                     const DomainWeights& alpha, double eta);

ProxyResult run_proxy_universal(const DomainCorpus& corpus,
                                const TransformerConfig& config,
                                const DogeHyperparams& hp);

/// Same loop with the target gradient taken on the OOD domain.
ProxyResult run_proxy_ood(const DomainCorpus& corpus, const TransformerConfig& config,
                          const DogeHyperparams& hp);

DomainWeights average_weights(const WeightTrajectory& trajectory);

struct StageWeights {
    std::size_t start_step = 0;  // 1-based, inclusive
    std::size_t end_step = 0;    // inclusive
    DomainWeights weights;
};

/// K contiguous near-equal stages (remainder steps go to the last one);
/// expected per-domain token counts match the global average exactly.
std::vector<StageWeights> stage_average(const WeightTrajectory& trajectory,
                                        std::size_t stages);

// --- serialization -------------------------------------------------------

/// CSV with header `step,domain,alpha,score,loss`, one row per domain
/// per logged step.
std::string trajectory_to_csv(const WeightTrajectory& trajectory,
                              std::size_t log_stride = 1);

/// JSON: {"weights": {domain: w}, "stages": [...]} in domain order.
std::string weights_to_json(const std::vector<std::string>& names,
                            const DomainWeights& alpha,
                            const std::vector<StageWeights>& stages = {});

std::pair<std::vector<std::string>, DomainWeights> weights_from_json(
    const std::string& text);

}  // namespace doge
