// Copyright (c) 2026 the doge-lab authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "doge/data.hpp"
#include "doge/model.hpp"

namespace doge {

/// Per parameter group: accumulated ratio of realized weight change to
/// per-sample gradient magnitude over a short uniform-mixture warmup.
struct CancellationScores {
    std::vector<double> scores;      // indexed by group id
    std::vector<std::string> names;  // group names, same order
    std::vector<std::size_t> sizes;  // parameters per group
    std::size_t steps = 0;           // T_c
    std::size_t batch = 0;

    std::string to_csv() const;  // header: group,score,size
};

enum class CancellationDenominator {
    SumOfNorms,  // sum of per-sample gradient L2 norms (default)
    NormOfSum,   // L2 norm of the summed per-sample gradient
};

struct CancellationOptions {
    std::size_t steps = 1000;  // T_c
    std::size_t batch = 8;     // samples per step, uniform over domains
    double eta = 1e-3;         // constant plain-SGD step size
    CancellationDenominator denominator = CancellationDenominator::SumOfNorms;
};

/// Per-group ratio ||eta * sum_i g_i|| / denominator for one step, the
/// quantity accumulated over steps by measure_cancellation. Groups whose
/// denominator underflows contribute 0.
std::vector<double> cancellation_step_ratios(
    const std::vector<FlatGradient>& per_sample, double eta,
    CancellationDenominator denom = CancellationDenominator::SumOfNorms);

/// Trains a throwaway plain-SGD copy for `steps` uniform-mixture steps;
/// the update direction is the sum of per-sample gradients and no
/// clipping is applied, so hand-derivable ratios hold exactly. The
/// caller's model is not touched.
CancellationScores measure_cancellation(const Model& model, const DomainCorpus& corpus,
                                        const CancellationOptions& opts, Rng& rng);

enum class SelectionMode { Low, High };

struct SelectionMask {
    GroupMask group_ids;  // ascending
    std::string strategy; // e.g. "low30"
    /// Fraction of parameters excluded from score computation.
    double compute_saved = 0.0;
};

/// First min(k, count) groups sorted by score (ascending for Low,
/// descending for High), ties broken by group name ascending.
SelectionMask select_groups(const CancellationScores& scores, std::size_t k,
                            SelectionMode mode);

/// Parses "low30" / "high10" style strategy names.
SelectionMask select_groups_by_name(const CancellationScores& scores,
                                    const std::string& strategy);

}  // namespace doge
