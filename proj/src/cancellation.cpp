// Copyright (c) 2026 the doge-lab authors
// SPDX-License-Identifier: Apache-2.0
#include "doge/cancellation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

namespace doge {

namespace {

constexpr double kDenomFloor = 1e-12;

// Per-group L2 norm of a full-layout flat gradient.
std::vector<double> group_norms(const FlatGradient& g) {
    std::vector<double> out(g.group_ids.size(), 0.0);
    for (std::size_t gi = 0; gi < g.group_ids.size(); ++gi) {
        std::size_t lo = g.group_offsets[gi];
        std::size_t hi = gi + 1 < g.group_offsets.size() ? g.group_offsets[gi + 1]
                                                         : g.values.size();
        double s = 0.0;
        for (std::size_t j = lo; j < hi; ++j) s += g.values[j] * g.values[j];
        out[gi] = std::sqrt(s);
    }
    return out;
}

}  // namespace

std::vector<double> cancellation_step_ratios(
    const std::vector<FlatGradient>& per_sample, double eta,
    CancellationDenominator denom) {
    if (per_sample.empty())
        throw ContractError("cancellation_step_ratios: no samples");
    std::size_t n = per_sample.front().group_ids.size();
    FlatGradient sum = per_sample.front();
    std::vector<double> denoms(n, 0.0);
    if (denom == CancellationDenominator::SumOfNorms) {
        std::vector<double> norms = group_norms(per_sample.front());
        for (std::size_t gi = 0; gi < n; ++gi) denoms[gi] += norms[gi];
    }
    for (std::size_t s = 1; s < per_sample.size(); ++s) {
        if (!per_sample[s].same_layout(sum))
            throw ContractError("cancellation_step_ratios: layout mismatch");
        if (denom == CancellationDenominator::SumOfNorms) {
            std::vector<double> norms = group_norms(per_sample[s]);
            for (std::size_t gi = 0; gi < n; ++gi) denoms[gi] += norms[gi];
        }
        sum.add_scaled(per_sample[s], 1.0);
    }
    std::vector<double> sum_norms = group_norms(sum);
    if (denom == CancellationDenominator::NormOfSum) denoms = sum_norms;

    std::vector<double> out(n, 0.0);
    for (std::size_t gi = 0; gi < n; ++gi)
        if (denoms[gi] > kDenomFloor) out[gi] = eta * sum_norms[gi] / denoms[gi];
    return out;
}

std::string CancellationScores::to_csv() const {
    std::ostringstream os;
    os.precision(17);
    os << "group,score,size\n";
    for (std::size_t i = 0; i < names.size(); ++i)
        os << names[i] << "," << scores[i] << "," << sizes[i] << "\n";
    return os.str();
}

CancellationScores measure_cancellation(const Model& model, const DomainCorpus& corpus,
                                        const CancellationOptions& opts, Rng& rng) {
    corpus.validate();
    if (opts.steps == 0 || opts.batch == 0)
        throw ContractError("measure_cancellation: steps and batch must be positive");
    if (opts.eta <= 0.0)
        throw ContractError("measure_cancellation: eta must be positive");

    Model probe = model.clone();
    const auto& groups = probe.parameter_groups();
    std::size_t n = groups.size();

    CancellationScores out;
    out.scores.assign(n, 0.0);
    out.names.reserve(n);
    out.sizes.reserve(n);
    for (const auto& g : groups) {
        out.names.push_back(g.name);
        out.sizes.push_back(g.param.size());
    }
    out.steps = opts.steps;
    out.batch = opts.batch;

    std::vector<double> uniform(corpus.num_domains(),
                                1.0 / static_cast<double>(corpus.num_domains()));
    std::vector<bool> ever_nonzero(n, false);

    for (std::size_t t = 0; t < opts.steps; ++t) {
        Batch batch = mixture_batch(corpus, uniform, opts.batch, rng);

        std::vector<FlatGradient> per_sample;
        per_sample.reserve(batch.rows);
        for (std::size_t r = 0; r < batch.rows; ++r) {
            Batch row;
            row.rows = 1;
            row.cols = batch.cols;
            row.tokens.assign(batch.tokens.begin() + r * batch.cols,
                              batch.tokens.begin() + (r + 1) * batch.cols);
            row.domain_ids = {batch.domain_ids[r]};

            probe.clear_grads();
            Tape tape;
            Tensor loss = probe.loss(tape, row);
            tape.backward(loss);
            per_sample.push_back(probe.flatten_gradients());
        }

        // ||delta w|| = eta * ||sum of per-sample grads|| under plain SGD
        std::vector<double> ratios =
            cancellation_step_ratios(per_sample, opts.eta, opts.denominator);
        for (std::size_t gi = 0; gi < n; ++gi) {
            out.scores[gi] += ratios[gi];
            if (ratios[gi] != 0.0) ever_nonzero[gi] = true;
        }

        FlatGradient sum = per_sample.front();
        for (std::size_t s = 1; s < per_sample.size(); ++s)
            sum.add_scaled(per_sample[s], 1.0);

        // Raw SGD on the summed gradient: no clipping, no optimizer state,
        // so the per-step ratio stays hand-checkable.
        for (std::size_t gi = 0; gi < n; ++gi) {
            std::size_t lo = sum.group_offsets[gi];
            Tensor p = groups[gi].param;
            auto& v = p.values();
            for (std::size_t j = 0; j < v.size(); ++j)
                v[j] -= opts.eta * sum.values[lo + j];
        }
    }

    for (std::size_t gi = 0; gi < n; ++gi)
        if (!ever_nonzero[gi])
            std::fprintf(stderr,
                         "warning: group %s saw no gradient signal; score left at 0\n",
                         out.names[gi].c_str());
    return out;
}

SelectionMask select_groups(const CancellationScores& scores, std::size_t k,
                            SelectionMode mode) {
    if (k == 0) throw ContractError("select_groups: k must be >= 1");
    std::size_t n = scores.scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores.scores[a] != scores.scores[b])
            return mode == SelectionMode::Low ? scores.scores[a] < scores.scores[b]
                                              : scores.scores[a] > scores.scores[b];
        return scores.names[a] < scores.names[b];
    });
    order.resize(std::min(k, n));

    SelectionMask mask;
    mask.group_ids.assign(order.begin(), order.end());
    std::sort(mask.group_ids.begin(), mask.group_ids.end());
    mask.strategy = (mode == SelectionMode::Low ? "low" : "high") + std::to_string(k);

    std::size_t total = 0, kept = 0;
    for (std::size_t i = 0; i < n; ++i) total += scores.sizes[i];
    for (std::size_t id : mask.group_ids) kept += scores.sizes[id];
    mask.compute_saved =
        total == 0 ? 0.0 : 1.0 - static_cast<double>(kept) / static_cast<double>(total);
    return mask;
}

SelectionMask select_groups_by_name(const CancellationScores& scores,
                                    const std::string& strategy) {
    SelectionMode mode;
    std::size_t pos;
    if (strategy.rfind("low", 0) == 0) {
        mode = SelectionMode::Low;
        pos = 3;
    } else if (strategy.rfind("high", 0) == 0) {
        mode = SelectionMode::High;
        pos = 4;
    } else {
        throw ConfigError("unknown selection strategy: " + strategy);
    }
    std::size_t k = 0;
    try {
        k = static_cast<std::size_t>(std::stoul(strategy.substr(pos)));
    } catch (const std::exception&) {
        throw ConfigError("unknown selection strategy: " + strategy);
    }
    if (k == 0) throw ConfigError("selection strategy needs k >= 1: " + strategy);
    return select_groups(scores, k, mode);
}

}  // namespace doge
