// Copyright (c) 2026 the doge-lab authors
// SPDX-License-Identifier: Apache-2.0

#include "doge/doge.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "json.hpp"

namespace doge {

DomainWeights DomainWeights::uniform(std::size_t k) {
    if (k == 0) throw ContractError("DomainWeights: dimension must be >= 1");
    DomainWeights w;
    w.values.assign(k, 1.0 / static_cast<double>(k));
    return w;
}

void DomainWeights::validate() const {
    if (values.empty()) throw ContractError("DomainWeights: empty");
    double sum = 0.0;
    for (double v : values) {
        if (!(v >= 0.0)) throw ContractError("DomainWeights: negative entry");
        sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
        throw ContractError("DomainWeights: entries sum to " + std::to_string(sum));
    }
}

void DomainWeights::renormalize() {
    double sum = 0.0;
    for (double v : values) sum += v;
    if (sum <= 0.0) throw ContractError("DomainWeights: cannot renormalize zero vector");
    for (double& v : values) v /= sum;
}

void DogeHyperparams::validate() const {
    if (steps < 1) throw ConfigError("hyperparams: steps must be >= 1");
    if (batch_per_domain < 1) throw ConfigError("hyperparams: batch size must be >= 1");
    if (!(mu > 0.0)) throw ConfigError("hyperparams: mu must be > 0");
    if (!(lr_max > 0.0) || !(lr_min > 0.0)) {
        throw ConfigError("hyperparams: step sizes must be > 0");
    }
}

DomainGradients per_domain_gradients(Model& model, const std::vector<Batch>& batches,
                                     const GroupMask* mask) {
    DomainGradients out;
    for (const Batch& batch : batches) {
        model.clear_grads();
        Tape tape;
        Tensor loss = model.loss(tape, batch);
        tape.backward(loss);
        out.losses.push_back(loss.scalar());
        out.grads.push_back(model.flatten_gradients());
        if (mask) out.masked.push_back(model.flatten_gradients(mask));
    }
    model.clear_grads();
    return out;
}

FlatGradient target_gradient_universal(Model& model, const DomainCorpus& corpus,
                                       std::size_t b_total, Rng& rng,
                                       const GroupMask* mask) {
    const std::size_t k = corpus.num_domains();
    const std::vector<double> uniform(k, 1.0 / static_cast<double>(k));
    Batch batch = mixture_batch(corpus, uniform, b_total, rng);
    model.clear_grads();
    Tape tape;
    Tensor loss = model.loss(tape, batch);
    tape.backward(loss);
    FlatGradient g = model.flatten_gradients(mask);
    model.clear_grads();
    // the uniform batch estimates the mean over domains; scale to the sum
    for (double& v : g.values) v *= static_cast<double>(k);
    return g;
}

GeneralizationScores generalization_scores(const std::vector<FlatGradient>& domain_grads,
                                           const FlatGradient& target_grad,
                                           bool normalize, bool ood_target) {
    GeneralizationScores s;
    s.ood_target = ood_target;
    for (const auto& g : domain_grads) s.values.push_back(g.dot(target_grad));
    if (normalize) {
        double mx = 0.0;
        for (double v : s.values) mx = std::max(mx, std::abs(v));
        if (mx > 0.0) {
            for (double& v : s.values) v /= mx;
        }
        s.normalized = true;
    }
    return s;
}

std::pair<double, double> influence_decomposition(
    const std::vector<FlatGradient>& domain_grads, std::size_t j) {
    if (j >= domain_grads.size()) {
        throw ContractError("influence_decomposition: domain index " +
                            std::to_string(j) + " out of range");
    }
    // Summation order matches generalization_scores against the summed
    // gradient: accumulate over domains i in order, elementwise inner.
    double cross = 0.0;
    for (std::size_t i = 0; i < domain_grads.size(); ++i) {
        if (i == j) continue;
        cross += domain_grads[j].dot(domain_grads[i]);
    }
    const double self = domain_grads[j].dot(domain_grads[j]);
    return {cross, self};
}

DomainWeights update_domain_weights(const DomainWeights& alpha_prev,
                                    const std::vector<double>& scores, double eta,
                                    double mu) {
    if (!(mu > 0.0)) throw ContractError("update_domain_weights: mu must be > 0");
    if (!(eta > 0.0)) throw ContractError("update_domain_weights: eta must be > 0");
    if (scores.size() != alpha_prev.dim()) {
        throw ContractError("update_domain_weights: score dimension mismatch");
    }
    double prev_sum = 0.0;
    for (double a : alpha_prev.values) {
        if (!(a >= 0.0)) throw ContractError("update_domain_weights: negative alpha");
        prev_sum += a;
    }
    if (prev_sum <= 0.0) {
        throw ContractError("update_domain_weights: alpha_prev is all zero");
    }
    for (double w : scores) {
        if (!std::isfinite(w)) {
            throw ContractError("update_domain_weights: non-finite score");
        }
    }

    // log alpha' = log alpha + eta*W/mu, shifted by the max for stability
    const std::size_t k = alpha_prev.dim();
    std::vector<double> log_a(k, -std::numeric_limits<double>::infinity());
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < k; ++i) {
        if (alpha_prev.values[i] > 0.0) {
            log_a[i] = std::log(alpha_prev.values[i]) + eta * scores[i] / mu;
            mx = std::max(mx, log_a[i]);
        }
    }
    DomainWeights out;
    out.values.resize(k);
    double z = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        out.values[i] = std::isinf(log_a[i]) ? 0.0 : std::exp(log_a[i] - mx);
        z += out.values[i];
    }
    for (double& v : out.values) v /= z;
    return out;
}

void reweighted_step(Model& model, const std::vector<FlatGradient>& domain_grads,
                     const DomainWeights& alpha, double eta) {
    if (domain_grads.empty()) throw ContractError("reweighted_step: no gradients");
    if (alpha.dim() != domain_grads.size()) {
        throw ContractError("reweighted_step: alpha dimension mismatch");
    }
    FlatGradient direction = FlatGradient::zeros_like(domain_grads[0]);
    for (std::size_t i = 0; i < domain_grads.size(); ++i) {
        direction.add_scaled(domain_grads[i], alpha.values[i]);
    }
    model.apply_update(direction, eta);
}

namespace {

ProxyResult run_proxy(const DomainCorpus& corpus, const TransformerConfig& config,
                      const DogeHyperparams& hp, bool ood_mode) {
    hp.validate();
    corpus.validate();
    const std::size_t k = corpus.num_domains();
    if (!ood_mode && k < 2) {
        throw ConfigError("run_proxy: universal mode needs at least 2 domains");
    }
    if (ood_mode && !corpus.ood) {
        throw ConfigError("run_proxy: OOD mode requires a target domain");
    }

    Model model = Model::init(config, Optimizer::Sgd);
    const GroupMask* mask = hp.mask ? &*hp.mask : nullptr;

    std::vector<Rng> domain_rngs;
    for (std::size_t i = 0; i < k; ++i) {
        domain_rngs.push_back(derive_rng(hp.seed, "proxy-domain-batch", i));
    }
    Rng target_rng = derive_rng(hp.seed, "proxy-target-batch", 0);

    DomainWeights alpha = DomainWeights::uniform(k);
    WeightTrajectory traj;
    traj.ood_mode = ood_mode;
    traj.domain_names = corpus.domain_names();
    std::vector<double> alpha_sum(k, 0.0);

    for (std::size_t t = 0; t < hp.steps; ++t) {
        try {
            std::vector<Batch> batches;
            for (std::size_t i = 0; i < k; ++i) {
                batches.push_back(uniform_domain_batch(corpus, static_cast<int>(i),
                                                       hp.batch_per_domain,
                                                       domain_rngs[i]));
            }
            DomainGradients dg = per_domain_gradients(model, batches, mask);

            FlatGradient target;
            if (ood_mode) {
                Batch ood_batch = uniform_domain_batch(corpus, kOodDomainId,
                                                       hp.batch_per_domain, target_rng);
                model.clear_grads();
                Tape tape;
                Tensor loss = model.loss(tape, ood_batch);
                tape.backward(loss);
                target = model.flatten_gradients(mask);
                model.clear_grads();
            } else if (hp.reuse_domain_grads) {
                const auto& src = mask ? dg.masked : dg.grads;
                target = FlatGradient::zeros_like(src[0]);
                for (const auto& g : src) target.add_scaled(g, 1.0);
            } else {
                target = target_gradient_universal(model, corpus,
                                                   hp.batch_per_domain * k, target_rng,
                                                   mask);
            }

            const auto& score_grads = mask ? dg.masked : dg.grads;
            GeneralizationScores scores = generalization_scores(
                score_grads, target, hp.normalize_scores, ood_mode);

            const double eta = cosine_lr(t, hp.steps, hp.lr_max, hp.lr_min,
                                         hp.warmup_frac);
            alpha = update_domain_weights(alpha, scores.values,
                                          eta * hp.weight_eta_scale, hp.mu);
            reweighted_step(model, dg.grads, alpha, eta);

            for (std::size_t i = 0; i < k; ++i) alpha_sum[i] += alpha.values[i];
            traj.points.push_back({t + 1, alpha, scores, dg.losses});
        } catch (const std::exception& e) {
            throw ContractError("run_proxy: step " + std::to_string(t + 1) +
                                " failed: " + e.what());
        }
    }

    ProxyResult result{DomainWeights{}, std::move(traj), std::move(model)};
    result.average_alpha.values.resize(k);
    for (std::size_t i = 0; i < k; ++i) {
        result.average_alpha.values[i] = alpha_sum[i] / static_cast<double>(hp.steps);
    }
    result.average_alpha.renormalize();
    return result;
}

}  // namespace

ProxyResult run_proxy_universal(const DomainCorpus& corpus,
                                const TransformerConfig& config,
                                const DogeHyperparams& hp) {
    return run_proxy(corpus, config, hp, /*ood_mode=*/false);
}

ProxyResult run_proxy_ood(const DomainCorpus& corpus, const TransformerConfig& config,
                          const DogeHyperparams& hp) {
    return run_proxy(corpus, config, hp, /*ood_mode=*/true);
}

DomainWeights average_weights(const WeightTrajectory& trajectory) {
    if (trajectory.points.empty()) {
        throw ContractError("average_weights: empty trajectory");
    }
    const std::size_t k = trajectory.points.front().alpha.dim();
    DomainWeights avg;
    avg.values.assign(k, 0.0);
    for (const auto& p : trajectory.points) {
        for (std::size_t i = 0; i < k; ++i) avg.values[i] += p.alpha.values[i];
    }
    for (double& v : avg.values) v /= static_cast<double>(trajectory.points.size());
    avg.renormalize();
    return avg;
}

std::vector<StageWeights> stage_average(const WeightTrajectory& trajectory,
                                        std::size_t stages) {
    if (trajectory.points.empty()) {
        throw ContractError("stage_average: empty trajectory");
    }
    const std::size_t T = trajectory.points.size();
    if (stages < 1 || stages > T) {
        throw ContractError("stage_average: need 1 <= K <= T, got K=" +
                            std::to_string(stages) + " T=" + std::to_string(T));
    }
    const std::size_t base = T / stages;  // remainder goes to the last stage
    std::vector<StageWeights> out;
    const std::size_t k = trajectory.points.front().alpha.dim();
    std::size_t begin = 0;
    for (std::size_t s = 0; s < stages; ++s) {
        const std::size_t end = (s + 1 == stages) ? T : begin + base;
        StageWeights sw;
        sw.start_step = trajectory.points[begin].step;
        sw.end_step = trajectory.points[end - 1].step;
        sw.weights.values.assign(k, 0.0);
        for (std::size_t t = begin; t < end; ++t) {
            for (std::size_t i = 0; i < k; ++i) {
                sw.weights.values[i] += trajectory.points[t].alpha.values[i];
            }
        }
        for (double& v : sw.weights.values) v /= static_cast<double>(end - begin);
        sw.weights.renormalize();
        out.push_back(std::move(sw));
        begin = end;
    }
    return out;
}

std::string trajectory_to_csv(const WeightTrajectory& trajectory,
                              std::size_t log_stride) {
    if (log_stride < 1) throw ContractError("trajectory_to_csv: stride must be >= 1");
    std::ostringstream out;
    out.precision(17);
    out << "step,domain,alpha,score,loss\n";
    for (const auto& p : trajectory.points) {
        if ((p.step - 1) % log_stride != 0 && p.step != trajectory.points.back().step) {
            continue;
        }
        for (std::size_t i = 0; i < p.alpha.dim(); ++i) {
            const std::string& name = i < trajectory.domain_names.size()
                                          ? trajectory.domain_names[i]
                                          : std::to_string(i);
            out << p.step << ',' << name << ',' << p.alpha.values[i] << ','
                << p.scores.values[i] << ',' << p.losses[i] << '\n';
        }
    }
    return out.str();
}

std::string weights_to_json(const std::vector<std::string>& names,
                            const DomainWeights& alpha,
                            const std::vector<StageWeights>& stages) {
    if (names.size() != alpha.dim()) {
        throw ContractError("weights_to_json: name/weight dimension mismatch");
    }
    nlohmann::ordered_json j;
    nlohmann::ordered_json w;
    for (std::size_t i = 0; i < names.size(); ++i) w[names[i]] = alpha.values[i];
    j["weights"] = w;
    if (!stages.empty()) {
        nlohmann::ordered_json arr = nlohmann::ordered_json::array();
        for (const auto& s : stages) {
            nlohmann::ordered_json sw;
            for (std::size_t i = 0; i < names.size(); ++i) {
                sw[names[i]] = s.weights.values[i];
            }
            arr.push_back({{"start_step", s.start_step},
                           {"end_step", s.end_step},
                           {"weights", sw}});
        }
        j["stages"] = arr;
    }
    return j.dump(2);
}

std::pair<std::vector<std::string>, DomainWeights> weights_from_json(
    const std::string& text) {
    nlohmann::ordered_json j;
    try {
        j = nlohmann::ordered_json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("weights_from_json: parse error: ") + e.what());
    }
    if (!j.contains("weights")) {
        throw DataError("weights_from_json: missing 'weights' object");
    }
    std::vector<std::string> names;
    DomainWeights w;
    for (const auto& [key, val] : j["weights"].items()) {
        names.push_back(key);
        w.values.push_back(val.get<double>());
    }
    return {names, w};
}

}  // namespace doge
