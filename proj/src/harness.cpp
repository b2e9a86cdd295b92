// Copyright (c) 2026 the doge-lab authors
// SPDX-License-Identifier: Apache-2.0
#include "doge/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "json.hpp"

namespace doge {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
    fs::path p(path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path);
    out << text;
}

void check_keys(const json& j, const std::string& where,
                std::initializer_list<const char*> allowed) {
    for (const auto& [key, _] : j.items()) {
        if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) {
                return key == a;
            }) == allowed.end()) {
            throw ConfigError(where + ": unknown key '" + key + "'");
        }
    }
}

TransformerConfig parse_model(const json& j, const std::string& where,
                              std::uint32_t default_seed) {
    check_keys(j, where,
               {"layers", "heads", "embed_dim", "hidden_dim", "context", "vocab",
                "seed"});
    TransformerConfig c;
    c.seed = default_seed;
    try {
        if (j.contains("layers")) c.layers = j["layers"].get<std::size_t>();
        if (j.contains("heads")) c.heads = j["heads"].get<std::size_t>();
        if (j.contains("embed_dim")) c.embed_dim = j["embed_dim"].get<std::size_t>();
        if (j.contains("hidden_dim")) c.hidden_dim = j["hidden_dim"].get<std::size_t>();
        if (j.contains("context")) c.context = j["context"].get<std::size_t>();
        if (j.contains("vocab")) c.vocab = j["vocab"].get<std::size_t>();
        if (j.contains("seed")) c.seed = j["seed"].get<std::uint32_t>();
    } catch (const json::exception& e) {
        throw ConfigError(where + ": " + e.what());
    }
    return c;
}

SyntheticSpec parse_synthetic(const json& j, std::uint64_t default_seed) {
    check_keys(j, "corpus.synthetic",
               {"domains", "context", "sequences_per_domain", "seed", "ood_source",
                "ood_mixture"});
    SyntheticSpec s;
    s.seed = default_seed;
    if (!j.contains("domains") || !j["domains"].is_array())
        throw ConfigError("corpus.synthetic.domains: required array");
    for (std::size_t i = 0; i < j["domains"].size(); ++i) {
        const json& d = j["domains"][i];
        std::string where = "corpus.synthetic.domains[" + std::to_string(i) + "]";
        check_keys(d, where, {"name", "symbol_lo", "symbol_hi", "overlap_with",
                              "overlap"});
        SyntheticDomainSpec ds;
        ds.name = d.value("name", "d" + std::to_string(i));
        ds.symbol_lo = d.value("symbol_lo", 0);
        ds.symbol_hi = d.value("symbol_hi", 16);
        ds.overlap_with = d.value("overlap_with", -1);
        ds.overlap = d.value("overlap", 0.0);
        s.domains.push_back(ds);
    }
    if (j.contains("context")) s.context = j["context"].get<std::size_t>();
    if (j.contains("sequences_per_domain"))
        s.sequences_per_domain = j["sequences_per_domain"].get<std::size_t>();
    if (j.contains("seed")) s.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("ood_source")) s.ood_source = j["ood_source"].get<int>();
    if (j.contains("ood_mixture"))
        s.ood_mixture = j["ood_mixture"].get<std::vector<double>>();
    return s;
}

RunMode parse_mode(const std::string& m) {
    if (m == "proxy-universal") return RunMode::ProxyUniversal;
    if (m == "proxy-ood") return RunMode::ProxyOod;
    if (m == "base-train") return RunMode::BaseTrain;
    if (m == "eval") return RunMode::Eval;
    if (m == "cancellation") return RunMode::Cancellation;
    if (m == "full-pipeline") return RunMode::FullPipeline;
    throw ConfigError("mode: unknown mode '" + m + "'");
}

// rows in [r0, r1) of batch, as their own batch
std::size_t included_positions(const Batch& b) {
    std::size_t n = 0;
    for (std::size_t r = 0; r < b.rows; ++r)
        for (std::size_t t = 0; t + 1 < b.cols; ++t)
            if (b.at(r, t) != tokens::kPad && b.at(r, t + 1) != tokens::kPad) ++n;
    return n;
}

std::vector<StageWeights> stages_from_json_text(const std::string& text,
                                                std::size_t k) {
    json j = json::parse(text);
    std::vector<StageWeights> stages;
    if (!j.contains("stages")) return stages;
    for (const auto& s : j["stages"]) {
        StageWeights sw;
        sw.start_step = s["start_step"].get<std::size_t>();
        sw.end_step = s["end_step"].get<std::size_t>();
        for (const auto& [_, v] : s["weights"].items())
            sw.weights.values.push_back(v.get<double>());
        if (sw.weights.dim() != k)
            throw DataError("stages: weight dimension mismatch");
        stages.push_back(sw);
    }
    return stages;
}

}  // namespace

DomainCorpus CorpusSource::load(std::size_t context) const {
    switch (kind) {
        case CorpusKind::Directory:
            return ingest(path, context);
        case CorpusKind::Jsonl:
            return ingest_jsonl(path, context);
        case CorpusKind::Synthetic: {
            SyntheticSpec s = synthetic;
            s.context = context;
            return generate_synthetic(s);
        }
    }
    throw ContractError("CorpusSource: bad kind");
}

RunConfig RunConfig::from_file(const std::string& path) {
    return from_json_text(read_file(path));
}

RunConfig RunConfig::from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: parse error: ") + e.what());
    }
    check_keys(j, "config",
               {"mode", "corpus", "proxy_model", "base_model", "doge",
                "base_optimizer", "base_steps", "base_batch", "base_lr_max",
                "base_lr_min", "seed", "out", "log_stride", "curriculum_stages",
                "mask_strategy", "cancellation", "checkpoint", "weights_file",
                "threads"});

    RunConfig c;
    if (!j.contains("seed"))
        throw ConfigError("seed: required (no wall-clock defaults)");
    c.seed = j["seed"].get<std::uint64_t>();
    if (!j.contains("mode")) throw ConfigError("mode: required");
    c.mode = parse_mode(j["mode"].get<std::string>());

    if (j.contains("corpus")) {
        const json& cj = j["corpus"];
        check_keys(cj, "corpus", {"kind", "path", "synthetic"});
        std::string kind = cj.value("kind", "synthetic");
        if (kind == "directory") c.corpus.kind = CorpusKind::Directory;
        else if (kind == "jsonl") c.corpus.kind = CorpusKind::Jsonl;
        else if (kind == "synthetic") c.corpus.kind = CorpusKind::Synthetic;
        else throw ConfigError("corpus.kind: unknown kind '" + kind + "'");
        c.corpus.path = cj.value("path", "");
        if (c.corpus.kind == CorpusKind::Synthetic) {
            if (!cj.contains("synthetic"))
                throw ConfigError("corpus.synthetic: required for synthetic corpora");
            c.corpus.synthetic = parse_synthetic(cj["synthetic"], c.seed);
        }
    } else if (c.mode != RunMode::Eval) {
        throw ConfigError("corpus: required");
    }

    c.proxy_model = j.contains("proxy_model")
                        ? parse_model(j["proxy_model"], "proxy_model",
                                      static_cast<std::uint32_t>(c.seed))
                        : TransformerConfig{.seed = static_cast<std::uint32_t>(c.seed)};
    c.base_model = j.contains("base_model")
                       ? parse_model(j["base_model"], "base_model",
                                     static_cast<std::uint32_t>(c.seed + 1))
                       : TransformerConfig{.seed =
                                               static_cast<std::uint32_t>(c.seed + 1)};

    c.doge.seed = c.seed;
    if (j.contains("doge")) {
        const json& dj = j["doge"];
        check_keys(dj, "doge",
                   {"steps", "batch_per_domain", "lr_max", "lr_min", "warmup_frac",
                    "mu", "weight_eta_scale", "normalize_scores",
                    "reuse_domain_grads", "seed"});
        if (dj.contains("steps")) c.doge.steps = dj["steps"].get<std::size_t>();
        if (dj.contains("batch_per_domain"))
            c.doge.batch_per_domain = dj["batch_per_domain"].get<std::size_t>();
        if (dj.contains("lr_max")) c.doge.lr_max = dj["lr_max"].get<double>();
        if (dj.contains("lr_min")) c.doge.lr_min = dj["lr_min"].get<double>();
        if (dj.contains("warmup_frac"))
            c.doge.warmup_frac = dj["warmup_frac"].get<double>();
        if (dj.contains("mu")) c.doge.mu = dj["mu"].get<double>();
        if (dj.contains("weight_eta_scale"))
            c.doge.weight_eta_scale = dj["weight_eta_scale"].get<double>();
        if (dj.contains("normalize_scores"))
            c.doge.normalize_scores = dj["normalize_scores"].get<bool>();
        if (dj.contains("reuse_domain_grads"))
            c.doge.reuse_domain_grads = dj["reuse_domain_grads"].get<bool>();
        if (dj.contains("seed")) c.doge.seed = dj["seed"].get<std::uint64_t>();
    }

    if (j.contains("base_optimizer")) {
        std::string o = j["base_optimizer"].get<std::string>();
        if (o == "adam") c.base_optimizer = Optimizer::Adam;
        else if (o == "sgd") c.base_optimizer = Optimizer::Sgd;
        else throw ConfigError("base_optimizer: unknown optimizer '" + o + "'");
    }
    c.base_steps = j.value("base_steps", c.base_steps);
    c.base_batch = j.value("base_batch", c.base_batch);
    c.base_lr_max = j.value("base_lr_max", c.base_lr_max);
    c.base_lr_min = j.value("base_lr_min", c.base_lr_min);
    c.out_dir = j.value("out", c.out_dir);
    c.log_stride = j.value("log_stride", c.log_stride);
    if (j.contains("curriculum_stages"))
        c.curriculum_stages = j["curriculum_stages"].get<std::size_t>();
    if (j.contains("mask_strategy"))
        c.mask_strategy = j["mask_strategy"].get<std::string>();
    if (j.contains("cancellation")) {
        const json& kj = j["cancellation"];
        check_keys(kj, "cancellation", {"steps", "batch", "eta", "denominator"});
        if (kj.contains("steps"))
            c.cancellation.steps = kj["steps"].get<std::size_t>();
        if (kj.contains("batch"))
            c.cancellation.batch = kj["batch"].get<std::size_t>();
        if (kj.contains("eta")) c.cancellation.eta = kj["eta"].get<double>();
        if (kj.contains("denominator")) {
            std::string d = kj["denominator"].get<std::string>();
            if (d == "sum-of-norms")
                c.cancellation.denominator = CancellationDenominator::SumOfNorms;
            else if (d == "norm-of-sum")
                c.cancellation.denominator = CancellationDenominator::NormOfSum;
            else
                throw ConfigError("cancellation.denominator: unknown value '" + d +
                                  "'");
        }
    }
    c.checkpoint = j.value("checkpoint", "");
    c.weights_file = j.value("weights_file", "");
    c.threads = j.value("threads", std::size_t{1});

    if (const char* env_out = std::getenv("DOGE_OUT")) c.out_dir = env_out;
    c.validate();
    return c;
}

void RunConfig::validate() const {
    if (corpus.kind != CorpusKind::Synthetic && mode != RunMode::Eval) {
        if (corpus.path.empty())
            throw ConfigError("corpus.path: required for non-synthetic corpora");
        if (!fs::exists(corpus.path))
            throw ConfigError("corpus.path: does not exist: " + corpus.path);
    }
    if (curriculum_stages && *curriculum_stages < 1)
        throw ConfigError("curriculum_stages: must be >= 1");
    if (mode == RunMode::Eval) {
        if (checkpoint.empty()) throw ConfigError("checkpoint: required for eval");
        if (!fs::exists(checkpoint))
            throw ConfigError("checkpoint: does not exist: " + checkpoint);
    }
    if (!weights_file.empty() && !fs::exists(weights_file))
        throw ConfigError("weights_file: does not exist: " + weights_file);
    if (threads < 1) throw ConfigError("threads: must be >= 1");
    if (log_stride < 1) throw ConfigError("log_stride: must be >= 1");
    if (mode == RunMode::ProxyUniversal || mode == RunMode::ProxyOod ||
        mode == RunMode::FullPipeline) {
        proxy_model.validate();
        doge.validate();
    }
    if (mode == RunMode::BaseTrain || mode == RunMode::FullPipeline)
        base_model.validate();
    if (mode == RunMode::FullPipeline && proxy_model.context != base_model.context)
        throw ConfigError(
            "base_model.context: must match proxy_model.context (one corpus)");
}

EvalReport evaluate(const Model& model, const DomainCorpus& valid,
                    const std::vector<std::uint64_t>* token_counts) {
    valid.validate();
    EvalReport rep;
    rep.domain_names = valid.domain_names();
    const std::size_t chunk = 16;
    for (const auto& dom : valid.domains) {
        double weighted = 0.0;
        std::size_t positions = 0;
        for (std::size_t lo = 0; lo < dom.sequences.size(); lo += chunk) {
            std::size_t hi = std::min(lo + chunk, dom.sequences.size());
            Batch b;
            b.rows = hi - lo;
            b.cols = valid.context;
            b.tokens.reserve(b.rows * b.cols);
            for (std::size_t r = lo; r < hi; ++r)
                b.tokens.insert(b.tokens.end(), dom.sequences[r].begin(),
                                dom.sequences[r].end());
            b.domain_ids.assign(b.rows, 0);
            std::size_t inc = included_positions(b);
            if (inc == 0) continue;
            weighted += model.loss_value(b) * static_cast<double>(inc);
            positions += inc;
        }
        if (positions == 0)
            throw DataError("evaluate: domain " + dom.name +
                            " has no scorable positions");
        rep.losses.push_back(weighted / static_cast<double>(positions));
    }
    double mean_loss = 0.0;
    for (double l : rep.losses) {
        rep.perplexities.push_back(std::exp(l));
        mean_loss += l;
    }
    mean_loss /= static_cast<double>(rep.losses.size());
    rep.average_perplexity = std::exp(mean_loss);
    rep.worst_perplexity =
        *std::max_element(rep.perplexities.begin(), rep.perplexities.end());
    if (token_counts) rep.token_counts = *token_counts;
    else rep.token_counts.assign(rep.losses.size(), 0);
    return rep;
}

std::string EvalReport::to_json() const {
    nlohmann::ordered_json j;
    nlohmann::ordered_json domains = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < domain_names.size(); ++i) {
        domains.push_back({{"domain", domain_names[i]},
                           {"loss", losses[i]},
                           {"perplexity", perplexities[i]},
                           {"tokens", token_counts[i]}});
    }
    j["domains"] = domains;
    j["average_perplexity"] = average_perplexity;
    j["worst_perplexity"] = worst_perplexity;
    return j.dump(2);
}

EvalReport EvalReport::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw DataError(std::string("EvalReport: parse error: ") + e.what());
    }
    EvalReport rep;
    for (const auto& d : j.at("domains")) {
        rep.domain_names.push_back(d.at("domain").get<std::string>());
        rep.losses.push_back(d.at("loss").get<double>());
        rep.perplexities.push_back(d.at("perplexity").get<double>());
        rep.token_counts.push_back(d.at("tokens").get<std::uint64_t>());
    }
    rep.average_perplexity = j.at("average_perplexity").get<double>();
    rep.worst_perplexity = j.at("worst_perplexity").get<double>();

    // identities hold by construction; refuse tampered files
    double mean_loss = 0.0;
    for (std::size_t i = 0; i < rep.losses.size(); ++i) {
        if (std::abs(rep.perplexities[i] - std::exp(rep.losses[i])) >
            1e-9 * rep.perplexities[i])
            throw DataError("EvalReport: perplexity != exp(loss) for " +
                            rep.domain_names[i]);
        mean_loss += rep.losses[i];
    }
    mean_loss /= static_cast<double>(rep.losses.size());
    if (std::abs(rep.average_perplexity - std::exp(mean_loss)) >
        1e-9 * rep.average_perplexity)
        throw DataError("EvalReport: average perplexity identity violated");
    double worst = *std::max_element(rep.perplexities.begin(),
                                     rep.perplexities.end());
    if (rep.worst_perplexity != worst)
        throw DataError("EvalReport: worst-case perplexity is not the max");
    return rep;
}

BaseTrainResult train_base(Model model, const DomainCorpus& train,
                           const std::vector<StageWeights>& stages,
                           std::size_t steps, std::size_t batch, double lr_max,
                           double lr_min, std::uint64_t seed,
                           const std::string& out_dir,
                           std::size_t checkpoint_stride) {
    train.validate();
    if (stages.empty()) throw ContractError("train_base: no stages given");
    for (const auto& s : stages) {
        s.weights.validate();
        if (s.weights.dim() != train.num_domains())
            throw ContractError("train_base: stage weight dimension mismatch");
    }

    BaseTrainResult result{std::move(model), {}};
    result.token_counts.assign(train.num_domains(), 0);
    Rng rng = derive_rng(seed, "base-batch", 0);
    std::string ckpt_path =
        out_dir.empty() ? "" : (fs::path(out_dir) / "base.ckpt").string();
    if (!out_dir.empty()) fs::create_directories(out_dir);

    for (std::uint64_t t = result.model.step(); t < steps; ++t) {
        std::size_t si = 0;
        while (si + 1 < stages.size() && t + 1 > stages[si].end_step) ++si;
        const DomainWeights& alpha = stages[si].weights;

        Batch b = mixture_batch(train, alpha.values, batch, rng);
        for (std::size_t r = 0; r < b.rows; ++r) {
            std::uint64_t toks = 0;
            for (std::size_t c2 = 0; c2 < b.cols; ++c2)
                if (b.at(r, c2) != tokens::kPad) ++toks;
            result.token_counts[static_cast<std::size_t>(b.domain_ids[r])] += toks;
        }

        result.model.clear_grads();
        Tape tape;
        Tensor loss = result.model.loss(tape, b);
        tape.backward(loss);
        FlatGradient g = result.model.flatten_gradients();
        result.model.apply_update(g, cosine_lr(t, steps, lr_max, lr_min));

        if (!ckpt_path.empty() &&
            ((t + 1) % checkpoint_stride == 0 || t + 1 == steps))
            result.model.save_checkpoint(ckpt_path);
    }
    return result;
}

void emit_plot_data(const WeightTrajectory& trajectory, const std::string& out_dir) {
    if (trajectory.points.empty())
        throw ContractError("emit_plot_data: trajectory is empty");
    fs::create_directories(out_dir);

    std::size_t k = trajectory.points.front().alpha.dim();
    auto name = [&](std::size_t i) {
        return i < trajectory.domain_names.size() ? trajectory.domain_names[i]
                                                  : std::to_string(i);
    };

    std::ostringstream step_csv, avg_csv, loss_csv;
    step_csv.precision(17);
    avg_csv.precision(17);
    loss_csv.precision(17);
    step_csv << "step,domain,alpha\n";
    avg_csv << "step,domain,alpha_avg\n";
    loss_csv << "step,domain,loss\n";

    std::vector<double> running(k, 0.0);
    std::size_t seen = 0;
    for (const auto& p : trajectory.points) {
        ++seen;
        for (std::size_t i = 0; i < k; ++i) {
            running[i] += p.alpha.values[i];
            step_csv << p.step << ',' << name(i) << ',' << p.alpha.values[i] << '\n';
            avg_csv << p.step << ',' << name(i) << ','
                    << running[i] / static_cast<double>(seen) << '\n';
            loss_csv << p.step << ',' << name(i) << ',' << p.losses[i] << '\n';
        }
    }
    write_file((fs::path(out_dir) / "alpha_stepwise.csv").string(), step_csv.str());
    write_file((fs::path(out_dir) / "alpha_average.csv").string(), avg_csv.str());
    write_file((fs::path(out_dir) / "loss_curves.csv").string(), loss_csv.str());
}

WeightTrajectory trajectory_from_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != "step,domain,alpha,score,loss")
        throw DataError("trajectory csv: bad header");

    WeightTrajectory traj;
    TrajectoryPoint cur;
    bool have_cur = false;
    auto flush = [&]() {
        if (have_cur) traj.points.push_back(cur);
    };
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string step_s, domain, alpha_s, score_s, loss_s;
        if (!std::getline(row, step_s, ',') || !std::getline(row, domain, ',') ||
            !std::getline(row, alpha_s, ',') || !std::getline(row, score_s, ',') ||
            !std::getline(row, loss_s))
            throw DataError("trajectory csv: malformed row: " + line);
        std::size_t step = std::stoull(step_s);
        if (!have_cur || step != cur.step) {
            flush();
            cur = TrajectoryPoint{};
            cur.step = step;
            have_cur = true;
        }
        cur.alpha.values.push_back(std::stod(alpha_s));
        cur.scores.values.push_back(std::stod(score_s));
        cur.losses.push_back(std::stod(loss_s));
        if (traj.points.empty()) {
            traj.domain_names.push_back(domain);
        }
    }
    flush();
    if (traj.points.empty()) throw DataError("trajectory csv: no rows");
    return traj;
}

int run(const RunConfig& config) {
    config.validate();
    const std::string& out = config.out_dir;
    fs::create_directories(out);

    if (config.mode == RunMode::Eval) {
        Model m = Model::load_checkpoint(config.checkpoint);
        DomainCorpus corpus = config.corpus.load(m.config().context);
        DomainCorpus train_split, valid_split;
        split_holdout(corpus, &train_split, &valid_split);
        EvalReport rep = evaluate(m, valid_split);
        std::string text = rep.to_json();
        write_file((fs::path(out) / "eval.json").string(), text);
        std::cout << text << "\n";
        return 0;
    }

    if (config.mode == RunMode::Cancellation) {
        DomainCorpus corpus = config.corpus.load(config.proxy_model.context);
        DomainCorpus train_split, valid_split;
        split_holdout(corpus, &train_split, &valid_split);
        Model probe = Model::init(config.proxy_model, Optimizer::Sgd);
        Rng rng = derive_rng(config.seed, "cancellation-batch", 0);
        CancellationScores scores =
            measure_cancellation(probe, train_split, config.cancellation, rng);
        write_file((fs::path(out) / "cancellation.csv").string(), scores.to_csv());
        if (config.mask_strategy) {
            SelectionMask mask = select_groups_by_name(scores, *config.mask_strategy);
            nlohmann::ordered_json mj;
            mj["strategy"] = mask.strategy;
            mj["group_ids"] = mask.group_ids;
            mj["compute_saved"] = mask.compute_saved;
            write_file((fs::path(out) / "mask.json").string(), mj.dump(2));
        }
        return 0;
    }

    DomainCorpus corpus = config.corpus.load(config.base_model.context);
    if (config.mode == RunMode::ProxyUniversal || config.mode == RunMode::ProxyOod ||
        config.mode == RunMode::FullPipeline) {
        corpus = config.corpus.load(config.proxy_model.context);
    }
    DomainCorpus train_split, valid_split;
    split_holdout(corpus, &train_split, &valid_split);
    std::vector<std::string> names = corpus.domain_names();

    if (config.mode == RunMode::BaseTrain) {
        DomainWeights alpha = DomainWeights::uniform(corpus.num_domains());
        std::vector<StageWeights> stages;
        if (!config.weights_file.empty()) {
            std::string text = read_file(config.weights_file);
            auto [wnames, w] = weights_from_json(text);
            if (wnames != names)
                throw ConfigError("weights_file: domain names do not match corpus");
            alpha = w;
            alpha.validate();
            stages = stages_from_json_text(text, corpus.num_domains());
        }
        if (stages.empty())
            stages = {StageWeights{1, config.base_steps, alpha}};
        Model m = config.checkpoint.empty()
                      ? Model::init(config.base_model, config.base_optimizer)
                      : Model::load_checkpoint(config.checkpoint);
        BaseTrainResult r = train_base(
            std::move(m), train_split, stages, config.base_steps, config.base_batch,
            config.base_lr_max, config.base_lr_min, config.seed, out);
        EvalReport rep = evaluate(r.model, valid_split, &r.token_counts);
        write_file((fs::path(out) / "eval.json").string(), rep.to_json());
        return 0;
    }

    // proxy stage, shared by the proxy modes and the full pipeline
    DogeHyperparams hp = config.doge;
    if (config.mask_strategy) {
        Model probe = Model::init(config.proxy_model, Optimizer::Sgd);
        Rng rng = derive_rng(config.seed, "cancellation-batch", 0);
        CancellationScores scores =
            measure_cancellation(probe, train_split, config.cancellation, rng);
        write_file((fs::path(out) / "cancellation.csv").string(), scores.to_csv());
        SelectionMask mask = select_groups_by_name(scores, *config.mask_strategy);
        hp.mask = mask.group_ids;
    }
    bool ood = config.mode == RunMode::ProxyOod ||
               (config.mode == RunMode::FullPipeline && corpus.ood.has_value());
    ProxyResult proxy = ood ? run_proxy_ood(train_split, config.proxy_model, hp)
                            : run_proxy_universal(train_split, config.proxy_model, hp);

    std::vector<StageWeights> stages;
    if (config.curriculum_stages) {
        stages = stage_average(proxy.trajectory, *config.curriculum_stages);
    } else {
        stages = {StageWeights{1, config.base_steps, proxy.average_alpha}};
    }
    write_file((fs::path(out) / "trajectory.csv").string(),
               trajectory_to_csv(proxy.trajectory, config.log_stride));
    write_file((fs::path(out) / "weights.json").string(),
               weights_to_json(names, proxy.average_alpha,
                               config.curriculum_stages ? stages
                                                        : std::vector<StageWeights>{}));
    proxy.model.save_checkpoint((fs::path(out) / "proxy.ckpt").string());
    emit_plot_data(proxy.trajectory, out);
    if (config.mode != RunMode::FullPipeline) return 0;

    // rescale curriculum stage boundaries from proxy steps to base steps
    if (config.curriculum_stages) {
        std::size_t k_stages = stages.size();
        std::size_t per = config.base_steps / k_stages;
        for (std::size_t i = 0; i < k_stages; ++i) {
            stages[i].start_step = i * per + 1;
            stages[i].end_step = i + 1 == k_stages ? config.base_steps : (i + 1) * per;
        }
    } else {
        stages.front().end_step = config.base_steps;
    }

    BaseTrainResult r = train_base(
        Model::init(config.base_model, config.base_optimizer), train_split, stages,
        config.base_steps, config.base_batch, config.base_lr_max, config.base_lr_min,
        config.seed, out);
    EvalReport rep = evaluate(r.model, valid_split, &r.token_counts);
    write_file((fs::path(out) / "eval.json").string(), rep.to_json());
    return 0;
}

}  // namespace doge
