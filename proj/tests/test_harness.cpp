// Copyright (c) 2026 the doge-lab authors
// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "doge/harness.hpp"

using namespace doge;
namespace fs = std::filesystem;

namespace {

std::string tiny_synthetic_config(const std::string& out_dir,
                                  const std::string& mode = "proxy-universal") {
    return std::string(R"({
  "mode": ")") + mode + R"(",
  "seed": 5,
  "out": ")" + out_dir + R"(",
  "corpus": {
    "kind": "synthetic",
    "synthetic": {
      "domains": [
        {"name": "a", "symbol_lo": 0, "symbol_hi": 8},
        {"name": "b", "symbol_lo": 8, "symbol_hi": 16}
      ],
      "sequences_per_domain": 48
    }
  },
  "proxy_model": {"layers": 1, "heads": 2, "embed_dim": 16, "hidden_dim": 32, "context": 16},
  "base_model": {"layers": 1, "heads": 2, "embed_dim": 16, "hidden_dim": 32, "context": 16},
  "doge": {"steps": 4, "batch_per_domain": 2},
  "base_steps": 6,
  "base_batch": 4
})";
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path fresh_dir(const std::string& tag) {
    fs::path p = fs::temp_directory_path() / ("doge-harness-" + tag);
    fs::remove_all(p);
    return p;
}

WeightTrajectory sample_trajectory() {
    WeightTrajectory traj;
    traj.domain_names = {"a", "b"};
    for (std::size_t t = 1; t <= 3; ++t) {
        TrajectoryPoint p;
        p.step = t;
        p.alpha.values = {0.25, 0.75};
        p.scores.values = {0.5, -0.5};
        p.losses = {1.5, 2.5};
        traj.points.push_back(p);
    }
    return traj;
}

}  // namespace

TEST_CASE("config parsing reports unknown keys with field paths") {
    CHECK_THROWS_WITH_AS(RunConfig::from_json_text(R"({"mode": "eval", "seed": 1,
                                                     "bogus": true})"),
                         doctest::Contains("bogus"), ConfigError);
    CHECK_THROWS_WITH_AS(RunConfig::from_json_text(R"({"mode": "full-pipeline"})"),
                         doctest::Contains("seed"), ConfigError);
    CHECK_THROWS_WITH_AS(RunConfig::from_json_text(R"({"mode": "warp", "seed": 1})"),
                         doctest::Contains("mode"), ConfigError);
}

TEST_CASE("config validation checks referenced paths") {
    std::string text = R"({
      "mode": "base-train", "seed": 3,
      "corpus": {"kind": "directory", "path": "/nonexistent-doge-path"},
      "base_model": {"context": 16}
    })";
    CHECK_THROWS_WITH_AS(RunConfig::from_json_text(text),
                         doctest::Contains("corpus.path"), ConfigError);
}

TEST_CASE("DOGE_OUT overrides the configured output directory") {
    setenv("DOGE_OUT", "/tmp/doge-env-out", 1);
    RunConfig cfg = RunConfig::from_json_text(tiny_synthetic_config("ignored"));
    unsetenv("DOGE_OUT");
    CHECK(cfg.out_dir == "/tmp/doge-env-out");
}

TEST_CASE("eval report identities accept ln2/ln8 and reject tampering") {
    // per-domain losses [ln 2, ln 8]: ppl [2, 8], average 4, worst 8
    std::ostringstream js;
    js.precision(17);
    js << R"({"domains": [
      {"domain": "a", "loss": )" << std::log(2.0) << R"(, "perplexity": 2.0, "tokens": 10},
      {"domain": "b", "loss": )" << std::log(8.0) << R"(, "perplexity": 8.0, "tokens": 20}
    ], "average_perplexity": 4.0, "worst_perplexity": 8.0})";
    EvalReport rep = EvalReport::from_json(js.str());
    CHECK(rep.perplexities[0] == doctest::Approx(2.0));
    CHECK(rep.average_perplexity == doctest::Approx(4.0));
    CHECK(rep.worst_perplexity == doctest::Approx(8.0));

    std::string tampered = js.str();
    auto pos = tampered.find("4.0");
    tampered.replace(pos, 3, "5.0");
    CHECK_THROWS_AS(EvalReport::from_json(tampered), DataError);

    // round-trip through to_json preserves the identities
    EvalReport again = EvalReport::from_json(rep.to_json());
    CHECK(again.losses == rep.losses);
}

TEST_CASE("evaluate computes exp-mean-loss perplexities on a real model") {
    SyntheticSpec spec;
    spec.domains = {{"a", 0, 8, -1, 0.0}, {"b", 8, 16, -1, 0.0}};
    spec.context = 16;
    spec.sequences_per_domain = 24;
    spec.seed = 31;
    DomainCorpus corpus = generate_synthetic(spec);
    TransformerConfig cfg;
    cfg.layers = 1;
    cfg.heads = 2;
    cfg.embed_dim = 16;
    cfg.hidden_dim = 32;
    cfg.context = 16;
    cfg.seed = 31;
    Model m = Model::init(cfg);
    EvalReport rep = evaluate(m, corpus);
    REQUIRE(rep.losses.size() == 2);
    for (std::size_t i = 0; i < 2; ++i)
        CHECK(rep.perplexities[i] == doctest::Approx(std::exp(rep.losses[i])));
    CHECK(rep.average_perplexity ==
          doctest::Approx(std::exp((rep.losses[0] + rep.losses[1]) / 2.0)));
    CHECK(rep.worst_perplexity ==
          doctest::Approx(std::max(rep.perplexities[0], rep.perplexities[1])));
}

TEST_CASE("one-hot weights route all training tokens to that domain") {
    SyntheticSpec spec;
    spec.domains = {{"a", 0, 8, -1, 0.0}, {"b", 8, 16, -1, 0.0}};
    spec.context = 16;
    spec.sequences_per_domain = 24;
    spec.seed = 33;
    DomainCorpus corpus = generate_synthetic(spec);
    TransformerConfig cfg;
    cfg.layers = 1;
    cfg.heads = 2;
    cfg.embed_dim = 16;
    cfg.hidden_dim = 32;
    cfg.context = 16;
    cfg.seed = 33;
    std::vector<StageWeights> stages = {{1, 5, DomainWeights{{0.0, 1.0}}}};
    BaseTrainResult r = train_base(Model::init(cfg, Optimizer::Adam), corpus, stages,
                                   5, 4, 5e-4, 1e-4, 33);
    CHECK(r.token_counts[0] == 0);
    CHECK(r.token_counts[1] > 0);
    CHECK(r.model.step() == 5);
}

TEST_CASE("plot emission writes the three curve files") {
    fs::path dir = fresh_dir("plot");
    WeightTrajectory traj = sample_trajectory();
    emit_plot_data(traj, dir.string());
    CHECK(fs::exists(dir / "alpha_stepwise.csv"));
    CHECK(fs::exists(dir / "loss_curves.csv"));

    // constant alpha keeps the cumulative average constant
    std::string avg = slurp(dir / "alpha_average.csv");
    std::istringstream in(avg);
    std::string line;
    std::getline(in, line);
    CHECK(line == "step,domain,alpha_avg");
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto last_comma = line.rfind(',');
        double v = std::stod(line.substr(last_comma + 1));
        bool is_a = line.find(",a,") != std::string::npos;
        CHECK(v == doctest::Approx(is_a ? 0.25 : 0.75).epsilon(1e-12));
    }
    fs::remove_all(dir);
}

TEST_CASE("empty trajectories are rejected with a clear message") {
    WeightTrajectory empty;
    CHECK_THROWS_WITH_AS(emit_plot_data(empty, "/tmp/doge-never"),
                         doctest::Contains("empty"), ContractError);
}

TEST_CASE("trajectory CSV round-trips through the bundled parser") {
    WeightTrajectory traj = sample_trajectory();
    std::string csv = trajectory_to_csv(traj);
    WeightTrajectory back = trajectory_from_csv(csv);
    REQUIRE(back.points.size() == traj.points.size());
    CHECK(back.domain_names == traj.domain_names);
    for (std::size_t i = 0; i < traj.points.size(); ++i) {
        CHECK(back.points[i].step == traj.points[i].step);
        CHECK(back.points[i].alpha.values == traj.points[i].alpha.values);
        CHECK(back.points[i].scores.values == traj.points[i].scores.values);
        CHECK(back.points[i].losses == traj.points[i].losses);
    }
    CHECK(trajectory_to_csv(back) == csv);
}

TEST_CASE("proxy-universal run writes the documented artifacts") {
    fs::path dir = fresh_dir("proxy-run");
    RunConfig cfg = RunConfig::from_json_text(tiny_synthetic_config(dir.string()));
    CHECK(run(cfg) == 0);
    CHECK(fs::exists(dir / "trajectory.csv"));
    CHECK(fs::exists(dir / "weights.json"));
    CHECK(fs::exists(dir / "proxy.ckpt"));
    CHECK(fs::exists(dir / "alpha_stepwise.csv"));

    auto [names, w] = weights_from_json(slurp(dir / "weights.json"));
    CHECK(names == std::vector<std::string>{"a", "b"});
    w.validate();
    fs::remove_all(dir);
}

TEST_CASE("full pipeline adds base checkpoint and eval report") {
    fs::path dir = fresh_dir("pipeline");
    RunConfig cfg = RunConfig::from_json_text(
        tiny_synthetic_config(dir.string(), "full-pipeline"));
    CHECK(run(cfg) == 0);
    CHECK(fs::exists(dir / "base.ckpt"));
    CHECK(fs::exists(dir / "eval.json"));
    EvalReport rep = EvalReport::from_json(slurp(dir / "eval.json"));
    CHECK(rep.domain_names.size() == 2);
    std::uint64_t total_tokens = rep.token_counts[0] + rep.token_counts[1];
    CHECK(total_tokens > 0);
    fs::remove_all(dir);
}

TEST_CASE("cancellation mode writes scores and the requested mask") {
    fs::path dir = fresh_dir("cancel");
    std::string text = tiny_synthetic_config(dir.string(), "cancellation");
    text.insert(text.rfind('}'),
                R"(, "cancellation": {"steps": 2, "batch": 2},
                   "mask_strategy": "low3")");
    RunConfig cfg = RunConfig::from_json_text(text);
    CHECK(run(cfg) == 0);
    CHECK(fs::exists(dir / "cancellation.csv"));
    CHECK(fs::exists(dir / "mask.json"));
    CHECK(slurp(dir / "cancellation.csv").rfind("group,score,size\n", 0) == 0);
    fs::remove_all(dir);
}
