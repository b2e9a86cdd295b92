// Copyright (c) 2026 the doge-lab authors
// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <sstream>

#include "doctest.h"
#include "doge/cancellation.hpp"

using namespace doge;

namespace {

FlatGradient flat2(std::vector<double> a, std::vector<double> b) {
    FlatGradient g;
    g.values = std::move(a);
    std::size_t split = g.values.size();
    g.values.insert(g.values.end(), b.begin(), b.end());
    g.group_ids = {0, 1};
    g.group_offsets = {0, split};
    g.total_params = g.values.size();
    return g;
}

CancellationScores fixture_scores() {
    CancellationScores s;
    s.scores = {1.0, 2.0, 3.0};
    s.names = {"a", "b", "c"};
    s.sizes = {10, 20, 70};
    s.steps = 5;
    s.batch = 4;
    return s;
}

DomainCorpus repeated_sequence_corpus(std::size_t context) {
    // both domains hold the same single sequence, so every per-sample
    // gradient within a step is identical
    std::vector<int> seq;
    seq.push_back(tokens::kBos);
    for (std::size_t i = 1; i < context; ++i)
        seq.push_back(static_cast<int>(i % 5) + 40);
    DomainCorpus c;
    c.context = context;
    c.domains = {{"a", {seq}}, {"b", {seq}}};
    return c;
}

TransformerConfig probe_config() {
    TransformerConfig c;
    c.layers = 1;
    c.heads = 2;
    c.embed_dim = 16;
    c.hidden_dim = 32;
    c.context = 12;
    c.seed = 21;
    return c;
}

}  // namespace

TEST_CASE("equal per-sample gradients give a per-step ratio of eta") {
    FlatGradient g = flat2({1.0, -2.0, 0.5}, {3.0, 4.0});
    const double eta = 0.01;
    std::vector<double> r = cancellation_step_ratios({g, g, g, g}, eta);
    REQUIRE(r.size() == 2);
    CHECK(r[0] == doctest::Approx(eta).epsilon(1e-12));
    CHECK(r[1] == doctest::Approx(eta).epsilon(1e-12));
}

TEST_CASE("pairwise-cancelling gradients score exactly zero") {
    FlatGradient g = flat2({1.0, -2.0}, {0.5, 0.25});
    FlatGradient neg = FlatGradient::zeros_like(g);
    neg.add_scaled(g, -1.0);
    std::vector<double> r = cancellation_step_ratios({g, neg, g, neg}, 0.1);
    CHECK(r[0] == 0.0);
    CHECK(r[1] == 0.0);
}

TEST_CASE("norm-of-sum denominator gives eta for any aligned batch") {
    FlatGradient g = flat2({1.0, 1.0}, {2.0, 0.0});
    FlatGradient h = FlatGradient::zeros_like(g);
    h.add_scaled(g, 0.5);  // same direction, different magnitude
    std::vector<double> r = cancellation_step_ratios(
        {g, h}, 0.3, CancellationDenominator::NormOfSum);
    CHECK(r[0] == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(r[1] == doctest::Approx(0.3).epsilon(1e-12));
}

TEST_CASE("measured scores accumulate steps times eta on repeated data") {
    DomainCorpus corpus = repeated_sequence_corpus(12);
    Model m = Model::init(probe_config());
    CancellationOptions opts;
    opts.steps = 5;
    opts.batch = 4;
    opts.eta = 1e-3;
    Rng rng = derive_rng(21, "cancel", 0);
    CancellationScores s = measure_cancellation(m, corpus, opts, rng);
    for (std::size_t gi = 0; gi < s.scores.size(); ++gi) {
        CHECK(std::abs(s.scores[gi] - 5 * opts.eta) < 1e-9);
    }
}

TEST_CASE("measurement does not mutate the caller's model") {
    DomainCorpus corpus = repeated_sequence_corpus(12);
    Model m = Model::init(probe_config());
    std::vector<std::vector<double>> before;
    for (const auto& g : m.parameter_groups()) before.push_back(g.param.values());
    CancellationOptions opts;
    opts.steps = 2;
    opts.batch = 2;
    Rng rng = derive_rng(22, "cancel", 0);
    measure_cancellation(m, corpus, opts, rng);
    for (std::size_t i = 0; i < before.size(); ++i)
        CHECK(m.parameter_groups()[i].param.values() == before[i]);
}

TEST_CASE("fixed seed reproduces identical scores") {
    DomainCorpus corpus = repeated_sequence_corpus(12);
    Model m = Model::init(probe_config());
    CancellationOptions opts;
    opts.steps = 3;
    opts.batch = 2;
    Rng r1 = derive_rng(23, "cancel", 0);
    Rng r2 = derive_rng(23, "cancel", 0);
    CancellationScores s1 = measure_cancellation(m, corpus, opts, r1);
    CancellationScores s2 = measure_cancellation(m, corpus, opts, r2);
    CHECK(s1.scores == s2.scores);
}

TEST_CASE("selection sorts by score with alphabetical tie-break") {
    CancellationScores s = fixture_scores();

    SelectionMask low2 = select_groups(s, 2, SelectionMode::Low);
    CHECK(low2.group_ids == GroupMask{0, 1});  // scores 1, 2
    CHECK(low2.strategy == "low2");

    SelectionMask high2 = select_groups(s, 2, SelectionMode::High);
    CHECK(high2.group_ids == GroupMask{1, 2});  // scores 3, 2

    s.scores = {1.0, 1.0, 1.0};
    SelectionMask tie = select_groups(s, 2, SelectionMode::Low);
    CHECK(tie.group_ids == GroupMask{0, 1});  // names a, b
}

TEST_CASE("k at or above the group count selects everything") {
    CancellationScores s = fixture_scores();
    SelectionMask all = select_groups(s, 10, SelectionMode::Low);
    CHECK(all.group_ids == GroupMask{0, 1, 2});
    CHECK(all.compute_saved == 0.0);
}

TEST_CASE("low and high masks are disjoint for distinct scores") {
    CancellationScores s = fixture_scores();
    SelectionMask low = select_groups(s, 1, SelectionMode::Low);
    SelectionMask high = select_groups(s, 1, SelectionMode::High);
    for (std::size_t id : low.group_ids)
        for (std::size_t other : high.group_ids) CHECK(id != other);
}

TEST_CASE("compute saved reflects the selected parameter fraction") {
    CancellationScores s = fixture_scores();
    SelectionMask low1 = select_groups(s, 1, SelectionMode::Low);  // group a, size 10
    CHECK(low1.compute_saved == doctest::Approx(0.9));
}

TEST_CASE("strategy names parse to the documented selections") {
    CancellationScores s = fixture_scores();
    SelectionMask m = select_groups_by_name(s, "low2");
    CHECK(m.group_ids == GroupMask{0, 1});
    CHECK(select_groups_by_name(s, "high1").group_ids == GroupMask{2});
    CHECK_THROWS_AS(select_groups_by_name(s, "mid3"), ConfigError);
    CHECK_THROWS_AS(select_groups_by_name(s, "low"), ConfigError);
}

TEST_CASE("scores export as group,score,size CSV") {
    CancellationScores s = fixture_scores();
    std::string csv = s.to_csv();
    CHECK(csv.rfind("group,score,size\n", 0) == 0);
    CHECK(csv.find("a,1,10\n") != std::string::npos);
    CHECK(csv.find("c,3,70\n") != std::string::npos);
}
