// Copyright (c) 2026 the doge-lab authors
// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>

#include "doctest.h"
#include "doge/data.hpp"

using namespace doge;
namespace fs = std::filesystem;

namespace {

fs::path make_tmp_dir(const std::string& tag) {
    fs::path p = fs::temp_directory_path() / ("doge-test-" + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

void write_text(const fs::path& p, const std::string& text) {
    fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    out << text;
}

SyntheticSpec two_domain_spec(std::uint64_t seed = 1) {
    SyntheticSpec s;
    s.domains = {{"a", 0, 8, -1, 0.0}, {"b", 8, 16, -1, 0.0}};
    s.context = 16;
    s.sequences_per_domain = 24;
    s.seed = seed;
    return s;
}

}  // namespace

TEST_CASE("tokenize then detokenize is the identity on bytes") {
    std::string text;
    for (int i = 0; i < 256; ++i) text.push_back(static_cast<char>(i));
    auto ids = tokens::tokenize(text);
    CHECK(ids.size() == 256);
    CHECK(tokens::detokenize(ids) == text);
}

TEST_CASE("detokenize drops control tokens and rejects bad ids") {
    CHECK(tokens::detokenize({tokens::kBos, 'h', 'i', tokens::kPad}) == "hi");
    CHECK_THROWS_AS(tokens::detokenize({tokens::kVocab}), DataError);
}

TEST_CASE("chunking splits with BOS, pads long remainders, drops short ones") {
    std::vector<int> stream(127, 65);

    // payload is 63 per sequence; 127 = 63 + 63 + 1, and the 1-byte
    // remainder is below half the context so it is dropped
    auto seqs = chunk_tokens(stream, 64);
    CHECK(seqs.size() == 2);
    for (const auto& s : seqs) {
        CHECK(s.size() == 64);
        CHECK(s[0] == tokens::kBos);
    }

    // remainder of 40 >= 32 is kept and padded
    auto padded = chunk_tokens(std::vector<int>(63 + 40, 66), 64);
    CHECK(padded.size() == 2);
    CHECK(padded[1].back() == tokens::kPad);
}

TEST_CASE("ingest reads domains in lexicographic order") {
    fs::path root = make_tmp_dir("ingest");
    write_text(root / "beta" / "f.txt", std::string(127, 'x'));
    write_text(root / "alpha" / "f.txt", std::string(127, 'y'));

    DomainCorpus c = ingest(root.string(), 64);
    REQUIRE(c.num_domains() == 2);
    CHECK(c.domains[0].name == "alpha");
    CHECK(c.domains[1].name == "beta");
    CHECK(c.domains[0].sequences.size() == 2);
    CHECK_FALSE(c.ood.has_value());
}

TEST_CASE("ingest picks up an _ood directory as the target domain") {
    fs::path root = make_tmp_dir("ingest-ood");
    write_text(root / "a" / "f.txt", std::string(200, 'a'));
    write_text(root / "b" / "f.txt", std::string(200, 'b'));
    write_text(root / "_ood" / "f.txt", std::string(200, 'c'));
    DomainCorpus c = ingest(root.string(), 64);
    CHECK(c.num_domains() == 2);
    REQUIRE(c.ood.has_value());
    CHECK(c.ood->name == "ood");
}

TEST_CASE("ingest rejects an empty domain directory by name") {
    fs::path root = make_tmp_dir("ingest-empty");
    write_text(root / "a" / "f.txt", std::string(200, 'a'));
    fs::create_directories(root / "b");
    CHECK_THROWS_WITH_AS(ingest(root.string(), 64), doctest::Contains("'b'"),
                         DataError);
}

TEST_CASE("ingest skips undecodable files with a warning") {
    fs::path root = make_tmp_dir("ingest-utf8");
    write_text(root / "a" / "good.txt", std::string(200, 'a'));
    write_text(root / "a" / "bad.txt", std::string("\xff\xfe broken"));
    write_text(root / "b" / "f.txt", std::string(200, 'b'));
    DomainCorpus c = ingest(root.string(), 64);
    // only good.txt contributes: 200 bytes = 3 payloads of 63 plus a
    // dropped 11-byte remainder
    CHECK(c.domains[0].sequences.size() == 3);
}

TEST_CASE("ingest_jsonl groups records by domain") {
    fs::path root = make_tmp_dir("jsonl");
    fs::path file = root / "corpus.jsonl";
    std::string a(127, 'a'), b(127, 'b');
    write_text(file, "{\"domain\": \"x\", \"text\": \"" + a + "\"}\n"
                     "{\"domain\": \"y\", \"text\": \"" + b + "\"}\n");
    DomainCorpus c = ingest_jsonl(file.string(), 64);
    CHECK(c.num_domains() == 2);
    CHECK(c.domains[0].name == "x");
    CHECK(c.domains[0].sequences.size() == 2);
}

TEST_CASE("uniform batch from a single-sequence domain repeats it") {
    SyntheticSpec s = two_domain_spec();
    s.sequences_per_domain = 1;
    DomainCorpus c = generate_synthetic(s);
    Rng rng(3);
    Batch b = uniform_domain_batch(c, 0, 5, rng);
    CHECK(b.rows == 5);
    for (std::size_t r = 1; r < b.rows; ++r) {
        for (std::size_t t = 0; t < b.cols; ++t) CHECK(b.at(r, t) == b.at(0, t));
    }
    for (int id : b.domain_ids) CHECK(id == 0);
}

TEST_CASE("uniform batch is reproducible under a fixed seed") {
    DomainCorpus c = generate_synthetic(two_domain_spec());
    Rng r1(7), r2(7);
    Batch b1 = uniform_domain_batch(c, 1, 8, r1);
    Batch b2 = uniform_domain_batch(c, 1, 8, r2);
    CHECK(b1.tokens == b2.tokens);
}

TEST_CASE("uniform batch frequencies pass a 3-sigma binomial check") {
    SyntheticSpec s = two_domain_spec();
    s.sequences_per_domain = 4;
    DomainCorpus c = generate_synthetic(s);
    Rng rng(13);
    std::map<std::vector<int>, int> counts;
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
        Batch b = uniform_domain_batch(c, 0, 1, rng);
        counts[b.tokens]++;
    }
    REQUIRE(counts.size() == 4);
    const double expect = n / 4.0;
    const double sigma = std::sqrt(n * 0.25 * 0.75);
    for (const auto& [_, cnt] : counts) CHECK(std::abs(cnt - expect) <= 3 * sigma);
}

TEST_CASE("uniform batch rejects unknown domain ids") {
    DomainCorpus c = generate_synthetic(two_domain_spec());
    Rng rng(1);
    CHECK_THROWS_AS(uniform_domain_batch(c, 5, 2, rng), ContractError);
    CHECK_THROWS_AS(uniform_domain_batch(c, kOodDomainId, 2, rng), ContractError);
}

TEST_CASE("one-hot mixture draws only from the selected domain") {
    SyntheticSpec s = two_domain_spec();
    s.domains.push_back({"c", 16, 24, -1, 0.0});
    DomainCorpus c = generate_synthetic(s);
    Rng rng(5);
    Batch b = mixture_batch(c, {0.0, 0.0, 1.0}, 16, rng);
    for (int id : b.domain_ids) CHECK(id == 2);
}

TEST_CASE("mixture batch rejects a wrong alpha dimension") {
    DomainCorpus c = generate_synthetic(two_domain_spec());
    Rng rng(5);
    CHECK_THROWS_AS(mixture_batch(c, {1.0}, 4, rng), ContractError);
}

TEST_CASE("50/50 mixture counts pass a chi-squared check") {
    DomainCorpus c = generate_synthetic(two_domain_spec());
    Rng rng(23);
    Batch b = mixture_batch(c, {0.5, 0.5}, 10000, rng);
    std::size_t n0 = 0;
    for (int id : b.domain_ids) n0 += id == 0;
    double n1 = 10000.0 - static_cast<double>(n0);
    double chi2 = (n0 - 5000.0) * (n0 - 5000.0) / 5000.0 +
                  (n1 - 5000.0) * (n1 - 5000.0) / 5000.0;
    // chi-squared(1) critical value at p = 0.001
    CHECK(chi2 < 10.828);
}

TEST_CASE("mixture with one domain matches uniform draws exactly") {
    SyntheticSpec s = two_domain_spec();
    s.domains.resize(1);
    DomainCorpus c = generate_synthetic(s);
    Rng r1(9), r2(9);
    Batch bm = mixture_batch(c, {1.0}, 6, r1);
    Batch bu = uniform_domain_batch(c, 0, 6, r2);
    CHECK(bm.tokens == bu.tokens);
}

TEST_CASE("full overlap copies the reference transition table") {
    SyntheticSpec s;
    s.domains = {{"a", 0, 8, -1, 0.0}, {"b", 0, 8, 0, 1.0}};
    auto tables = synthetic_transition_tables(s);
    CHECK(tables[0] == tables[1]);
}

TEST_CASE("zero overlap keeps symbol supports disjoint") {
    DomainCorpus c = generate_synthetic(two_domain_spec());
    std::set<int> sa, sb;
    for (const auto& seq : c.domains[0].sequences)
        for (int t : seq)
            if (t < 256) sa.insert(t);
    for (const auto& seq : c.domains[1].sequences)
        for (int t : seq)
            if (t < 256) sb.insert(t);
    for (int t : sa) CHECK(sb.count(t) == 0);
}

TEST_CASE("synthetic generation is deterministic under spec and seed") {
    DomainCorpus c1 = generate_synthetic(two_domain_spec(42));
    DomainCorpus c2 = generate_synthetic(two_domain_spec(42));
    for (std::size_t i = 0; i < 2; ++i)
        CHECK(c1.domains[i].sequences == c2.domains[i].sequences);
}

TEST_CASE("derived rng streams differ per tag and id") {
    Rng a = derive_rng(1, "x", 0);
    Rng b = derive_rng(1, "x", 1);
    Rng c = derive_rng(1, "y", 0);
    Rng a2 = derive_rng(1, "x", 0);
    std::uint64_t va = a(), vb = b(), vc = c();
    CHECK(va == a2());
    CHECK(va != vb);
    CHECK(vb != vc);
}

TEST_CASE("holdout split sends every 20th sequence to validation") {
    SyntheticSpec s = two_domain_spec();
    s.sequences_per_domain = 40;
    DomainCorpus c = generate_synthetic(s);
    DomainCorpus train, valid;
    split_holdout(c, &train, &valid);
    CHECK(train.domains[0].sequences.size() == 38);
    CHECK(valid.domains[0].sequences.size() == 2);
    CHECK(valid.domains[0].sequences[0] == c.domains[0].sequences[19]);
    CHECK(valid.domains[0].sequences[1] == c.domains[0].sequences[39]);
}
