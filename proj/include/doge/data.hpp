// Copyright (c) 2026 the doge-lab authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "doge/errors.hpp"

namespace doge {

using Rng = std::mt19937_64;

/// Byte-level tokenizer: ids 0..255 are raw bytes, plus BOS/EOS/PAD.
namespace tokens {
constexpr int kVocab = 259;
constexpr int kBos = 256;
constexpr int kEos = 257;
constexpr int kPad = 258;

std::vector<int> tokenize(const std::string& text);
std::string detokenize(const std::vector<int>& ids);
}  // namespace tokens

struct Domain {
    std::string name;
    std::vector<std::vector<int>> sequences;  // each of corpus context length
};

/// k named training domains plus an optional OOD target domain.
/// Immutable after construction; safe to share across samplers.
struct DomainCorpus {
    std::vector<Domain> domains;
    std::optional<Domain> ood;
    std::size_t context = 0;

    std::size_t num_domains() const { return domains.size(); }
    const Domain& domain(std::size_t id) const;
    std::vector<std::string> domain_names() const;
    void validate() const;
};

/// One sampled batch: rows x cols token matrix, right-padded with PAD.
struct Batch {
    std::vector<int> tokens;      // row-major rows x cols
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<int> domain_ids;  // per row

    int at(std::size_t r, std::size_t c) const { return tokens[r * cols + c]; }
};

constexpr int kOodDomainId = -2;

/// Reads one subdirectory per domain (lexicographic order), each file
/// chunked into BOS-prefixed context-length sequences. An `_ood/`
/// subdirectory, when present, becomes the target domain.
DomainCorpus ingest(const std::string& root, std::size_t context);

/// JSONL alternative: one {"domain": ..., "text": ...} record per line.
DomainCorpus ingest_jsonl(const std::string& path, std::size_t context);

/// Chunks one token stream into BOS-prefixed sequences. Remainders
/// shorter than half the context are dropped, longer ones PAD-padded.
std::vector<std::vector<int>> chunk_tokens(const std::vector<int>& stream,
                                           std::size_t context);

/// b i.i.d. uniform draws (with replacement) from one domain.
/// domain_id == kOodDomainId selects the OOD target domain.
Batch uniform_domain_batch(const DomainCorpus& corpus, int domain_id,
                           std::size_t b, Rng& rng);

/// Each row independently picks a domain with probability alpha[i],
/// then a sequence uniformly within it.
Batch mixture_batch(const DomainCorpus& corpus, const std::vector<double>& alpha,
                    std::size_t b, Rng& rng);

/// Order-2 Markov chain over a contiguous byte-symbol alphabet.
/// `overlap_with` blends this domain's transition table with an earlier
/// domain's: 1.0 copies it (identical support), 0.0 keeps an
/// independent table on this domain's own support.
struct SyntheticDomainSpec {
    std::string name;
    int symbol_lo = 0;      // inclusive, in [0, 256)
    int symbol_hi = 16;     // exclusive
    int overlap_with = -1;  // index of an earlier domain, or -1
    double overlap = 0.0;   // in [0, 1]
};

struct SyntheticSpec {
    std::vector<SyntheticDomainSpec> domains;
    std::size_t context = 64;
    std::size_t sequences_per_domain = 64;
    std::uint64_t seed = 0;
    // OOD target: either a copy of one source generator, or a mixture
    // of source generators (rows sampled from source i with prob ood_mixture[i]).
    int ood_source = -1;
    std::vector<double> ood_mixture;
};

DomainCorpus generate_synthetic(const SyntheticSpec& spec);

/// Blended per-domain transition tables ((m*m) x m, row-major), for
/// inspecting the overlap semantics without sampling.
std::vector<std::vector<double>> synthetic_transition_tables(const SyntheticSpec& spec);

/// Deterministic per-purpose rng stream derived from (run seed, tag, id).
Rng derive_rng(std::uint64_t run_seed, const std::string& tag, std::uint64_t id);

/// Deterministic 95/5 train/validation split: every 20th sequence
/// (index % 20 == 19) goes to validation.
void split_holdout(const DomainCorpus& corpus, DomainCorpus* train,
                   DomainCorpus* valid);

}  // namespace doge
