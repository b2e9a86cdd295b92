// Copyright (c) 2026 the doge-lab authors
// SPDX-License-Identifier: Apache-2.0

#include "doge/data.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

namespace fs = std::filesystem;

namespace doge {

namespace tokens {

std::vector<int> tokenize(const std::string& text) {
    std::vector<int> ids;
    ids.reserve(text.size());
    for (unsigned char c : text) ids.push_back(static_cast<int>(c));
    return ids;
}

std::string detokenize(const std::vector<int>& ids) {
    std::string out;
    out.reserve(ids.size());
    for (int id : ids) {
        if (id < 0 || id >= kVocab) {
            throw DataError("detokenize: token id " + std::to_string(id) +
                            " out of range");
        }
        if (id < 256) out.push_back(static_cast<char>(id));
    }
    return out;
}

}  // namespace tokens

const Domain& DomainCorpus::domain(std::size_t id) const {
    if (id >= domains.size()) {
        throw ContractError("corpus: unknown domain id " + std::to_string(id));
    }
    return domains[id];
}

std::vector<std::string> DomainCorpus::domain_names() const {
    std::vector<std::string> names;
    names.reserve(domains.size());
    for (const auto& d : domains) names.push_back(d.name);
    return names;
}

void DomainCorpus::validate() const {
    if (domains.empty()) throw DataError("corpus: no training domains");
    std::vector<std::string> names = domain_names();
    std::sort(names.begin(), names.end());
    if (std::adjacent_find(names.begin(), names.end()) != names.end()) {
        throw DataError("corpus: duplicate domain names");
    }
    auto check_domain = [this](const Domain& d) {
        if (d.sequences.empty()) {
            throw DataError("corpus: domain '" + d.name + "' is empty");
        }
        for (const auto& seq : d.sequences) {
            if (seq.size() != context) {
                throw DataError("corpus: sequence length " +
                                std::to_string(seq.size()) + " != context " +
                                std::to_string(context) + " in domain '" + d.name + "'");
            }
            for (int t : seq) {
                if (t < 0 || t >= tokens::kVocab) {
                    throw DataError("corpus: token id out of range in domain '" +
                                    d.name + "'");
                }
            }
        }
    };
    for (const auto& d : domains) check_domain(d);
    if (ood) check_domain(*ood);
}

std::vector<std::vector<int>> chunk_tokens(const std::vector<int>& stream,
                                           std::size_t context) {
    if (context < 2) throw ContractError("chunk_tokens: context must be >= 2");
    const std::size_t payload = context - 1;  // one slot for BOS
    std::vector<std::vector<int>> out;
    for (std::size_t start = 0; start < stream.size(); start += payload) {
        const std::size_t len = std::min(payload, stream.size() - start);
        if (len < payload && len < context / 2) break;  // drop short remainder
        std::vector<int> seq;
        seq.reserve(context);
        seq.push_back(tokens::kBos);
        seq.insert(seq.end(), stream.begin() + start, stream.begin() + start + len);
        seq.resize(context, tokens::kPad);
        out.push_back(std::move(seq));
    }
    return out;
}

namespace {

bool valid_utf8(const std::string& s) {
    std::size_t i = 0;
    while (i < s.size()) {
        const unsigned char c = s[i];
        std::size_t extra;
        if (c < 0x80) extra = 0;
        else if ((c & 0xE0) == 0xC0) extra = 1;
        else if ((c & 0xF0) == 0xE0) extra = 2;
        else if ((c & 0xF8) == 0xF0) extra = 3;
        else return false;
        for (std::size_t j = 1; j <= extra; ++j) {
            if (i + j >= s.size()) return false;
            if ((static_cast<unsigned char>(s[i + j]) & 0xC0) != 0x80) return false;
        }
        i += extra + 1;
    }
    return true;
}

Domain domain_from_texts(const std::string& name,
                         const std::vector<std::string>& texts,
                         std::size_t context, std::size_t* skipped) {
    Domain d;
    d.name = name;
    for (const auto& text : texts) {
        if (!valid_utf8(text)) {
            if (skipped) ++(*skipped);
            continue;
        }
        auto seqs = chunk_tokens(tokens::tokenize(text), context);
        for (auto& s : seqs) d.sequences.push_back(std::move(s));
    }
    return d;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw DataError("cannot open file: " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

DomainCorpus ingest(const std::string& root, std::size_t context) {
    if (!fs::is_directory(root)) {
        throw DataError("ingest: not a directory: " + root);
    }
    std::vector<std::string> dir_names;
    for (const auto& entry : fs::directory_iterator(root)) {
        if (entry.is_directory()) dir_names.push_back(entry.path().filename().string());
    }
    std::sort(dir_names.begin(), dir_names.end());

    DomainCorpus corpus;
    corpus.context = context;
    std::size_t skipped = 0;
    for (const auto& name : dir_names) {
        std::vector<std::string> texts;
        std::vector<fs::path> files;
        for (const auto& f : fs::directory_iterator(fs::path(root) / name)) {
            if (f.is_regular_file()) files.push_back(f.path());
        }
        std::sort(files.begin(), files.end());
        for (const auto& f : files) texts.push_back(read_file(f));
        Domain d = domain_from_texts(name, texts, context, &skipped);
        if (d.sequences.empty()) {
            throw DataError("ingest: domain '" + name + "' has no usable sequences");
        }
        if (name == "_ood") {
            d.name = "ood";
            corpus.ood = std::move(d);
        } else {
            corpus.domains.push_back(std::move(d));
        }
    }
    if (skipped > 0) {
        std::fprintf(stderr, "[doge] warning: skipped %zu undecodable file(s)\n",
                     skipped);
    }
    if (corpus.domains.size() < 2) {
        throw DataError("ingest: need at least 2 training domains, found " +
                        std::to_string(corpus.domains.size()));
    }
    corpus.validate();
    return corpus;
}

DomainCorpus ingest_jsonl(const std::string& path, std::size_t context) {
    std::ifstream in(path);
    if (!in) throw DataError("ingest_jsonl: cannot open " + path);
    std::map<std::string, std::vector<std::string>> by_domain;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw DataError("ingest_jsonl: parse error at line " +
                            std::to_string(lineno) + ": " + e.what());
        }
        if (!rec.contains("domain") || !rec.contains("text")) {
            throw DataError("ingest_jsonl: record at line " + std::to_string(lineno) +
                            " missing 'domain' or 'text'");
        }
        by_domain[rec["domain"].get<std::string>()].push_back(
            rec["text"].get<std::string>());
    }
    DomainCorpus corpus;
    corpus.context = context;
    std::size_t skipped = 0;
    for (const auto& [name, texts] : by_domain) {  // std::map: lexicographic
        Domain d = domain_from_texts(name, texts, context, &skipped);
        if (d.sequences.empty()) {
            throw DataError("ingest_jsonl: domain '" + name + "' has no usable sequences");
        }
        if (name == "_ood") {
            d.name = "ood";
            corpus.ood = std::move(d);
        } else {
            corpus.domains.push_back(std::move(d));
        }
    }
    if (skipped > 0) {
        std::fprintf(stderr, "[doge] warning: skipped %zu undecodable record(s)\n",
                     skipped);
    }
    if (corpus.domains.size() < 2) {
        throw DataError("ingest_jsonl: need at least 2 training domains");
    }
    corpus.validate();
    return corpus;
}

namespace {

const Domain& resolve_domain(const DomainCorpus& corpus, int domain_id) {
    if (domain_id == kOodDomainId) {
        if (!corpus.ood) throw ContractError("batch: corpus has no OOD domain");
        return *corpus.ood;
    }
    if (domain_id < 0 || static_cast<std::size_t>(domain_id) >= corpus.domains.size()) {
        throw ContractError("batch: unknown domain id " + std::to_string(domain_id));
    }
    return corpus.domains[static_cast<std::size_t>(domain_id)];
}

void append_sequence(Batch* batch, const std::vector<int>& seq, int domain_id) {
    batch->tokens.insert(batch->tokens.end(), seq.begin(), seq.end());
    batch->domain_ids.push_back(domain_id);
    ++batch->rows;
}

}  // namespace

Batch uniform_domain_batch(const DomainCorpus& corpus, int domain_id,
                           std::size_t b, Rng& rng) {
    if (b < 1) throw ContractError("uniform_domain_batch: b must be >= 1");
    const Domain& d = resolve_domain(corpus, domain_id);
    Batch batch;
    batch.cols = corpus.context;
    std::uniform_int_distribution<std::size_t> pick(0, d.sequences.size() - 1);
    for (std::size_t i = 0; i < b; ++i) {
        append_sequence(&batch, d.sequences[pick(rng)], domain_id);
    }
    return batch;
}

Batch mixture_batch(const DomainCorpus& corpus, const std::vector<double>& alpha,
                    std::size_t b, Rng& rng) {
    const std::size_t k = corpus.domains.size();
    if (alpha.size() != k) {
        throw ContractError("mixture_batch: alpha has dimension " +
                            std::to_string(alpha.size()) + ", corpus has " +
                            std::to_string(k) + " domains");
    }
    if (b < 1) throw ContractError("mixture_batch: b must be >= 1");
    double total = 0.0;
    for (double a : alpha) {
        if (!(a >= 0.0)) throw ContractError("mixture_batch: negative alpha entry");
        total += a;
    }
    if (total <= 0.0) throw ContractError("mixture_batch: alpha sums to zero");

    // With a single domain the domain draw is skipped so draws coincide
    // with uniform_domain_batch under the same rng state.
    if (k == 1) return uniform_domain_batch(corpus, 0, b, rng);

    Batch batch;
    batch.cols = corpus.context;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (std::size_t i = 0; i < b; ++i) {
        const double u = unit(rng) * total;
        double acc = 0.0;
        std::size_t pick_domain = k - 1;
        for (std::size_t j = 0; j < k; ++j) {
            acc += alpha[j];
            if (u < acc) {
                pick_domain = j;
                break;
            }
        }
        const Domain& d = corpus.domains[pick_domain];
        std::uniform_int_distribution<std::size_t> pick(0, d.sequences.size() - 1);
        append_sequence(&batch, d.sequences[pick(rng)], static_cast<int>(pick_domain));
    }
    return batch;
}

// ---------------------------------------------------------------------------
// Synthetic corpora

namespace {

struct MarkovGenerator {
    int lo = 0;
    int m = 0;                     // alphabet size
    std::vector<double> table;     // (m*m) states x m, rows normalized

    int sample_next(int s1, int s2, Rng& rng) const {
        const double* row = table.data() + (static_cast<std::size_t>(s1) * m + s2) * m;
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        const double u = unit(rng);
        double acc = 0.0;
        for (int j = 0; j < m; ++j) {
            acc += row[j];
            if (u < acc) return j;
        }
        return m - 1;
    }

    std::vector<int> sample_sequence(std::size_t context, Rng& rng) const {
        std::uniform_int_distribution<int> start(0, m - 1);
        std::vector<int> seq;
        seq.reserve(context);
        seq.push_back(tokens::kBos);
        int s1 = start(rng), s2 = start(rng);
        seq.push_back(lo + s1);
        if (seq.size() < context) seq.push_back(lo + s2);
        while (seq.size() < context) {
            const int nxt = sample_next(s1, s2, rng);
            seq.push_back(lo + nxt);
            s1 = s2;
            s2 = nxt;
        }
        return seq;
    }
};

MarkovGenerator random_generator(int lo, int m, Rng& rng) {
    MarkovGenerator g;
    g.lo = lo;
    g.m = m;
    g.table.resize(static_cast<std::size_t>(m) * m * m);
    std::exponential_distribution<double> expo(1.0);
    for (std::size_t s = 0; s < static_cast<std::size_t>(m) * m; ++s) {
        double* row = g.table.data() + s * m;
        double total = 0.0;
        for (int j = 0; j < m; ++j) {
            row[j] = expo(rng) + 1e-6;
            total += row[j];
        }
        for (int j = 0; j < m; ++j) row[j] /= total;
    }
    return g;
}

std::vector<MarkovGenerator> build_generators(const SyntheticSpec& spec) {
    std::vector<MarkovGenerator> gens;
    for (std::size_t i = 0; i < spec.domains.size(); ++i) {
        const auto& ds = spec.domains[i];
        if (ds.symbol_lo < 0 || ds.symbol_hi > 256 || ds.symbol_lo >= ds.symbol_hi) {
            throw ConfigError("synthetic: bad symbol range for domain '" + ds.name + "'");
        }
        if (ds.overlap < 0.0 || ds.overlap > 1.0) {
            throw ConfigError("synthetic: overlap must be in [0,1] for domain '" +
                              ds.name + "'");
        }
        const int m = ds.symbol_hi - ds.symbol_lo;
        Rng rng = derive_rng(spec.seed, "synthetic-gen", i);
        MarkovGenerator g = random_generator(ds.symbol_lo, m, rng);
        if (ds.overlap_with >= 0) {
            if (static_cast<std::size_t>(ds.overlap_with) >= i) {
                throw ConfigError("synthetic: overlap_with must reference an earlier domain");
            }
            const MarkovGenerator& ref = gens[static_cast<std::size_t>(ds.overlap_with)];
            if (ref.m != m) {
                throw ConfigError("synthetic: overlapping domains need equal alphabet size");
            }
            for (std::size_t t = 0; t < g.table.size(); ++t) {
                g.table[t] = ds.overlap * ref.table[t] + (1.0 - ds.overlap) * g.table[t];
            }
        }
        gens.push_back(std::move(g));
    }
    return gens;
}

}  // namespace

std::vector<std::vector<double>> synthetic_transition_tables(const SyntheticSpec& spec) {
    if (spec.domains.empty()) throw ConfigError("synthetic: no domains");
    std::vector<std::vector<double>> tables;
    for (auto& g : build_generators(spec)) tables.push_back(std::move(g.table));
    return tables;
}

DomainCorpus generate_synthetic(const SyntheticSpec& spec) {
    if (spec.domains.empty()) throw ConfigError("synthetic: no domains");
    if (spec.context < 3) throw ConfigError("synthetic: context must be >= 3");
    if (spec.sequences_per_domain < 1) {
        throw ConfigError("synthetic: sequences_per_domain must be >= 1");
    }

    std::vector<MarkovGenerator> gens = build_generators(spec);

    DomainCorpus corpus;
    corpus.context = spec.context;
    for (std::size_t i = 0; i < spec.domains.size(); ++i) {
        Domain d;
        d.name = spec.domains[i].name;
        Rng rng = derive_rng(spec.seed, "synthetic-seq", i);
        for (std::size_t s = 0; s < spec.sequences_per_domain; ++s) {
            d.sequences.push_back(gens[i].sample_sequence(spec.context, rng));
        }
        corpus.domains.push_back(std::move(d));
    }

    if (spec.ood_source >= 0 || !spec.ood_mixture.empty()) {
        Domain d;
        d.name = "ood";
        Rng rng = derive_rng(spec.seed, "synthetic-ood", 0);
        if (spec.ood_source >= 0) {
            if (static_cast<std::size_t>(spec.ood_source) >= gens.size()) {
                throw ConfigError("synthetic: ood_source out of range");
            }
            for (std::size_t s = 0; s < spec.sequences_per_domain; ++s) {
                d.sequences.push_back(
                    gens[static_cast<std::size_t>(spec.ood_source)].sample_sequence(
                        spec.context, rng));
            }
        } else {
            if (spec.ood_mixture.size() != gens.size()) {
                throw ConfigError("synthetic: ood_mixture dimension mismatch");
            }
            double total = 0.0;
            for (double w : spec.ood_mixture) {
                if (w < 0.0) throw ConfigError("synthetic: negative ood_mixture weight");
                total += w;
            }
            if (total <= 0.0) throw ConfigError("synthetic: ood_mixture sums to zero");
            std::uniform_real_distribution<double> unit(0.0, 1.0);
            for (std::size_t s = 0; s < spec.sequences_per_domain; ++s) {
                const double u = unit(rng) * total;
                double acc = 0.0;
                std::size_t src = gens.size() - 1;
                for (std::size_t j = 0; j < gens.size(); ++j) {
                    acc += spec.ood_mixture[j];
                    if (u < acc) {
                        src = j;
                        break;
                    }
                }
                d.sequences.push_back(gens[src].sample_sequence(spec.context, rng));
            }
        }
        corpus.ood = std::move(d);
    }

    corpus.validate();
    return corpus;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

}  // namespace

Rng derive_rng(std::uint64_t run_seed, const std::string& tag, std::uint64_t id) {
    std::uint64_t h = splitmix64(run_seed);
    for (unsigned char c : tag) h = splitmix64(h ^ c);
    h = splitmix64(h ^ id);
    return Rng(h);
}

void split_holdout(const DomainCorpus& corpus, DomainCorpus* train,
                   DomainCorpus* valid) {
    train->domains.clear();
    valid->domains.clear();
    train->context = valid->context = corpus.context;
    train->ood = corpus.ood;
    valid->ood.reset();
    auto split_domain = [](const Domain& d, Domain* tr, Domain* va) {
        tr->name = va->name = d.name;
        if (d.sequences.size() < 2) {
            throw DataError("split_holdout: domain '" + d.name +
                            "' needs at least 2 sequences");
        }
        for (std::size_t i = 0; i < d.sequences.size(); ++i) {
            if (i % 20 == 19) {
                va->sequences.push_back(d.sequences[i]);
            } else {
                tr->sequences.push_back(d.sequences[i]);
            }
        }
        if (va->sequences.empty()) {
            va->sequences.push_back(tr->sequences.back());
            tr->sequences.pop_back();
        }
    };
    for (const auto& d : corpus.domains) {
        Domain tr, va;
        split_domain(d, &tr, &va);
        train->domains.push_back(std::move(tr));
        valid->domains.push_back(std::move(va));
    }
}

}  // namespace doge
