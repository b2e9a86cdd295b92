// Copyright (c) 2026 the doge-lab authors
// SPDX-License-Identifier: Apache-2.0

#include "doge/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>

namespace doge {

void TransformerConfig::validate() const {
    if (layers == 0 || heads == 0 || embed_dim == 0 || hidden_dim == 0 || vocab == 0) {
        throw ConfigError("config: all dimensions must be positive");
    }
    if (context < 2) throw ConfigError("config: context length must be >= 2");
    if (embed_dim % heads != 0) {
        throw ConfigError("config: embed_dim " + std::to_string(embed_dim) +
                          " not divisible by heads " + std::to_string(heads));
    }
}

std::size_t TransformerConfig::param_count() const {
    const std::size_t d = embed_dim, h = hidden_dim;
    const std::size_t per_layer = 2 * d            // ln1 gain+bias
                                  + d * 3 * d + 3 * d  // qkv
                                  + d * d + d          // attn proj
                                  + 2 * d              // ln2
                                  + d * h + h          // mlp fc
                                  + h * d + d;         // mlp proj
    return vocab * d + context * d + layers * per_layer + 2 * d + d * vocab;
}

double cosine_lr(std::size_t step, std::size_t total, double lr_max, double lr_min,
                 double warmup_frac) {
    if (total == 0) return lr_max;
    const std::size_t warmup =
        static_cast<std::size_t>(warmup_frac * static_cast<double>(total));
    if (warmup > 0 && step < warmup) {
        return lr_max * static_cast<double>(step + 1) / static_cast<double>(warmup);
    }
    const double denom = static_cast<double>(total > warmup ? total - warmup : 1);
    const double progress = static_cast<double>(step - warmup) / denom;
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(M_PI * progress));
}

namespace {

Tensor init_normal(Shape shape, double std_dev, Rng& rng) {
    Tensor t = Tensor::zeros(std::move(shape), /*requires_grad=*/true);
    std::normal_distribution<double> dist(0.0, std_dev);
    for (double& v : t.values()) v = dist(rng);
    return t;
}

Tensor init_const(Shape shape, double value) {
    Tensor t = Tensor::zeros(std::move(shape), /*requires_grad=*/true);
    std::fill(t.values().begin(), t.values().end(), value);
    return t;
}

}  // namespace

Model Model::init(const TransformerConfig& cfg, Optimizer opt) {
    cfg.validate();
    Model m;
    m.cfg_ = cfg;
    m.opt_ = opt;

    Rng rng(cfg.seed);
    const double std0 = 0.02;
    const double std_res = std0 / std::sqrt(2.0 * static_cast<double>(cfg.layers));
    const std::size_t d = cfg.embed_dim, h = cfg.hidden_dim;

    auto push = [&m](const std::string& name, Tensor t) {
        m.groups_.push_back({m.groups_.size(), name, std::move(t)});
    };

    push("embedding.tok", init_normal({cfg.vocab, d}, std0, rng));
    push("embedding.pos", init_normal({cfg.context, d}, std0, rng));
    for (std::size_t l = 0; l < cfg.layers; ++l) {
        const std::string p = "block" + std::to_string(l) + ".";
        push(p + "ln1.gain", init_const({d}, 1.0));
        push(p + "ln1.bias", init_const({d}, 0.0));
        push(p + "attn.qkv.weight", init_normal({d, 3 * d}, std0, rng));
        push(p + "attn.qkv.bias", init_const({3 * d}, 0.0));
        push(p + "attn.proj.weight", init_normal({d, d}, std_res, rng));
        push(p + "attn.proj.bias", init_const({d}, 0.0));
        push(p + "ln2.gain", init_const({d}, 1.0));
        push(p + "ln2.bias", init_const({d}, 0.0));
        push(p + "mlp.fc.weight", init_normal({d, h}, std0, rng));
        push(p + "mlp.fc.bias", init_const({h}, 0.0));
        push(p + "mlp.proj.weight", init_normal({h, d}, std_res, rng));
        push(p + "mlp.proj.bias", init_const({d}, 0.0));
    }
    push("final_ln.gain", init_const({d}, 1.0));
    push("final_ln.bias", init_const({d}, 0.0));
    push("lm_head", init_normal({d, cfg.vocab}, std0, rng));

    m.finish_groups();
    return m;
}

void Model::finish_groups() {
    total_params_ = 0;
    for (const auto& g : groups_) total_params_ += g.param.size();
    if (opt_ == Optimizer::Adam && adam_m_.empty()) {
        adam_m_.resize(groups_.size());
        adam_v_.resize(groups_.size());
        for (std::size_t i = 0; i < groups_.size(); ++i) {
            adam_m_[i].assign(groups_[i].param.size(), 0.0);
            adam_v_[i].assign(groups_[i].param.size(), 0.0);
        }
    }
}

std::size_t Model::gid(const std::string& name) const {
    for (const auto& g : groups_) {
        if (g.name == name) return g.id;
    }
    throw ContractError("model: unknown parameter group '" + name + "'");
}

GroupMask Model::mask_from_names(const std::vector<std::string>& names) const {
    GroupMask mask;
    for (const auto& n : names) mask.push_back(gid(n));
    std::sort(mask.begin(), mask.end());
    mask.erase(std::unique(mask.begin(), mask.end()), mask.end());
    return mask;
}

Tensor Model::loss(Tape& tape, const Batch& batch) const {
    if (batch.rows == 0) throw ContractError("loss: empty batch");
    if (batch.cols > cfg_.context) {
        throw ContractError("loss: batch sequence length " + std::to_string(batch.cols) +
                            " exceeds context " + std::to_string(cfg_.context));
    }
    if (batch.cols < 2) throw ContractError("loss: sequences too short to predict");
    const std::size_t b = batch.rows, T = batch.cols, d = cfg_.embed_dim;

    std::vector<int> pos_ids(b * T);
    for (std::size_t r = 0; r < b; ++r) {
        for (std::size_t t = 0; t < T; ++t) pos_ids[r * T + t] = static_cast<int>(t);
    }

    const Tensor& tok = groups_[gid("embedding.tok")].param;
    const Tensor& pos = groups_[gid("embedding.pos")].param;
    Tensor x = tape.add(tape.embedding_lookup(tok, batch.tokens),
                        tape.embedding_lookup(pos, pos_ids));

    for (std::size_t l = 0; l < cfg_.layers; ++l) {
        const std::string p = "block" + std::to_string(l) + ".";
        Tensor h1 = tape.layer_norm(x, groups_[gid(p + "ln1.gain")].param,
                                    groups_[gid(p + "ln1.bias")].param);
        Tensor qkv = tape.add(tape.matmul(h1, groups_[gid(p + "attn.qkv.weight")].param),
                              groups_[gid(p + "attn.qkv.bias")].param);
        Tensor q = tape.slice_cols(qkv, 0, d);
        Tensor k = tape.slice_cols(qkv, d, 2 * d);
        Tensor v = tape.slice_cols(qkv, 2 * d, 3 * d);
        Tensor att = tape.causal_attention(q, k, v, b, T, cfg_.heads);
        Tensor att_out =
            tape.add(tape.matmul(att, groups_[gid(p + "attn.proj.weight")].param),
                     groups_[gid(p + "attn.proj.bias")].param);
        x = tape.add(x, att_out);

        Tensor h2 = tape.layer_norm(x, groups_[gid(p + "ln2.gain")].param,
                                    groups_[gid(p + "ln2.bias")].param);
        Tensor mid = tape.gelu(
            tape.add(tape.matmul(h2, groups_[gid(p + "mlp.fc.weight")].param),
                     groups_[gid(p + "mlp.fc.bias")].param));
        Tensor mlp_out =
            tape.add(tape.matmul(mid, groups_[gid(p + "mlp.proj.weight")].param),
                     groups_[gid(p + "mlp.proj.bias")].param);
        x = tape.add(x, mlp_out);
    }

    x = tape.layer_norm(x, groups_[gid("final_ln.gain")].param,
                        groups_[gid("final_ln.bias")].param);
    Tensor logits = tape.matmul(x, groups_[gid("lm_head")].param);

    // next-token targets; PAD positions (either side) excluded
    std::vector<int> targets(b * T, -1);
    for (std::size_t r = 0; r < b; ++r) {
        for (std::size_t t = 0; t + 1 < T; ++t) {
            const int cur = batch.tokens[r * T + t];
            const int nxt = batch.tokens[r * T + t + 1];
            if (cur != tokens::kPad && nxt != tokens::kPad) {
                targets[r * T + t] = nxt;
            }
        }
    }
    return tape.cross_entropy(logits, targets);
}

double Model::loss_value(const Batch& batch) const {
    Tape tape;
    return loss(tape, batch).scalar();
}

void Model::clear_grads() {
    for (auto& g : groups_) g.param.clear_grad();
}

FlatGradient Model::flatten_gradients(const GroupMask* mask) const {
    FlatGradient flat;
    flat.total_params = total_params_;
    for (const auto& g : groups_) {
        if (mask && std::find(mask->begin(), mask->end(), g.id) == mask->end()) {
            continue;
        }
        if (!g.param.has_grad()) {
            throw ContractError("flatten_gradients: missing gradient on group '" +
                                g.name + "'");
        }
        flat.group_ids.push_back(g.id);
        flat.group_offsets.push_back(flat.values.size());
        const auto& gr = g.param.grad();
        flat.values.insert(flat.values.end(), gr.begin(), gr.end());
    }
    return flat;
}

void Model::apply_update(const FlatGradient& direction, double step_size) {
    if (direction.total_params != total_params_) {
        throw ContractError("apply_update: direction built for " +
                            std::to_string(direction.total_params) +
                            " parameters, model has " + std::to_string(total_params_));
    }
    // verify segment lengths against group sizes
    for (std::size_t i = 0; i < direction.group_ids.size(); ++i) {
        const std::size_t id = direction.group_ids[i];
        if (id >= groups_.size()) {
            throw ContractError("apply_update: unknown group id in direction");
        }
        const std::size_t end = (i + 1 < direction.group_ids.size())
                                    ? direction.group_offsets[i + 1]
                                    : direction.values.size();
        if (end - direction.group_offsets[i] != groups_[id].param.size()) {
            throw ContractError("apply_update: segment length mismatch for group '" +
                                groups_[id].name + "'");
        }
    }

    // global-norm clip at 1.0 before the optimizer
    double scale = 1.0;
    const double norm = direction.norm();
    if (norm > 1.0) scale = 1.0 / norm;

    if (opt_ == Optimizer::Adam) ++adam_t_;
    for (std::size_t i = 0; i < direction.group_ids.size(); ++i) {
        const std::size_t id = direction.group_ids[i];
        auto& pv = groups_[id].param.values();
        const double* dir = direction.values.data() + direction.group_offsets[i];
        if (opt_ == Optimizer::Sgd) {
            for (std::size_t j = 0; j < pv.size(); ++j) {
                pv[j] -= step_size * scale * dir[j];
            }
        } else {
            auto& mv = adam_m_[id];
            auto& vv = adam_v_[id];
            const double bc1 = 1.0 - std::pow(adam_.beta1, static_cast<double>(adam_t_));
            const double bc2 = 1.0 - std::pow(adam_.beta2, static_cast<double>(adam_t_));
            for (std::size_t j = 0; j < pv.size(); ++j) {
                const double g = scale * dir[j];
                mv[j] = adam_.beta1 * mv[j] + (1.0 - adam_.beta1) * g;
                vv[j] = adam_.beta2 * vv[j] + (1.0 - adam_.beta2) * g * g;
                const double mhat = mv[j] / bc1;
                const double vhat = vv[j] / bc2;
                pv[j] -= step_size * (mhat / (std::sqrt(vhat) + adam_.eps) +
                                      adam_.weight_decay * pv[j]);
            }
        }
    }
    ++step_;
}

Model Model::clone() const {
    Model m;
    m.cfg_ = cfg_;
    m.opt_ = opt_;
    m.adam_ = adam_;
    m.adam_t_ = adam_t_;
    m.adam_m_ = adam_m_;
    m.adam_v_ = adam_v_;
    m.step_ = step_;
    for (const auto& g : groups_) {
        Tensor t = Tensor::from(g.param.shape(), g.param.values(), true);
        m.groups_.push_back({g.id, g.name, std::move(t)});
    }
    m.finish_groups();
    return m;
}

// ---------------------------------------------------------------------------
// Checkpoint format: "DOGE" magic, u32 version, 7 x u32 config fields,
// u64 step counter, then per group (u32 name length, name bytes,
// u64 element count, f64 little-endian values). A trailing u8 flags
// optimizer state; Adam appends u64 t plus .adam.m/.adam.v records per
// group in the same record scheme.

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void write_pod(std::ofstream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw DataError("checkpoint: truncated file");
    return v;
}

void write_record(std::ofstream& out, const std::string& name,
                  const std::vector<double>& data) {
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod<std::uint64_t>(out, data.size());
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size() * sizeof(double)));
}

void read_record(std::ifstream& in, std::string* name, std::vector<double>* data) {
    const auto nlen = read_pod<std::uint32_t>(in);
    name->resize(nlen);
    in.read(name->data(), nlen);
    const auto count = read_pod<std::uint64_t>(in);
    data->resize(count);
    in.read(reinterpret_cast<char*>(data->data()),
            static_cast<std::streamsize>(count * sizeof(double)));
    if (!in) throw DataError("checkpoint: truncated record");
}

}  // namespace

void Model::save_checkpoint(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("checkpoint: cannot write " + path);
    out.write("DOGE", 4);
    write_pod<std::uint32_t>(out, kCheckpointVersion);
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(cfg_.layers));
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(cfg_.heads));
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(cfg_.embed_dim));
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(cfg_.hidden_dim));
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(cfg_.context));
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(cfg_.vocab));
    write_pod<std::uint32_t>(out, cfg_.seed);
    write_pod<std::uint64_t>(out, step_);
    for (const auto& g : groups_) write_record(out, g.name, g.param.values());
    const bool has_adam = opt_ == Optimizer::Adam;
    write_pod<std::uint8_t>(out, has_adam ? 1 : 0);
    if (has_adam) {
        write_pod<std::uint64_t>(out, adam_t_);
        for (const auto& g : groups_) {
            write_record(out, g.name + ".adam.m", adam_m_[g.id]);
            write_record(out, g.name + ".adam.v", adam_v_[g.id]);
        }
    }
}

Model Model::load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("checkpoint: cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "DOGE", 4) != 0) {
        throw DataError("checkpoint: bad magic in " + path);
    }
    const auto version = read_pod<std::uint32_t>(in);
    if (version != kCheckpointVersion) {
        throw DataError("checkpoint: unsupported version " + std::to_string(version));
    }
    TransformerConfig cfg;
    cfg.layers = read_pod<std::uint32_t>(in);
    cfg.heads = read_pod<std::uint32_t>(in);
    cfg.embed_dim = read_pod<std::uint32_t>(in);
    cfg.hidden_dim = read_pod<std::uint32_t>(in);
    cfg.context = read_pod<std::uint32_t>(in);
    cfg.vocab = read_pod<std::uint32_t>(in);
    cfg.seed = read_pod<std::uint32_t>(in);
    const auto step = read_pod<std::uint64_t>(in);

    Model m = Model::init(cfg, Optimizer::Sgd);
    m.step_ = step;
    for (auto& g : m.groups_) {
        std::string name;
        std::vector<double> data;
        read_record(in, &name, &data);
        if (name != g.name || data.size() != g.param.size()) {
            throw DataError("checkpoint: group mismatch, expected '" + g.name +
                            "' got '" + name + "'");
        }
        g.param.values() = std::move(data);
    }
    const auto has_adam = read_pod<std::uint8_t>(in);
    if (has_adam) {
        m.opt_ = Optimizer::Adam;
        m.adam_t_ = read_pod<std::uint64_t>(in);
        m.adam_m_.resize(m.groups_.size());
        m.adam_v_.resize(m.groups_.size());
        for (auto& g : m.groups_) {
            std::string name;
            read_record(in, &name, &m.adam_m_[g.id]);
            if (name != g.name + ".adam.m") throw DataError("checkpoint: bad adam record");
            read_record(in, &name, &m.adam_v_[g.id]);
            if (name != g.name + ".adam.v") throw DataError("checkpoint: bad adam record");
        }
    }
    return m;
}

}  // namespace doge
