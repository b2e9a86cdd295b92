// Copyright (c) 2026 the doge-lab authors
// SPDX-License-Identifier: Apache-2.0

#include "doge/tensor.hpp"

#include <atomic>
#include <cmath>
#include <string>

namespace doge {

namespace {

std::atomic<std::uint64_t> g_next_node_id{1};

constexpr double kLayerNormEps = 1e-12;

std::string shape_str(const Shape& s) {
    std::string out = "(";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + ")";
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

void Tensor::ensure() const {
    if (!d_) throw ContractError("tensor: use of undefined tensor");
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    for (std::size_t d : shape) {
        if (d == 0) throw ShapeError("tensor: zero dimension in shape " + shape_str(shape));
    }
    Tensor t;
    t.d_ = std::make_shared<Data>();
    t.d_->shape = std::move(shape);
    t.d_->values.assign(shape_numel(t.d_->shape), 0.0);
    t.d_->requires_grad = requires_grad;
    t.d_->id = g_next_node_id.fetch_add(1);
    return t;
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
    if (values.size() != shape_numel(shape)) {
        throw ShapeError("tensor: " + std::to_string(values.size()) +
                         " values for shape " + shape_str(shape));
    }
    Tensor t = zeros(std::move(shape), requires_grad);
    t.d_->values = std::move(values);
    return t;
}

Tensor Tensor::scalar_value(double v) { return from({1}, {v}); }

const Shape& Tensor::shape() const { ensure(); return d_->shape; }
std::size_t Tensor::size() const { ensure(); return d_->values.size(); }
std::vector<double>& Tensor::values() { ensure(); return d_->values; }
const std::vector<double>& Tensor::values() const { ensure(); return d_->values; }
bool Tensor::requires_grad() const { ensure(); return d_->requires_grad; }
bool Tensor::has_grad() const { ensure(); return !d_->grad.empty(); }

std::vector<double>& Tensor::grad() {
    ensure();
    if (d_->grad.empty()) d_->grad.assign(d_->values.size(), 0.0);
    return d_->grad;
}

const std::vector<double>& Tensor::grad() const {
    ensure();
    if (d_->grad.empty()) throw ContractError("tensor: gradient not populated");
    return d_->grad;
}

void Tensor::clear_grad() {
    ensure();
    d_->grad.clear();
}

double Tensor::scalar() const {
    ensure();
    if (d_->values.size() != 1) {
        throw ContractError("tensor: scalar() on tensor of size " +
                            std::to_string(d_->values.size()));
    }
    return d_->values[0];
}

std::uint64_t Tensor::node_id() const { ensure(); return d_->id; }

// ---------------------------------------------------------------------------
// Tape

Tensor Tape::make_output(Shape shape) { return Tensor::zeros(std::move(shape)); }

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() < 2 || b.rank() != 2) {
        throw ShapeError("matmul: need a with rank>=2 and b with rank 2, got " +
                         shape_str(a.shape()) + " x " + shape_str(b.shape()));
    }
    const std::size_t k = a.shape().back();
    if (b.shape()[0] != k) {
        throw ShapeError("matmul: inner dimensions differ, " + shape_str(a.shape()) +
                         " x " + shape_str(b.shape()));
    }
    const std::size_t rows = a.size() / k;
    const std::size_t n = b.shape()[1];
    Shape out_shape = a.shape();
    out_shape.back() = n;
    Tensor out = make_output(out_shape);

    const auto& av = a.values();
    const auto& bv = b.values();
    auto& ov = out.values();
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t i = 0; i < k; ++i) {
            const double x = av[r * k + i];
            if (x == 0.0) continue;
            const double* brow = bv.data() + i * n;
            double* orow = ov.data() + r * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += x * brow[j];
        }
    }

    ops_.push_back({out, [a = a, b = b, out, rows, k, n]() mutable {
        const auto& og = out.grad();
        const auto& av = a.values();
        const auto& bv = b.values();
        auto& ag = a.grad();
        auto& bg = b.grad();
        for (std::size_t r = 0; r < rows; ++r) {
            const double* orow = og.data() + r * n;
            for (std::size_t i = 0; i < k; ++i) {
                const double* brow = bv.data() + i * n;
                double acc = 0.0;
                for (std::size_t j = 0; j < n; ++j) acc += orow[j] * brow[j];
                ag[r * k + i] += acc;
            }
            for (std::size_t i = 0; i < k; ++i) {
                const double x = av[r * k + i];
                if (x == 0.0) continue;
                double* bgrow = bg.data() + i * n;
                for (std::size_t j = 0; j < n; ++j) bgrow[j] += x * orow[j];
            }
        }
    }});
    return out;
}

Tensor Tape::add(const Tensor& a, const Tensor& b) {
    const bool same = a.shape() == b.shape();
    const std::size_t last = a.shape().back();
    const bool bias = !same && b.size() == last;
    if (!same && !bias) {
        throw ShapeError("add: incompatible shapes " + shape_str(a.shape()) + " + " +
                         shape_str(b.shape()));
    }
    Tensor out = make_output(a.shape());
    const auto& av = a.values();
    const auto& bv = b.values();
    auto& ov = out.values();
    if (same) {
        for (std::size_t i = 0; i < av.size(); ++i) ov[i] = av[i] + bv[i];
    } else {
        for (std::size_t i = 0; i < av.size(); ++i) ov[i] = av[i] + bv[i % last];
    }
    ops_.push_back({out, [a = a, b = b, out, same, last]() mutable {
        const auto& og = out.grad();
        auto& ag = a.grad();
        auto& bg = b.grad();
        for (std::size_t i = 0; i < og.size(); ++i) ag[i] += og[i];
        if (same) {
            for (std::size_t i = 0; i < og.size(); ++i) bg[i] += og[i];
        } else {
            for (std::size_t i = 0; i < og.size(); ++i) bg[i % last] += og[i];
        }
    }});
    return out;
}

Tensor Tape::scale(const Tensor& a, double c) {
    Tensor out = make_output(a.shape());
    const auto& av = a.values();
    auto& ov = out.values();
    for (std::size_t i = 0; i < av.size(); ++i) ov[i] = c * av[i];
    ops_.push_back({out, [a = a, out, c]() mutable {
        const auto& og = out.grad();
        auto& ag = a.grad();
        for (std::size_t i = 0; i < og.size(); ++i) ag[i] += c * og[i];
    }});
    return out;
}

Tensor Tape::gelu(const Tensor& a) {
    Tensor out = make_output(a.shape());
    const auto& av = a.values();
    auto& ov = out.values();
    for (std::size_t i = 0; i < av.size(); ++i) {
        ov[i] = 0.5 * av[i] * (1.0 + std::erf(av[i] / std::sqrt(2.0)));
    }
    ops_.push_back({out, [a = a, out]() mutable {
        const auto& og = out.grad();
        const auto& av = a.values();
        auto& ag = a.grad();
        const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
        const double inv_sqrt2pi = 1.0 / std::sqrt(2.0 * M_PI);
        for (std::size_t i = 0; i < og.size(); ++i) {
            const double x = av[i];
            const double cdf = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
            const double pdf = inv_sqrt2pi * std::exp(-0.5 * x * x);
            ag[i] += og[i] * (cdf + x * pdf);
        }
    }});
    return out;
}

Tensor Tape::softmax_rows(const Tensor& a) {
    if (a.rank() < 1) throw ShapeError("softmax_rows: scalar input");
    const std::size_t d = a.shape().back();
    const std::size_t rows = a.size() / d;
    Tensor out = make_output(a.shape());
    const auto& av = a.values();
    auto& ov = out.values();
    for (std::size_t r = 0; r < rows; ++r) {
        const double* x = av.data() + r * d;
        double* y = ov.data() + r * d;
        double mx = x[0];
        for (std::size_t i = 1; i < d; ++i) mx = std::max(mx, x[i]);
        double z = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            y[i] = std::exp(x[i] - mx);
            z += y[i];
        }
        for (std::size_t i = 0; i < d; ++i) y[i] /= z;
    }
    ops_.push_back({out, [a = a, out, rows, d]() mutable {
        const auto& og = out.grad();
        const auto& ov = out.values();
        auto& ag = a.grad();
        for (std::size_t r = 0; r < rows; ++r) {
            const double* g = og.data() + r * d;
            const double* p = ov.data() + r * d;
            double dot = 0.0;
            for (std::size_t i = 0; i < d; ++i) dot += g[i] * p[i];
            for (std::size_t i = 0; i < d; ++i) ag[r * d + i] += p[i] * (g[i] - dot);
        }
    }});
    return out;
}

Tensor Tape::layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias) {
    const std::size_t d = a.shape().back();
    if (gain.size() != d || bias.size() != d) {
        throw ShapeError("layer_norm: gain/bias size must match last dim " +
                         std::to_string(d));
    }
    const std::size_t rows = a.size() / d;
    Tensor out = make_output(a.shape());
    // saved intermediates for backward
    auto xhat = std::make_shared<std::vector<double>>(a.size());
    auto inv_std = std::make_shared<std::vector<double>>(rows);

    const auto& av = a.values();
    const auto& gv = gain.values();
    const auto& bv = bias.values();
    auto& ov = out.values();
    for (std::size_t r = 0; r < rows; ++r) {
        const double* x = av.data() + r * d;
        double mu = 0.0;
        for (std::size_t i = 0; i < d; ++i) mu += x[i];
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t i = 0; i < d; ++i) var += (x[i] - mu) * (x[i] - mu);
        var /= static_cast<double>(d);
        const double is = 1.0 / std::sqrt(var + kLayerNormEps);
        (*inv_std)[r] = is;
        for (std::size_t i = 0; i < d; ++i) {
            const double xh = (x[i] - mu) * is;
            (*xhat)[r * d + i] = xh;
            ov[r * d + i] = gv[i] * xh + bv[i];
        }
    }

    ops_.push_back({out, [a = a, gain = gain, bias = bias, out, xhat, inv_std, rows,
                          d]() mutable {
        const auto& og = out.grad();
        const auto& gv = gain.values();
        auto& ag = a.grad();
        auto& gg = gain.grad();
        auto& bg = bias.grad();
        for (std::size_t r = 0; r < rows; ++r) {
            const double* g = og.data() + r * d;
            const double* xh = xhat->data() + r * d;
            const double is = (*inv_std)[r];
            double sum_gy = 0.0, sum_gy_xh = 0.0;
            for (std::size_t i = 0; i < d; ++i) {
                const double gy = g[i] * gv[i];
                sum_gy += gy;
                sum_gy_xh += gy * xh[i];
                gg[i] += g[i] * xh[i];
                bg[i] += g[i];
            }
            const double inv_d = 1.0 / static_cast<double>(d);
            for (std::size_t i = 0; i < d; ++i) {
                const double gy = g[i] * gv[i];
                ag[r * d + i] += is * (gy - inv_d * sum_gy - xh[i] * inv_d * sum_gy_xh);
            }
        }
    }});
    return out;
}

Tensor Tape::embedding_lookup(const Tensor& table, const std::vector<int>& ids) {
    if (table.rank() != 2) {
        throw ShapeError("embedding_lookup: table must be rank 2, got " +
                         shape_str(table.shape()));
    }
    const std::size_t vocab = table.shape()[0];
    const std::size_t dim = table.shape()[1];
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
            throw DataError("embedding_lookup: token id " + std::to_string(ids[i]) +
                            " out of vocabulary range " + std::to_string(vocab));
        }
    }
    Tensor out = make_output({ids.size(), dim});
    const auto& tv = table.values();
    auto& ov = out.values();
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const double* row = tv.data() + static_cast<std::size_t>(ids[i]) * dim;
        std::copy(row, row + dim, ov.data() + i * dim);
    }
    ops_.push_back({out, [table = table, out, ids, dim]() mutable {
        const auto& og = out.grad();
        auto& tg = table.grad();
        for (std::size_t i = 0; i < ids.size(); ++i) {
            double* trow = tg.data() + static_cast<std::size_t>(ids[i]) * dim;
            const double* grow = og.data() + i * dim;
            for (std::size_t j = 0; j < dim; ++j) trow[j] += grow[j];
        }
    }});
    return out;
}

Tensor Tape::causal_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                              std::size_t batch, std::size_t seq,
                              std::size_t heads) {
    if (q.shape() != k.shape() || q.shape() != v.shape()) {
        throw ShapeError("causal_attention: q/k/v shapes differ");
    }
    if (q.rank() != 2 || q.shape()[0] != batch * seq) {
        throw ShapeError("causal_attention: expected (batch*seq, dim) inputs");
    }
    const std::size_t dim = q.shape()[1];
    if (heads == 0 || dim % heads != 0) {
        throw ShapeError("causal_attention: dim " + std::to_string(dim) +
                         " not divisible by heads " + std::to_string(heads));
    }
    const std::size_t hd = dim / heads;
    const double inv_scale = 1.0 / std::sqrt(static_cast<double>(hd));

    Tensor out = make_output(q.shape());
    // attention probabilities, per (batch, head): seq x seq lower-triangular
    auto probs = std::make_shared<std::vector<double>>(batch * heads * seq * seq, 0.0);

    const auto& qv = q.values();
    const auto& kv = k.values();
    const auto& vv = v.values();
    auto& ov = out.values();

    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t h = 0; h < heads; ++h) {
            double* p = probs->data() + (b * heads + h) * seq * seq;
            for (std::size_t t = 0; t < seq; ++t) {
                const double* qrow = qv.data() + (b * seq + t) * dim + h * hd;
                // scores over s <= t
                double mx = -1e300;
                for (std::size_t s = 0; s <= t; ++s) {
                    const double* krow = kv.data() + (b * seq + s) * dim + h * hd;
                    double sc = 0.0;
                    for (std::size_t i = 0; i < hd; ++i) sc += qrow[i] * krow[i];
                    sc *= inv_scale;
                    p[t * seq + s] = sc;
                    mx = std::max(mx, sc);
                }
                double z = 0.0;
                for (std::size_t s = 0; s <= t; ++s) {
                    p[t * seq + s] = std::exp(p[t * seq + s] - mx);
                    z += p[t * seq + s];
                }
                double* orow = ov.data() + (b * seq + t) * dim + h * hd;
                for (std::size_t s = 0; s <= t; ++s) {
                    p[t * seq + s] /= z;
                    const double* vrow = vv.data() + (b * seq + s) * dim + h * hd;
                    const double w = p[t * seq + s];
                    for (std::size_t i = 0; i < hd; ++i) orow[i] += w * vrow[i];
                }
            }
        }
    }

    ops_.push_back({out, [q = q, k = k, v = v, out, probs, batch, seq, heads, hd, dim,
                          inv_scale]() mutable {
        const auto& og = out.grad();
        const auto& qv = q.values();
        const auto& kv = k.values();
        const auto& vv = v.values();
        auto& qg = q.grad();
        auto& kg = k.grad();
        auto& vg = v.grad();
        std::vector<double> dp(seq);
        for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t h = 0; h < heads; ++h) {
                const double* p = probs->data() + (b * heads + h) * seq * seq;
                for (std::size_t t = 0; t < seq; ++t) {
                    const double* grow = og.data() + (b * seq + t) * dim + h * hd;
                    // dV and d(probs)
                    double dot = 0.0;
                    for (std::size_t s = 0; s <= t; ++s) {
                        const double* vrow = vv.data() + (b * seq + s) * dim + h * hd;
                        double* vgrow = vg.data() + (b * seq + s) * dim + h * hd;
                        const double w = p[t * seq + s];
                        double acc = 0.0;
                        for (std::size_t i = 0; i < hd; ++i) {
                            vgrow[i] += w * grow[i];
                            acc += grow[i] * vrow[i];
                        }
                        dp[s] = acc;
                        dot += w * acc;
                    }
                    // softmax jacobian, then dQ/dK
                    const double* qrow = qv.data() + (b * seq + t) * dim + h * hd;
                    double* qgrow = qg.data() + (b * seq + t) * dim + h * hd;
                    for (std::size_t s = 0; s <= t; ++s) {
                        const double ds = p[t * seq + s] * (dp[s] - dot) * inv_scale;
                        if (ds == 0.0) continue;
                        const double* krow = kv.data() + (b * seq + s) * dim + h * hd;
                        double* kgrow = kg.data() + (b * seq + s) * dim + h * hd;
                        for (std::size_t i = 0; i < hd; ++i) {
                            qgrow[i] += ds * krow[i];
                            kgrow[i] += ds * qrow[i];
                        }
                    }
                }
            }
        }
    }});
    return out;
}

Tensor Tape::slice_cols(const Tensor& a, std::size_t begin, std::size_t end) {
    const std::size_t d = a.shape().back();
    if (begin >= end || end > d) {
        throw ShapeError("slice_cols: range [" + std::to_string(begin) + "," +
                         std::to_string(end) + ") out of width " + std::to_string(d));
    }
    const std::size_t rows = a.size() / d;
    const std::size_t w = end - begin;
    Shape out_shape = a.shape();
    out_shape.back() = w;
    Tensor out = make_output(out_shape);
    const auto& av = a.values();
    auto& ov = out.values();
    for (std::size_t r = 0; r < rows; ++r) {
        std::copy(av.data() + r * d + begin, av.data() + r * d + end,
                  ov.data() + r * w);
    }
    ops_.push_back({out, [a = a, out, rows, d, w, begin]() mutable {
        const auto& og = out.grad();
        auto& ag = a.grad();
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t i = 0; i < w; ++i) {
                ag[r * d + begin + i] += og[r * w + i];
            }
        }
    }});
    return out;
}

Tensor Tape::cross_entropy(const Tensor& logits, const std::vector<int>& targets) {
    if (logits.rank() != 2) {
        throw ShapeError("cross_entropy: logits must be rank 2, got " +
                         shape_str(logits.shape()));
    }
    const std::size_t n = logits.shape()[0];
    const std::size_t vocab = logits.shape()[1];
    if (targets.size() != n) {
        throw ShapeError("cross_entropy: " + std::to_string(targets.size()) +
                         " targets for " + std::to_string(n) + " rows");
    }
    std::size_t included = 0;
    for (int t : targets) {
        if (t == -1) continue;
        if (t < 0 || static_cast<std::size_t>(t) >= vocab) {
            throw DataError("cross_entropy: target id " + std::to_string(t) +
                            " out of vocabulary range " + std::to_string(vocab));
        }
        ++included;
    }
    if (included == 0) throw ContractError("cross_entropy: no predicted positions");

    // softmax probabilities saved for backward
    auto probs = std::make_shared<std::vector<double>>(logits.size());
    const auto& lv = logits.values();
    double loss = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
        const double* x = lv.data() + r * vocab;
        double* p = probs->data() + r * vocab;
        double mx = x[0];
        for (std::size_t i = 1; i < vocab; ++i) mx = std::max(mx, x[i]);
        double z = 0.0;
        for (std::size_t i = 0; i < vocab; ++i) {
            p[i] = std::exp(x[i] - mx);
            z += p[i];
        }
        for (std::size_t i = 0; i < vocab; ++i) p[i] /= z;
        if (targets[r] != -1) {
            loss -= std::log(p[targets[r]]);
        }
    }
    loss /= static_cast<double>(included);
    Tensor out = Tensor::from({1}, {loss});

    ops_.push_back({out, [logits = logits, out, probs, targets, n, vocab,
                          included]() mutable {
        const double g = out.grad()[0] / static_cast<double>(included);
        auto& lg = logits.grad();
        for (std::size_t r = 0; r < n; ++r) {
            if (targets[r] == -1) continue;
            const double* p = probs->data() + r * vocab;
            double* grow = lg.data() + r * vocab;
            for (std::size_t i = 0; i < vocab; ++i) grow[i] += g * p[i];
            grow[targets[r]] -= g;
        }
    }});
    return out;
}

void Tape::backward(Tensor loss) {
    if (loss.size() != 1) {
        throw ContractError("backward: loss must be a scalar, got size " +
                            std::to_string(loss.size()));
    }
    // Fresh propagation buffers for every op output; leaf gradients are
    // untouched here and therefore accumulate across backward calls.
    for (auto& op : ops_) {
        auto& g = op.output.grad();
        std::fill(g.begin(), g.end(), 0.0);
    }
    loss.grad()[0] = 1.0;
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) it->backward();
}

// ---------------------------------------------------------------------------
// FlatGradient

bool FlatGradient::same_layout(const FlatGradient& other) const {
    return values.size() == other.values.size() && group_ids == other.group_ids &&
           group_offsets == other.group_offsets;
}

double FlatGradient::dot(const FlatGradient& other) const {
    if (!same_layout(other)) {
        throw ContractError("FlatGradient::dot: layout mismatch (" +
                            std::to_string(values.size()) + " vs " +
                            std::to_string(other.values.size()) + " elements)");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) acc += values[i] * other.values[i];
    return acc;
}

double FlatGradient::squared_norm() const {
    double acc = 0.0;
    for (double v : values) acc += v * v;
    return acc;
}

double FlatGradient::norm() const { return std::sqrt(squared_norm()); }

FlatGradient& FlatGradient::add_scaled(const FlatGradient& other, double c) {
    if (!same_layout(other)) {
        throw ContractError("FlatGradient::add_scaled: layout mismatch");
    }
    for (std::size_t i = 0; i < values.size(); ++i) values[i] += c * other.values[i];
    return *this;
}

FlatGradient FlatGradient::zeros_like(const FlatGradient& proto) {
    FlatGradient g = proto;
    std::fill(g.values.begin(), g.values.end(), 0.0);
    return g;
}

}  // namespace doge
