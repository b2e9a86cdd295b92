// Copyright (c) 2026 the doge-lab authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "doge/errors.hpp"

namespace doge {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);

/// Dense 64-bit float tensor with a lazily allocated gradient slot.
/// Copying a Tensor copies the handle; values are shared.
class Tensor {
  public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> values,
                       bool requires_grad = false);
    static Tensor scalar_value(double v);

    bool defined() const { return d_ != nullptr; }
    const Shape& shape() const;
    std::size_t size() const;
    std::size_t rank() const { return shape().size(); }

    std::vector<double>& values();
    const std::vector<double>& values() const;

    bool requires_grad() const;
    bool has_grad() const;
    /// Allocates the gradient slot (zero-filled) on first access.
    std::vector<double>& grad();
    const std::vector<double>& grad() const;
    void clear_grad();

    /// Value of a 1-element tensor; ContractError otherwise.
    double scalar() const;

    std::uint64_t node_id() const;

    bool same_data(const Tensor& other) const { return d_ == other.d_; }

  private:
    struct Data {
        Shape shape;
        std::vector<double> values;
        std::vector<double> grad;  // empty until first use
        bool requires_grad = false;
        std::uint64_t id = 0;
    };
    std::shared_ptr<Data> d_;
    void ensure() const;
};

/// Records forward ops and replays them in reverse for backward().
/// Ops are appended in execution order, so the tape is topologically
/// sorted by construction.
class Tape {
  public:
    // a: (.., m, k) with leading dims collapsed, b: (k, n) -> (.., m, n)
    Tensor matmul(const Tensor& a, const Tensor& b);
    // Same shape, or b is a length-(last dim of a) bias broadcast per row.
    Tensor add(const Tensor& a, const Tensor& b);
    Tensor scale(const Tensor& a, double c);
    Tensor gelu(const Tensor& a);
    // Softmax over the last dimension.
    Tensor softmax_rows(const Tensor& a);
    // Normalizes over the last dimension, then applies gain and bias.
    Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias);
    // table: (vocab, dim); output row i is table[ids[i]].
    Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids);
    // q, k, v: (batch*seq, dim); multi-head causal self-attention.
    Tensor causal_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            std::size_t batch, std::size_t seq,
                            std::size_t heads);
    // Column range [begin, end) of a, with a treated as (rows, last dim).
    Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end);
    // logits: (n, vocab), targets: n entries, -1 positions are excluded.
    // Returns the mean loss over included positions as a scalar.
    Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets);

    /// Seeds d(loss)/d(loss)=1 and replays the tape in reverse.
    /// Gradients accumulate additively until cleared by the caller.
    void backward(Tensor loss);

    void clear() { ops_.clear(); }
    std::size_t num_ops() const { return ops_.size(); }

  private:
    struct Op {
        Tensor output;
        std::function<void()> backward;
    };
    std::vector<Op> ops_;

    Tensor make_output(Shape shape);
};

/// Flattened gradient over an ordered subset of parameter groups.
struct FlatGradient {
    std::vector<double> values;
    std::vector<std::size_t> group_ids;      // selected groups, ascending
    std::vector<std::size_t> group_offsets;  // offset into values per group
    std::size_t total_params = 0;            // full model parameter count

    std::size_t length() const { return values.size(); }
    bool same_layout(const FlatGradient& other) const;
    double dot(const FlatGradient& other) const;
    double squared_norm() const;
    double norm() const;

    FlatGradient& add_scaled(const FlatGradient& other, double c);
    static FlatGradient zeros_like(const FlatGradient& proto);
};

}  // namespace doge
