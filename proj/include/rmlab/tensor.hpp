// Copyright (c) 2026, rmlab developers
// SPDX-License-Identifier: Apache-2.0
//
// Dense float64 tensors with reverse-mode automatic differentiation.
//
// A Tensor is a cheap handle onto a shared node. Operations that receive at
// least one input with requires_grad() record themselves in the graph; all
// other operations produce plain constant tensors. Shapes are explicit:
// apart from the row-wise helpers (add_bias, layer_norm, softmax) nothing
// broadcasts.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace rmlab {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {
struct Node;
}

class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const noexcept { return node_ != nullptr; }

    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t numel() const;

    std::span<const double> data() const;
    /// Writable view for leaves (parameters, optimizer updates). Mutating a
    /// tensor that already feeds a recorded graph invalidates that graph.
    std::span<double> mutable_data();
    double item() const;
    double at(std::size_t flat_index) const { return data()[flat_index]; }

    bool requires_grad() const;
    Tensor& set_requires_grad(bool on);

    bool has_grad() const;
    std::span<const double> grad() const;
    std::span<double> mutable_grad();
    void zero_grad();

    /// Same values, cut from the graph and never receiving gradients.
    Tensor detach() const;

    /// Identity of the underlying storage (two handles onto one node compare equal).
    bool same_node(const Tensor& other) const noexcept { return node_ == other.node_; }

    detail::Node* node() const noexcept { return node_.get(); }
    const std::shared_ptr<detail::Node>& node_ptr() const noexcept { return node_; }

private:
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
    friend struct detail::Node;

    std::shared_ptr<detail::Node> node_;
};

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until a gradient is accumulated
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> inputs;
    // Reads this->grad and accumulates into inputs' grads.
    std::function<void(Node&)> backward_fn;

    bool is_leaf() const { return !backward_fn; }
    std::vector<double>& ensure_grad();

    static Tensor wrap(std::shared_ptr<Node> node) { return Tensor(std::move(node)); }
};

}  // namespace detail

/// While alive on a thread, operations record no graph (evaluation only).
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_enabled() noexcept;

/// Creates an op output. When any input requires grad the node keeps the
/// inputs and backward closure; otherwise both are dropped.
Tensor make_result(Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                   std::function<void(detail::Node&)> backward);

/// Topologically ordered view of the graph reachable from a root tensor.
class Graph {
public:
    explicit Graph(const Tensor& root);

    /// Inputs appear before the nodes that consume them; root is last.
    const std::vector<detail::Node*>& nodes() const noexcept { return order_; }
    std::size_t size() const noexcept { return order_.size(); }

private:
    std::vector<detail::Node*> order_;
};

/// Backpropagates d(loss)/d(loss) = 1. Leaf gradients accumulate across calls;
/// interior gradients are scratch and released afterwards.
void backward(const Tensor& loss);

// ---- operations ---------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
/// x[rows x cols] + bias[cols] for every row; x may have any rank >= 1.
Tensor add_bias(const Tensor& x, const Tensor& bias);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor square(const Tensor& x);
Tensor gelu(const Tensor& x);
/// log(1 + exp(x)) without overflow for any finite x.
Tensor softplus(const Tensor& x);

Tensor reshape(const Tensor& x, Shape shape);
/// Rows [begin, end) along axis 0.
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end);
/// Selects rows of a rank-2 tensor; indices may repeat.
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows);
/// table[V x d] indexed by ids -> [ids.size() x d].
Tensor embedding(const Tensor& table, std::span<const std::int32_t> ids);

/// Max-subtracted softmax along `axis`.
Tensor softmax(const Tensor& x, std::size_t axis);
/// Normalizes the last axis (epsilon 1e-5) then applies gain and bias.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias);
inline constexpr double kLayerNormEps = 1e-5;

/// Sum over masked rows of -log softmax(logits[row])[target[row]].
/// logits is [N x V]; targets and mask have N entries.
Tensor cross_entropy(const Tensor& logits, std::span<const std::int32_t> targets,
                     std::span<const std::uint8_t> mask);

/// Multi-head causal self-attention over flattened [batch*length x 3*dim]
/// projections laid out as [q | k | v]. Keys with key_mask == 0 receive
/// exactly zero weight; queries with no visible key output zeros.
Tensor causal_attention(const Tensor& qkv, std::span<const std::uint8_t> key_mask,
                        std::size_t batch, std::size_t length, std::size_t heads);

/// Mean over rows with mask set, per group of `length` consecutive rows.
/// x is [groups*length x d] -> [groups x d]. Each group needs one masked row.
Tensor masked_mean_rows(const Tensor& x, std::span<const std::uint8_t> mask,
                        std::size_t groups, std::size_t length);
/// Element-wise max over masked rows per group; gradient flows to the first argmax.
Tensor masked_max_rows(const Tensor& x, std::span<const std::uint8_t> mask,
                       std::size_t groups, std::size_t length);

}  // namespace rmlab
