// Copyright (c) 2026, rmlab developers
// SPDX-License-Identifier: Apache-2.0

#include "rmlab/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_set>

#include "rmlab/errors.hpp"

namespace rmlab {

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) {
        n *= d;
    }
    return n;
}

std::string shape_str(const Shape& shape) {
    std::string s = "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) {
            s += ",";
        }
        s += std::to_string(shape[i]);
    }
    return s + ")";
}

namespace detail {

std::vector<double>& Node::ensure_grad() {
    if (grad.size() != data.size()) {
        grad.assign(data.size(), 0.0);
    }
    return grad;
}

}  // namespace detail

namespace {

std::shared_ptr<detail::Node> new_node(Shape shape, std::vector<double> data, bool requires_grad) {
    for (auto d : shape) {
        if (d == 0) {
            throw ShapeError("tensor dimensions must be positive, got " + shape_str(shape));
        }
    }
    if (shape_numel(shape) != data.size()) {
        throw ShapeError("data length " + std::to_string(data.size()) + " does not match shape " +
                         shape_str(shape));
    }
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->requires_grad = requires_grad;
    return node;
}

const detail::Node& checked(const Tensor& t) {
    if (!t.defined()) {
        throw ContractError("use of an undefined tensor");
    }
    return *t.node();
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()) + " differ");
    }
}

void accumulate(const std::shared_ptr<detail::Node>& in, std::span<const double> delta) {
    if (!in->requires_grad) {
        return;
    }
    auto& g = in->ensure_grad();
    for (std::size_t i = 0; i < delta.size(); ++i) {
        g[i] += delta[i];
    }
}

// C[m x n] += A[m x k] * B[k x n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        const double* arow = a + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            const double* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) {
                crow[j] += av * brow[j];
            }
        }
    }
}

// C[m x k] += A[m x n] * B[k x n]^T
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t n,
             std::size_t k) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * n;
        double* crow = c + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double* brow = b + p * n;
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                acc += arow[j] * brow[j];
            }
            crow[p] += acc;
        }
    }
}

// C[k x n] += A[m x k]^T * B[m x n]
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        const double* brow = b + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            double* crow = c + p * n;
            for (std::size_t j = 0; j < n; ++j) {
                crow[j] += av * brow[j];
            }
        }
    }
}

double stable_softplus(double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double stable_sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

// ---- Tensor ---------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    const auto n = shape_numel(shape);
    return Tensor(new_node(std::move(shape), std::vector<double>(n, 0.0), requires_grad));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    const auto n = shape_numel(shape);
    return Tensor(new_node(std::move(shape), std::vector<double>(n, value), requires_grad));
}

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
    return Tensor(new_node(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return Tensor(new_node({1}, {value}, requires_grad));
}

const Shape& Tensor::shape() const { return checked(*this).shape; }

std::size_t Tensor::dim(std::size_t axis) const {
    const auto& s = shape();
    if (axis >= s.size()) {
        throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(s));
    }
    return s[axis];
}

std::size_t Tensor::numel() const { return checked(*this).data.size(); }

std::span<const double> Tensor::data() const { return checked(*this).data; }

std::span<double> Tensor::mutable_data() {
    checked(*this);
    return node_->data;
}

double Tensor::item() const {
    if (numel() != 1) {
        throw ShapeError("item() on tensor of shape " + shape_str(shape()));
    }
    return node_->data[0];
}

bool Tensor::requires_grad() const { return checked(*this).requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
    checked(*this);
    node_->requires_grad = on;
    if (!on) {
        node_->grad.clear();
    }
    return *this;
}

bool Tensor::has_grad() const { return !checked(*this).grad.empty(); }

std::span<const double> Tensor::grad() const { return checked(*this).grad; }

std::span<double> Tensor::mutable_grad() {
    checked(*this);
    return node_->ensure_grad();
}

void Tensor::zero_grad() {
    checked(*this);
    if (!node_->grad.empty()) {
        std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
    }
}

Tensor Tensor::detach() const {
    const auto& n = checked(*this);
    return Tensor(new_node(n.shape, n.data, false));
}

namespace {
thread_local bool t_grad_enabled = true;
}

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

bool grad_enabled() noexcept { return t_grad_enabled; }

Tensor make_result(Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                   std::function<void(detail::Node&)> backward) {
    auto node = new_node(std::move(shape), std::move(data), false);
    const bool needs = t_grad_enabled && std::any_of(inputs.begin(), inputs.end(),
                                   [](const Tensor& t) { return t.requires_grad(); });
    if (needs) {
        node->requires_grad = true;
        node->inputs.reserve(inputs.size());
        for (auto& t : inputs) {
            node->inputs.push_back(t.node_ptr());
        }
        node->backward_fn = std::move(backward);
    }
    return detail::Node::wrap(std::move(node));
}

// ---- graph + backward -----------------------------------------------------

Graph::Graph(const Tensor& root) {
    checked(root);
    std::unordered_set<const detail::Node*> visited;
    // Iterative post-order DFS; children visited in input order.
    std::vector<std::pair<detail::Node*, std::size_t>> stack;
    if (root.requires_grad()) {
        stack.emplace_back(root.node(), 0);
        visited.insert(root.node());
    }
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            detail::Node* child = node->inputs[next++].get();
            if (child->requires_grad && visited.insert(child).second) {
                stack.emplace_back(child, 0);
            }
        } else {
            order_.push_back(node);
            stack.pop_back();
        }
    }
}

void backward(const Tensor& loss) {
    checked(loss);
    if (loss.numel() != 1) {
        throw ContractError("backward() requires a scalar loss, got shape " +
                            shape_str(loss.shape()));
    }
    if (!loss.requires_grad()) {
        throw ContractError("backward() on a loss that is not connected to any parameter");
    }
    Graph graph(loss);
    const auto& nodes = graph.nodes();
    for (auto* n : nodes) {
        if (!n->is_leaf()) {
            n->grad.assign(n->data.size(), 0.0);
        }
    }
    loss.node()->ensure_grad()[0] += 1.0;
    for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
        detail::Node* n = *it;
        if (!n->is_leaf()) {
            n->backward_fn(*n);
            n->grad.clear();
            n->grad.shrink_to_fit();
        }
    }
}

// ---- elementwise ----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2) {
        throw ShapeError("matmul expects rank-2 operands, got " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
    }
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k) {
        throw ShapeError("matmul inner dimensions differ: " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
    }
    std::vector<double> out(m * n, 0.0);
    gemm_nn(a.data().data(), b.data().data(), out.data(), m, k, n);
    return make_result({m, n}, std::move(out), {a, b}, [m, k, n](detail::Node& self) {
        const auto& A = self.inputs[0];
        const auto& B = self.inputs[1];
        if (A->requires_grad) {
            gemm_nt(self.grad.data(), B->data.data(), A->ensure_grad().data(), m, n, k);
        }
        if (B->requires_grad) {
            gemm_tn(A->data.data(), self.grad.data(), B->ensure_grad().data(), m, k, n);
        }
    });
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    std::vector<double> out(a.numel());
    const auto x = a.data(), y = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = x[i] + y[i];
    }
    return make_result(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
        accumulate(self.inputs[0], self.grad);
        accumulate(self.inputs[1], self.grad);
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    std::vector<double> out(a.numel());
    const auto x = a.data(), y = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = x[i] - y[i];
    }
    return make_result(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
        accumulate(self.inputs[0], self.grad);
        const auto& B = self.inputs[1];
        if (B->requires_grad) {
            auto& g = B->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) {
                g[i] -= self.grad[i];
            }
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    std::vector<double> out(a.numel());
    const auto x = a.data(), y = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = x[i] * y[i];
    }
    return make_result(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
        const auto& A = self.inputs[0];
        const auto& B = self.inputs[1];
        if (A->requires_grad) {
            auto& g = A->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) {
                g[i] += self.grad[i] * B->data[i];
            }
        }
        if (B->requires_grad) {
            auto& g = B->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) {
                g[i] += self.grad[i] * A->data[i];
            }
        }
    });
}

Tensor scale(const Tensor& x, double factor) {
    std::vector<double> out(x.data().begin(), x.data().end());
    for (auto& v : out) {
        v *= factor;
    }
    return make_result(x.shape(), std::move(out), {x}, [factor](detail::Node& self) {
        const auto& X = self.inputs[0];
        auto& g = X->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) {
            g[i] += factor * self.grad[i];
        }
    });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
    if (bias.rank() != 1 || x.shape().back() != bias.dim(0)) {
        throw ShapeError("add_bias: bias " + shape_str(bias.shape()) + " does not match " +
                         shape_str(x.shape()));
    }
    const std::size_t cols = bias.dim(0);
    const std::size_t rows = x.numel() / cols;
    std::vector<double> out(x.data().begin(), x.data().end());
    const auto b = bias.data();
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            out[r * cols + c] += b[c];
        }
    }
    return make_result(x.shape(), std::move(out), {x, bias}, [rows, cols](detail::Node& self) {
        accumulate(self.inputs[0], self.grad);
        const auto& B = self.inputs[1];
        if (B->requires_grad) {
            auto& g = B->ensure_grad();
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t c = 0; c < cols; ++c) {
                    g[c] += self.grad[r * cols + c];
                }
            }
        }
    });
}

Tensor sum(const Tensor& x) {
    double acc = 0.0;
    for (double v : x.data()) {
        acc += v;
    }
    return make_result({1}, {acc}, {x}, [](detail::Node& self) {
        auto& g = self.inputs[0]->ensure_grad();
        const double up = self.grad[0];
        for (auto& v : g) {
            v += up;
        }
    });
}

Tensor mean(const Tensor& x) {
    double acc = 0.0;
    for (double v : x.data()) {
        acc += v;
    }
    const double n = static_cast<double>(x.numel());
    return make_result({1}, {acc / n}, {x}, [n](detail::Node& self) {
        auto& g = self.inputs[0]->ensure_grad();
        const double up = self.grad[0] / n;
        for (auto& v : g) {
            v += up;
        }
    });
}

Tensor square(const Tensor& x) { return mul(x, x); }

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace

Tensor gelu(const Tensor& x) {
    std::vector<double> out(x.numel());
    const auto in = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double v = in[i];
        out[i] = 0.5 * v * (1.0 + std::tanh(kGeluC * (v + kGeluA * v * v * v)));
    }
    return make_result(x.shape(), std::move(out), {x}, [](detail::Node& self) {
        const auto& X = self.inputs[0];
        auto& g = X->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double v = X->data[i];
            const double u = kGeluC * (v + kGeluA * v * v * v);
            const double t = std::tanh(u);
            const double du = kGeluC * (1.0 + 3.0 * kGeluA * v * v);
            g[i] += self.grad[i] * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du);
        }
    });
}

Tensor softplus(const Tensor& x) {
    std::vector<double> out(x.numel());
    const auto in = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = stable_softplus(in[i]);
    }
    return make_result(x.shape(), std::move(out), {x}, [](detail::Node& self) {
        const auto& X = self.inputs[0];
        auto& g = X->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) {
            g[i] += self.grad[i] * stable_sigmoid(X->data[i]);
        }
    });
}

// ---- structural -----------------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.numel()) {
        throw ShapeError("reshape " + shape_str(x.shape()) + " -> " + shape_str(shape));
    }
    std::vector<double> out(x.data().begin(), x.data().end());
    return make_result(std::move(shape), std::move(out), {x},
                       [](detail::Node& self) { accumulate(self.inputs[0], self.grad); });
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
    const std::size_t rows = x.dim(0);
    if (begin >= end || end > rows) {
        throw ShapeError("slice_rows [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") out of range for " + shape_str(x.shape()));
    }
    const std::size_t width = x.numel() / rows;
    Shape shape = x.shape();
    shape[0] = end - begin;
    const auto in = x.data();
    std::vector<double> out(in.begin() + static_cast<std::ptrdiff_t>(begin * width),
                            in.begin() + static_cast<std::ptrdiff_t>(end * width));
    return make_result(std::move(shape), std::move(out), {x},
                       [begin, width](detail::Node& self) {
                           auto& g = self.inputs[0]->ensure_grad();
                           for (std::size_t i = 0; i < self.grad.size(); ++i) {
                               g[begin * width + i] += self.grad[i];
                           }
                       });
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows) {
    if (x.rank() != 2) {
        throw ShapeError("gather_rows expects rank 2, got " + shape_str(x.shape()));
    }
    if (rows.empty()) {
        throw ShapeError("gather_rows with no rows");
    }
    const std::size_t n = x.dim(0), d = x.dim(1);
    std::vector<std::size_t> idx(rows.begin(), rows.end());
    std::vector<double> out(idx.size() * d);
    const auto in = x.data();
    for (std::size_t r = 0; r < idx.size(); ++r) {
        if (idx[r] >= n) {
            throw IndexError("gather_rows: row " + std::to_string(idx[r]) + " >= " +
                             std::to_string(n));
        }
        std::copy_n(in.begin() + static_cast<std::ptrdiff_t>(idx[r] * d), d,
                    out.begin() + static_cast<std::ptrdiff_t>(r * d));
    }
    const std::size_t count = idx.size();
    return make_result({count, d}, std::move(out), {x},
                       [idx = std::move(idx), d](detail::Node& self) {
                           auto& g = self.inputs[0]->ensure_grad();
                           for (std::size_t r = 0; r < idx.size(); ++r) {
                               for (std::size_t c = 0; c < d; ++c) {
                                   g[idx[r] * d + c] += self.grad[r * d + c];
                               }
                           }
                       });
}

Tensor embedding(const Tensor& table, std::span<const std::int32_t> ids) {
    if (table.rank() != 2) {
        throw ShapeError("embedding table must be rank 2");
    }
    const std::size_t vocab = table.dim(0);
    std::vector<std::size_t> rows(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
            throw IndexError("token id " + std::to_string(ids[i]) + " outside table of " +
                             std::to_string(vocab) + " rows");
        }
        rows[i] = static_cast<std::size_t>(ids[i]);
    }
    return gather_rows(table, rows);
}

// ---- normalization --------------------------------------------------------

Tensor softmax(const Tensor& x, std::size_t axis) {
    const auto& shape = x.shape();
    if (axis >= shape.size()) {
        throw ShapeError("softmax axis " + std::to_string(axis) + " invalid for " +
                         shape_str(shape));
    }
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) {
        outer *= shape[i];
    }
    for (std::size_t i = axis + 1; i < shape.size(); ++i) {
        inner *= shape[i];
    }
    const std::size_t len = shape[axis];
    const auto in = x.data();
    std::vector<double> out(in.size());
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t s = 0; s < inner; ++s) {
            const std::size_t base = o * len * inner + s;
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t l = 0; l < len; ++l) {
                mx = std::max(mx, in[base + l * inner]);
            }
            double z = 0.0;
            for (std::size_t l = 0; l < len; ++l) {
                const double e = std::exp(in[base + l * inner] - mx);
                out[base + l * inner] = e;
                z += e;
            }
            for (std::size_t l = 0; l < len; ++l) {
                out[base + l * inner] /= z;
            }
        }
    }
    return make_result(shape, std::move(out), {x}, [outer, inner, len](detail::Node& self) {
        auto& g = self.inputs[0]->ensure_grad();
        const auto& y = self.data;
        for (std::size_t o = 0; o < outer; ++o) {
            for (std::size_t s = 0; s < inner; ++s) {
                const std::size_t base = o * len * inner + s;
                double dot = 0.0;
                for (std::size_t l = 0; l < len; ++l) {
                    dot += y[base + l * inner] * self.grad[base + l * inner];
                }
                for (std::size_t l = 0; l < len; ++l) {
                    const std::size_t i = base + l * inner;
                    g[i] += y[i] * (self.grad[i] - dot);
                }
            }
        }
    });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias) {
    const std::size_t d = x.shape().back();
    if (gain.shape() != Shape{d} || bias.shape() != Shape{d}) {
        throw ShapeError("layer_norm affine parameters must have shape (" + std::to_string(d) +
                         ")");
    }
    const std::size_t rows = x.numel() / d;
    const auto in = x.data();
    const auto gv = gain.data(), bv = bias.data();
    std::vector<double> out(in.size()), xhat(in.size()), rstd(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = in.data() + r * d;
        double mu = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
            mu += row[c];
        }
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
            const double z = row[c] - mu;
            var += z * z;
        }
        var /= static_cast<double>(d);
        const double rs = 1.0 / std::sqrt(var + kLayerNormEps);
        rstd[r] = rs;
        for (std::size_t c = 0; c < d; ++c) {
            const double h = (row[c] - mu) * rs;
            xhat[r * d + c] = h;
            out[r * d + c] = h * gv[c] + bv[c];
        }
    }
    return make_result(x.shape(), std::move(out), {x, gain, bias},
                       [rows, d, xhat = std::move(xhat), rstd = std::move(rstd)](detail::Node& self) {
                           const auto& X = self.inputs[0];
                           const auto& G = self.inputs[1];
                           const auto& B = self.inputs[2];
                           const auto& dy = self.grad;
                           if (G->requires_grad || B->requires_grad) {
                               auto* dg = G->requires_grad ? G->ensure_grad().data() : nullptr;
                               auto* db = B->requires_grad ? B->ensure_grad().data() : nullptr;
                               for (std::size_t r = 0; r < rows; ++r) {
                                   for (std::size_t c = 0; c < d; ++c) {
                                       if (dg) {
                                           dg[c] += dy[r * d + c] * xhat[r * d + c];
                                       }
                                       if (db) {
                                           db[c] += dy[r * d + c];
                                       }
                                   }
                               }
                           }
                           if (X->requires_grad) {
                               auto& dx = X->ensure_grad();
                               const double inv_d = 1.0 / static_cast<double>(d);
                               for (std::size_t r = 0; r < rows; ++r) {
                                   double m1 = 0.0, m2 = 0.0;
                                   for (std::size_t c = 0; c < d; ++c) {
                                       const double dh = dy[r * d + c] * G->data[c];
                                       m1 += dh;
                                       m2 += dh * xhat[r * d + c];
                                   }
                                   m1 *= inv_d;
                                   m2 *= inv_d;
                                   for (std::size_t c = 0; c < d; ++c) {
                                       const double dh = dy[r * d + c] * G->data[c];
                                       dx[r * d + c] += rstd[r] * (dh - m1 - xhat[r * d + c] * m2);
                                   }
                               }
                           }
                       });
}

// ---- losses ---------------------------------------------------------------

Tensor cross_entropy(const Tensor& logits, std::span<const std::int32_t> targets,
                     std::span<const std::uint8_t> mask) {
    if (logits.rank() != 2) {
        throw ShapeError("cross_entropy expects [N x V] logits, got " + shape_str(logits.shape()));
    }
    const std::size_t n = logits.dim(0), vocab = logits.dim(1);
    if (targets.size() != n || mask.size() != n) {
        throw ShapeError("cross_entropy: " + std::to_string(n) + " rows but " +
                         std::to_string(targets.size()) + " targets and " +
                         std::to_string(mask.size()) + " mask entries");
    }
    const auto in = logits.data();
    std::vector<std::int32_t> tgt(targets.begin(), targets.end());
    std::vector<std::uint8_t> msk(mask.begin(), mask.end());
    std::vector<double> lse(n, 0.0);
    double total = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
        if (!msk[r]) {
            continue;
        }
        if (tgt[r] < 0 || static_cast<std::size_t>(tgt[r]) >= vocab) {
            throw IndexError("cross_entropy target " + std::to_string(tgt[r]) +
                             " outside vocabulary of " + std::to_string(vocab));
        }
        const double* row = in.data() + r * vocab;
        double mx = row[0];
        for (std::size_t v = 1; v < vocab; ++v) {
            mx = std::max(mx, row[v]);
        }
        double z = 0.0;
        for (std::size_t v = 0; v < vocab; ++v) {
            z += std::exp(row[v] - mx);
        }
        lse[r] = mx + std::log(z);
        total += lse[r] - row[static_cast<std::size_t>(tgt[r])];
    }
    return make_result({1}, {total}, {logits},
                       [n, vocab, tgt = std::move(tgt), msk = std::move(msk),
                        lse = std::move(lse)](detail::Node& self) {
                           const auto& L = self.inputs[0];
                           auto& g = L->ensure_grad();
                           const double up = self.grad[0];
                           for (std::size_t r = 0; r < n; ++r) {
                               if (!msk[r]) {
                                   continue;
                               }
                               const double* row = L->data.data() + r * vocab;
                               double* grow = g.data() + r * vocab;
                               for (std::size_t v = 0; v < vocab; ++v) {
                                   grow[v] += up * std::exp(row[v] - lse[r]);
                               }
                               grow[static_cast<std::size_t>(tgt[r])] -= up;
                           }
                       });
}

// ---- attention ------------------------------------------------------------

Tensor causal_attention(const Tensor& qkv, std::span<const std::uint8_t> key_mask,
                        std::size_t batch, std::size_t length, std::size_t heads) {
    if (qkv.rank() != 2 || qkv.dim(0) != batch * length || qkv.dim(1) % 3 != 0) {
        throw ShapeError("causal_attention: qkv " + shape_str(qkv.shape()) +
                         " incompatible with batch " + std::to_string(batch) + " x length " +
                         std::to_string(length));
    }
    const std::size_t width = qkv.dim(1);
    const std::size_t dim = width / 3;
    if (heads == 0 || dim % heads != 0) {
        throw ShapeError("causal_attention: dim " + std::to_string(dim) +
                         " not divisible by heads " + std::to_string(heads));
    }
    if (key_mask.size() != batch * length) {
        throw ShapeError("causal_attention: key mask has " + std::to_string(key_mask.size()) +
                         " entries, expected " + std::to_string(batch * length));
    }
    const std::size_t hd = dim / heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));
    const auto in = qkv.data();
    std::vector<std::uint8_t> km(key_mask.begin(), key_mask.end());
    std::vector<double> out(batch * length * dim, 0.0);
    // probs[b][h][i][j], zero where j is hidden from i
    std::vector<double> probs(batch * heads * length * length, 0.0);
    std::vector<double> scores(length);
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t h = 0; h < heads; ++h) {
            for (std::size_t i = 0; i < length; ++i) {
                const double* q = in.data() + (b * length + i) * width + h * hd;
                double mx = -std::numeric_limits<double>::infinity();
                bool any = false;
                for (std::size_t j = 0; j <= i; ++j) {
                    if (!km[b * length + j]) {
                        continue;
                    }
                    const double* k = in.data() + (b * length + j) * width + dim + h * hd;
                    double s = 0.0;
                    for (std::size_t c = 0; c < hd; ++c) {
                        s += q[c] * k[c];
                    }
                    s *= inv_sqrt;
                    scores[j] = s;
                    mx = std::max(mx, s);
                    any = true;
                }
                if (!any) {
                    continue;
                }
                double* p = probs.data() + ((b * heads + h) * length + i) * length;
                double z = 0.0;
                for (std::size_t j = 0; j <= i; ++j) {
                    if (km[b * length + j]) {
                        p[j] = std::exp(scores[j] - mx);
                        z += p[j];
                    }
                }
                double* o = out.data() + (b * length + i) * dim + h * hd;
                for (std::size_t j = 0; j <= i; ++j) {
                    if (!km[b * length + j]) {
                        continue;
                    }
                    p[j] /= z;
                    const double* v = in.data() + (b * length + j) * width + 2 * dim + h * hd;
                    for (std::size_t c = 0; c < hd; ++c) {
                        o[c] += p[j] * v[c];
                    }
                }
            }
        }
    }
    return make_result(
        {batch * length, dim}, std::move(out), {qkv},
        [batch, length, heads, hd, dim, width, inv_sqrt, km = std::move(km),
         probs = std::move(probs)](detail::Node& self) {
            const auto& X = self.inputs[0];
            const double* in = X->data.data();
            double* g = X->ensure_grad().data();
            std::vector<double> dp(length);
            for (std::size_t b = 0; b < batch; ++b) {
                for (std::size_t h = 0; h < heads; ++h) {
                    for (std::size_t i = 0; i < length; ++i) {
                        const double* p = probs.data() + ((b * heads + h) * length + i) * length;
                        const double* dout = self.grad.data() + (b * length + i) * dim + h * hd;
                        const double* q = in + (b * length + i) * width + h * hd;
                        double* dq = g + (b * length + i) * width + h * hd;
                        double dot = 0.0;
                        bool any = false;
                        for (std::size_t j = 0; j <= i; ++j) {
                            if (!km[b * length + j]) {
                                continue;
                            }
                            any = true;
                            const double* v = in + (b * length + j) * width + 2 * dim + h * hd;
                            double* dv = g + (b * length + j) * width + 2 * dim + h * hd;
                            double s = 0.0;
                            for (std::size_t c = 0; c < hd; ++c) {
                                s += dout[c] * v[c];
                                dv[c] += p[j] * dout[c];
                            }
                            dp[j] = s;
                            dot += p[j] * s;
                        }
                        if (!any) {
                            continue;
                        }
                        for (std::size_t j = 0; j <= i; ++j) {
                            if (!km[b * length + j]) {
                                continue;
                            }
                            const double ds = p[j] * (dp[j] - dot) * inv_sqrt;
                            const double* k = in + (b * length + j) * width + dim + h * hd;
                            double* dk = g + (b * length + j) * width + dim + h * hd;
                            for (std::size_t c = 0; c < hd; ++c) {
                                dq[c] += ds * k[c];
                                dk[c] += ds * q[c];
                            }
                        }
                    }
                }
            }
        });
}

// ---- pooling --------------------------------------------------------------

namespace {
void check_pool_args(const Tensor& x, std::span<const std::uint8_t> mask, std::size_t groups,
                     std::size_t length, const char* op) {
    if (x.rank() != 2 || x.dim(0) != groups * length || mask.size() != groups * length) {
        throw ShapeError(std::string(op) + ": input " + shape_str(x.shape()) + " / mask " +
                         std::to_string(mask.size()) + " incompatible with " +
                         std::to_string(groups) + " x " + std::to_string(length));
    }
    for (std::size_t g = 0; g < groups; ++g) {
        bool any = false;
        for (std::size_t t = 0; t < length && !any; ++t) {
            any = mask[g * length + t] != 0;
        }
        if (!any) {
            throw ContractError(std::string(op) + ": sequence " + std::to_string(g) +
                                " has no unmasked position");
        }
    }
}
}  // namespace

Tensor masked_mean_rows(const Tensor& x, std::span<const std::uint8_t> mask, std::size_t groups,
                        std::size_t length) {
    check_pool_args(x, mask, groups, length, "masked_mean_rows");
    const std::size_t d = x.dim(1);
    const auto in = x.data();
    std::vector<double> out(groups * d, 0.0);
    std::vector<double> counts(groups, 0.0);
    std::vector<std::uint8_t> msk(mask.begin(), mask.end());
    for (std::size_t g = 0; g < groups; ++g) {
        for (std::size_t t = 0; t < length; ++t) {
            if (!msk[g * length + t]) {
                continue;
            }
            counts[g] += 1.0;
            for (std::size_t c = 0; c < d; ++c) {
                out[g * d + c] += in[(g * length + t) * d + c];
            }
        }
        for (std::size_t c = 0; c < d; ++c) {
            out[g * d + c] /= counts[g];
        }
    }
    return make_result({groups, d}, std::move(out), {x},
                       [groups, length, d, msk = std::move(msk),
                        counts = std::move(counts)](detail::Node& self) {
                           auto& gx = self.inputs[0]->ensure_grad();
                           for (std::size_t g = 0; g < groups; ++g) {
                               for (std::size_t t = 0; t < length; ++t) {
                                   if (!msk[g * length + t]) {
                                       continue;
                                   }
                                   for (std::size_t c = 0; c < d; ++c) {
                                       gx[(g * length + t) * d + c] +=
                                           self.grad[g * d + c] / counts[g];
                                   }
                               }
                           }
                       });
}

Tensor masked_max_rows(const Tensor& x, std::span<const std::uint8_t> mask, std::size_t groups,
                       std::size_t length) {
    check_pool_args(x, mask, groups, length, "masked_max_rows");
    const std::size_t d = x.dim(1);
    const auto in = x.data();
    std::vector<double> out(groups * d, -std::numeric_limits<double>::infinity());
    std::vector<std::size_t> arg(groups * d, 0);
    for (std::size_t g = 0; g < groups; ++g) {
        for (std::size_t t = 0; t < length; ++t) {
            if (!mask[g * length + t]) {
                continue;
            }
            for (std::size_t c = 0; c < d; ++c) {
                const double v = in[(g * length + t) * d + c];
                if (v > out[g * d + c]) {
                    out[g * d + c] = v;
                    arg[g * d + c] = g * length + t;
                }
            }
        }
    }
    return make_result({groups, d}, std::move(out), {x},
                       [d, arg = std::move(arg)](detail::Node& self) {
                           auto& gx = self.inputs[0]->ensure_grad();
                           for (std::size_t i = 0; i < arg.size(); ++i) {
                               gx[arg[i] * d + i % d] += self.grad[i];
                           }
                       });
}

}  // namespace rmlab
