#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "reid/errors.hpp"

namespace reid {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (auto d : s) n *= d;
    return n;
}

inline std::string format_shape(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << " x ";
        os << s[i];
    }
    os << ']';
    return os.str();
}

// One node of the computation tape: the forward value plus, when gradients
// are being tracked, references to its inputs and the backward rule that
// distributes this node's gradient onto them.
template <typename T>
struct TensorNode {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;  // empty until a backward pass populates it
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<std::shared_ptr<TensorNode<T>>> inputs;
    std::function<void(TensorNode<T>&)> backward_rule;

    std::size_t numel() const { return data.size(); }
};

template <typename T>
using NodePtr = std::shared_ptr<TensorNode<T>>;

// Value-semantic handle to a tape node. Copies share the node, so a Tensor is
// cheap to pass around; fresh nodes are only created by operations.
template <typename T>
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(NodePtr<T> node) : node_(std::move(node)) {}

    static Tensor from_vector(Shape shape, std::vector<T> data, bool requires_grad = false) {
        check_shape(shape);
        if (shape_numel(shape) != data.size()) {
            throw DimensionError("tensor: shape " + format_shape(shape) + " expects " +
                                 std::to_string(shape_numel(shape)) + " values, got " +
                                 std::to_string(data.size()));
        }
        auto n = std::make_shared<TensorNode<T>>();
        n->shape = std::move(shape);
        n->data = std::move(data);
        n->requires_grad = requires_grad;
        return Tensor(std::move(n));
    }

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        check_shape(shape);
        std::vector<T> d(shape_numel(shape), T(0));
        return from_vector(std::move(shape), std::move(d), requires_grad);
    }

    static Tensor full(Shape shape, T value, bool requires_grad = false) {
        check_shape(shape);
        std::vector<T> d(shape_numel(shape), value);
        return from_vector(std::move(shape), std::move(d), requires_grad);
    }

    static Tensor scalar(T value, bool requires_grad = false) {
        return from_vector({1}, {value}, requires_grad);
    }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t numel() const { return node_->numel(); }
    bool requires_grad() const { return node_ && node_->requires_grad; }

    const std::vector<T>& values() const { return node_->data; }

    // Mutation hook for leaves (parameter updates between graph executions).
    std::vector<T>& values_mut() { return node_->data; }

    void set_requires_grad(bool rg) { node_->requires_grad = rg; }

    bool has_grad() const { return node_ && !node_->grad.empty(); }
    const std::vector<T>& grad() const {
        if (!has_grad()) throw ContractError("tensor: gradient not populated");
        return node_->grad;
    }
    void clear_grad() {
        if (node_) node_->grad.clear();
    }

    T item() const {
        if (numel() != 1) {
            throw ContractError("item(): tensor is not scalar-shaped, shape " + format_shape(shape()));
        }
        return node_->data[0];
    }

    NodePtr<T> node() const { return node_; }

private:
    static void check_shape(const Shape& s) {
        for (auto d : s) {
            if (d == 0) throw DimensionError("tensor: zero extent in shape " + format_shape(s));
        }
    }

    NodePtr<T> node_;
};

namespace detail {

template <typename T>
Tensor<T> make_op(const char* op, Shape shape, std::vector<T> data,
                  std::vector<NodePtr<T>> inputs,
                  std::function<void(TensorNode<T>&)> rule) {
    auto n = std::make_shared<TensorNode<T>>();
    n->shape = std::move(shape);
    n->data = std::move(data);
    n->op = op;
    for (const auto& in : inputs) {
        if (in->requires_grad) {
            n->requires_grad = true;
            break;
        }
    }
    if (n->requires_grad) {
        n->inputs = std::move(inputs);
        n->backward_rule = std::move(rule);
    }
    return Tensor<T>(std::move(n));
}

}  // namespace detail

// Leaf copy of a tensor's values, detached from any graph.
template <typename T>
Tensor<T> detach(const Tensor<T>& x) {
    return Tensor<T>::from_vector(x.shape(), x.values(), false);
}

// ---------------------------------------------------------------------------
// Primitive operations
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0]) {
        throw DimensionError("matmul: incompatible shapes " + format_shape(a.shape()) +
                             " and " + format_shape(b.shape()));
    }
    const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
    std::vector<T> out(m * n, T(0));
    const auto& av = a.values();
    const auto& bv = b.values();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t t = 0; t < k; ++t) {
            const T aval = av[i * k + t];
            if (aval == T(0)) continue;
            const T* brow = bv.data() + t * n;
            T* orow = out.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += aval * brow[j];
        }
    }
    auto rule = [m, k, n](TensorNode<T>& self) {
        const auto& g = self.grad;
        auto& na = *self.inputs[0];
        auto& nb = *self.inputs[1];
        if (na.requires_grad) {
            // dA = G * B^T
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) {
                    const T gij = g[i * n + j];
                    if (gij == T(0)) continue;
                    for (std::size_t t = 0; t < k; ++t)
                        na.grad[i * k + t] += gij * nb.data[t * n + j];
                }
        }
        if (nb.requires_grad) {
            // dB = A^T * G
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t t = 0; t < k; ++t) {
                    const T ait = na.data[i * k + t];
                    if (ait == T(0)) continue;
                    for (std::size_t j = 0; j < n; ++j)
                        nb.grad[t * n + j] += ait * g[i * n + j];
                }
        }
    };
    return detail::make_op<T>("matmul", {m, n}, std::move(out), {a.node(), b.node()}, rule);
}

enum class EwOp { add, sub, mul };

// Elementwise add/sub/mul. Shapes must match, or b may be a single row
// broadcast against a batch of rows (the only broadcast pattern supported).
template <typename T>
Tensor<T> elementwise(EwOp op, const Tensor<T>& a, const Tensor<T>& b) {
    const bool same = a.shape() == b.shape();
    const bool row_bcast =
        !same && a.rank() == 2 &&
        ((b.rank() == 1 && b.shape()[0] == a.shape()[1]) ||
         (b.rank() == 2 && b.shape()[0] == 1 && b.shape()[1] == a.shape()[1]));
    const char* name = op == EwOp::add ? "add" : op == EwOp::sub ? "sub" : "mul";
    if (!same && !row_bcast) {
        throw DimensionError(std::string(name) + ": shapes " + format_shape(a.shape()) +
                             " and " + format_shape(b.shape()) +
                             " are neither equal nor row-broadcastable");
    }
    const auto& av = a.values();
    const auto& bv = b.values();
    const std::size_t n = a.numel();
    const std::size_t cols = row_bcast ? a.shape()[1] : 0;
    std::vector<T> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const T bvv = row_bcast ? bv[i % cols] : bv[i];
        switch (op) {
            case EwOp::add: out[i] = av[i] + bvv; break;
            case EwOp::sub: out[i] = av[i] - bvv; break;
            case EwOp::mul: out[i] = av[i] * bvv; break;
        }
    }
    auto rule = [op, row_bcast, cols, n](TensorNode<T>& self) {
        const auto& g = self.grad;
        auto& na = *self.inputs[0];
        auto& nb = *self.inputs[1];
        if (na.requires_grad) {
            for (std::size_t i = 0; i < n; ++i) {
                const T bvv = row_bcast ? nb.data[i % cols] : nb.data[i];
                na.grad[i] += op == EwOp::mul ? g[i] * bvv : g[i];
            }
        }
        if (nb.requires_grad) {
            for (std::size_t i = 0; i < n; ++i) {
                const std::size_t bi = row_bcast ? i % cols : i;
                T contrib;
                switch (op) {
                    case EwOp::add: contrib = g[i]; break;
                    case EwOp::sub: contrib = -g[i]; break;
                    default: contrib = g[i] * na.data[i]; break;
                }
                nb.grad[bi] += contrib;
            }
        }
    };
    return detail::make_op<T>(name, a.shape(), std::move(out), {a.node(), b.node()}, rule);
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) { return elementwise(EwOp::add, a, b); }
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) { return elementwise(EwOp::sub, a, b); }
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) { return elementwise(EwOp::mul, a, b); }

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T c) {
    const auto& av = a.values();
    std::vector<T> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * c;
    auto rule = [c](TensorNode<T>& self) {
        auto& na = *self.inputs[0];
        if (!na.requires_grad) return;
        for (std::size_t i = 0; i < self.grad.size(); ++i) na.grad[i] += c * self.grad[i];
    };
    return detail::make_op<T>("scale", a.shape(), std::move(out), {a.node()}, rule);
}

template <typename T>
Tensor<T> add_const(const Tensor<T>& a, T c) {
    const auto& av = a.values();
    std::vector<T> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + c;
    auto rule = [](TensorNode<T>& self) {
        auto& na = *self.inputs[0];
        if (!na.requires_grad) return;
        for (std::size_t i = 0; i < self.grad.size(); ++i) na.grad[i] += self.grad[i];
    };
    return detail::make_op<T>("add_const", a.shape(), std::move(out), {a.node()}, rule);
}

enum class ReduceOp { sum, mean };

// Reduction over one axis, or over all elements when axis is absent.
template <typename T>
Tensor<T> reduce(ReduceOp op, const Tensor<T>& a, std::optional<std::size_t> axis = std::nullopt) {
    const auto& av = a.values();
    if (!axis.has_value()) {
        T acc = T(0);
        for (const T v : av) acc += v;
        const T denom = op == ReduceOp::mean ? static_cast<T>(a.numel()) : T(1);
        const std::size_t n = a.numel();
        auto rule = [denom, n](TensorNode<T>& self) {
            auto& na = *self.inputs[0];
            if (!na.requires_grad) return;
            const T g = self.grad[0] / denom;
            for (std::size_t i = 0; i < n; ++i) na.grad[i] += g;
        };
        return detail::make_op<T>(op == ReduceOp::sum ? "sum" : "mean", {1}, {acc / denom},
                                  {a.node()}, rule);
    }
    const std::size_t ax = *axis;
    if (ax >= a.rank()) {
        throw DimensionError("reduce: axis " + std::to_string(ax) + " out of range for shape " +
                             format_shape(a.shape()));
    }
    const auto& shp = a.shape();
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < ax; ++i) outer *= shp[i];
    for (std::size_t i = ax + 1; i < shp.size(); ++i) inner *= shp[i];
    const std::size_t extent = shp[ax];
    Shape out_shape;
    for (std::size_t i = 0; i < shp.size(); ++i)
        if (i != ax) out_shape.push_back(shp[i]);
    if (out_shape.empty()) out_shape = {1};
    std::vector<T> out(outer * inner, T(0));
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t e = 0; e < extent; ++e)
            for (std::size_t i = 0; i < inner; ++i)
                out[o * inner + i] += av[(o * extent + e) * inner + i];
    const T denom = op == ReduceOp::mean ? static_cast<T>(extent) : T(1);
    if (op == ReduceOp::mean)
        for (auto& v : out) v /= denom;
    auto rule = [outer, extent, inner, denom](TensorNode<T>& self) {
        auto& na = *self.inputs[0];
        if (!na.requires_grad) return;
        for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t e = 0; e < extent; ++e)
                for (std::size_t i = 0; i < inner; ++i)
                    na.grad[(o * extent + e) * inner + i] += self.grad[o * inner + i] / denom;
    };
    return detail::make_op<T>(op == ReduceOp::sum ? "sum" : "mean", std::move(out_shape),
                              std::move(out), {a.node()}, rule);
}

template <typename T>
Tensor<T> reduce_sum(const Tensor<T>& a, std::optional<std::size_t> axis = std::nullopt) {
    return reduce(ReduceOp::sum, a, axis);
}
template <typename T>
Tensor<T> reduce_mean(const Tensor<T>& a, std::optional<std::size_t> axis = std::nullopt) {
    return reduce(ReduceOp::mean, a, axis);
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape new_shape) {
    if (shape_numel(new_shape) != a.numel()) {
        throw DimensionError("reshape: cannot view " + format_shape(a.shape()) + " as " +
                             format_shape(new_shape));
    }
    auto rule = [](TensorNode<T>& self) {
        auto& na = *self.inputs[0];
        if (!na.requires_grad) return;
        for (std::size_t i = 0; i < self.grad.size(); ++i) na.grad[i] += self.grad[i];
    };
    return detail::make_op<T>("reshape", std::move(new_shape), a.values(), {a.node()}, rule);
}

// out[p, :] = x[rows[p], :]; backward scatter-adds row gradients.
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, const std::vector<std::size_t>& rows) {
    if (x.rank() != 2) {
        throw DimensionError("gather_rows: expected rank-2 input, got " + format_shape(x.shape()));
    }
    const std::size_t m = x.shape()[0], d = x.shape()[1];
    std::vector<T> out(rows.size() * d);
    for (std::size_t p = 0; p < rows.size(); ++p) {
        if (rows[p] >= m) {
            throw ContractError("gather_rows: row index " + std::to_string(rows[p]) +
                                " out of range [0, " + std::to_string(m) + ")");
        }
        std::copy_n(x.values().data() + rows[p] * d, d, out.data() + p * d);
    }
    auto idx = rows;
    auto rule = [idx, d](TensorNode<T>& self) {
        auto& nx = *self.inputs[0];
        if (!nx.requires_grad) return;
        for (std::size_t p = 0; p < idx.size(); ++p)
            for (std::size_t j = 0; j < d; ++j)
                nx.grad[idx[p] * d + j] += self.grad[p * d + j];
    };
    return detail::make_op<T>("gather_rows", {rows.size(), d}, std::move(out), {x.node()}, rule);
}

// ---------------------------------------------------------------------------
// Backward pass
// ---------------------------------------------------------------------------

// Replays the tape reachable from `root` in reverse execution order. Grads of
// every participating tensor are zeroed first, so repeated calls reset rather
// than accumulate across calls; within one call, fan-out sums contributions.
template <typename T>
void backward(const Tensor<T>& root) {
    if (!root.defined()) throw ContractError("backward: undefined tensor");
    auto r = root.node();
    if (r->numel() != 1) {
        throw ContractError("backward: root must be scalar-shaped, got " + format_shape(r->shape));
    }
    // Iterative post-order DFS; reversed, it is a topological order in which
    // every node is processed before the inputs it feeds gradient to.
    std::vector<TensorNode<T>*> order;
    std::unordered_set<TensorNode<T>*> seen;
    std::vector<std::pair<TensorNode<T>*, std::size_t>> stack;
    seen.insert(r.get());
    stack.emplace_back(r.get(), 0);
    while (!stack.empty()) {
        auto* node = stack.back().first;
        auto& child_idx = stack.back().second;
        if (child_idx < node->inputs.size()) {
            auto* child = node->inputs[child_idx].get();
            ++child_idx;
            if (seen.insert(child).second) stack.emplace_back(child, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    for (auto* n : order) {
        if (n->requires_grad) n->grad.assign(n->numel(), T(0));
    }
    if (!r->requires_grad) return;  // nothing participates
    r->grad[0] = T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        auto* n = *it;
        if (n->requires_grad && n->backward_rule) n->backward_rule(*n);
    }
}

// ---------------------------------------------------------------------------
// Finite-difference gradient checking
// ---------------------------------------------------------------------------

// Max over coordinates of |analytic - central difference| scaled by the
// magnitude of the two estimates. Meaningful only at 64-bit precision.
template <typename T>
T finite_diff_check(const std::function<Tensor<T>(const Tensor<T>&)>& f, const Tensor<T>& x,
                    T step = T(1e-5)) {
    if (!(step > T(0))) throw ContractError("finite_diff_check: step must be positive");
    Tensor<T> probe = Tensor<T>::from_vector(x.shape(), x.values(), true);
    Tensor<T> out = f(probe);
    if (out.numel() != 1) {
        throw ContractError("finite_diff_check: f must be scalar-valued, got shape " +
                            format_shape(out.shape()));
    }
    if (std::isnan(static_cast<double>(out.item()))) {
        throw NumericError("finite_diff_check: f(x) is NaN");
    }
    backward(out);
    std::vector<T> analytic(x.numel(), T(0));
    if (probe.has_grad()) analytic = probe.grad();

    auto eval = [&](const std::vector<T>& vals) {
        Tensor<T> p = Tensor<T>::from_vector(x.shape(), vals, false);
        const T v = f(p).item();
        if (std::isnan(static_cast<double>(v))) {
            throw NumericError("finite_diff_check: f evaluated to NaN during probing");
        }
        return v;
    };

    T max_err = T(0);
    std::vector<T> vals = x.values();
    for (std::size_t i = 0; i < vals.size(); ++i) {
        const T orig = vals[i];
        vals[i] = orig + step;
        const T fp = eval(vals);
        vals[i] = orig - step;
        const T fm = eval(vals);
        vals[i] = orig;
        const T numeric = (fp - fm) / (T(2) * step);
        const T denom = std::max(T(1e-12), std::abs(analytic[i]) + std::abs(numeric));
        max_err = std::max(max_err, std::abs(analytic[i] - numeric) / denom);
    }
    return max_err;
}

}  // namespace reid
