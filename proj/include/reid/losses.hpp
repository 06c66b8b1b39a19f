#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "reid/layers.hpp"
#include "reid/rng.hpp"
#include "reid/tensor.hpp"

namespace reid {

// ---------------------------------------------------------------------------
// Parameter holders
// ---------------------------------------------------------------------------

template <typename T>
struct SoftmaxHead {
    Tensor<T> weights;  // [D x N]
    Tensor<T> bias;     // [N]

    std::size_t dim() const { return weights.shape()[0]; }
    std::size_t num_classes() const { return weights.shape()[1]; }
};

// Small init keeps initial logits near zero, so the identification loss
// starts at ln N.
template <typename T>
SoftmaxHead<T> make_head(std::size_t dim, std::size_t num_classes, Rng& rng) {
    std::vector<T> w(dim * num_classes);
    for (auto& v : w) v = static_cast<T>(rng.normal(0.0, 0.01));
    SoftmaxHead<T> head;
    head.weights = Tensor<T>::from_vector({dim, num_classes}, std::move(w), true);
    head.bias = Tensor<T>::zeros({num_classes}, true);
    return head;
}

// Per-class center vectors. Centers never participate in backpropagation:
// the tensor is created with requires_grad = false and is updated only by
// update_centers below.
template <typename T>
struct CenterTable {
    Tensor<T> centers;  // [N x D], requires_grad = false
    T alpha = T(0.5);

    std::size_t num_classes() const { return centers.shape()[0]; }
    std::size_t dim() const { return centers.shape()[1]; }
};

template <typename T>
CenterTable<T> make_centers(std::size_t num_classes, std::size_t dim, T alpha) {
    if (!(alpha > T(0) && alpha <= T(1))) {
        throw ContractError("center table: alpha must be in (0, 1], got " +
                            std::to_string(static_cast<double>(alpha)));
    }
    CenterTable<T> table;
    table.centers = Tensor<T>::zeros({num_classes, dim}, false);
    table.alpha = alpha;
    return table;
}

struct LossConfig {
    double lambda = 0.01;  // center-loss balance
    double beta = 0.001;   // reweighting-constraint weight
    double c_target = 200.0;

    void validate() const {
        if (lambda < 0) throw ContractError("loss config: lambda must be >= 0");
        if (beta < 0) throw ContractError("loss config: beta must be >= 0");
        if (!(c_target > 0)) throw ContractError("loss config: C must be > 0");
    }
};

// Pair head for the binary verification baseline: two-class logits from the
// elementwise squared difference of two embeddings.
template <typename T>
struct VerifHead {
    Tensor<T> weights;  // [D x 2]
    Tensor<T> bias;     // [2]
};

template <typename T>
VerifHead<T> make_verif_head(std::size_t dim, Rng& rng) {
    std::vector<T> w(dim * 2);
    for (auto& v : w) v = static_cast<T>(rng.normal(0.0, 0.01));
    VerifHead<T> head;
    head.weights = Tensor<T>::from_vector({dim, 2}, std::move(w), true);
    head.bias = Tensor<T>::zeros({2}, true);
    return head;
}

// ---------------------------------------------------------------------------
// Softmax cross-entropy (fused, max-subtraction stabilized)
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> softmax_cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels) {
    if (logits.rank() != 2) {
        throw DimensionError("softmax_cross_entropy: expected [M x N] logits, got " +
                             format_shape(logits.shape()));
    }
    const std::size_t M = logits.shape()[0], N = logits.shape()[1];
    if (labels.size() != M) {
        throw ContractError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                            " labels for " + std::to_string(M) + " rows");
    }
    for (std::size_t i = 0; i < M; ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= N) {
            throw ContractError("softmax_cross_entropy: label " + std::to_string(labels[i]) +
                                " out of range [0, " + std::to_string(N) + ") at batch index " +
                                std::to_string(i));
        }
    }
    const auto& z = logits.values();
    std::vector<T> probs(M * N);
    double loss = 0.0;
    for (std::size_t i = 0; i < M; ++i) {
        const T* row = z.data() + i * N;
        T zmax = row[0];
        for (std::size_t j = 1; j < N; ++j) zmax = std::max(zmax, row[j]);
        double denom = 0.0;
        for (std::size_t j = 0; j < N; ++j) {
            const double e = std::exp(static_cast<double>(row[j] - zmax));
            probs[i * N + j] = static_cast<T>(e);
            denom += e;
        }
        for (std::size_t j = 0; j < N; ++j)
            probs[i * N + j] = static_cast<T>(probs[i * N + j] / denom);
        loss -= static_cast<double>(row[labels[i]] - zmax) - std::log(denom);
    }
    loss /= static_cast<double>(M);
    auto lbl = labels;
    auto rule = [probs, lbl, M, N](TensorNode<T>& self) {
        auto& nz = *self.inputs[0];
        if (!nz.requires_grad) return;
        const T g = self.grad[0] / static_cast<T>(M);
        for (std::size_t i = 0; i < M; ++i)
            for (std::size_t j = 0; j < N; ++j) {
                T p = probs[i * N + j];
                if (static_cast<std::size_t>(lbl[i]) == j) p -= T(1);
                nz.grad[i * N + j] += g * p;
            }
    };
    return detail::make_op<T>("softmax_xent", {1}, {static_cast<T>(loss)}, {logits.node()}, rule);
}

template <typename T>
Tensor<T> head_logits(const SoftmaxHead<T>& head, const Tensor<T>& x) {
    return fc_forward(head.weights, head.bias, x);
}

// Mean negative log-softmax of the true-class logit.
template <typename T>
Tensor<T> identification_loss(const SoftmaxHead<T>& head, const Tensor<T>& x,
                              const std::vector<int>& labels) {
    if (x.rank() != 2 || x.shape()[1] != head.dim()) {
        throw DimensionError("identification_loss: embeddings " + format_shape(x.shape()) +
                             " do not match head dimension " + std::to_string(head.dim()));
    }
    return softmax_cross_entropy(head_logits(head, x), labels);
}

// ---------------------------------------------------------------------------
// Center loss: (1/2M) sum_i ||x_i - c_{y_i}||^2, gradient to x only
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> center_loss(const CenterTable<T>& table, const Tensor<T>& x,
                      const std::vector<int>& labels) {
    if (x.rank() != 2 || x.shape()[1] != table.dim()) {
        throw DimensionError("center_loss: embeddings " + format_shape(x.shape()) +
                             " do not match center dimension " + std::to_string(table.dim()));
    }
    const std::size_t M = x.shape()[0], D = table.dim();
    if (labels.size() != M) {
        throw ContractError("center_loss: " + std::to_string(labels.size()) + " labels for " +
                            std::to_string(M) + " rows");
    }
    const auto& xv = x.values();
    const auto& cv = table.centers.values();
    std::vector<T> diff(M * D);
    double loss = 0.0;
    for (std::size_t i = 0; i < M; ++i) {
        const int y = labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= table.num_classes()) {
            throw ContractError("center_loss: label " + std::to_string(y) + " out of range [0, " +
                                std::to_string(table.num_classes()) + ") at batch index " +
                                std::to_string(i));
        }
        for (std::size_t d = 0; d < D; ++d) {
            const T dv = xv[i * D + d] - cv[static_cast<std::size_t>(y) * D + d];
            diff[i * D + d] = dv;
            loss += static_cast<double>(dv) * static_cast<double>(dv);
        }
    }
    loss /= 2.0 * static_cast<double>(M);
    auto rule = [diff, M, D](TensorNode<T>& self) {
        auto& nx = *self.inputs[0];
        if (!nx.requires_grad) return;
        const T g = self.grad[0] / static_cast<T>(M);
        for (std::size_t i = 0; i < M * D; ++i) nx.grad[i] += g * diff[i];
    };
    return detail::make_op<T>("center_loss", {1}, {static_cast<T>(loss)}, {x.node()}, rule);
}

// ---------------------------------------------------------------------------
// Center update rule (applied once per batch, outside the gradient path)
// ---------------------------------------------------------------------------

// For each class j present in the batch:
//   delta_j = sum_i [y_i = j] (c_j - x_i) / (1 + count_j)
//   c_j    -= alpha * delta_j
// Classes absent from the batch are untouched.
template <typename T>
void update_centers(CenterTable<T>& table, const std::vector<T>& x, std::size_t batch,
                    const std::vector<int>& labels) {
    const std::size_t N = table.num_classes(), D = table.dim();
    if (x.size() != batch * D) {
        throw DimensionError("update_centers: " + std::to_string(x.size()) + " values for batch " +
                             std::to_string(batch) + " x dim " + std::to_string(D));
    }
    if (labels.size() != batch) {
        throw ContractError("update_centers: " + std::to_string(labels.size()) + " labels for batch " +
                            std::to_string(batch));
    }
    std::vector<T> sum(N * D, T(0));
    std::vector<std::size_t> count(N, 0);
    auto& cv = table.centers.values_mut();
    for (std::size_t i = 0; i < batch; ++i) {
        const int y = labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= N) {
            throw ContractError("update_centers: label " + std::to_string(y) + " out of range [0, " +
                                std::to_string(N) + ") at batch index " + std::to_string(i));
        }
        const auto j = static_cast<std::size_t>(y);
        for (std::size_t d = 0; d < D; ++d) sum[j * D + d] += cv[j * D + d] - x[i * D + d];
        ++count[j];
    }
    for (std::size_t j = 0; j < N; ++j) {
        if (count[j] == 0) continue;
        const T denom = static_cast<T>(1 + count[j]);
        for (std::size_t d = 0; d < D; ++d) {
            const T delta = sum[j * D + d] / denom;
            cv[j * D + d] -= table.alpha * delta;
        }
    }
}

// ---------------------------------------------------------------------------
// FRW norm constraint: beta * (1/2 ||w||^2 - C)^2
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> frw_constraint(const Tensor<T>& w_frw, const LossConfig& cfg) {
    cfg.validate();
    Tensor<T> sq = reduce_sum(mul(w_frw, w_frw));
    Tensor<T> dev = add_const(scale(sq, T(0.5)), static_cast<T>(-cfg.c_target));
    return scale(mul(dev, dev), static_cast<T>(cfg.beta));
}

// ---------------------------------------------------------------------------
// Joint objective: L = L_I + lambda * L_C + L_F
// ---------------------------------------------------------------------------

template <typename T>
struct LossBreakdown {
    Tensor<T> total;
    Tensor<T> identification;
    Tensor<T> center;
    Tensor<T> frw;  // undefined when the reweighting layer is disabled
};

template <typename T>
LossBreakdown<T> total_loss(const SoftmaxHead<T>& head, const CenterTable<T>& table,
                            const FRWLayer<T>* frw, const Tensor<T>& x,
                            const std::vector<int>& labels, const LossConfig& cfg) {
    cfg.validate();
    LossBreakdown<T> parts;
    parts.identification = identification_loss(head, x, labels);
    parts.center = center_loss(table, x, labels);
    parts.total = add(parts.identification, scale(parts.center, static_cast<T>(cfg.lambda)));
    if (frw != nullptr) {
        parts.frw = frw_constraint(frw->w, cfg);
        parts.total = add(parts.total, parts.frw);
    }
    return parts;
}

// ---------------------------------------------------------------------------
// Binary verification baseline: two-class cross-entropy on a linear map of
// the elementwise squared difference of an embedding pair
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> binary_verification_loss(const Tensor<T>& x1, const Tensor<T>& x2,
                                   const std::vector<int>& same, const VerifHead<T>& head) {
    if (x1.shape() != x2.shape() || x1.rank() != 2) {
        throw DimensionError("verification_loss: pair shapes " + format_shape(x1.shape()) +
                             " and " + format_shape(x2.shape()) + " must be equal rank-2");
    }
    if (x1.shape()[1] != head.weights.shape()[0]) {
        throw DimensionError("verification_loss: embeddings " + format_shape(x1.shape()) +
                             " do not match pair-head input " +
                             format_shape(head.weights.shape()));
    }
    Tensor<T> d = sub(x1, x2);
    Tensor<T> sq = mul(d, d);
    Tensor<T> logits = fc_forward(head.weights, head.bias, sq);
    return softmax_cross_entropy(logits, same);
}

// ---------------------------------------------------------------------------
// Softmax / reweighting decomposition: fold the shared per-dimension weights
// into the classifier columns so logits on raw embeddings match the
// reweight-then-classify path
// ---------------------------------------------------------------------------

template <typename T>
SoftmaxHead<T> fold_frw_into_softmax(const SoftmaxHead<T>& head, const Tensor<T>& w_frw) {
    if (w_frw.rank() != 1 || w_frw.shape()[0] != head.dim()) {
        throw DimensionError("fold: weights " + format_shape(w_frw.shape()) +
                             " do not match head dimension " + std::to_string(head.dim()));
    }
    const std::size_t D = head.dim(), N = head.num_classes();
    const auto& wv = head.weights.values();
    const auto& fv = w_frw.values();
    std::vector<T> folded(D * N);
    for (std::size_t d = 0; d < D; ++d)
        for (std::size_t j = 0; j < N; ++j) folded[d * N + j] = wv[d * N + j] * fv[d];
    SoftmaxHead<T> out;
    out.weights = Tensor<T>::from_vector({D, N}, std::move(folded), false);
    out.bias = Tensor<T>::from_vector({N}, head.bias.values(), false);
    return out;
}

}  // namespace reid
