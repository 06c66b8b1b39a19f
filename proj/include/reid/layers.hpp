#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "reid/rng.hpp"
#include "reid/tensor.hpp"

namespace reid {

enum class Mode { train, eval };

// ---------------------------------------------------------------------------
// 3x3 convolution, stride 1, zero padding 1 (spatial size preserved)
// ---------------------------------------------------------------------------

namespace detail {

// C[M x N] += A[M x K] * B[K x N], row-major. Register-blocked 4 x 16 tiles
// with K innermost, so each B row is reused across four accumulator rows.
template <typename T>
void micro_gemm_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
    constexpr std::size_t TM = 4;
    constexpr std::size_t TN = 16;
    for (std::size_t m0 = 0; m0 < m; m0 += TM) {
        const std::size_t mr = std::min(TM, m - m0);
        for (std::size_t n0 = 0; n0 < n; n0 += TN) {
            const std::size_t nr = std::min(TN, n - n0);
            if (mr == TM && nr == TN) {
                T acc[TM][TN] = {};
                for (std::size_t kk = 0; kk < k; ++kk) {
                    const T* __restrict brow = b + kk * n + n0;
                    const T a0 = a[(m0 + 0) * k + kk];
                    const T a1 = a[(m0 + 1) * k + kk];
                    const T a2 = a[(m0 + 2) * k + kk];
                    const T a3 = a[(m0 + 3) * k + kk];
                    for (std::size_t j = 0; j < TN; ++j) {
                        const T bj = brow[j];
                        acc[0][j] += a0 * bj;
                        acc[1][j] += a1 * bj;
                        acc[2][j] += a2 * bj;
                        acc[3][j] += a3 * bj;
                    }
                }
                for (std::size_t i = 0; i < TM; ++i) {
                    T* __restrict crow = c + (m0 + i) * n + n0;
                    for (std::size_t j = 0; j < TN; ++j) crow[j] += acc[i][j];
                }
            } else {
                for (std::size_t i = 0; i < mr; ++i) {
                    T* __restrict crow = c + (m0 + i) * n + n0;
                    const T* arow = a + (m0 + i) * k;
                    for (std::size_t kk = 0; kk < k; ++kk) {
                        const T av = arow[kk];
                        if (av == T(0)) continue;
                        const T* __restrict brow = b + kk * n + n0;
                        for (std::size_t j = 0; j < nr; ++j) crow[j] += av * brow[j];
                    }
                }
            }
        }
    }
}

}  // namespace detail

template <typename T>
struct ConvLayer {
    Tensor<T> weights;  // [out_ch x in_ch x 3 x 3]
    Tensor<T> bias;     // [out_ch]
    static constexpr int stride = 1;
    static constexpr int padding = 1;

    std::size_t out_channels() const { return weights.shape()[0]; }
    std::size_t in_channels() const { return weights.shape()[1]; }
};

// He-style fan-in scaled Gaussian init.
template <typename T>
ConvLayer<T> make_conv(std::size_t out_ch, std::size_t in_ch, Rng& rng) {
    std::vector<T> w(out_ch * in_ch * 9);
    const double stddev = std::sqrt(2.0 / static_cast<double>(in_ch * 9));
    for (auto& v : w) v = static_cast<T>(rng.normal(0.0, stddev));
    ConvLayer<T> layer;
    layer.weights = Tensor<T>::from_vector({out_ch, in_ch, 3, 3}, std::move(w), true);
    layer.bias = Tensor<T>::zeros({out_ch}, true);
    return layer;
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
    if (x.rank() != 4) {
        throw DimensionError("conv2d: expected input [B x C x H x W], got " + format_shape(x.shape()));
    }
    if (w.rank() != 4 || w.shape()[2] != 3 || w.shape()[3] != 3) {
        throw DimensionError("conv2d: expected weights [O x C x 3 x 3], got " + format_shape(w.shape()));
    }
    if (w.shape()[1] != x.shape()[1]) {
        throw DimensionError("conv2d: channel mismatch, input " + format_shape(x.shape()) +
                             " vs weights " + format_shape(w.shape()));
    }
    if (b.rank() != 1 || b.shape()[0] != w.shape()[0]) {
        throw DimensionError("conv2d: bias shape " + format_shape(b.shape()) +
                             " does not match out channels " + std::to_string(w.shape()[0]));
    }
    const std::size_t B = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
    const std::size_t O = w.shape()[0];
    const std::size_t HW = H * W;
    const std::size_t K = C * 9;  // patch length
    const auto& xv = x.values();
    const auto& wv = w.values();
    const auto& bv = b.values();

    // Tap-major patch matrix: cols[k][hw] holds x[c] shifted by the tap
    // (u, v), zero where the shift leaves the image. Every kernel tap then
    // becomes one full-plane contiguous axpy/dot.
    const auto tap_bounds = [](int d, std::size_t extent, std::size_t& lo, std::size_t& hi) {
        lo = d < 0 ? static_cast<std::size_t>(-d) : 0;
        hi = d > 0 ? extent - static_cast<std::size_t>(d) : extent;
    };
    const auto fill_cols = [&](const T* image, T* cols) {
        std::fill_n(cols, K * HW, T(0));
        for (std::size_t c = 0; c < C; ++c) {
            const T* xplane = image + c * HW;
            for (int u = -1; u <= 1; ++u) {
                std::size_t i_lo, i_hi;
                tap_bounds(u, H, i_lo, i_hi);
                for (int v = -1; v <= 1; ++v) {
                    std::size_t j_lo, j_hi;
                    tap_bounds(v, W, j_lo, j_hi);
                    T* plane = cols + (c * 9 + (u + 1) * 3 + (v + 1)) * HW;
                    for (std::size_t i = i_lo; i < i_hi; ++i)
                        std::copy_n(xplane + (static_cast<std::ptrdiff_t>(i) + u) * W + v + j_lo,
                                    j_hi - j_lo, plane + i * W + j_lo);
                }
            }
        }
    };

    auto cols_all = std::make_shared<std::vector<T>>(B * K * HW);
    std::vector<T> out(B * O * HW);
    for (std::size_t bb = 0; bb < B; ++bb) {
        T* cols = cols_all->data() + bb * K * HW;
        fill_cols(xv.data() + bb * C * HW, cols);
        T* oimg = out.data() + bb * O * HW;
        for (std::size_t o = 0; o < O; ++o) std::fill_n(oimg + o * HW, HW, bv[o]);
        detail::micro_gemm_acc(wv.data(), cols, oimg, O, K, HW);
    }

    auto rule = [B, C, H, W, O, HW, K, cols_all, tap_bounds](TensorNode<T>& self) {
        auto& nx = *self.inputs[0];
        auto& nw = *self.inputs[1];
        auto& nb = *self.inputs[2];
        const auto& g = self.grad;
        std::vector<T> dcols(nx.requires_grad ? K * HW : 0);
        std::vector<T> cols_t(nw.requires_grad ? K * HW : 0);
        std::vector<T> w_t;
        if (nx.requires_grad) {
            w_t.resize(K * O);
            for (std::size_t o = 0; o < O; ++o)
                for (std::size_t k = 0; k < K; ++k) w_t[k * O + o] = nw.data[o * K + k];
        }
        for (std::size_t bb = 0; bb < B; ++bb) {
            const T* cols = cols_all->data() + bb * K * HW;
            const T* gimg = g.data() + bb * O * HW;
            if (nb.requires_grad) {
                for (std::size_t o = 0; o < O; ++o) {
                    const T* gplane = gimg + o * HW;
                    T a0 = 0, a1 = 0, a2 = 0, a3 = 0;
                    std::size_t p = 0;
                    for (; p + 4 <= HW; p += 4) {
                        a0 += gplane[p];
                        a1 += gplane[p + 1];
                        a2 += gplane[p + 2];
                        a3 += gplane[p + 3];
                    }
                    for (; p < HW; ++p) a0 += gplane[p];
                    nb.grad[o] += (a0 + a1) + (a2 + a3);
                }
            }
            if (nw.requires_grad) {
                // dW += G * cols^T, with cols transposed once per image
                for (std::size_t k = 0; k < K; ++k)
                    for (std::size_t p = 0; p < HW; ++p) cols_t[p * K + k] = cols[k * HW + p];
                detail::micro_gemm_acc(gimg, cols_t.data(), nw.grad.data(), O, HW, K);
            }
            if (nx.requires_grad) {
                std::fill(dcols.begin(), dcols.end(), T(0));
                detail::micro_gemm_acc(w_t.data(), gimg, dcols.data(), K, O, HW);
            }
            if (nx.requires_grad) {
                // fold the patch gradients back into the image planes
                for (std::size_t c = 0; c < C; ++c) {
                    T* dxplane = nx.grad.data() + (bb * C + c) * HW;
                    for (int u = -1; u <= 1; ++u) {
                        std::size_t i_lo, i_hi;
                        tap_bounds(u, H, i_lo, i_hi);
                        for (int v = -1; v <= 1; ++v) {
                            std::size_t j_lo, j_hi;
                            tap_bounds(v, W, j_lo, j_hi);
                            const T* plane = dcols.data() + (c * 9 + (u + 1) * 3 + (v + 1)) * HW;
                            for (std::size_t i = i_lo; i < i_hi; ++i) {
                                T* dxrow =
                                    dxplane + (static_cast<std::ptrdiff_t>(i) + u) * W + v;
                                const T* srow = plane + i * W;
                                for (std::size_t j = j_lo; j < j_hi; ++j) dxrow[j] += srow[j];
                            }
                        }
                    }
                }
            }
        }
    };
    return detail::make_op<T>("conv2d", {B, O, H, W}, std::move(out),
                              {x.node(), w.node(), b.node()}, rule);
}

template <typename T>
Tensor<T> conv_forward(const ConvLayer<T>& layer, const Tensor<T>& x) {
    return conv2d(x, layer.weights, layer.bias);
}

// ---------------------------------------------------------------------------
// 2x2 max pooling, stride 2 (ceil mode; gradient to first maximal element)
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> maxpool_forward(const Tensor<T>& x) {
    if (x.rank() != 4) {
        throw DimensionError("maxpool: expected input [B x C x H x W], got " + format_shape(x.shape()));
    }
    const std::size_t B = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
    if (H < 2 || W < 2) {
        throw DimensionError("maxpool: spatial size must be at least 2x2, got " +
                             format_shape(x.shape()));
    }
    const std::size_t OH = (H + 1) / 2, OW = (W + 1) / 2;
    const auto& xv = x.values();
    std::vector<T> out(B * C * OH * OW);
    std::vector<std::uint32_t> argmax(out.size());
    for (std::size_t bc = 0; bc < B * C; ++bc) {
        const T* plane = xv.data() + bc * H * W;
        for (std::size_t i = 0; i < OH; ++i)
            for (std::size_t j = 0; j < OW; ++j) {
                const std::size_t i0 = 2 * i, j0 = 2 * j;
                std::size_t best = i0 * W + j0;
                T bestv = plane[best];
                for (std::size_t di = 0; di < 2 && i0 + di < H; ++di)
                    for (std::size_t dj = 0; dj < 2 && j0 + dj < W; ++dj) {
                        const std::size_t idx = (i0 + di) * W + (j0 + dj);
                        if (plane[idx] > bestv) {  // strict: first max wins ties
                            bestv = plane[idx];
                            best = idx;
                        }
                    }
                out[(bc * OH + i) * OW + j] = bestv;
                argmax[(bc * OH + i) * OW + j] = static_cast<std::uint32_t>(bc * H * W + best);
            }
    }
    auto rule = [argmax](TensorNode<T>& self) {
        auto& nx = *self.inputs[0];
        if (!nx.requires_grad) return;
        for (std::size_t i = 0; i < self.grad.size(); ++i) nx.grad[argmax[i]] += self.grad[i];
    };
    return detail::make_op<T>("maxpool", {B, C, OH, OW}, std::move(out), {x.node()}, rule);
}

// ---------------------------------------------------------------------------
// Leaky ReLU
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope) {
    if (!(slope > T(0) && slope < T(1))) {
        throw ContractError("leaky_relu: slope must be in (0, 1), got " +
                            std::to_string(static_cast<double>(slope)));
    }
    const auto& xv = x.values();
    std::vector<T> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] >= T(0) ? xv[i] : slope * xv[i];
    auto rule = [slope](TensorNode<T>& self) {
        auto& nx = *self.inputs[0];
        if (!nx.requires_grad) return;
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            nx.grad[i] += self.grad[i] * (nx.data[i] >= T(0) ? T(1) : slope);
    };
    return detail::make_op<T>("leaky_relu", x.shape(), std::move(out), {x.node()}, rule);
}

// ---------------------------------------------------------------------------
// Batch normalization
// ---------------------------------------------------------------------------

template <typename T>
struct BatchNormLayer {
    Tensor<T> gamma;         // [C], trainable
    Tensor<T> beta;          // [C], trainable
    Tensor<T> running_mean;  // [C], state
    Tensor<T> running_var;   // [C], state
    T epsilon = T(1e-5);
    T momentum = T(0.9);
    Mode mode = Mode::train;

    std::size_t channels() const { return gamma.shape()[0]; }
};

template <typename T>
BatchNormLayer<T> make_batchnorm(std::size_t channels) {
    BatchNormLayer<T> layer;
    layer.gamma = Tensor<T>::full({channels}, T(1), true);
    layer.beta = Tensor<T>::zeros({channels}, true);
    layer.running_mean = Tensor<T>::zeros({channels}, false);
    layer.running_var = Tensor<T>::full({channels}, T(1), false);
    return layer;
}

// Accepts [B x C x H x W] (per-channel stats over B*H*W) or [B x D] (per
// feature over B). Train mode normalizes with batch statistics and updates
// the running averages; eval mode is an affine map from running statistics.
template <typename T>
Tensor<T> batchnorm_forward(BatchNormLayer<T>& layer, const Tensor<T>& x) {
    if (x.rank() != 2 && x.rank() != 4) {
        throw DimensionError("batchnorm: expected rank-2 or rank-4 input, got " +
                             format_shape(x.shape()));
    }
    const std::size_t B = x.shape()[0];
    const std::size_t C = x.shape()[1];
    const std::size_t S = x.rank() == 4 ? x.shape()[2] * x.shape()[3] : 1;
    if (C != layer.channels()) {
        throw DimensionError("batchnorm: input " + format_shape(x.shape()) + " has " +
                             std::to_string(C) + " channels, layer has " +
                             std::to_string(layer.channels()));
    }
    const bool train = layer.mode == Mode::train;
    if (train && B < 2) {
        throw ContractError("batchnorm: train mode requires batch size >= 2, got " +
                            std::to_string(B));
    }
    const auto& xv = x.values();
    const std::size_t n = B * S;
    std::vector<T> mean(C), inv_std(C);
    if (train) {
        auto& rm = layer.running_mean.values_mut();
        auto& rv = layer.running_var.values_mut();
        for (std::size_t c = 0; c < C; ++c) {
            double sum = 0.0;
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t s = 0; s < S; ++s) sum += xv[(b * C + c) * S + s];
            const double mu = sum / static_cast<double>(n);
            double sq = 0.0;
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t s = 0; s < S; ++s) {
                    const double d = xv[(b * C + c) * S + s] - mu;
                    sq += d * d;
                }
            const double var = sq / static_cast<double>(n);
            mean[c] = static_cast<T>(mu);
            inv_std[c] = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(layer.epsilon)));
            rm[c] = layer.momentum * rm[c] + (T(1) - layer.momentum) * static_cast<T>(mu);
            rv[c] = layer.momentum * rv[c] + (T(1) - layer.momentum) * static_cast<T>(var);
        }
    } else {
        const auto& rm = layer.running_mean.values();
        const auto& rv = layer.running_var.values();
        for (std::size_t c = 0; c < C; ++c) {
            mean[c] = rm[c];
            inv_std[c] = static_cast<T>(
                1.0 / std::sqrt(static_cast<double>(rv[c]) + static_cast<double>(layer.epsilon)));
        }
    }
    std::vector<T> xhat(xv.size());
    std::vector<T> out(xv.size());
    const auto& gv = layer.gamma.values();
    const auto& bv = layer.beta.values();
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t s = 0; s < S; ++s) {
                const std::size_t i = (b * C + c) * S + s;
                xhat[i] = (xv[i] - mean[c]) * inv_std[c];
                out[i] = gv[c] * xhat[i] + bv[c];
            }
    auto rule = [B, C, S, train, xhat, inv_std](TensorNode<T>& self) {
        auto& nx = *self.inputs[0];
        auto& ng = *self.inputs[1];
        auto& nb = *self.inputs[2];
        const auto& g = self.grad;
        const T n = static_cast<T>(B * S);
        for (std::size_t c = 0; c < C; ++c) {
            T sum_g = T(0), sum_gx = T(0);
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t s = 0; s < S; ++s) {
                    const std::size_t i = (b * C + c) * S + s;
                    sum_g += g[i];
                    sum_gx += g[i] * xhat[i];
                }
            if (ng.requires_grad) ng.grad[c] += sum_gx;
            if (nb.requires_grad) nb.grad[c] += sum_g;
            if (nx.requires_grad) {
                const T gamma_c = ng.data[c];
                for (std::size_t b = 0; b < B; ++b)
                    for (std::size_t s = 0; s < S; ++s) {
                        const std::size_t i = (b * C + c) * S + s;
                        T t = g[i];
                        if (train) t -= sum_g / n + xhat[i] * sum_gx / n;
                        nx.grad[i] += gamma_c * inv_std[c] * t;
                    }
            }
        }
    };
    return detail::make_op<T>("batchnorm", x.shape(), std::move(out),
                              {x.node(), layer.gamma.node(), layer.beta.node()}, rule);
}

// ---------------------------------------------------------------------------
// Fully connected layer: y = x W + b
// ---------------------------------------------------------------------------

template <typename T>
struct FcLayer {
    Tensor<T> weights;  // [in x out]
    Tensor<T> bias;     // [out]
};

template <typename T>
FcLayer<T> make_fc(std::size_t in_dim, std::size_t out_dim, Rng& rng) {
    std::vector<T> w(in_dim * out_dim);
    const double stddev = std::sqrt(2.0 / static_cast<double>(in_dim));
    for (auto& v : w) v = static_cast<T>(rng.normal(0.0, stddev));
    FcLayer<T> layer;
    layer.weights = Tensor<T>::from_vector({in_dim, out_dim}, std::move(w), true);
    layer.bias = Tensor<T>::zeros({out_dim}, true);
    return layer;
}

template <typename T>
Tensor<T> fc_forward(const Tensor<T>& weights, const Tensor<T>& bias, const Tensor<T>& x) {
    return add(matmul(x, weights), bias);
}

template <typename T>
Tensor<T> fc_forward(const FcLayer<T>& layer, const Tensor<T>& x) {
    return fc_forward(layer.weights, layer.bias, x);
}

// ---------------------------------------------------------------------------
// Feature reweighting layer: x_hat = x (.) w, per row
// ---------------------------------------------------------------------------

template <typename T>
struct FRWLayer {
    Tensor<T> w;  // [D], trainable

    std::size_t dim() const { return w.shape()[0]; }
};

// All entries sqrt(2*C/D), so the squared-norm constraint starts satisfied.
template <typename T>
FRWLayer<T> make_frw(std::size_t dim, T norm_target) {
    FRWLayer<T> layer;
    const T v = static_cast<T>(std::sqrt(2.0 * static_cast<double>(norm_target) /
                                         static_cast<double>(dim)));
    layer.w = Tensor<T>::full({dim}, v, true);
    return layer;
}

template <typename T>
Tensor<T> frw_forward(const FRWLayer<T>& layer, const Tensor<T>& x) {
    if (x.rank() != 2 || x.shape()[1] != layer.dim()) {
        throw DimensionError("frw: input " + format_shape(x.shape()) +
                             " does not match weight dimension " + std::to_string(layer.dim()));
    }
    return mul(x, layer.w);
}

}  // namespace reid
