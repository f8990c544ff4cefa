#pragma once

#include <omp.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <vector>

#include "odgen/nn/tensor.hpp"

// Elementwise and GEMM-backed ops. Every op is deterministic for any thread
// count: OpenMP only ever splits work across independent output elements (or
// per-sample partial buffers reduced serially), never across a reduction.

namespace odgen::nn {

namespace detail {

template <typename S>
using MatRM = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// C[M,N] = A[M,K] * B[K,N], row-major, optionally accumulating into C.
template <typename S>
inline void gemm(const S* a, const S* b, S* c, int m, int k, int n, bool accumulate) {
    Eigen::Map<const MatRM<S>> ma(a, m, k);
    Eigen::Map<const MatRM<S>> mb(b, k, n);
    Eigen::Map<MatRM<S>> mc(c, m, n);
    if (accumulate) {
        mc.noalias() += ma * mb;
    } else {
        mc.noalias() = ma * mb;
    }
}

// Row-parallel GEMM. Each output row is produced by exactly one thread with a
// fixed-order accumulation over k.
template <typename S>
inline void pgemm(const S* a, const S* b, S* c, int m, int k, int n, bool accumulate) {
    const int64_t flops = static_cast<int64_t>(m) * k * n;
    if (flops < (1 << 18) || omp_in_parallel() || omp_get_max_threads() == 1) {
        gemm(a, b, c, m, k, n, accumulate);
        return;
    }
    const int nt = std::min(omp_get_max_threads(), std::max(1, m / 8));
#pragma omp parallel for schedule(static)
    for (int blk = 0; blk < nt; ++blk) {
        const int r0 = static_cast<int>(static_cast<int64_t>(m) * blk / nt);
        const int r1 = static_cast<int>(static_cast<int64_t>(m) * (blk + 1) / nt);
        if (r1 > r0) {
            gemm(a + static_cast<int64_t>(r0) * k, b, c + static_cast<int64_t>(r0) * n, r1 - r0, k,
                 n, accumulate);
        }
    }
}

inline void check(bool cond, const char* msg) {
    if (!cond) throw ShapeMismatchError(msg);
}

}  // namespace detail

template <typename S>
inline Tensor<S> make_result(Graph<S>& g, std::vector<int> shape, bool any_input_grad) {
    return Tensor<S>::zeros(std::move(shape), g.grad_enabled() && any_input_grad);
}

// ---------------------------------------------------------------- elementwise

template <typename S>
Tensor<S> add(Graph<S>& g, Tensor<S> a, Tensor<S> b) {
    detail::check(a.same_shape(b), "add: shape mismatch");
    Tensor<S> out = make_result(g, a.shape(), a.requires_grad() || b.requires_grad());
    const int64_t n = a.numel();
    const S* pa = a.val();
    const S* pb = b.val();
    S* po = out.val();
#pragma omp parallel for schedule(static) if (n > 65536)
    for (int64_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
    if (out.requires_grad()) {
        g.record([ad = a.data(), bd = b.data(), od = out.data(), n]() {
            if (ad->requires_grad) {
                ad->ensure_grad();
                for (int64_t i = 0; i < n; ++i) ad->grad[i] += od->grad[i];
            }
            if (bd->requires_grad) {
                bd->ensure_grad();
                for (int64_t i = 0; i < n; ++i) bd->grad[i] += od->grad[i];
            }
        });
    }
    return out;
}

template <typename S>
Tensor<S> sub(Graph<S>& g, Tensor<S> a, Tensor<S> b) {
    detail::check(a.same_shape(b), "sub: shape mismatch");
    Tensor<S> out = make_result(g, a.shape(), a.requires_grad() || b.requires_grad());
    const int64_t n = a.numel();
    const S* pa = a.val();
    const S* pb = b.val();
    S* po = out.val();
#pragma omp parallel for schedule(static) if (n > 65536)
    for (int64_t i = 0; i < n; ++i) po[i] = pa[i] - pb[i];
    if (out.requires_grad()) {
        g.record([ad = a.data(), bd = b.data(), od = out.data(), n]() {
            if (ad->requires_grad) {
                ad->ensure_grad();
                for (int64_t i = 0; i < n; ++i) ad->grad[i] += od->grad[i];
            }
            if (bd->requires_grad) {
                bd->ensure_grad();
                for (int64_t i = 0; i < n; ++i) bd->grad[i] -= od->grad[i];
            }
        });
    }
    return out;
}

template <typename S>
Tensor<S> mul(Graph<S>& g, Tensor<S> a, Tensor<S> b) {
    detail::check(a.same_shape(b), "mul: shape mismatch");
    Tensor<S> out = make_result(g, a.shape(), a.requires_grad() || b.requires_grad());
    const int64_t n = a.numel();
    const S* pa = a.val();
    const S* pb = b.val();
    S* po = out.val();
#pragma omp parallel for schedule(static) if (n > 65536)
    for (int64_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i];
    if (out.requires_grad()) {
        g.record([ad = a.data(), bd = b.data(), od = out.data(), n]() {
            if (ad->requires_grad) {
                ad->ensure_grad();
                for (int64_t i = 0; i < n; ++i) ad->grad[i] += od->grad[i] * bd->val[i];
            }
            if (bd->requires_grad) {
                bd->ensure_grad();
                for (int64_t i = 0; i < n; ++i) bd->grad[i] += od->grad[i] * ad->val[i];
            }
        });
    }
    return out;
}

template <typename S>
Tensor<S> scale(Graph<S>& g, Tensor<S> a, double s) {
    Tensor<S> out = make_result(g, a.shape(), a.requires_grad());
    const int64_t n = a.numel();
    const S* pa = a.val();
    S* po = out.val();
    const S ss = static_cast<S>(s);
#pragma omp parallel for schedule(static) if (n > 65536)
    for (int64_t i = 0; i < n; ++i) po[i] = pa[i] * ss;
    if (out.requires_grad()) {
        g.record([ad = a.data(), od = out.data(), n, ss]() {
            ad->ensure_grad();
            for (int64_t i = 0; i < n; ++i) ad->grad[i] += od->grad[i] * ss;
        });
    }
    return out;
}

template <typename S>
Tensor<S> silu(Graph<S>& g, Tensor<S> a) {
    Tensor<S> out = make_result(g, a.shape(), a.requires_grad());
    const int64_t n = a.numel();
    const S* pa = a.val();
    S* po = out.val();
#pragma omp parallel for schedule(static) if (n > 65536)
    for (int64_t i = 0; i < n; ++i) {
        const S sg = S(1) / (S(1) + std::exp(-pa[i]));
        po[i] = pa[i] * sg;
    }
    if (out.requires_grad()) {
        g.record([ad = a.data(), od = out.data(), n]() {
            ad->ensure_grad();
            for (int64_t i = 0; i < n; ++i) {
                const S x = ad->val[i];
                const S sg = S(1) / (S(1) + std::exp(-x));
                ad->grad[i] += od->grad[i] * sg * (S(1) + x * (S(1) - sg));
            }
        });
    }
    return out;
}

// ------------------------------------------------------------------ broadcast

// x[B,C,H,W] + bias[B,C], broadcast over spatial dims (time embedding inject)
template <typename S>
Tensor<S> add_bc11(Graph<S>& g, Tensor<S> x, Tensor<S> bias) {
    detail::check(x.ndim() == 4 && bias.ndim() == 2 && x.dim(0) == bias.dim(0) &&
                      x.dim(1) == bias.dim(1),
                  "add_bc11: expected x[B,C,H,W], bias[B,C]");
    Tensor<S> out = make_result(g, x.shape(), x.requires_grad() || bias.requires_grad());
    const int B = x.dim(0), C = x.dim(1);
    const int64_t hw = static_cast<int64_t>(x.dim(2)) * x.dim(3);
    const S* px = x.val();
    const S* pb = bias.val();
    S* po = out.val();
#pragma omp parallel for schedule(static) collapse(2)
    for (int b = 0; b < B; ++b) {
        for (int c = 0; c < C; ++c) {
            const int64_t base = (static_cast<int64_t>(b) * C + c) * hw;
            const S bv = pb[b * C + c];
            for (int64_t i = 0; i < hw; ++i) po[base + i] = px[base + i] + bv;
        }
    }
    if (out.requires_grad()) {
        g.record([xd = x.data(), bd = bias.data(), od = out.data(), B, C, hw]() {
            if (xd->requires_grad) {
                xd->ensure_grad();
                const int64_t n = static_cast<int64_t>(B) * C * hw;
                for (int64_t i = 0; i < n; ++i) xd->grad[i] += od->grad[i];
            }
            if (bd->requires_grad) {
                bd->ensure_grad();
                for (int b = 0; b < B; ++b) {
                    for (int c = 0; c < C; ++c) {
                        const int64_t base = (static_cast<int64_t>(b) * C + c) * hw;
                        S acc = S(0);
                        for (int64_t i = 0; i < hw; ++i) acc += od->grad[base + i];
                        bd->grad[b * C + c] += acc;
                    }
                }
            }
        });
    }
    return out;
}

// x[B,C,H,W] * m[B,1,H,W], mask broadcast over channels
template <typename S>
Tensor<S> mul_mask(Graph<S>& g, Tensor<S> x, Tensor<S> m) {
    detail::check(x.ndim() == 4 && m.ndim() == 4 && m.dim(1) == 1 && x.dim(0) == m.dim(0) &&
                      x.dim(2) == m.dim(2) && x.dim(3) == m.dim(3),
                  "mul_mask: expected x[B,C,H,W], m[B,1,H,W]");
    Tensor<S> out = make_result(g, x.shape(), x.requires_grad() || m.requires_grad());
    const int B = x.dim(0), C = x.dim(1);
    const int64_t hw = static_cast<int64_t>(x.dim(2)) * x.dim(3);
    const S* px = x.val();
    const S* pm = m.val();
    S* po = out.val();
#pragma omp parallel for schedule(static) collapse(2)
    for (int b = 0; b < B; ++b) {
        for (int c = 0; c < C; ++c) {
            const int64_t base = (static_cast<int64_t>(b) * C + c) * hw;
            const S* mrow = pm + static_cast<int64_t>(b) * hw;
            for (int64_t i = 0; i < hw; ++i) po[base + i] = px[base + i] * mrow[i];
        }
    }
    if (out.requires_grad()) {
        g.record([xd = x.data(), md = m.data(), od = out.data(), B, C, hw]() {
            if (xd->requires_grad) {
                xd->ensure_grad();
                for (int b = 0; b < B; ++b) {
                    for (int c = 0; c < C; ++c) {
                        const int64_t base = (static_cast<int64_t>(b) * C + c) * hw;
                        const S* mrow = md->val.data() + static_cast<int64_t>(b) * hw;
                        for (int64_t i = 0; i < hw; ++i) xd->grad[base + i] += od->grad[base + i] * mrow[i];
                    }
                }
            }
            if (md->requires_grad) {
                md->ensure_grad();
                for (int b = 0; b < B; ++b) {
                    for (int c = 0; c < C; ++c) {
                        const int64_t base = (static_cast<int64_t>(b) * C + c) * hw;
                        S* mg = md->grad.data() + static_cast<int64_t>(b) * hw;
                        for (int64_t i = 0; i < hw; ++i) mg[i] += od->grad[base + i] * xd->val[base + i];
                    }
                }
            }
        });
    }
    return out;
}

// ------------------------------------------------------------------ reductions

template <typename S>
Tensor<S> mean_all(Graph<S>& g, Tensor<S> a) {
    Tensor<S> out = make_result(g, {1}, a.requires_grad());
    const int64_t n = a.numel();
    const S* pa = a.val();
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) acc += static_cast<double>(pa[i]);
    out.val()[0] = static_cast<S>(acc / static_cast<double>(n));
    if (out.requires_grad()) {
        g.record([ad = a.data(), od = out.data(), n]() {
            ad->ensure_grad();
            const S gno = od->grad[0] / static_cast<S>(n);
            for (int64_t i = 0; i < n; ++i) ad->grad[i] += gno;
        });
    }
    return out;
}

// x[B,C,H,W] -> [B,C], average over spatial dims
template <typename S>
Tensor<S> global_avg_pool(Graph<S>& g, Tensor<S> x) {
    detail::check(x.ndim() == 4, "global_avg_pool: expected 4d input");
    const int B = x.dim(0), C = x.dim(1);
    const int64_t hw = static_cast<int64_t>(x.dim(2)) * x.dim(3);
    Tensor<S> out = make_result(g, {B, C}, x.requires_grad());
    const S* px = x.val();
    S* po = out.val();
#pragma omp parallel for schedule(static) collapse(2)
    for (int b = 0; b < B; ++b) {
        for (int c = 0; c < C; ++c) {
            const int64_t base = (static_cast<int64_t>(b) * C + c) * hw;
            double acc = 0.0;
            for (int64_t i = 0; i < hw; ++i) acc += static_cast<double>(px[base + i]);
            po[b * C + c] = static_cast<S>(acc / static_cast<double>(hw));
        }
    }
    if (out.requires_grad()) {
        g.record([xd = x.data(), od = out.data(), B, C, hw]() {
            xd->ensure_grad();
            for (int b = 0; b < B; ++b) {
                for (int c = 0; c < C; ++c) {
                    const int64_t base = (static_cast<int64_t>(b) * C + c) * hw;
                    const S gv = od->grad[b * C + c] / static_cast<S>(hw);
                    for (int64_t i = 0; i < hw; ++i) xd->grad[base + i] += gv;
                }
            }
        });
    }
    return out;
}

// ------------------------------------------------------------------- linear

// x[..., K] @ w[K, N] + b[N]; leading dims flattened to rows
template <typename S>
Tensor<S> linear(Graph<S>& g, Tensor<S> x, Tensor<S> w, Tensor<S> b = {}) {
    detail::check(w.ndim() == 2 && x.dim(x.ndim() - 1) == w.dim(0), "linear: inner dim mismatch");
    const int K = w.dim(0), N = w.dim(1);
    const int64_t R = x.numel() / K;
    std::vector<int> out_shape = x.shape();
    out_shape.back() = N;
    const bool bias_grad = b.defined() && b.requires_grad();
    Tensor<S> out = make_result(g, out_shape, x.requires_grad() || w.requires_grad() || bias_grad);
    detail::pgemm(x.val(), w.val(), out.val(), static_cast<int>(R), K, N, false);
    if (b.defined()) {
        detail::check(b.ndim() == 1 && b.dim(0) == N, "linear: bad bias shape");
        S* po = out.val();
        const S* pb = b.val();
#pragma omp parallel for schedule(static) if (R > 256)
        for (int64_t r = 0; r < R; ++r) {
            for (int n = 0; n < N; ++n) po[r * N + n] += pb[n];
        }
    }
    if (out.requires_grad()) {
        g.record([xd = x.data(), wd = w.data(), bd = b.defined() ? b.data() : nullptr,
                  od = out.data(), R, K, N]() {
            // dX = dY * W^T
            if (xd->requires_grad) {
                xd->ensure_grad();
                detail::MatRM<S> wt =
                    Eigen::Map<const detail::MatRM<S>>(wd->val.data(), K, N).transpose();
                std::vector<S> tmp(static_cast<size_t>(R) * K);
                detail::pgemm(od->grad.data(), wt.data(), tmp.data(), static_cast<int>(R), N, K,
                              false);
                for (int64_t i = 0; i < R * K; ++i) xd->grad[i] += tmp[i];
            }
            // dW = X^T * dY  (single GEMM, fixed accumulation order over rows)
            if (wd->requires_grad) {
                wd->ensure_grad();
                detail::MatRM<S> xt =
                    Eigen::Map<const detail::MatRM<S>>(xd->val.data(), R, K).transpose();
                detail::gemm(xt.data(), od->grad.data(), wd->grad.data(), K, static_cast<int>(R), N,
                             true);
            }
            if (bd && bd->requires_grad) {
                bd->ensure_grad();
                for (int64_t r = 0; r < R; ++r) {
                    for (int n = 0; n < N; ++n) bd->grad[n] += od->grad[r * N + n];
                }
            }
        });
    }
    return out;
}

// a[M,K] @ b[K,N]
template <typename S>
Tensor<S> matmul(Graph<S>& g, Tensor<S> a, Tensor<S> b) {
    detail::check(a.ndim() == 2 && b.ndim() == 2 && a.dim(1) == b.dim(0), "matmul: shape mismatch");
    return linear(g, a, b);
}

// ------------------------------------------------------------------- batched matmul

// a[B,M,K] @ b[B,K,N] -> [B,M,N]
template <typename S>
Tensor<S> bmm_nn(Graph<S>& g, Tensor<S> a, Tensor<S> b) {
    detail::check(a.ndim() == 3 && b.ndim() == 3 && a.dim(0) == b.dim(0) && a.dim(2) == b.dim(1),
                  "bmm_nn: shape mismatch");
    const int B = a.dim(0), M = a.dim(1), K = a.dim(2), N = b.dim(2);
    Tensor<S> out = make_result(g, {B, M, N}, a.requires_grad() || b.requires_grad());
#pragma omp parallel for schedule(static)
    for (int i = 0; i < B; ++i) {
        detail::gemm(a.val() + static_cast<int64_t>(i) * M * K,
                     b.val() + static_cast<int64_t>(i) * K * N,
                     out.val() + static_cast<int64_t>(i) * M * N, M, K, N, false);
    }
    if (out.requires_grad()) {
        g.record([ad = a.data(), bd = b.data(), od = out.data(), B, M, K, N]() {
            if (ad->requires_grad) ad->ensure_grad();
            if (bd->requires_grad) bd->ensure_grad();
#pragma omp parallel for schedule(static)
            for (int i = 0; i < B; ++i) {
                const S* go = od->grad.data() + static_cast<int64_t>(i) * M * N;
                if (ad->requires_grad) {
                    // dA = dC * B^T
                    detail::MatRM<S> bt = Eigen::Map<const detail::MatRM<S>>(
                                              bd->val.data() + static_cast<int64_t>(i) * K * N, K, N)
                                              .transpose();
                    detail::gemm(go, bt.data(), ad->grad.data() + static_cast<int64_t>(i) * M * K, M,
                                 N, K, true);
                }
                if (bd->requires_grad) {
                    // dB = A^T * dC
                    detail::MatRM<S> at = Eigen::Map<const detail::MatRM<S>>(
                                              ad->val.data() + static_cast<int64_t>(i) * M * K, M, K)
                                              .transpose();
                    detail::gemm(at.data(), go, bd->grad.data() + static_cast<int64_t>(i) * K * N, K,
                                 M, N, true);
                }
            }
        });
    }
    return out;
}

// a[B,M,K] @ b[B,N,K]^T -> [B,M,N]
template <typename S>
Tensor<S> bmm_nt(Graph<S>& g, Tensor<S> a, Tensor<S> b) {
    detail::check(a.ndim() == 3 && b.ndim() == 3 && a.dim(0) == b.dim(0) && a.dim(2) == b.dim(2),
                  "bmm_nt: shape mismatch");
    const int B = a.dim(0), M = a.dim(1), K = a.dim(2), N = b.dim(1);
    Tensor<S> out = make_result(g, {B, M, N}, a.requires_grad() || b.requires_grad());
#pragma omp parallel for schedule(static)
    for (int i = 0; i < B; ++i) {
        detail::MatRM<S> bt =
            Eigen::Map<const detail::MatRM<S>>(b.val() + static_cast<int64_t>(i) * N * K, N, K)
                .transpose();
        detail::gemm(a.val() + static_cast<int64_t>(i) * M * K, bt.data(),
                     out.val() + static_cast<int64_t>(i) * M * N, M, K, N, false);
    }
    if (out.requires_grad()) {
        g.record([ad = a.data(), bd = b.data(), od = out.data(), B, M, K, N]() {
            if (ad->requires_grad) ad->ensure_grad();
            if (bd->requires_grad) bd->ensure_grad();
#pragma omp parallel for schedule(static)
            for (int i = 0; i < B; ++i) {
                const S* go = od->grad.data() + static_cast<int64_t>(i) * M * N;
                if (ad->requires_grad) {
                    // dA = dC * B
                    detail::gemm(go, bd->val.data() + static_cast<int64_t>(i) * N * K,
                                 ad->grad.data() + static_cast<int64_t>(i) * M * K, M, N, K, true);
                }
                if (bd->requires_grad) {
                    // dB = dC^T * A
                    detail::MatRM<S> gt = Eigen::Map<const detail::MatRM<S>>(go, M, N).transpose();
                    detail::gemm(gt.data(), ad->val.data() + static_cast<int64_t>(i) * M * K,
                                 bd->grad.data() + static_cast<int64_t>(i) * N * K, N, M, K, true);
                }
            }
        });
    }
    return out;
}

// -------------------------------------------------------------------- softmax

// softmax over the last dimension
template <typename S>
Tensor<S> softmax_last(Graph<S>& g, Tensor<S> x) {
    const int N = x.dim(x.ndim() - 1);
    const int64_t R = x.numel() / N;
    Tensor<S> out = make_result(g, x.shape(), x.requires_grad());
    const S* px = x.val();
    S* po = out.val();
#pragma omp parallel for schedule(static) if (R > 64)
    for (int64_t r = 0; r < R; ++r) {
        const S* row = px + r * N;
        S* orow = po + r * N;
        S mx = row[0];
        for (int i = 1; i < N; ++i) mx = std::max(mx, row[i]);
        S sum = S(0);
        for (int i = 0; i < N; ++i) {
            orow[i] = std::exp(row[i] - mx);
            sum += orow[i];
        }
        const S inv = S(1) / sum;
        for (int i = 0; i < N; ++i) orow[i] *= inv;
    }
    if (out.requires_grad()) {
        g.record([xd = x.data(), od = out.data(), R, N]() {
            xd->ensure_grad();
#pragma omp parallel for schedule(static) if (R > 64)
            for (int64_t r = 0; r < R; ++r) {
                const S* y = od->val.data() + r * N;
                const S* gy = od->grad.data() + r * N;
                S dot = S(0);
                for (int i = 0; i < N; ++i) dot += gy[i] * y[i];
                S* gx = xd->grad.data() + r * N;
                for (int i = 0; i < N; ++i) gx[i] += y[i] * (gy[i] - dot);
            }
        });
    }
    return out;
}

// ------------------------------------------------------------------ group norm

// x[B,C,H,W], gamma[C], beta[C]; statistics over each (sample, group) slab
template <typename S>
Tensor<S> group_norm(Graph<S>& g, Tensor<S> x, Tensor<S> gamma, Tensor<S> beta, int groups,
                     double eps = 1e-5) {
    detail::check(x.ndim() == 4, "group_norm: expected 4d input");
    const int B = x.dim(0), C = x.dim(1);
    detail::check(C % groups == 0, "group_norm: channels not divisible by groups");
    detail::check(gamma.dim(0) == C && beta.dim(0) == C, "group_norm: bad affine shape");
    const int64_t hw = static_cast<int64_t>(x.dim(2)) * x.dim(3);
    const int cg = C / groups;
    const int64_t m = cg * hw;  // elements per group slab

    Tensor<S> out = make_result(
        g, x.shape(), x.requires_grad() || gamma.requires_grad() || beta.requires_grad());
    // per (b, group) statistics kept for backward
    auto stats = std::make_shared<std::vector<S>>(static_cast<size_t>(B) * groups * 2);

    const S* px = x.val();
    S* po = out.val();
#pragma omp parallel for schedule(static) collapse(2)
    for (int b = 0; b < B; ++b) {
        for (int gr = 0; gr < groups; ++gr) {
            const int64_t base = (static_cast<int64_t>(b) * C + static_cast<int64_t>(gr) * cg) * hw;
            double mean = 0.0;
            for (int64_t i = 0; i < m; ++i) mean += static_cast<double>(px[base + i]);
            mean /= static_cast<double>(m);
            double var = 0.0;
            for (int64_t i = 0; i < m; ++i) {
                const double d = static_cast<double>(px[base + i]) - mean;
                var += d * d;
            }
            var /= static_cast<double>(m);
            const S inv_std = static_cast<S>(1.0 / std::sqrt(var + eps));
            const S mu = static_cast<S>(mean);
            (*stats)[(static_cast<size_t>(b) * groups + gr) * 2] = mu;
            (*stats)[(static_cast<size_t>(b) * groups + gr) * 2 + 1] = inv_std;
            for (int c = 0; c < cg; ++c) {
                const S ga = gamma.val()[gr * cg + c];
                const S be = beta.val()[gr * cg + c];
                const int64_t cbase = base + static_cast<int64_t>(c) * hw;
                for (int64_t i = 0; i < hw; ++i) {
                    po[cbase + i] = (px[cbase + i] - mu) * inv_std * ga + be;
                }
            }
        }
    }
    if (out.requires_grad()) {
        g.record([xd = x.data(), gd = gamma.data(), bd = beta.data(), od = out.data(), stats, B, C,
                  groups, cg, hw, m]() {
            if (xd->requires_grad) xd->ensure_grad();
            if (gd->requires_grad) gd->ensure_grad();
            if (bd->requires_grad) bd->ensure_grad();
            // serial over b,gr: gamma/beta grads are shared accumulators
            for (int b = 0; b < B; ++b) {
                for (int gr = 0; gr < groups; ++gr) {
                    const int64_t base =
                        (static_cast<int64_t>(b) * C + static_cast<int64_t>(gr) * cg) * hw;
                    const S mu = (*stats)[(static_cast<size_t>(b) * groups + gr) * 2];
                    const S inv_std = (*stats)[(static_cast<size_t>(b) * groups + gr) * 2 + 1];
                    // accumulate means of dyh and dyh*xhat over the slab
                    double sum_dyh = 0.0, sum_dyh_xh = 0.0;
                    for (int c = 0; c < cg; ++c) {
                        const S ga = gd->val[gr * cg + c];
                        const int64_t cbase = base + static_cast<int64_t>(c) * hw;
                        for (int64_t i = 0; i < hw; ++i) {
                            const S xh = (xd->val[cbase + i] - mu) * inv_std;
                            const S dyh = od->grad[cbase + i] * ga;
                            sum_dyh += static_cast<double>(dyh);
                            sum_dyh_xh += static_cast<double>(dyh * xh);
                            if (gd->requires_grad) gd->grad[gr * cg + c] += od->grad[cbase + i] * xh;
                            if (bd->requires_grad) bd->grad[gr * cg + c] += od->grad[cbase + i];
                        }
                    }
                    if (!xd->requires_grad) continue;
                    const S mean_dyh = static_cast<S>(sum_dyh / static_cast<double>(m));
                    const S mean_dyh_xh = static_cast<S>(sum_dyh_xh / static_cast<double>(m));
                    for (int c = 0; c < cg; ++c) {
                        const S ga = gd->val[gr * cg + c];
                        const int64_t cbase = base + static_cast<int64_t>(c) * hw;
                        for (int64_t i = 0; i < hw; ++i) {
                            const S xh = (xd->val[cbase + i] - mu) * inv_std;
                            const S dyh = od->grad[cbase + i] * ga;
                            xd->grad[cbase + i] += inv_std * (dyh - mean_dyh - xh * mean_dyh_xh);
                        }
                    }
                }
            }
        });
    }
    return out;
}

// ------------------------------------------------------------------- conv2d

// x[B,Cin,H,W], w[Cout,Cin,k,k], b[Cout]; same kernel/stride on both axes
template <typename S>
Tensor<S> conv2d(Graph<S>& g, Tensor<S> x, Tensor<S> w, Tensor<S> b, int stride, int pad) {
    detail::check(x.ndim() == 4 && w.ndim() == 4 && x.dim(1) == w.dim(1),
                  "conv2d: shape mismatch");
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int O = w.dim(0), k = w.dim(2);
    detail::check(w.dim(3) == k, "conv2d: non-square kernel");
    const int OH = (H + 2 * pad - k) / stride + 1;
    const int OW = (W + 2 * pad - k) / stride + 1;
    detail::check(OH > 0 && OW > 0, "conv2d: output would be empty");
    const int K = C * k * k;
    const int64_t M = static_cast<int64_t>(OH) * OW;

    const bool bias_grad = b.defined() && b.requires_grad();
    Tensor<S> out = make_result(g, {B, O, OH, OW},
                                x.requires_grad() || w.requires_grad() || bias_grad);

    auto im2col = [C, H, W, k, stride, pad, OH, OW, M](const S* img, S* col) {
        for (int c = 0; c < C; ++c) {
            for (int ky = 0; ky < k; ++ky) {
                for (int kx = 0; kx < k; ++kx) {
                    S* dst = col + ((static_cast<int64_t>(c) * k + ky) * k + kx) * M;
                    for (int oy = 0; oy < OH; ++oy) {
                        const int iy = oy * stride - pad + ky;
                        if (iy < 0 || iy >= H) {
                            for (int ox = 0; ox < OW; ++ox) dst[oy * OW + ox] = S(0);
                            continue;
                        }
                        const S* srow = img + (static_cast<int64_t>(c) * H + iy) * W;
                        for (int ox = 0; ox < OW; ++ox) {
                            const int ix = ox * stride - pad + kx;
                            dst[oy * OW + ox] = (ix >= 0 && ix < W) ? srow[ix] : S(0);
                        }
                    }
                }
            }
        }
    };

#pragma omp parallel for schedule(static)
    for (int i = 0; i < B; ++i) {
        std::vector<S> col(static_cast<size_t>(K) * M);
        im2col(x.val() + static_cast<int64_t>(i) * C * H * W, col.data());
        S* yo = out.val() + static_cast<int64_t>(i) * O * M;
        detail::gemm(w.val(), col.data(), yo, O, K, static_cast<int>(M), false);
        if (b.defined()) {
            for (int o = 0; o < O; ++o) {
                const S bv = b.val()[o];
                for (int64_t j = 0; j < M; ++j) yo[o * M + j] += bv;
            }
        }
    }

    if (out.requires_grad()) {
        g.record([xd = x.data(), wd = w.data(), bd = b.defined() ? b.data() : nullptr,
                  od = out.data(), im2col, B, C, H, W, O, k, K, M, OH, OW, stride, pad]() {
            if (xd->requires_grad) xd->ensure_grad();
            if (wd->requires_grad) wd->ensure_grad();
            if (bd && bd->requires_grad) bd->ensure_grad();
            // per-sample partial dW/db, reduced serially afterwards
            std::vector<S> dw_part;
            std::vector<S> db_part;
            if (wd->requires_grad) dw_part.assign(static_cast<size_t>(B) * O * K, S(0));
            if (bd && bd->requires_grad) db_part.assign(static_cast<size_t>(B) * O, S(0));
#pragma omp parallel for schedule(static)
            for (int i = 0; i < B; ++i) {
                std::vector<S> col(static_cast<size_t>(K) * M);
                im2col(xd->val.data() + static_cast<int64_t>(i) * C * H * W, col.data());
                const S* go = od->grad.data() + static_cast<int64_t>(i) * O * M;
                if (wd->requires_grad) {
                    // dW_i = dY_i * col_i^T
                    detail::MatRM<S> colT =
                        Eigen::Map<const detail::MatRM<S>>(col.data(), K, M).transpose();
                    detail::gemm(go, colT.data(), dw_part.data() + static_cast<int64_t>(i) * O * K,
                                 O, static_cast<int>(M), K, false);
                }
                if (bd && bd->requires_grad) {
                    for (int o = 0; o < O; ++o) {
                        S acc = S(0);
                        for (int64_t j = 0; j < M; ++j) acc += go[o * M + j];
                        db_part[static_cast<size_t>(i) * O + o] = acc;
                    }
                }
                if (xd->requires_grad) {
                    // dcol = W^T * dY_i, then scatter back (col2im)
                    std::vector<S> dcol(static_cast<size_t>(K) * M);
                    detail::MatRM<S> wt =
                        Eigen::Map<const detail::MatRM<S>>(wd->val.data(), O, K).transpose();
                    detail::gemm(wt.data(), go, dcol.data(), K, O, static_cast<int>(M), false);
                    S* gx = xd->grad.data() + static_cast<int64_t>(i) * C * H * W;
                    for (int c = 0; c < C; ++c) {
                        for (int ky = 0; ky < k; ++ky) {
                            for (int kx = 0; kx < k; ++kx) {
                                const S* src =
                                    dcol.data() + ((static_cast<int64_t>(c) * k + ky) * k + kx) * M;
                                for (int oy = 0; oy < OH; ++oy) {
                                    const int iy = oy * stride - pad + ky;
                                    if (iy < 0 || iy >= H) continue;
                                    S* grow = gx + (static_cast<int64_t>(c) * H + iy) * W;
                                    for (int ox = 0; ox < OW; ++ox) {
                                        const int ix = ox * stride - pad + kx;
                                        if (ix >= 0 && ix < W) grow[ix] += src[oy * OW + ox];
                                    }
                                }
                            }
                        }
                    }
                }
            }
            if (wd->requires_grad) {
                for (int i = 0; i < B; ++i) {
                    const S* part = dw_part.data() + static_cast<int64_t>(i) * O * K;
                    for (int64_t j = 0; j < static_cast<int64_t>(O) * K; ++j) wd->grad[j] += part[j];
                }
            }
            if (bd && bd->requires_grad) {
                for (int i = 0; i < B; ++i) {
                    for (int o = 0; o < O; ++o) bd->grad[o] += db_part[static_cast<size_t>(i) * O + o];
                }
            }
        });
    }
    return out;
}

// --------------------------------------------------------------- shape movers

// reshape with copy; gradients routed straight through
template <typename S>
Tensor<S> reshape(Graph<S>& g, Tensor<S> x, std::vector<int> shape) {
    Tensor<S> out = make_result(g, std::move(shape), x.requires_grad());
    detail::check(out.numel() == x.numel(), "reshape: element count mismatch");
    std::copy(x.val(), x.val() + x.numel(), out.val());
    if (out.requires_grad()) {
        g.record([xd = x.data(), od = out.data()]() {
            xd->ensure_grad();
            for (size_t i = 0; i < xd->grad.size(); ++i) xd->grad[i] += od->grad[i];
        });
    }
    return out;
}

// [B,C,H,W] -> [B, H*W, C] (token-major view for attention)
template <typename S>
Tensor<S> nchw_to_ntc(Graph<S>& g, Tensor<S> x) {
    detail::check(x.ndim() == 4, "nchw_to_ntc: expected 4d input");
    const int B = x.dim(0), C = x.dim(1);
    const int64_t T = static_cast<int64_t>(x.dim(2)) * x.dim(3);
    Tensor<S> out = make_result(g, {B, static_cast<int>(T), C}, x.requires_grad());
    const S* px = x.val();
    S* po = out.val();
#pragma omp parallel for schedule(static)
    for (int b = 0; b < B; ++b) {
        for (int c = 0; c < C; ++c) {
            const S* src = px + (static_cast<int64_t>(b) * C + c) * T;
            S* dst = po + static_cast<int64_t>(b) * T * C + c;
            for (int64_t t = 0; t < T; ++t) dst[t * C] = src[t];
        }
    }
    if (out.requires_grad()) {
        g.record([xd = x.data(), od = out.data(), B, C, T]() {
            xd->ensure_grad();
            for (int b = 0; b < B; ++b) {
                for (int c = 0; c < C; ++c) {
                    S* gx = xd->grad.data() + (static_cast<int64_t>(b) * C + c) * T;
                    const S* go = od->grad.data() + static_cast<int64_t>(b) * T * C + c;
                    for (int64_t t = 0; t < T; ++t) gx[t] += go[t * C];
                }
            }
        });
    }
    return out;
}

// [B,T,C] -> [B,C,H,W] with T == H*W
template <typename S>
Tensor<S> ntc_to_nchw(Graph<S>& g, Tensor<S> x, int H, int W) {
    detail::check(x.ndim() == 3 && x.dim(1) == H * W, "ntc_to_nchw: bad token count");
    const int B = x.dim(0), C = x.dim(2);
    const int64_t T = static_cast<int64_t>(H) * W;
    Tensor<S> out = make_result(g, {B, C, H, W}, x.requires_grad());
    const S* px = x.val();
    S* po = out.val();
#pragma omp parallel for schedule(static)
    for (int b = 0; b < B; ++b) {
        for (int c = 0; c < C; ++c) {
            const S* src = px + static_cast<int64_t>(b) * T * C + c;
            S* dst = po + (static_cast<int64_t>(b) * C + c) * T;
            for (int64_t t = 0; t < T; ++t) dst[t] = src[t * C];
        }
    }
    if (out.requires_grad()) {
        g.record([xd = x.data(), od = out.data(), B, C, T]() {
            xd->ensure_grad();
            for (int b = 0; b < B; ++b) {
                for (int c = 0; c < C; ++c) {
                    S* gx = xd->grad.data() + static_cast<int64_t>(b) * T * C + c;
                    const S* go = od->grad.data() + (static_cast<int64_t>(b) * C + c) * T;
                    for (int64_t t = 0; t < T; ++t) gx[t * C] += go[t];
                }
            }
        });
    }
    return out;
}

// concat along axis 1; works for [B,C,H,W] (inner = H*W) and [B,S,D] (inner = D)
template <typename S>
Tensor<S> concat_axis1(Graph<S>& g, Tensor<S> a, Tensor<S> b) {
    detail::check(a.ndim() == b.ndim() && a.ndim() >= 2 && a.dim(0) == b.dim(0),
                  "concat_axis1: rank/batch mismatch");
    int64_t inner = 1;
    for (int i = 2; i < a.ndim(); ++i) {
        detail::check(a.dim(i) == b.dim(i), "concat_axis1: inner shape mismatch");
        inner *= a.dim(i);
    }
    const int B = a.dim(0), Ca = a.dim(1), Cb = b.dim(1);
    std::vector<int> shape = a.shape();
    shape[1] = Ca + Cb;
    Tensor<S> out = make_result(g, shape, a.requires_grad() || b.requires_grad());
    const int64_t stride_a = Ca * inner, stride_b = Cb * inner, stride_o = (Ca + Cb) * inner;
#pragma omp parallel for schedule(static)
    for (int i = 0; i < B; ++i) {
        std::copy(a.val() + i * stride_a, a.val() + (i + 1) * stride_a, out.val() + i * stride_o);
        std::copy(b.val() + i * stride_b, b.val() + (i + 1) * stride_b,
                  out.val() + i * stride_o + stride_a);
    }
    if (out.requires_grad()) {
        g.record([ad = a.data(), bd = b.data(), od = out.data(), B, stride_a, stride_b, stride_o]() {
            if (ad->requires_grad) {
                ad->ensure_grad();
                for (int i = 0; i < B; ++i) {
                    const S* go = od->grad.data() + i * stride_o;
                    S* ga = ad->grad.data() + i * stride_a;
                    for (int64_t j = 0; j < stride_a; ++j) ga[j] += go[j];
                }
            }
            if (bd->requires_grad) {
                bd->ensure_grad();
                for (int i = 0; i < B; ++i) {
                    const S* go = od->grad.data() + i * stride_o + stride_a;
                    S* gb = bd->grad.data() + i * stride_b;
                    for (int64_t j = 0; j < stride_b; ++j) gb[j] += go[j];
                }
            }
        });
    }
    return out;
}

// nearest-neighbor 2x spatial upsample
template <typename S>
Tensor<S> upsample_nearest2(Graph<S>& g, Tensor<S> x) {
    detail::check(x.ndim() == 4, "upsample_nearest2: expected 4d input");
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    Tensor<S> out = make_result(g, {B, C, 2 * H, 2 * W}, x.requires_grad());
    const S* px = x.val();
    S* po = out.val();
#pragma omp parallel for schedule(static)
    for (int bc = 0; bc < B * C; ++bc) {
        const S* src = px + static_cast<int64_t>(bc) * H * W;
        S* dst = po + static_cast<int64_t>(bc) * 4 * H * W;
        for (int y = 0; y < H; ++y) {
            for (int x2 = 0; x2 < W; ++x2) {
                const S v = src[y * W + x2];
                dst[(2 * y) * 2 * W + 2 * x2] = v;
                dst[(2 * y) * 2 * W + 2 * x2 + 1] = v;
                dst[(2 * y + 1) * 2 * W + 2 * x2] = v;
                dst[(2 * y + 1) * 2 * W + 2 * x2 + 1] = v;
            }
        }
    }
    if (out.requires_grad()) {
        g.record([xd = x.data(), od = out.data(), B, C, H, W]() {
            xd->ensure_grad();
            for (int bc = 0; bc < B * C; ++bc) {
                S* gx = xd->grad.data() + static_cast<int64_t>(bc) * H * W;
                const S* go = od->grad.data() + static_cast<int64_t>(bc) * 4 * H * W;
                for (int y = 0; y < H; ++y) {
                    for (int x2 = 0; x2 < W; ++x2) {
                        gx[y * W + x2] += go[(2 * y) * 2 * W + 2 * x2] +
                                          go[(2 * y) * 2 * W + 2 * x2 + 1] +
                                          go[(2 * y + 1) * 2 * W + 2 * x2] +
                                          go[(2 * y + 1) * 2 * W + 2 * x2 + 1];
                    }
                }
            }
        });
    }
    return out;
}

// ----------------------------------------------------------------- classifier

// mean over rows of max(z,0) - z*y + log(1 + exp(-|z|)); targets carry no grad
template <typename S>
Tensor<S> bce_with_logits_mean(Graph<S>& g, Tensor<S> logits, Tensor<S> targets) {
    detail::check(logits.numel() == targets.numel(), "bce: size mismatch");
    const int64_t n = logits.numel();
    Tensor<S> out = make_result(g, {1}, logits.requires_grad());
    const S* z = logits.val();
    const S* y = targets.val();
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const double zi = static_cast<double>(z[i]);
        acc += std::max(zi, 0.0) - zi * static_cast<double>(y[i]) +
               std::log1p(std::exp(-std::abs(zi)));
    }
    out.val()[0] = static_cast<S>(acc / static_cast<double>(n));
    if (out.requires_grad()) {
        g.record([ld = logits.data(), td = targets.data(), od = out.data(), n]() {
            ld->ensure_grad();
            const S go = od->grad[0] / static_cast<S>(n);
            for (int64_t i = 0; i < n; ++i) {
                const S sig = S(1) / (S(1) + std::exp(-ld->val[i]));
                ld->grad[i] += go * (sig - td->val[i]);
            }
        });
    }
    return out;
}

}  // namespace odgen::nn
