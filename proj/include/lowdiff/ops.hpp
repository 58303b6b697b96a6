#pragma once

#include <Eigen/Dense>

#include "lowdiff/tensor.hpp"

// Dense kernel set: cross-correlation conv2d, 2x pooling/upsampling, dense
// layers, silu, group normalization, channel concat/bias and reductions.
// Each primitive has a forward kernel and a matching backward kernel; the
// tape in autodiff.hpp wires them together.

namespace lowdiff {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapRM = Eigen::Map<RowMat<T>>;
template <class T>
using MapCRM = Eigen::Map<const RowMat<T>>;

enum class UpsampleMode { nearest, bilinear };
enum class Activation { none, silu };

template <class T>
Tensor<T> silu_fwd(const Tensor<T>& x);

namespace detail {

// im2col for stride-1 cross-correlation; cols is (Cin*k*k) x (OH*OW), row-major.
template <class T>
void im2col(const Tensor<T>& x, std::int64_t b, int k, int pad, RowMat<T>& cols) {
    const std::int64_t C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::int64_t OH = H + 2 * pad - k + 1, OW = W + 2 * pad - k + 1;
    cols.resize(C * k * k, OH * OW);
    for (std::int64_t c = 0; c < C; ++c) {
        for (int ki = 0; ki < k; ++ki) {
            for (int kj = 0; kj < k; ++kj) {
                T* row = cols.data() + ((c * k + ki) * k + kj) * OH * OW;
                for (std::int64_t oh = 0; oh < OH; ++oh) {
                    const std::int64_t ih = oh + ki - pad;
                    T* dst = row + oh * OW;
                    if (ih < 0 || ih >= H) {
                        for (std::int64_t ow = 0; ow < OW; ++ow) dst[ow] = T(0);
                        continue;
                    }
                    const T* src = &x.at4(b, c, ih, 0);
                    for (std::int64_t ow = 0; ow < OW; ++ow) {
                        const std::int64_t iw = ow + kj - pad;
                        dst[ow] = (iw < 0 || iw >= W) ? T(0) : src[iw];
                    }
                }
            }
        }
    }
}

template <class T>
void col2im_add(const RowMat<T>& cols, std::int64_t b, int k, int pad, Tensor<T>& dx) {
    const std::int64_t C = dx.dim(1), H = dx.dim(2), W = dx.dim(3);
    const std::int64_t OH = H + 2 * pad - k + 1, OW = W + 2 * pad - k + 1;
    for (std::int64_t c = 0; c < C; ++c) {
        for (int ki = 0; ki < k; ++ki) {
            for (int kj = 0; kj < k; ++kj) {
                const T* row = cols.data() + ((c * k + ki) * k + kj) * OH * OW;
                for (std::int64_t oh = 0; oh < OH; ++oh) {
                    const std::int64_t ih = oh + ki - pad;
                    if (ih < 0 || ih >= H) continue;
                    const T* src = row + oh * OW;
                    T* dst = &dx.at4(b, c, ih, 0);
                    for (std::int64_t ow = 0; ow < OW; ++ow) {
                        const std::int64_t iw = ow + kj - pad;
                        if (iw >= 0 && iw < W) dst[iw] += src[ow];
                    }
                }
            }
        }
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// conv2d: x[B,Cin,H,W] (*) w[Cout,Cin,k,k] + b[Cout], stride 1, zero padding
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> conv2d_fwd(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, int pad) {
    require_rank(x, 4, "conv2d input");
    require_rank(w, 4, "conv2d weight");
    const std::int64_t B = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::int64_t Co = w.dim(0), k = w.dim(2);
    if (k % 2 == 0) throw std::invalid_argument("conv2d: even kernel size " + std::to_string(k));
    if (w.dim(1) != Ci || w.dim(3) != k)
        throw std::invalid_argument("conv2d: weight shape " + shape_str(w.shape()) + " incompatible with input " +
                                    shape_str(x.shape()));
    require_shape(b, {Co}, "conv2d bias");
    const std::int64_t OH = H + 2 * pad - k + 1, OW = W + 2 * pad - k + 1;
    if (OH <= 0 || OW <= 0)
        throw std::invalid_argument("conv2d: kernel " + std::to_string(k) + " with pad " + std::to_string(pad) +
                                    " exceeds input " + shape_str(x.shape()));
    Tensor<T> y({B, Co, OH, OW});
    MapCRM<T> wm(w.data(), Co, Ci * k * k);
    RowMat<T> cols;
    for (std::int64_t bi = 0; bi < B; ++bi) {
        MapRM<T> ym(&y.at4(bi, 0, 0, 0), Co, OH * OW);
        if (k == 1 && pad == 0) {
            MapCRM<T> xm(&x.at4(bi, 0, 0, 0), Ci, H * W);
            ym.noalias() = wm * xm;
        } else {
            detail::im2col(x, bi, static_cast<int>(k), pad, cols);
            ym.noalias() = wm * cols;
        }
        ym.colwise() += MapCRM<T>(b.data(), Co, 1).col(0);
    }
    assert_finite(y, "conv2d output");
    return y;
}

template <class T>
void conv2d_bwd(const Tensor<T>& x, const Tensor<T>& w, int pad, const Tensor<T>& dy, Tensor<T>& dx, Tensor<T>& dw,
                Tensor<T>& db) {
    const std::int64_t B = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::int64_t Co = w.dim(0), k = w.dim(2);
    const std::int64_t OH = dy.dim(2), OW = dy.dim(3);
    dx = Tensor<T>(x.shape());
    dw = Tensor<T>(w.shape());
    db = Tensor<T>({Co});
    MapCRM<T> wm(w.data(), Co, Ci * k * k);
    MapRM<T> dwm(dw.data(), Co, Ci * k * k);
    RowMat<T> cols, dcols;
    for (std::int64_t bi = 0; bi < B; ++bi) {
        MapCRM<T> dym(&dy.at4(bi, 0, 0, 0), Co, OH * OW);
        if (k == 1 && pad == 0) {
            MapCRM<T> xm(&x.at4(bi, 0, 0, 0), Ci, H * W);
            dwm.noalias() += dym * xm.transpose();
            MapRM<T> dxm(&dx.at4(bi, 0, 0, 0), Ci, H * W);
            dxm.noalias() += wm.transpose() * dym;
        } else {
            detail::im2col(x, bi, static_cast<int>(k), pad, cols);
            dwm.noalias() += dym * cols.transpose();
            dcols.noalias() = wm.transpose() * dym;
            detail::col2im_add(dcols, bi, static_cast<int>(k), pad, dx);
        }
        MapRM<T>(db.data(), Co, 1).col(0) += dym.rowwise().sum();
    }
}

// ---------------------------------------------------------------------------
// 2x average pooling / upsampling
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> avg_pool2_fwd(const Tensor<T>& x) {
    require_rank(x, 4, "avg_pool2 input");
    const std::int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (H % 2 != 0 || W % 2 != 0)
        throw std::invalid_argument("avg_pool2: spatial dims must be even, got " + shape_str(x.shape()));
    Tensor<T> y({B, C, H / 2, W / 2});
    for (std::int64_t b = 0; b < B; ++b)
        for (std::int64_t c = 0; c < C; ++c)
            for (std::int64_t h = 0; h < H / 2; ++h)
                for (std::int64_t w = 0; w < W / 2; ++w)
                    y.at4(b, c, h, w) = (x.at4(b, c, 2 * h, 2 * w) + x.at4(b, c, 2 * h, 2 * w + 1) +
                                         x.at4(b, c, 2 * h + 1, 2 * w) + x.at4(b, c, 2 * h + 1, 2 * w + 1)) /
                                        T(4);
    return y;
}

template <class T>
Tensor<T> avg_pool2_bwd(const Tensor<T>& x_shape_like, const Tensor<T>& dy) {
    const std::int64_t B = dy.dim(0), C = dy.dim(1), OH = dy.dim(2), OW = dy.dim(3);
    Tensor<T> dx(x_shape_like.shape());
    for (std::int64_t b = 0; b < B; ++b)
        for (std::int64_t c = 0; c < C; ++c)
            for (std::int64_t h = 0; h < OH; ++h)
                for (std::int64_t w = 0; w < OW; ++w) {
                    const T g = dy.at4(b, c, h, w) / T(4);
                    dx.at4(b, c, 2 * h, 2 * w) = g;
                    dx.at4(b, c, 2 * h, 2 * w + 1) = g;
                    dx.at4(b, c, 2 * h + 1, 2 * w) = g;
                    dx.at4(b, c, 2 * h + 1, 2 * w + 1) = g;
                }
    return dx;
}

namespace detail {

// 2x upsampling taps for output index i of an axis of source length n
// (align-corners-false): source position i/2 - 0.25, clamped at the borders.
template <class T>
void up2_taps(std::int64_t i, std::int64_t n, UpsampleMode mode, std::int64_t& i0, std::int64_t& i1, T& w0, T& w1) {
    if (mode == UpsampleMode::nearest) {
        i0 = i1 = i / 2;
        w0 = T(1);
        w1 = T(0);
        return;
    }
    if (i % 2 == 0) {
        i0 = i / 2 - 1;
        i1 = i / 2;
        w0 = T(0.25);
        w1 = T(0.75);
    } else {
        i0 = i / 2;
        i1 = i / 2 + 1;
        w0 = T(0.75);
        w1 = T(0.25);
    }
    if (i0 < 0) i0 = 0;
    if (i1 > n - 1) i1 = n - 1;
}

}  // namespace detail

template <class T>
Tensor<T> upsample2_fwd(const Tensor<T>& x, UpsampleMode mode) {
    require_rank(x, 4, "upsample2 input");
    const std::int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    Tensor<T> y({B, C, 2 * H, 2 * W});
    for (std::int64_t b = 0; b < B; ++b)
        for (std::int64_t c = 0; c < C; ++c)
            for (std::int64_t h = 0; h < 2 * H; ++h) {
                std::int64_t h0, h1;
                T wh0, wh1;
                detail::up2_taps(h, H, mode, h0, h1, wh0, wh1);
                for (std::int64_t w = 0; w < 2 * W; ++w) {
                    std::int64_t w0, w1;
                    T ww0, ww1;
                    detail::up2_taps(w, W, mode, w0, w1, ww0, ww1);
                    y.at4(b, c, h, w) = wh0 * (ww0 * x.at4(b, c, h0, w0) + ww1 * x.at4(b, c, h0, w1)) +
                                        wh1 * (ww0 * x.at4(b, c, h1, w0) + ww1 * x.at4(b, c, h1, w1));
                }
            }
    return y;
}

template <class T>
Tensor<T> upsample2_bwd(const Tensor<T>& x_shape_like, const Tensor<T>& dy, UpsampleMode mode) {
    const std::int64_t B = x_shape_like.dim(0), C = x_shape_like.dim(1), H = x_shape_like.dim(2),
                       W = x_shape_like.dim(3);
    Tensor<T> dx(x_shape_like.shape());
    for (std::int64_t b = 0; b < B; ++b)
        for (std::int64_t c = 0; c < C; ++c)
            for (std::int64_t h = 0; h < 2 * H; ++h) {
                std::int64_t h0, h1;
                T wh0, wh1;
                detail::up2_taps(h, H, mode, h0, h1, wh0, wh1);
                for (std::int64_t w = 0; w < 2 * W; ++w) {
                    std::int64_t w0, w1;
                    T ww0, ww1;
                    detail::up2_taps(w, W, mode, w0, w1, ww0, ww1);
                    const T g = dy.at4(b, c, h, w);
                    dx.at4(b, c, h0, w0) += g * wh0 * ww0;
                    dx.at4(b, c, h0, w1) += g * wh0 * ww1;
                    dx.at4(b, c, h1, w0) += g * wh1 * ww0;
                    dx.at4(b, c, h1, w1) += g * wh1 * ww1;
                }
            }
    return dx;
}

// ---------------------------------------------------------------------------
// dense: y[M,N] = x[M,K] . w[K,N] + b[N]   (b may be empty for no bias)
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> dense_fwd(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
    require_rank(x, 2, "dense input");
    require_rank(w, 2, "dense weight");
    const std::int64_t M = x.dim(0), K = x.dim(1), N = w.dim(1);
    if (w.dim(0) != K)
        throw std::invalid_argument("dense: inner dims mismatch, x " + shape_str(x.shape()) + " vs w " +
                                    shape_str(w.shape()));
    Tensor<T> y({M, N});
    MapRM<T>(y.data(), M, N).noalias() = MapCRM<T>(x.data(), M, K) * MapCRM<T>(w.data(), K, N);
    if (!b.empty()) {
        require_shape(b, {N}, "dense bias");
        MapRM<T>(y.data(), M, N).rowwise() += MapCRM<T>(b.data(), 1, N).row(0);
    }
    assert_finite(y, "dense output");
    return y;
}

template <class T>
void dense_bwd(const Tensor<T>& x, const Tensor<T>& w, bool has_bias, const Tensor<T>& dy, Tensor<T>& dx,
               Tensor<T>& dw, Tensor<T>& db) {
    const std::int64_t M = x.dim(0), K = x.dim(1), N = w.dim(1);
    dx = Tensor<T>(x.shape());
    dw = Tensor<T>(w.shape());
    MapCRM<T> dym(dy.data(), M, N);
    MapRM<T>(dx.data(), M, K).noalias() = dym * MapCRM<T>(w.data(), K, N).transpose();
    MapRM<T>(dw.data(), K, N).noalias() = MapCRM<T>(x.data(), M, K).transpose() * dym;
    if (has_bias) {
        db = Tensor<T>({N});
        MapRM<T>(db.data(), 1, N).row(0) = dym.colwise().sum();
    }
}

// y = x.w + b followed by an optional activation, the mapping-layer primitive
template <class T>
Tensor<T> dense_and_activation(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, Activation act) {
    Tensor<T> y = dense_fwd(x, w, b);
    if (act == Activation::silu) y = silu_fwd(y);
    return y;
}

// ---------------------------------------------------------------------------
// silu(z) = z * sigmoid(z)
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> silu_fwd(const Tensor<T>& x) {
    Tensor<T> y(x.shape());
    for (std::int64_t i = 0; i < x.numel(); ++i) {
        const T s = T(1) / (T(1) + std::exp(-x[i]));
        y[i] = x[i] * s;
    }
    return y;
}

template <class T>
Tensor<T> silu_bwd(const Tensor<T>& x, const Tensor<T>& dy) {
    Tensor<T> dx(x.shape());
    for (std::int64_t i = 0; i < x.numel(); ++i) {
        const T s = T(1) / (T(1) + std::exp(-x[i]));
        dx[i] = dy[i] * s * (T(1) + x[i] * (T(1) - s));
    }
    return dx;
}

// ---------------------------------------------------------------------------
// group normalization over [B,C,H,W] with per-channel scale/shift
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> group_norm_fwd(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, int groups,
                         Tensor<T>* save_mean = nullptr, Tensor<T>* save_inv = nullptr) {
    require_rank(x, 4, "group_norm input");
    const std::int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (C % groups != 0)
        throw std::invalid_argument("group_norm: channels " + std::to_string(C) + " not divisible by groups " +
                                    std::to_string(groups));
    require_shape(gamma, {C}, "group_norm gamma");
    require_shape(beta, {C}, "group_norm beta");
    const std::int64_t cpg = C / groups, m = cpg * H * W;
    const T eps = T(1e-5);
    Tensor<T> y(x.shape());
    Tensor<T> mean({B, static_cast<std::int64_t>(groups)});
    Tensor<T> inv({B, static_cast<std::int64_t>(groups)});
    for (std::int64_t b = 0; b < B; ++b) {
        for (std::int64_t g = 0; g < groups; ++g) {
            T mu = 0;
            for (std::int64_t c = g * cpg; c < (g + 1) * cpg; ++c)
                for (std::int64_t i = 0; i < H * W; ++i) mu += (&x.at4(b, c, 0, 0))[i];
            mu /= static_cast<T>(m);
            T var = 0;
            for (std::int64_t c = g * cpg; c < (g + 1) * cpg; ++c)
                for (std::int64_t i = 0; i < H * W; ++i) {
                    const T d = (&x.at4(b, c, 0, 0))[i] - mu;
                    var += d * d;
                }
            var /= static_cast<T>(m);
            const T iv = T(1) / std::sqrt(var + eps);
            mean[b * groups + g] = mu;
            inv[b * groups + g] = iv;
            for (std::int64_t c = g * cpg; c < (g + 1) * cpg; ++c) {
                const T* xs = &x.at4(b, c, 0, 0);
                T* ys = &y.at4(b, c, 0, 0);
                for (std::int64_t i = 0; i < H * W; ++i) ys[i] = gamma[c] * (xs[i] - mu) * iv + beta[c];
            }
        }
    }
    assert_finite(y, "group_norm output");
    if (save_mean) *save_mean = std::move(mean);
    if (save_inv) *save_inv = std::move(inv);
    return y;
}

template <class T>
void group_norm_bwd(const Tensor<T>& x, const Tensor<T>& gamma, int groups, const Tensor<T>& mean,
                    const Tensor<T>& inv, const Tensor<T>& dy, Tensor<T>& dx, Tensor<T>& dgamma, Tensor<T>& dbeta) {
    const std::int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::int64_t cpg = C / groups, m = cpg * H * W;
    dx = Tensor<T>(x.shape());
    dgamma = Tensor<T>({C});
    dbeta = Tensor<T>({C});
    for (std::int64_t b = 0; b < B; ++b) {
        for (std::int64_t g = 0; g < groups; ++g) {
            const T mu = mean[b * groups + g], iv = inv[b * groups + g];
            T sum_dxh = 0, sum_dxh_xh = 0;
            for (std::int64_t c = g * cpg; c < (g + 1) * cpg; ++c) {
                const T* xs = &x.at4(b, c, 0, 0);
                const T* dys = &dy.at4(b, c, 0, 0);
                for (std::int64_t i = 0; i < H * W; ++i) {
                    const T xh = (xs[i] - mu) * iv;
                    dbeta[c] += dys[i];
                    dgamma[c] += dys[i] * xh;
                    const T dxh = dys[i] * gamma[c];
                    sum_dxh += dxh;
                    sum_dxh_xh += dxh * xh;
                }
            }
            const T inv_m = T(1) / static_cast<T>(m);
            for (std::int64_t c = g * cpg; c < (g + 1) * cpg; ++c) {
                const T* xs = &x.at4(b, c, 0, 0);
                const T* dys = &dy.at4(b, c, 0, 0);
                T* dxs = &dx.at4(b, c, 0, 0);
                for (std::int64_t i = 0; i < H * W; ++i) {
                    const T xh = (xs[i] - mu) * iv;
                    const T dxh = dys[i] * gamma[c];
                    dxs[i] = iv * (dxh - inv_m * sum_dxh - xh * inv_m * sum_dxh_xh);
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// channel concat / broadcast channel bias / elementwise / reductions
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> concat_channels_fwd(const Tensor<T>& a, const Tensor<T>& b) {
    require_rank(a, 4, "concat input");
    require_rank(b, 4, "concat input");
    if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3))
        throw std::invalid_argument("concat_channels: incompatible shapes " + shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
    const std::int64_t B = a.dim(0), Ca = a.dim(1), Cb = b.dim(1), H = a.dim(2), W = a.dim(3);
    Tensor<T> y({B, Ca + Cb, H, W});
    for (std::int64_t bi = 0; bi < B; ++bi) {
        std::copy_n(&a.at4(bi, 0, 0, 0), Ca * H * W, &y.at4(bi, 0, 0, 0));
        std::copy_n(&b.at4(bi, 0, 0, 0), Cb * H * W, &y.at4(bi, Ca, 0, 0));
    }
    return y;
}

// x[B,C,H,W] + e[1,C] broadcast over batch and space
template <class T>
Tensor<T> channel_bias_fwd(const Tensor<T>& x, const Tensor<T>& e) {
    require_rank(x, 4, "channel_bias input");
    require_shape(e, {std::int64_t(1), x.dim(1)}, "channel_bias embedding");
    Tensor<T> y(x.shape());
    const std::int64_t B = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
    for (std::int64_t b = 0; b < B; ++b)
        for (std::int64_t c = 0; c < C; ++c) {
            const T* xs = &x.at4(b, c, 0, 0);
            T* ys = &y.at4(b, c, 0, 0);
            for (std::int64_t i = 0; i < HW; ++i) ys[i] = xs[i] + e[c];
        }
    return y;
}

template <class T>
Tensor<T> channel_bias_bwd_e(const Tensor<T>& dy) {
    const std::int64_t B = dy.dim(0), C = dy.dim(1), HW = dy.dim(2) * dy.dim(3);
    Tensor<T> de({1, C});
    for (std::int64_t b = 0; b < B; ++b)
        for (std::int64_t c = 0; c < C; ++c) {
            const T* s = &dy.at4(b, c, 0, 0);
            for (std::int64_t i = 0; i < HW; ++i) de[c] += s[i];
        }
    return de;
}

template <class T>
Tensor<T> ew_add(const Tensor<T>& a, const Tensor<T>& b) {
    if (!a.same_shape(b))
        throw std::invalid_argument("add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    Tensor<T> y(a.shape());
    for (std::int64_t i = 0; i < y.numel(); ++i) y[i] = a[i] + b[i];
    return y;
}

template <class T>
Tensor<T> ew_sub(const Tensor<T>& a, const Tensor<T>& b) {
    if (!a.same_shape(b))
        throw std::invalid_argument("sub: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    Tensor<T> y(a.shape());
    for (std::int64_t i = 0; i < y.numel(); ++i) y[i] = a[i] - b[i];
    return y;
}

template <class T>
Tensor<T> ew_mul(const Tensor<T>& a, const Tensor<T>& b) {
    if (!a.same_shape(b))
        throw std::invalid_argument("mul: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    Tensor<T> y(a.shape());
    for (std::int64_t i = 0; i < y.numel(); ++i) y[i] = a[i] * b[i];
    return y;
}

template <class T>
Tensor<T> ew_scale(const Tensor<T>& a, T c) {
    Tensor<T> y(a.shape());
    for (std::int64_t i = 0; i < y.numel(); ++i) y[i] = a[i] * c;
    return y;
}

template <class T>
Tensor<T> ew_axpy(T alpha, const Tensor<T>& x, const Tensor<T>& y) {  // alpha*x + y
    if (!x.same_shape(y))
        throw std::invalid_argument("axpy: shape mismatch " + shape_str(x.shape()) + " vs " + shape_str(y.shape()));
    Tensor<T> r(x.shape());
    for (std::int64_t i = 0; i < r.numel(); ++i) r[i] = alpha * x[i] + y[i];
    return r;
}

template <class T>
T reduce_sum(const Tensor<T>& a) {
    T s = 0;
    for (std::int64_t i = 0; i < a.numel(); ++i) s += a[i];
    return s;
}

template <class T>
T reduce_mean(const Tensor<T>& a) {
    return reduce_sum(a) / static_cast<T>(a.numel());
}

}  // namespace lowdiff
