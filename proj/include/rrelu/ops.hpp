#pragma once

// Plain-tensor forward/backward math.  The autodiff layer (autodiff.hpp) and
// the evaluation-only model path both build on these.  Summation order is
// fixed everywhere (row-major, contraction index ascending) so single-thread
// runs are bit-reproducible.

#include <algorithm>
#include <cmath>
#include <cstring>
#include <utility>
#include <vector>

#include "rrelu/error.hpp"
#include "rrelu/kernels.hpp"
#include "rrelu/tensor.hpp"

namespace rrelu::ops {

namespace detail {

// C = A * B with a per-element fma chain over k ascending.  The float
// instantiation goes through the runtime-dispatched kernels.
template <typename T>
void matmul_buf(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
    if constexpr (std::is_same_v<T, float>) {
        kernels::active().matmul(a, b, c, m, k, n);
    } else {
        for (std::size_t i = 0; i < m; ++i) {
            T* crow = c + i * n;
            std::fill(crow, crow + n, T(0));
            for (std::size_t p = 0; p < k; ++p) {
                const T av = a[i * k + p];
                const T* brow = b + p * n;
                for (std::size_t j = 0; j < n; ++j) crow[j] = std::fma(av, brow[j], crow[j]);
            }
        }
    }
}

}  // namespace detail

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0))
        throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape) + " and " +
                             shape_str(b.shape));
    Tensor<T> c({a.dim(0), b.dim(1)});
    detail::matmul_buf(a.ptr(), b.ptr(), c.ptr(), a.dim(0), a.dim(1), b.dim(1));
    return c;
}

template <typename T>
Tensor<T> transpose2d(const Tensor<T>& a) {
    if (a.ndim() != 2) throw DimensionError("transpose2d: expected 2-d tensor");
    Tensor<T> t({a.dim(1), a.dim(0)});
    for (std::size_t i = 0; i < a.dim(0); ++i)
        for (std::size_t j = 0; j < a.dim(1); ++j) t[j * a.dim(0) + i] = a[i * a.dim(1) + j];
    return t;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    if (!a.same_shape(b))
        throw DimensionError("add: shape mismatch " + shape_str(a.shape) + " vs " +
                             shape_str(b.shape));
    Tensor<T> c = a;
    for (std::size_t i = 0; i < c.size(); ++i) c[i] += b[i];
    return c;
}

template <typename T>
Tensor<T> add_rowvec(const Tensor<T>& x, const Tensor<T>& bias) {
    if (x.ndim() != 2 || bias.ndim() != 1 || bias.dim(0) != x.dim(1))
        throw DimensionError("add_rowvec: " + shape_str(x.shape) + " vs " + shape_str(bias.shape));
    Tensor<T> y = x;
    for (std::size_t i = 0; i < x.dim(0); ++i)
        for (std::size_t j = 0; j < x.dim(1); ++j) y[i * x.dim(1) + j] += bias[j];
    return y;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
    Tensor<T> y = x;
    for (auto& v : y.data) v = v > T(0) ? v : T(0);
    return y;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& up) {
    Tensor<T> dx(x.shape);
    for (std::size_t i = 0; i < x.size(); ++i) dx[i] = x[i] > T(0) ? up[i] : T(0);
    return dx;
}

// ---------------------------------------------------------------------------
// RReLU: h[c,...] = b[c] * max(0, x[c,...]), channel axis 1 (axis 0 is batch).
// ---------------------------------------------------------------------------

inline std::size_t channel_count(const std::vector<std::size_t>& shape) {
    if (shape.size() < 2) throw DimensionError("rrelu: tensor needs a channel axis (dim 1)");
    return shape[1];
}

template <typename T>
Tensor<T> rrelu_forward(const Tensor<T>& x, const Tensor<T>& b) {
    const std::size_t c = channel_count(x.shape);
    if (b.ndim() != 1 || b.dim(0) != c)
        throw DimensionError("rrelu: slope vector length " + std::to_string(b.size()) +
                             " vs channel count " + std::to_string(c));
    std::size_t inner = 1;
    for (std::size_t d = 2; d < x.ndim(); ++d) inner *= x.dim(d);
    const std::size_t batch = x.dim(0);
    Tensor<T> y(x.shape);
    for (std::size_t n = 0; n < batch; ++n)
        for (std::size_t ch = 0; ch < c; ++ch) {
            const T* xs = x.ptr() + (n * c + ch) * inner;
            T* ys = y.ptr() + (n * c + ch) * inner;
            if constexpr (std::is_same_v<T, float>) {
                kernels::active().chan_scale_relu(inner, b[ch], xs, ys);
            } else {
                for (std::size_t i = 0; i < inner; ++i) {
                    T r = xs[i] > T(0) ? xs[i] : T(0);
                    ys[i] = b[ch] * r;
                }
            }
        }
    return y;
}

// grad_x = b[c] * 1[x>0] * up ;  grad_b[c] = sum max(0,x) * up.
// Subgradient at x == 0 is 0.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> rrelu_backward(const Tensor<T>& up, const Tensor<T>& x,
                                               const Tensor<T>& b) {
    const std::size_t c = channel_count(x.shape);
    if (b.dim(0) != c || !up.same_shape(x))
        throw DimensionError("rrelu_backward: inconsistent shapes");
    std::size_t inner = 1;
    for (std::size_t d = 2; d < x.ndim(); ++d) inner *= x.dim(d);
    Tensor<T> dx(x.shape);
    Tensor<T> db({c});
    for (std::size_t n = 0; n < x.dim(0); ++n)
        for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t base = (n * c + ch) * inner;
            T acc = db[ch];
            for (std::size_t i = 0; i < inner; ++i) {
                const T xv = x[base + i];
                dx[base + i] = xv > T(0) ? b[ch] * up[base + i] : T(0);
                if (xv > T(0)) acc = std::fma(xv, up[base + i], acc);
            }
            db[ch] = acc;
        }
    return {std::move(dx), std::move(db)};
}

// General form b * max(0, a*x) with a in {+1,-1} per channel.
template <typename T>
Tensor<T> rrelu_general_forward(const Tensor<T>& x, const Tensor<T>& a, const Tensor<T>& b) {
    const std::size_t c = channel_count(x.shape);
    if (a.dim(0) != c || b.dim(0) != c)
        throw DimensionError("rrelu_general: parameter length vs channel count");
    for (T av : a.data)
        if (av != T(1) && av != T(-1))
            throw ContractError("rrelu_general: sign entry must be +1 or -1");
    std::size_t inner = 1;
    for (std::size_t d = 2; d < x.ndim(); ++d) inner *= x.dim(d);
    Tensor<T> y(x.shape);
    for (std::size_t n = 0; n < x.dim(0); ++n)
        for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t base = (n * c + ch) * inner;
            for (std::size_t i = 0; i < inner; ++i) {
                T ax = a[ch] * x[base + i];
                y[base + i] = b[ch] * (ax > T(0) ? ax : T(0));
            }
        }
    return y;
}

// ---------------------------------------------------------------------------
// Convolution (cross-correlation, no kernel flip).
// x [N,C,H,W], w [F,C,k,k] -> y [N,F,H',W'].
// Implemented as im2col + matmul; the im2col row order (c, ki, kj) makes the
// contraction order identical to the naive six-nested-loop form.
// ---------------------------------------------------------------------------

inline std::size_t conv_out_dim(std::size_t in, std::size_t k, std::size_t stride,
                                std::size_t pad) {
    if (k > in + 2 * pad) throw DimensionError("conv2d: kernel larger than padded input");
    return (in + 2 * pad - k) / stride + 1;
}

template <typename T>
void im2col(const T* x, std::size_t c, std::size_t h, std::size_t w, std::size_t k,
            std::size_t stride, std::size_t pad, std::size_t oh, std::size_t ow, T* col) {
    const std::size_t ohw = oh * ow;
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t ki = 0; ki < k; ++ki)
            for (std::size_t kj = 0; kj < k; ++kj) {
                T* row = col + ((ch * k + ki) * k + kj) * ohw;
                for (std::size_t i = 0; i < oh; ++i) {
                    const std::ptrdiff_t yi = static_cast<std::ptrdiff_t>(i * stride + ki) -
                                              static_cast<std::ptrdiff_t>(pad);
                    for (std::size_t j = 0; j < ow; ++j) {
                        const std::ptrdiff_t xj = static_cast<std::ptrdiff_t>(j * stride + kj) -
                                                  static_cast<std::ptrdiff_t>(pad);
                        T v = T(0);
                        if (yi >= 0 && yi < static_cast<std::ptrdiff_t>(h) && xj >= 0 &&
                            xj < static_cast<std::ptrdiff_t>(w))
                            v = x[(ch * h + static_cast<std::size_t>(yi)) * w +
                                  static_cast<std::size_t>(xj)];
                        row[i * ow + j] = v;
                    }
                }
            }
}

template <typename T>
void col2im_add(const T* col, std::size_t c, std::size_t h, std::size_t w, std::size_t k,
                std::size_t stride, std::size_t pad, std::size_t oh, std::size_t ow, T* x) {
    const std::size_t ohw = oh * ow;
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t ki = 0; ki < k; ++ki)
            for (std::size_t kj = 0; kj < k; ++kj) {
                const T* row = col + ((ch * k + ki) * k + kj) * ohw;
                for (std::size_t i = 0; i < oh; ++i) {
                    const std::ptrdiff_t yi = static_cast<std::ptrdiff_t>(i * stride + ki) -
                                              static_cast<std::ptrdiff_t>(pad);
                    if (yi < 0 || yi >= static_cast<std::ptrdiff_t>(h)) continue;
                    for (std::size_t j = 0; j < ow; ++j) {
                        const std::ptrdiff_t xj = static_cast<std::ptrdiff_t>(j * stride + kj) -
                                                  static_cast<std::ptrdiff_t>(pad);
                        if (xj < 0 || xj >= static_cast<std::ptrdiff_t>(w)) continue;
                        x[(ch * h + static_cast<std::size_t>(yi)) * w +
                          static_cast<std::size_t>(xj)] += row[i * ow + j];
                    }
                }
            }
}

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& w, std::size_t stride,
                         std::size_t pad) {
    if (x.ndim() != 4 || w.ndim() != 4)
        throw DimensionError("conv2d: expected x [N,C,H,W] and w [F,C,k,k]");
    if (x.dim(1) != w.dim(1))
        throw DimensionError("conv2d: input channels " + std::to_string(x.dim(1)) +
                             " vs filter channels " + std::to_string(w.dim(1)));
    if (w.dim(2) != w.dim(3)) throw DimensionError("conv2d: non-square kernel");
    const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
    const std::size_t f = w.dim(0), k = w.dim(2);
    const std::size_t oh = conv_out_dim(h, k, stride, pad);
    const std::size_t ow = conv_out_dim(wd, k, stride, pad);
    Tensor<T> y({n, f, oh, ow});
    if (c == 0 || f == 0) return y;  // degenerate pruned layer: all-zero output
    const std::size_t ckk = c * k * k;
    Tensor<T> col({ckk, oh * ow});
    for (std::size_t s = 0; s < n; ++s) {
        im2col(x.ptr() + s * c * h * wd, c, h, wd, k, stride, pad, oh, ow, col.ptr());
        detail::matmul_buf(w.ptr(), col.ptr(), y.ptr() + s * f * oh * ow, f, ckk, oh * ow);
    }
    return y;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> conv2d_backward(const Tensor<T>& x, const Tensor<T>& w,
                                                std::size_t stride, std::size_t pad,
                                                const Tensor<T>& up) {
    const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
    const std::size_t f = w.dim(0), k = w.dim(2);
    const std::size_t oh = up.dim(2), ow = up.dim(3);
    Tensor<T> dx(x.shape);
    Tensor<T> dw(w.shape);
    if (c == 0 || f == 0) return {std::move(dx), std::move(dw)};
    const std::size_t ckk = c * k * k, ohw = oh * ow;
    Tensor<T> col({ckk, ohw});
    Tensor<T> dws({f, ckk});
    const Tensor<T> wt = transpose2d(Tensor<T>({f, ckk}, w.data));
    Tensor<T> dcol({ckk, ohw});
    for (std::size_t s = 0; s < n; ++s) {
        im2col(x.ptr() + s * c * h * wd, c, h, wd, k, stride, pad, oh, ow, col.ptr());
        // dW += up_s * col^T
        const Tensor<T> colt = transpose2d(col);
        const T* upS = up.ptr() + s * f * ohw;
        detail::matmul_buf(upS, colt.ptr(), dws.ptr(), f, ohw, ckk);
        for (std::size_t i = 0; i < dw.size(); ++i) dw[i] += dws[i];
        // dx_s = col2im(w^T * up_s)
        detail::matmul_buf(wt.ptr(), upS, dcol.ptr(), ckk, f, ohw);
        col2im_add(dcol.ptr(), c, h, wd, k, stride, pad, oh, ow, dx.ptr() + s * c * h * wd);
    }
    return {std::move(dx), std::move(dw)};
}

// ---------------------------------------------------------------------------
// Batch normalization over [N,C,H,W] (per-channel).
// ---------------------------------------------------------------------------

template <typename T>
struct BnAux {
    Tensor<T> mean;    // batch mean (train) or running mean (eval)
    Tensor<T> invstd;  // 1/sqrt(var + eps)
};

template <typename T>
Tensor<T> batchnorm2d_forward(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                              Tensor<T>& running_mean, Tensor<T>& running_var, bool train,
                              T eps, T momentum, BnAux<T>* aux) {
    if (x.ndim() != 4) throw DimensionError("batchnorm2d: expected [N,C,H,W]");
    const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (gamma.dim(0) != c || beta.dim(0) != c)
        throw DimensionError("batchnorm2d: parameter length vs channel count " +
                             std::to_string(c));
    const std::size_t m = n * h * w;
    if (train && m < 2) throw InputError("batchnorm2d: train mode needs N*H*W >= 2");
    if (m == 0) throw InputError("batchnorm2d: degenerate batch (zero spatial-batch extent)");
    Tensor<T> mean({c}), var({c});
    if (train) {
        for (std::size_t ch = 0; ch < c; ++ch) {
            T s = 0;
            for (std::size_t i = 0; i < n; ++i) {
                const T* xs = x.ptr() + (i * c + ch) * h * w;
                for (std::size_t j = 0; j < h * w; ++j) s += xs[j];
            }
            mean[ch] = s / static_cast<T>(m);
            T sq = 0;
            for (std::size_t i = 0; i < n; ++i) {
                const T* xs = x.ptr() + (i * c + ch) * h * w;
                for (std::size_t j = 0; j < h * w; ++j) {
                    const T d = xs[j] - mean[ch];
                    sq = std::fma(d, d, sq);
                }
            }
            var[ch] = sq / static_cast<T>(m);  // biased, used for normalization
            const T unbiased = m > 1 ? sq / static_cast<T>(m - 1) : var[ch];
            running_mean[ch] = (T(1) - momentum) * running_mean[ch] + momentum * mean[ch];
            running_var[ch] = (T(1) - momentum) * running_var[ch] + momentum * unbiased;
        }
    } else {
        mean = running_mean;
        var = running_var;
    }
    Tensor<T> invstd({c});
    for (std::size_t ch = 0; ch < c; ++ch) invstd[ch] = T(1) / std::sqrt(var[ch] + eps);
    Tensor<T> y(x.shape);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t ch = 0; ch < c; ++ch) {
            const T* xs = x.ptr() + (i * c + ch) * h * w;
            T* ys = y.ptr() + (i * c + ch) * h * w;
            const T a = gamma[ch] * invstd[ch];
            const T b = beta[ch] - a * mean[ch];
            for (std::size_t j = 0; j < h * w; ++j) ys[j] = std::fma(a, xs[j], b);
        }
    if (aux) {
        aux->mean = std::move(mean);
        aux->invstd = std::move(invstd);
    }
    return y;
}

// Backward through batch statistics (train mode).
template <typename T>
void batchnorm2d_backward_train(const Tensor<T>& x, const Tensor<T>& gamma, const BnAux<T>& aux,
                                const Tensor<T>& up, Tensor<T>& dx, Tensor<T>& dgamma,
                                Tensor<T>& dbeta) {
    const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    const T m = static_cast<T>(n * hw);
    dx = Tensor<T>(x.shape);
    dgamma = Tensor<T>({c});
    dbeta = Tensor<T>({c});
    for (std::size_t ch = 0; ch < c; ++ch) {
        T sdy = 0, sdyx = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t base = (i * c + ch) * hw;
            for (std::size_t j = 0; j < hw; ++j) {
                const T xhat = (x[base + j] - aux.mean[ch]) * aux.invstd[ch];
                sdy += up[base + j];
                sdyx = std::fma(up[base + j], xhat, sdyx);
            }
        }
        dgamma[ch] = sdyx;
        dbeta[ch] = sdy;
        const T scale = gamma[ch] * aux.invstd[ch] / m;
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t base = (i * c + ch) * hw;
            for (std::size_t j = 0; j < hw; ++j) {
                const T xhat = (x[base + j] - aux.mean[ch]) * aux.invstd[ch];
                dx[base + j] = scale * (m * up[base + j] - sdy - xhat * sdyx);
            }
        }
    }
}

// Eval mode: an affine map with fixed statistics.
template <typename T>
void batchnorm2d_backward_eval(const Tensor<T>& x, const Tensor<T>& gamma, const BnAux<T>& aux,
                               const Tensor<T>& up, Tensor<T>& dx, Tensor<T>& dgamma,
                               Tensor<T>& dbeta) {
    const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    dx = Tensor<T>(x.shape);
    dgamma = Tensor<T>({c});
    dbeta = Tensor<T>({c});
    for (std::size_t ch = 0; ch < c; ++ch) {
        const T gi = gamma[ch] * aux.invstd[ch];
        T sdy = 0, sdyx = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t base = (i * c + ch) * hw;
            for (std::size_t j = 0; j < hw; ++j) {
                const T xhat = (x[base + j] - aux.mean[ch]) * aux.invstd[ch];
                sdy += up[base + j];
                sdyx = std::fma(up[base + j], xhat, sdyx);
                dx[base + j] = gi * up[base + j];
            }
        }
        dgamma[ch] = sdyx;
        dbeta[ch] = sdy;
    }
}

// ---------------------------------------------------------------------------
// Pooling / reshaping / residual plumbing
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
    if (x.ndim() != 4) throw DimensionError("global_avg_pool: expected [N,C,H,W]");
    const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    if (hw == 0) throw InputError("global_avg_pool: zero spatial extent");
    Tensor<T> y({n, c});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t ch = 0; ch < c; ++ch) {
            const T* xs = x.ptr() + (i * c + ch) * hw;
            T s = 0;
            for (std::size_t j = 0; j < hw; ++j) s += xs[j];
            y[i * c + ch] = s / static_cast<T>(hw);
        }
    return y;
}

template <typename T>
Tensor<T> global_avg_pool_backward(const std::vector<std::size_t>& xshape, const Tensor<T>& up) {
    Tensor<T> dx(xshape);
    const std::size_t n = xshape[0], c = xshape[1], hw = xshape[2] * xshape[3];
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t ch = 0; ch < c; ++ch) {
            const T g = up[i * c + ch] / static_cast<T>(hw);
            T* ds = dx.ptr() + (i * c + ch) * hw;
            for (std::size_t j = 0; j < hw; ++j) ds[j] = g;
        }
    return dx;
}

// Identity shortcut across a stride-2 stage transition: spatial subsampling
// plus zero-padded channels (parameter-free).
template <typename T>
Tensor<T> downsample_pad(const Tensor<T>& x, std::size_t stride, std::size_t pad_channels) {
    const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::size_t oh = (h + stride - 1) / stride, ow = (w + stride - 1) / stride;
    Tensor<T> y({n, c + pad_channels, oh, ow});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t r = 0; r < oh; ++r)
                for (std::size_t q = 0; q < ow; ++q)
                    y[((i * (c + pad_channels) + ch) * oh + r) * ow + q] =
                        x[((i * c + ch) * h + r * stride) * w + q * stride];
    return y;
}

template <typename T>
Tensor<T> downsample_pad_backward(const std::vector<std::size_t>& xshape, std::size_t stride,
                                  std::size_t pad_channels, const Tensor<T>& up) {
    const std::size_t n = xshape[0], c = xshape[1], h = xshape[2], w = xshape[3];
    const std::size_t oh = (h + stride - 1) / stride, ow = (w + stride - 1) / stride;
    Tensor<T> dx(xshape);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t r = 0; r < oh; ++r)
                for (std::size_t q = 0; q < ow; ++q)
                    dx[((i * c + ch) * h + r * stride) * w + q * stride] =
                        up[((i * (c + pad_channels) + ch) * oh + r) * ow + q];
    return dx;
}

// Scatter a compacted channel set back into its full-width slots (the slots
// removed by pruning stay zero; the residual skip carries them).
template <typename T>
Tensor<T> channel_scatter(const Tensor<T>& x, const std::vector<std::size_t>& map,
                          std::size_t full_width) {
    const std::size_t n = x.dim(0), c = x.dim(1), hw = x.ndim() == 4 ? x.dim(2) * x.dim(3) : 1;
    if (map.size() != c) throw DimensionError("channel_scatter: map length vs channels");
    std::vector<std::size_t> oshape = x.shape;
    oshape[1] = full_width;
    Tensor<T> y(oshape);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t ch = 0; ch < c; ++ch)
            std::memcpy(y.ptr() + (i * full_width + map[ch]) * hw,
                        x.ptr() + (i * c + ch) * hw, hw * sizeof(T));
    return y;
}

template <typename T>
Tensor<T> channel_scatter_backward(const std::vector<std::size_t>& xshape,
                                   const std::vector<std::size_t>& map, std::size_t full_width,
                                   const Tensor<T>& up) {
    const std::size_t n = xshape[0], c = xshape[1],
                      hw = xshape.size() == 4 ? xshape[2] * xshape[3] : 1;
    Tensor<T> dx(xshape);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t ch = 0; ch < c; ++ch)
            std::memcpy(dx.ptr() + (i * c + ch) * hw,
                        up.ptr() + (i * full_width + map[ch]) * hw, hw * sizeof(T));
    return dx;
}

// ---------------------------------------------------------------------------
// Softmax cross-entropy, mean over the batch.
// ---------------------------------------------------------------------------

template <typename T>
T softmax_cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels,
                        Tensor<T>* dlogits = nullptr) {
    if (logits.ndim() != 2 || logits.dim(0) != labels.size())
        throw DimensionError("softmax_cross_entropy: logits " + shape_str(logits.shape) +
                             " vs " + std::to_string(labels.size()) + " labels");
    const std::size_t n = logits.dim(0), k = logits.dim(1);
    for (int lbl : labels)
        if (lbl < 0 || static_cast<std::size_t>(lbl) >= k)
            throw InputError("softmax_cross_entropy: label " + std::to_string(lbl) +
                             " out of range [0," + std::to_string(k) + ")");
    if (dlogits) *dlogits = Tensor<T>(logits.shape);
    T loss = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const T* row = logits.ptr() + i * k;
        T mx = row[0];
        for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
        T se = 0;
        for (std::size_t j = 0; j < k; ++j) se += std::exp(row[j] - mx);
        const T lse = mx + std::log(se);
        loss += lse - row[labels[i]];
        if (dlogits) {
            T* drow = dlogits->ptr() + i * k;
            for (std::size_t j = 0; j < k; ++j)
                drow[j] = std::exp(row[j] - lse) / static_cast<T>(n);
            drow[labels[i]] -= T(1) / static_cast<T>(n);
        }
    }
    return loss / static_cast<T>(n);
}

template <typename T>
std::vector<int> argmax_rows(const Tensor<T>& logits) {
    const std::size_t n = logits.dim(0), k = logits.dim(1);
    std::vector<int> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const T* row = logits.ptr() + i * k;
        std::size_t best = 0;
        for (std::size_t j = 1; j < k; ++j)
            if (row[j] > row[best]) best = j;
        out[i] = static_cast<int>(best);
    }
    return out;
}

}  // namespace rrelu::ops
