#pragma once

#include <Eigen/Core>
#include <cmath>

#include "hdn/core/parallel.hpp"
#include "hdn/nn/graph.hpp"

namespace hdn::nn {

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatCM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor>;

template <typename T>
inline void accum(const std::shared_ptr<Node<T>>& p, std::size_t i, T g) {
    if (p->requires_grad) p->grad.v[i] += g;
}

// ---------------------------------------------------------------------------
// elementwise ops

template <typename T, typename F, typename DF>
Var<T> unary_elementwise(const Var<T>& x, F f, DF df) {
    Tensor<T> out = Tensor<T>::uninit(x.value().shape);
    const auto& xv = x.value().v;
    for (std::size_t i = 0; i < xv.size(); ++i) out.v[i] = f(xv[i]);
    return make_op<T>(std::move(out), {x}, [x, df]() {
        return [x, df](Node<T>& n) {
            auto p = x.node();
            if (!p->requires_grad) return;
            for (std::size_t i = 0; i < n.grad.v.size(); ++i)
                p->grad.v[i] += n.grad.v[i] * df(p->val.v[i], n.val.v[i]);
        };
    });
}

template <typename T>
using ArrMap = Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>>;
template <typename T>
using ConstArrMap = Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>>;

template <typename T>
Var<T> elu(const Var<T>& x) {
    // max/min split keeps the expression SIMD-friendly: exp sees only the
    // non-positive half, so it cannot overflow either.
    Tensor<T> out = Tensor<T>::uninit(x.value().shape);
    const auto n = static_cast<Eigen::Index>(out.numel());
    ConstArrMap<T> xv(x.value().data(), n);
    ArrMap<T>(out.data(), n) = xv.max(T(0)) + xv.min(T(0)).exp() - T(1);
    return make_op<T>(std::move(out), {x}, [x]() {
        return [x](Node<T>& node) {
            auto p = x.node();
            if (!p->requires_grad) return;
            const auto n = static_cast<Eigen::Index>(node.grad.numel());
            ConstArrMap<T> g(node.grad.data(), n), xv(p->val.data(), n);
            // d/dx = 1 for x > 0, exp(x) otherwise == exp(min(x, 0))
            ArrMap<T>(p->grad.data(), n) += g * xv.min(T(0)).exp();
        };
    });
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
    Tensor<T> out = Tensor<T>::uninit(x.value().shape);
    const auto n = static_cast<Eigen::Index>(out.numel());
    ConstArrMap<T> xv(x.value().data(), n);
    ArrMap<T>(out.data(), n) = T(1) / (T(1) + (-xv).exp());
    return make_op<T>(std::move(out), {x}, [x]() {
        return [x](Node<T>& node) {
            auto p = x.node();
            if (!p->requires_grad) return;
            const auto n = static_cast<Eigen::Index>(node.grad.numel());
            ConstArrMap<T> g(node.grad.data(), n), y(node.val.data(), n);
            ArrMap<T>(p->grad.data(), n) += g * y * (T(1) - y);
        };
    });
}

template <typename T>
Var<T> exp(const Var<T>& x) {
    Tensor<T> out = Tensor<T>::uninit(x.value().shape);
    const auto n = static_cast<Eigen::Index>(out.numel());
    ArrMap<T>(out.data(), n) = ConstArrMap<T>(x.value().data(), n).exp();
    return make_op<T>(std::move(out), {x}, [x]() {
        return [x](Node<T>& node) {
            auto p = x.node();
            if (!p->requires_grad) return;
            const auto n = static_cast<Eigen::Index>(node.grad.numel());
            ConstArrMap<T> g(node.grad.data(), n), y(node.val.data(), n);
            ArrMap<T>(p->grad.data(), n) += g * y;
        };
    });
}

template <typename T>
Var<T> clamp(const Var<T>& x, T lo, T hi) {
    return unary_elementwise(
        x, [lo, hi](T v) { return v < lo ? lo : (v > hi ? hi : v); },
        [lo, hi](T v, T) { return (v > lo && v < hi) ? T(1) : T(0); });
}

// y = a*x + b with scalar a, b.
template <typename T>
Var<T> affine(const Var<T>& x, T a, T b) {
    return unary_elementwise(x, [a, b](T v) { return a * v + b; }, [a](T, T) { return a; });
}

template <typename T>
Var<T> scale(const Var<T>& x, T a) {
    return affine(x, a, T(0));
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
    if (!a.value().same_shape(b.value())) throw ShapeError("add: shape mismatch");
    Tensor<T> out = Tensor<T>::uninit(a.value().shape);
    for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] = a.value().v[i] + b.value().v[i];
    return make_op<T>(std::move(out), {a, b}, [a, b]() {
        return [a, b](Node<T>& n) {
            auto pa = a.node(), pb = b.node();
            for (std::size_t i = 0; i < n.grad.v.size(); ++i) {
                accum(pa, i, n.grad.v[i]);
                accum(pb, i, n.grad.v[i]);
            }
        };
    });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
    if (!a.value().same_shape(b.value())) throw ShapeError("sub: shape mismatch");
    Tensor<T> out = Tensor<T>::uninit(a.value().shape);
    for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] = a.value().v[i] - b.value().v[i];
    return make_op<T>(std::move(out), {a, b}, [a, b]() {
        return [a, b](Node<T>& n) {
            auto pa = a.node(), pb = b.node();
            for (std::size_t i = 0; i < n.grad.v.size(); ++i) {
                accum(pa, i, n.grad.v[i]);
                accum(pb, i, -n.grad.v[i]);
            }
        };
    });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
    if (!a.value().same_shape(b.value())) throw ShapeError("mul: shape mismatch");
    Tensor<T> out = Tensor<T>::uninit(a.value().shape);
    for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] = a.value().v[i] * b.value().v[i];
    return make_op<T>(std::move(out), {a, b}, [a, b]() {
        return [a, b](Node<T>& n) {
            auto pa = a.node(), pb = b.node();
            for (std::size_t i = 0; i < n.grad.v.size(); ++i) {
                accum(pa, i, n.grad.v[i] * pb->val.v[i]);
                accum(pb, i, n.grad.v[i] * pa->val.v[i]);
            }
        };
    });
}

// Elementwise map whose value and d(value)/dx were computed by the caller
// (used for noise-model likelihood terms with analytic gradients).
template <typename T>
Var<T> map_with_grad(const Var<T>& x, Tensor<T> value, Tensor<T> dvalue_dx) {
    if (value.shape != x.value().shape || dvalue_dx.shape != x.value().shape)
        throw ShapeError("map_with_grad: shape mismatch");
    auto grad_tensor = std::make_shared<Tensor<T>>(std::move(dvalue_dx));
    return make_op<T>(std::move(value), {x}, [x, grad_tensor]() {
        return [x, grad_tensor](Node<T>& n) {
            auto p = x.node();
            if (!p->requires_grad) return;
            for (std::size_t i = 0; i < n.grad.v.size(); ++i)
                p->grad.v[i] += n.grad.v[i] * grad_tensor->v[i];
        };
    });
}

// ---------------------------------------------------------------------------
// reductions and scalars

template <typename T>
Var<T> sum_all(const Var<T>& x) {
    Tensor<T> out({1});
    T s = 0;
    for (const T& v : x.value().v) s += v;
    out.v[0] = s;
    return make_op<T>(std::move(out), {x}, [x]() {
        return [x](Node<T>& n) {
            auto p = x.node();
            if (!p->requires_grad) return;
            const T g = n.grad.v[0];
            for (auto& gv : p->grad.v) gv += g;
        };
    });
}

template <typename T>
Var<T> mean_all(const Var<T>& x) {
    return scale(sum_all(x), T(1) / static_cast<T>(x.value().numel()));
}

// max(x, threshold) for a scalar Var; gradient flows only while x > threshold.
template <typename T>
Var<T> clamp_below(const Var<T>& x, T threshold) {
    Tensor<T> out({1});
    out.v[0] = std::max(x.value().v[0], threshold);
    return make_op<T>(std::move(out), {x}, [x, threshold]() {
        return [x, threshold](Node<T>& n) {
            auto p = x.node();
            if (!p->requires_grad) return;
            if (p->val.v[0] > threshold) p->grad.v[0] += n.grad.v[0];
        };
    });
}

// ---------------------------------------------------------------------------
// KL between diagonal Gaussians, parameterized by mean and log-sigma.
// kl = ls_p - ls_q + (exp(2 ls_q) + (mu_q - mu_p)^2) / (2 exp(2 ls_p)) - 1/2

template <typename T>
Var<T> kl_map(const Var<T>& mu_q, const Var<T>& ls_q, const Var<T>& mu_p, const Var<T>& ls_p) {
    const auto& shape = mu_q.value().shape;
    if (ls_q.value().shape != shape || mu_p.value().shape != shape || ls_p.value().shape != shape)
        throw ShapeError("kl_map: shape mismatch");
    Tensor<T> out = Tensor<T>::uninit(shape);
    const std::size_t n = out.v.size();
    for (std::size_t i = 0; i < n; ++i) {
        T d = mu_q.value().v[i] - mu_p.value().v[i];
        T vq = std::exp(T(2) * ls_q.value().v[i]);
        T ivp = std::exp(T(-2) * ls_p.value().v[i]);
        out.v[i] = ls_p.value().v[i] - ls_q.value().v[i] + (vq + d * d) * ivp * T(0.5) - T(0.5);
    }
    return make_op<T>(std::move(out), {mu_q, ls_q, mu_p, ls_p}, [mu_q, ls_q, mu_p, ls_p]() {
        return [mu_q, ls_q, mu_p, ls_p](Node<T>& node) {
            auto pmq = mu_q.node(), plq = ls_q.node(), pmp = mu_p.node(), plp = ls_p.node();
            for (std::size_t i = 0; i < node.grad.v.size(); ++i) {
                const T g = node.grad.v[i];
                const T d = pmq->val.v[i] - pmp->val.v[i];
                const T vq = std::exp(T(2) * plq->val.v[i]);
                const T ivp = std::exp(T(-2) * plp->val.v[i]);
                accum(pmq, i, g * d * ivp);
                accum(pmp, i, -g * d * ivp);
                accum(plq, i, g * (vq * ivp - T(1)));
                accum(plp, i, g * (T(1) - (vq + d * d) * ivp));
            }
        };
    });
}

// ---------------------------------------------------------------------------
// shape ops

template <typename T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b) {
    const auto& sa = a.value().shape;
    const auto& sb = b.value().shape;
    if (sa.size() != 4 || sb.size() != 4 || sa[0] != sb[0] || sa[2] != sb[2] || sa[3] != sb[3])
        throw ShapeError("concat_channels: incompatible shapes");
    const int N = sa[0], Ca = sa[1], Cb = sb[1], H = sa[2], W = sa[3];
    Tensor<T> out = Tensor<T>::uninit({N, Ca + Cb, H, W});
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    for (int n = 0; n < N; ++n) {
        std::copy_n(a.value().data() + static_cast<std::size_t>(n) * Ca * plane, Ca * plane,
                    out.data() + static_cast<std::size_t>(n) * (Ca + Cb) * plane);
        std::copy_n(b.value().data() + static_cast<std::size_t>(n) * Cb * plane, Cb * plane,
                    out.data() + (static_cast<std::size_t>(n) * (Ca + Cb) + Ca) * plane);
    }
    return make_op<T>(std::move(out), {a, b}, [a, b, N, Ca, Cb, plane]() {
        return [a, b, N, Ca, Cb, plane](Node<T>& n) {
            auto pa = a.node(), pb = b.node();
            for (int item = 0; item < N; ++item) {
                const T* g = n.grad.data() + static_cast<std::size_t>(item) * (Ca + Cb) * plane;
                if (pa->requires_grad) {
                    T* ga = pa->grad.data() + static_cast<std::size_t>(item) * Ca * plane;
                    for (std::size_t i = 0; i < Ca * plane; ++i) ga[i] += g[i];
                }
                if (pb->requires_grad) {
                    T* gb = pb->grad.data() + static_cast<std::size_t>(item) * Cb * plane;
                    for (std::size_t i = 0; i < Cb * plane; ++i) gb[i] += g[Ca * plane + i];
                }
            }
        };
    });
}

template <typename T>
Var<T> slice_channels(const Var<T>& x, int c0, int c1) {
    const auto& s = x.value().shape;
    if (s.size() != 4 || c0 < 0 || c1 > s[1] || c0 >= c1)
        throw ShapeError("slice_channels: bad range");
    const int N = s[0], C = s[1], H = s[2], W = s[3], Cs = c1 - c0;
    Tensor<T> out = Tensor<T>::uninit({N, Cs, H, W});
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    for (int n = 0; n < N; ++n)
        std::copy_n(x.value().data() + (static_cast<std::size_t>(n) * C + c0) * plane, Cs * plane,
                    out.data() + static_cast<std::size_t>(n) * Cs * plane);
    return make_op<T>(std::move(out), {x}, [x, N, C, c0, Cs, plane]() {
        return [x, N, C, c0, Cs, plane](Node<T>& n) {
            auto p = x.node();
            if (!p->requires_grad) return;
            for (int item = 0; item < N; ++item) {
                const T* g = n.grad.data() + static_cast<std::size_t>(item) * Cs * plane;
                T* gx = p->grad.data() + (static_cast<std::size_t>(item) * C + c0) * plane;
                for (std::size_t i = 0; i < Cs * plane; ++i) gx[i] += g[i];
            }
        };
    });
}

// Per-channel parameter (C) broadcast to (N,C,H,W).
template <typename T>
Var<T> broadcast_chw(const Var<T>& p, int N, int H, int W) {
    const int C = static_cast<int>(p.value().numel());
    Tensor<T> out = Tensor<T>::uninit({N, C, H, W});
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
            std::fill_n(out.data() + (static_cast<std::size_t>(n) * C + c) * plane, plane,
                        p.value().v[static_cast<std::size_t>(c)]);
    return make_op<T>(std::move(out), {p}, [p, N, C, plane]() {
        return [p, N, C, plane](Node<T>& n) {
            auto pp = p.node();
            if (!pp->requires_grad) return;
            for (int item = 0; item < N; ++item)
                for (int c = 0; c < C; ++c) {
                    const T* g = n.grad.data() + (static_cast<std::size_t>(item) * C + c) * plane;
                    T s = 0;
                    for (std::size_t i = 0; i < plane; ++i) s += g[i];
                    pp->grad.v[static_cast<std::size_t>(c)] += s;
                }
        };
    });
}

template <typename T>
Var<T> upsample_nearest2(const Var<T>& x) {
    const auto& s = x.value().shape;
    const int N = s[0], C = s[1], H = s[2], W = s[3];
    Tensor<T> out = Tensor<T>::uninit({N, C, 2 * H, 2 * W});
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
            for (int h = 0; h < H; ++h)
                for (int w = 0; w < W; ++w) {
                    T v = x.value().at4(n, c, h, w);
                    out.at4(n, c, 2 * h, 2 * w) = v;
                    out.at4(n, c, 2 * h, 2 * w + 1) = v;
                    out.at4(n, c, 2 * h + 1, 2 * w) = v;
                    out.at4(n, c, 2 * h + 1, 2 * w + 1) = v;
                }
    return make_op<T>(std::move(out), {x}, [x, N, C, H, W]() {
        return [x, N, C, H, W](Node<T>& n) {
            auto p = x.node();
            if (!p->requires_grad) return;
            for (int item = 0; item < N; ++item)
                for (int c = 0; c < C; ++c)
                    for (int h = 0; h < H; ++h)
                        for (int w = 0; w < W; ++w)
                            p->grad.at4(item, c, h, w) +=
                                n.grad.at4(item, c, 2 * h, 2 * w) +
                                n.grad.at4(item, c, 2 * h, 2 * w + 1) +
                                n.grad.at4(item, c, 2 * h + 1, 2 * w) +
                                n.grad.at4(item, c, 2 * h + 1, 2 * w + 1);
        };
    });
}

// ---------------------------------------------------------------------------
// convolution (im2col + GEMM)

struct ConvGeometry {
    int N, Cin, H, W, Cout, kh, kw, stride, pad, OH, OW;
};

template <typename T>
inline ConvGeometry conv_geometry(const Tensor<T>& x, const Tensor<T>& w, int stride, int pad) {
    if (x.shape.size() != 4 || w.shape.size() != 4) throw ShapeError("conv2d: rank must be 4");
    ConvGeometry g;
    g.N = x.shape[0];
    g.Cin = x.shape[1];
    g.H = x.shape[2];
    g.W = x.shape[3];
    g.Cout = w.shape[0];
    g.kh = w.shape[2];
    g.kw = w.shape[3];
    g.stride = stride;
    g.pad = pad;
    if (w.shape[1] != g.Cin)
        throw ShapeError("conv2d: weight expects " + std::to_string(w.shape[1]) +
                         " input channels, got " + std::to_string(g.Cin));
    g.OH = (g.H + 2 * pad - g.kh) / stride + 1;
    g.OW = (g.W + 2 * pad - g.kw) / stride + 1;
    if (g.OH <= 0 || g.OW <= 0) throw ShapeError("conv2d: output would be empty");
    return g;
}

// Patch matrix is K x (OH*OW), row-major: one row per kernel tap, filled with
// contiguous segment copies.
template <typename T>
void im2col_item(const T* x, const ConvGeometry& g, MatRM<T>& cols) {
    const int K = g.Cin * g.kh * g.kw;
    cols.resize(K, g.OH * g.OW);
    int k = 0;
    for (int c = 0; c < g.Cin; ++c)
        for (int i = 0; i < g.kh; ++i)
            for (int j = 0; j < g.kw; ++j, ++k) {
                T* row = cols.data() + static_cast<std::size_t>(k) * g.OH * g.OW;
                for (int oh = 0; oh < g.OH; ++oh) {
                    T* dst = row + static_cast<std::size_t>(oh) * g.OW;
                    const int y = oh * g.stride - g.pad + i;
                    if (y < 0 || y >= g.H) {
                        std::fill_n(dst, g.OW, T(0));
                        continue;
                    }
                    const int off = g.pad - j;
                    const int ow_lo = off > 0 ? (off + g.stride - 1) / g.stride : 0;
                    const int ow_hi = std::min(g.OW, (g.W - 1 - j + g.pad) / g.stride + 1);
                    std::fill_n(dst, ow_lo, T(0));
                    const T* src = x + (static_cast<std::size_t>(c) * g.H + y) * g.W +
                                   (ow_lo * g.stride - g.pad + j);
                    if (g.stride == 1) {
                        std::copy_n(src, ow_hi - ow_lo, dst + ow_lo);
                    } else {
                        for (int ow = ow_lo; ow < ow_hi; ++ow)
                            dst[ow] = src[static_cast<std::size_t>(ow - ow_lo) * g.stride];
                    }
                    std::fill_n(dst + ow_hi, g.OW - ow_hi, T(0));
                }
            }
}

template <typename T>
void col2im_item(const MatRM<T>& cols, const ConvGeometry& g, T* dx) {
    int k = 0;
    for (int c = 0; c < g.Cin; ++c)
        for (int i = 0; i < g.kh; ++i)
            for (int j = 0; j < g.kw; ++j, ++k) {
                const T* row = cols.data() + static_cast<std::size_t>(k) * g.OH * g.OW;
                for (int oh = 0; oh < g.OH; ++oh) {
                    const T* src = row + static_cast<std::size_t>(oh) * g.OW;
                    const int y = oh * g.stride - g.pad + i;
                    if (y < 0 || y >= g.H) continue;
                    const int off = g.pad - j;
                    const int ow_lo = off > 0 ? (off + g.stride - 1) / g.stride : 0;
                    const int ow_hi = std::min(g.OW, (g.W - 1 - j + g.pad) / g.stride + 1);
                    T* dst = dx + (static_cast<std::size_t>(c) * g.H + y) * g.W +
                             (ow_lo * g.stride - g.pad + j);
                    if (g.stride == 1) {
                        for (int ow = ow_lo; ow < ow_hi; ++ow) dst[ow - ow_lo] += src[ow];
                    } else {
                        for (int ow = ow_lo; ow < ow_hi; ++ow)
                            dst[static_cast<std::size_t>(ow - ow_lo) * g.stride] += src[ow];
                    }
                }
            }
}

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int stride, int pad) {
    const ConvGeometry g = conv_geometry(x.value(), w.value(), stride, pad);
    if (static_cast<int>(b.value().numel()) != g.Cout) throw ShapeError("conv2d: bias size");
    const int K = g.Cin * g.kh * g.kw;
    const int npix = g.OH * g.OW;
    const std::size_t in_item = static_cast<std::size_t>(g.Cin) * g.H * g.W;
    const std::size_t out_item = static_cast<std::size_t>(g.Cout) * npix;
    Tensor<T> out = Tensor<T>::uninit({g.N, g.Cout, g.OH, g.OW});

    // All products below run as plain column-major GEMMs on transpose views:
    // W (Cout x K row-major) is Wt (K x Cout col-major) over the same memory,
    // and out slices (Cout x npix row-major) are Ot (npix x Cout col-major).
    // Patch matrices are kept alive for the backward pass when one exists.
    Eigen::Map<const MatCM<T>> Wt(w.value().data(), K, g.Cout);
    auto cached_cols = std::make_shared<std::vector<MatRM<T>>>(static_cast<std::size_t>(g.N));
    for (int n = 0; n < g.N; ++n) {
        MatRM<T>& cols = (*cached_cols)[static_cast<std::size_t>(n)]; // K x npix, rows contiguous
        im2col_item(x.value().data() + n * in_item, g, cols);
        Eigen::Map<const MatCM<T>> colsT(cols.data(), npix, K);
        Eigen::Map<MatCM<T>> Ot(out.data() + n * out_item, npix, g.Cout);
        Ot.noalias() = colsT * Wt;
        for (int c = 0; c < g.Cout; ++c) Ot.col(c).array() += b.value().v[static_cast<std::size_t>(c)];
    }
    if (!grad_enabled_flag()) cached_cols.reset();

    auto result = make_op<T>(std::move(out), {x, w, b},
                             [x, w, b, g, K, npix, in_item, out_item, cached_cols]() {
        return [x, w, b, g, K, npix, in_item, out_item, cached_cols](Node<T>& node) {
            auto px = x.node();
            auto pw = w.node();
            auto pb = b.node();
            Eigen::Map<const MatCM<T>> Wt(pw->val.data(), K, g.Cout);
            Eigen::Map<MatCM<T>> dWt(pw->requires_grad ? pw->grad.data() : nullptr, K, g.Cout);
            MatRM<T> dcols;
            for (int n = 0; n < g.N; ++n) {
                Eigen::Map<const MatCM<T>> dYt(node.grad.data() + n * out_item, npix, g.Cout);
                if (pw->requires_grad) {
                    const MatRM<T>& cols = (*cached_cols)[static_cast<std::size_t>(n)];
                    Eigen::Map<const MatCM<T>> colsT(cols.data(), npix, K);
                    dWt.noalias() += colsT.transpose() * dYt;
                }
                if (pb->requires_grad)
                    for (int c = 0; c < g.Cout; ++c)
                        pb->grad.v[static_cast<std::size_t>(c)] += dYt.col(c).sum();
                if (px->requires_grad) {
                    dcols.resize(K, npix);
                    Eigen::Map<MatCM<T>> dcolsT(dcols.data(), npix, K);
                    dcolsT.noalias() = dYt * Wt.transpose();
                    col2im_item(dcols, g, px->grad.data() + n * in_item);
                }
            }
        };
    });
    return result;
}

// ---------------------------------------------------------------------------
// batch normalization over (N,H,W) per channel

template <typename T>
Var<T> batchnorm2d(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                   Tensor<T>* running_mean, Tensor<T>* running_var, bool training,
                   T momentum = T(0.1), T eps = T(1e-5)) {
    const auto& s = x.value().shape;
    const int N = s[0], C = s[1], H = s[2], W = s[3];
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    const T m_count = static_cast<T>(N) * static_cast<T>(plane);

    auto mean_v = std::make_shared<std::vector<T>>(C, T(0));
    auto inv_std_v = std::make_shared<std::vector<T>>(C, T(0));
    auto xhat = std::make_shared<Tensor<T>>(Tensor<T>::uninit(x.value().shape));

    if (training) {
        for (int c = 0; c < C; ++c) {
            double sum = 0, sq = 0;
            for (int n = 0; n < N; ++n) {
                const T* p = x.value().data() + (static_cast<std::size_t>(n) * C + c) * plane;
                for (std::size_t i = 0; i < plane; ++i) {
                    sum += p[i];
                    sq += static_cast<double>(p[i]) * p[i];
                }
            }
            const double mu = sum / m_count;
            const double var = std::max(0.0, sq / m_count - mu * mu);
            (*mean_v)[c] = static_cast<T>(mu);
            (*inv_std_v)[c] = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
            if (running_mean && running_var) {
                const double unbiased = var * m_count / std::max<T>(m_count - 1, T(1));
                running_mean->v[c] = (T(1) - momentum) * running_mean->v[c] + momentum * static_cast<T>(mu);
                running_var->v[c] = (T(1) - momentum) * running_var->v[c] + momentum * static_cast<T>(unbiased);
            }
        }
    } else {
        for (int c = 0; c < C; ++c) {
            (*mean_v)[c] = running_mean->v[c];
            (*inv_std_v)[c] = T(1) / std::sqrt(running_var->v[c] + eps);
        }
    }

    Tensor<T> out = Tensor<T>::uninit(x.value().shape);
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const T* p = x.value().data() + (static_cast<std::size_t>(n) * C + c) * plane;
            T* xh = xhat->data() + (static_cast<std::size_t>(n) * C + c) * plane;
            T* o = out.data() + (static_cast<std::size_t>(n) * C + c) * plane;
            const T mu = (*mean_v)[c], is = (*inv_std_v)[c];
            const T gam = gamma.value().v[static_cast<std::size_t>(c)];
            const T bet = beta.value().v[static_cast<std::size_t>(c)];
            for (std::size_t i = 0; i < plane; ++i) {
                xh[i] = (p[i] - mu) * is;
                o[i] = gam * xh[i] + bet;
            }
        }

    return make_op<T>(std::move(out), {x, gamma, beta},
                      [x, gamma, beta, xhat, inv_std_v, training, N, C, plane, m_count]() {
        return [x, gamma, beta, xhat, inv_std_v, training, N, C, plane, m_count](Node<T>& node) {
            auto px = x.node();
            auto pg = gamma.node();
            auto pb = beta.node();
            for (int c = 0; c < C; ++c) {
                double sum_dy = 0, sum_dy_xhat = 0;
                for (int n = 0; n < N; ++n) {
                    const T* dy = node.grad.data() + (static_cast<std::size_t>(n) * C + c) * plane;
                    const T* xh = xhat->data() + (static_cast<std::size_t>(n) * C + c) * plane;
                    for (std::size_t i = 0; i < plane; ++i) {
                        sum_dy += dy[i];
                        sum_dy_xhat += static_cast<double>(dy[i]) * xh[i];
                    }
                }
                if (pg->requires_grad) pg->grad.v[static_cast<std::size_t>(c)] += static_cast<T>(sum_dy_xhat);
                if (pb->requires_grad) pb->grad.v[static_cast<std::size_t>(c)] += static_cast<T>(sum_dy);
                if (!px->requires_grad) continue;
                const T gam = pg->val.v[static_cast<std::size_t>(c)];
                const T is = (*inv_std_v)[c];
                for (int n = 0; n < N; ++n) {
                    const T* dy = node.grad.data() + (static_cast<std::size_t>(n) * C + c) * plane;
                    const T* xh = xhat->data() + (static_cast<std::size_t>(n) * C + c) * plane;
                    T* dx = px->grad.data() + (static_cast<std::size_t>(n) * C + c) * plane;
                    if (training) {
                        for (std::size_t i = 0; i < plane; ++i)
                            dx[i] += gam * is *
                                     (dy[i] - static_cast<T>(sum_dy) / m_count -
                                      xh[i] * static_cast<T>(sum_dy_xhat) / m_count);
                    } else {
                        for (std::size_t i = 0; i < plane; ++i) dx[i] += gam * is * dy[i];
                    }
                }
            }
        };
    });
}

} // namespace hdn::nn
