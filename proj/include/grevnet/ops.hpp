#pragma once

#include <Eigen/Core>
#include <cmath>
#include <functional>
#include <vector>

#include "grevnet/rng.hpp"
#include "grevnet/tensor.hpp"

namespace grevnet {

namespace detail {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMatrix<T>>;

inline void require(bool ok, const std::string& what) {
    if (!ok) throw ShapeError(what);
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
}

template <typename T, typename Fn>
Tensor<T> zip(const Tensor<T>& a, const Tensor<T>& b, const char* op, Fn fn) {
    require_same_shape(a, b, op);
    Tensor<T> out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = fn(a[i], b[i]);
    check_finite(out, op);
    return out;
}

template <typename T, typename Fn>
Tensor<T> map(const Tensor<T>& a, const char* op, Fn fn) {
    Tensor<T> out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = fn(a[i]);
    check_finite(out, op);
    return out;
}

} // namespace detail

enum class Trans { no, yes };

/// C = op(A) * op(B) for 2-D tensors.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, Trans ta = Trans::no, Trans tb = Trans::no) {
    detail::require(a.rank() == 2 && b.rank() == 2, "matmul: rank-2 operands required");
    const std::size_t m = ta == Trans::no ? a.dim(0) : a.dim(1);
    const std::size_t k = ta == Trans::no ? a.dim(1) : a.dim(0);
    const std::size_t kb = tb == Trans::no ? b.dim(0) : b.dim(1);
    const std::size_t n = tb == Trans::no ? b.dim(1) : b.dim(0);
    detail::require(k == kb, "matmul: inner dimensions " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
    Tensor<T> out({m, n});
    detail::ConstMatMap<T> A(a.data(), a.dim(0), a.dim(1));
    detail::ConstMatMap<T> B(b.data(), b.dim(0), b.dim(1));
    detail::MatMap<T> C(out.data(), m, n);
    if (ta == Trans::no && tb == Trans::no) C.noalias() = A * B;
    else if (ta == Trans::no) C.noalias() = A * B.transpose();
    else if (tb == Trans::no) C.noalias() = A.transpose() * B;
    else C.noalias() = A.transpose() * B.transpose();
    check_finite(out, "matmul");
    return out;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::zip(a, b, "add", std::plus<T>{});
}
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::zip(a, b, "sub", std::minus<T>{});
}
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::zip(a, b, "mul", std::multiplies<T>{});
}
template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
    return detail::map(a, "scale", [s](T v) { return v * s; });
}
template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T s) {
    return detail::map(a, "add_scalar", [s](T v) { return v + s; });
}

/// a += b
template <typename T>
void add_inplace(Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same_shape(a, b, "add_inplace");
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}
/// a -= b
template <typename T>
void sub_inplace(Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same_shape(a, b, "sub_inplace");
    for (std::size_t i = 0; i < a.size(); ++i) a[i] -= b[i];
}

template <typename T>
double sum(const Tensor<T>& a) {
    double s = 0;
    for (T v : a) s += v;
    return s;
}
template <typename T>
double mean(const Tensor<T>& a) {
    return sum(a) / static_cast<double>(a.size());
}
template <typename T>
double l2_norm(const Tensor<T>& a) {
    double s = 0;
    for (T v : a) s += static_cast<double>(v) * v;
    return std::sqrt(s);
}
template <typename T>
double l1_norm(const Tensor<T>& a) {
    double s = 0;
    for (T v : a) s += std::abs(static_cast<double>(v));
    return s;
}
template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same_shape(a, b, "max_abs_diff");
    double m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(static_cast<double>(a[i]) - b[i]));
    return m;
}

/// Column means of an n x d matrix (any trailing shape is flattened).
template <typename T>
std::vector<double> mean_per_dim(const Tensor<T>& x) {
    const std::size_t n = x.dim(0), d = x.size() / n;
    std::vector<double> m(d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) m[j] += x[i * d + j];
    for (auto& v : m) v /= static_cast<double>(n);
    return m;
}

/// Column standard deviations (two-pass, denominator n - ddof).
template <typename T>
std::vector<double> std_per_dim(const Tensor<T>& x, std::size_t ddof = 1) {
    const std::size_t n = x.dim(0), d = x.size() / n;
    if (n <= ddof) throw ValueError("std_per_dim: need more than " + std::to_string(ddof) + " rows");
    const auto m = mean_per_dim(x);
    std::vector<double> s(d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            const double c = x[i * d + j] - m[j];
            s[j] += c * c;
        }
    for (auto& v : s) v = std::sqrt(v / static_cast<double>(n - ddof));
    return s;
}

/// Concatenation along an axis; all other extents must agree.
template <typename T>
Tensor<T> concat(const std::vector<const Tensor<T>*>& parts, std::size_t axis) {
    detail::require(!parts.empty(), "concat: no inputs");
    Shape shape = parts[0]->shape();
    detail::require(axis < shape.size(), "concat: axis out of range");
    std::size_t total = 0;
    for (auto* p : parts) {
        Shape s = p->shape();
        detail::require(s.size() == shape.size(), "concat: rank mismatch");
        total += s[axis];
        s[axis] = shape[axis];
        detail::require(s == shape, "concat: extent mismatch " + shape_string(p->shape()));
    }
    shape[axis] = total;
    Tensor<T> out(shape);
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
    std::size_t offset = 0;
    for (auto* p : parts) {
        const std::size_t chunk = p->dim(axis) * inner;
        for (std::size_t o = 0; o < outer; ++o)
            std::copy_n(p->data() + o * chunk, chunk, out.data() + o * total * inner + offset);
        offset += chunk;
    }
    return out;
}
template <typename T>
Tensor<T> concat(const Tensor<T>& a, const Tensor<T>& b, std::size_t axis) {
    return concat<T>({&a, &b}, axis);
}

/// Splits along an axis into pieces of the given extents.
template <typename T>
std::vector<Tensor<T>> split(const Tensor<T>& x, std::size_t axis, const std::vector<std::size_t>& sizes) {
    detail::require(axis < x.rank(), "split: axis out of range");
    std::size_t total = 0;
    for (auto s : sizes) total += s;
    detail::require(total == x.dim(axis), "split: sizes do not sum to extent");
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= x.dim(i);
    for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
    std::vector<Tensor<T>> out;
    std::size_t offset = 0;
    for (auto s : sizes) {
        Shape shape = x.shape();
        shape[axis] = s;
        Tensor<T> part(shape);
        const std::size_t chunk = s * inner;
        for (std::size_t o = 0; o < outer; ++o)
            std::copy_n(x.data() + o * total * inner + offset, chunk, part.data() + o * chunk);
        offset += chunk;
        out.push_back(std::move(part));
    }
    return out;
}

template <typename T>
Tensor<T> sample_normal(Rng& rng, const Shape& shape, T mean, T std) {
    if (!(std >= T(0))) throw ValueError("sample_normal: negative std");
    Tensor<T> out(shape);
    for (auto& v : out) v = mean + std * static_cast<T>(rng.normal());
    return out;
}

template <typename T>
Tensor<T> sample_uniform(Rng& rng, const Shape& shape, T lo, T hi) {
    Tensor<T> out(shape);
    for (auto& v : out) v = static_cast<T>(rng.uniform(lo, hi));
    return out;
}

// ---------------------------------------------------------------------------
// Convolution ("same" cross-correlation, stride 1) via im2col + GEMM.

namespace detail {

// col has shape (C*kh*kw) x (H*W) for one image.
template <typename T>
void im2col(const T* img, std::size_t c, std::size_t h, std::size_t w, std::size_t kh, std::size_t kw,
            std::size_t pad, T* col) {
    const std::size_t hw = h * w;
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t ki = 0; ki < kh; ++ki)
            for (std::size_t kj = 0; kj < kw; ++kj) {
                T* row = col + ((ch * kh + ki) * kw + kj) * hw;
                for (std::size_t y = 0; y < h; ++y) {
                    const long sy = static_cast<long>(y + ki) - static_cast<long>(pad);
                    T* dst = row + y * w;
                    if (sy < 0 || sy >= static_cast<long>(h)) {
                        std::fill_n(dst, w, T(0));
                        continue;
                    }
                    const T* src = img + (ch * h + static_cast<std::size_t>(sy)) * w;
                    for (std::size_t x = 0; x < w; ++x) {
                        const long sx = static_cast<long>(x + kj) - static_cast<long>(pad);
                        dst[x] = (sx < 0 || sx >= static_cast<long>(w)) ? T(0) : src[sx];
                    }
                }
            }
}

template <typename T>
void col2im(const T* col, std::size_t c, std::size_t h, std::size_t w, std::size_t kh, std::size_t kw,
            std::size_t pad, T* img) {
    const std::size_t hw = h * w;
    std::fill_n(img, c * hw, T(0));
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t ki = 0; ki < kh; ++ki)
            for (std::size_t kj = 0; kj < kw; ++kj) {
                const T* row = col + ((ch * kh + ki) * kw + kj) * hw;
                for (std::size_t y = 0; y < h; ++y) {
                    const long sy = static_cast<long>(y + ki) - static_cast<long>(pad);
                    if (sy < 0 || sy >= static_cast<long>(h)) continue;
                    T* dst = img + (ch * h + static_cast<std::size_t>(sy)) * w;
                    for (std::size_t x = 0; x < w; ++x) {
                        const long sx = static_cast<long>(x + kj) - static_cast<long>(pad);
                        if (sx >= 0 && sx < static_cast<long>(w)) dst[sx] += row[y * w + x];
                    }
                }
            }
}

template <typename T>
void check_conv_shapes(const Tensor<T>& x, const Tensor<T>& w, std::size_t pad) {
    require(x.rank() == 4 && w.rank() == 4, "conv2d: rank-4 input and weight required");
    require(x.dim(1) == w.dim(1), "conv2d: channel mismatch " + shape_string(x.shape()) + " vs weight " +
                                      shape_string(w.shape()));
    require(w.dim(2) % 2 == 1 && w.dim(3) % 2 == 1, "conv2d: kernel extents must be odd");
    require(2 * pad + 1 == w.dim(2) && 2 * pad + 1 == w.dim(3), "conv2d: only same padding is supported");
}

} // namespace detail

/// y[n,o] = sum_c w[o,c] (*) x[n,c] + bias[o]; bias may be empty.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, std::size_t pad, const Tensor<T>* bias = nullptr) {
    detail::check_conv_shapes(x, w, pad);
    const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
    const std::size_t o = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    const std::size_t hw = h * wd, ck = c * kh * kw;
    Tensor<T> out({n, o, h, wd});
    Tensor<T> col({ck, hw});
    detail::ConstMatMap<T> W(w.data(), o, ck);
    for (std::size_t i = 0; i < n; ++i) {
        detail::im2col(x.data() + i * c * hw, c, h, wd, kh, kw, pad, col.data());
        detail::MatMap<T> Y(out.data() + i * o * hw, o, hw);
        Y.noalias() = W * detail::ConstMatMap<T>(col.data(), ck, hw);
        if (bias)
            for (std::size_t oc = 0; oc < o; ++oc) Y.row(oc).array() += (*bias)[oc];
    }
    check_finite(out, "conv2d");
    return out;
}

template <typename T>
struct ConvGrads {
    Tensor<T> dx;
    Tensor<T> dw;
    Tensor<T> db;
};

/// Gradients of conv2d; dw and db are freshly allocated (not accumulated).
template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& x, const Tensor<T>& w, std::size_t pad, const Tensor<T>& dy,
                             bool need_dx = true) {
    detail::check_conv_shapes(x, w, pad);
    const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
    const std::size_t o = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    const std::size_t hw = h * wd, ck = c * kh * kw;
    detail::require(dy.shape() == Shape({n, o, h, wd}), "conv2d_backward: upstream gradient shape");
    ConvGrads<T> g{need_dx ? Tensor<T>(x.shape()) : Tensor<T>(), Tensor<T>(w.shape()), Tensor<T>({o})};
    Tensor<T> col({ck, hw});
    detail::ConstMatMap<T> W(w.data(), o, ck);
    detail::MatMap<T> dW(g.dw.data(), o, ck);
    for (std::size_t i = 0; i < n; ++i) {
        detail::ConstMatMap<T> dY(dy.data() + i * o * hw, o, hw);
        detail::im2col(x.data() + i * c * hw, c, h, wd, kh, kw, pad, col.data());
        dW.noalias() += dY * detail::ConstMatMap<T>(col.data(), ck, hw).transpose();
        for (std::size_t oc = 0; oc < o; ++oc) g.db[oc] += dY.row(oc).sum();
        if (need_dx) {
            detail::MatMap<T>(col.data(), ck, hw).noalias() = W.transpose() * dY;
            detail::col2im(col.data(), c, h, wd, kh, kw, pad, g.dx.data() + i * c * hw);
        }
    }
    return g;
}

} // namespace grevnet
