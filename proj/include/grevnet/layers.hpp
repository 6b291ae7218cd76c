#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "grevnet/ops.hpp"

namespace grevnet {

/// A trainable array and its gradient accumulator.
template <typename T>
struct Param {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;

    Param() = default;
    Param(std::string n, Tensor<T> v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

    void zero_grad() { grad.fill(T(0)); }
};

template <typename T>
using ParamRefs = std::vector<Param<T>*>;

template <typename T>
void zero_grads(const ParamRefs<T>& params) {
    for (auto* p : params) p->zero_grad();
}

template <typename T>
std::size_t parameter_count(const ParamRefs<T>& params) {
    std::size_t n = 0;
    for (auto* p : params) n += p->value.size();
    return n;
}

// ---------------------------------------------------------------------------
// Activations

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& x) {
    Tensor<T> y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
    return y;
}

/// Subgradient at 0 is 0.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& dy) {
    detail::require_same_shape(x, dy, "relu_backward");
    Tensor<T> dx(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) dx[i] = x[i] > T(0) ? dy[i] : T(0);
    return dx;
}

/// (max(x,0), max(-x,0)) concatenated along the last axis.
template <typename T>
Tensor<T> crelu_forward(const Tensor<T>& x) {
    const std::size_t c = x.shape().back(), rows = x.size() / c;
    Shape shape = x.shape();
    shape.back() = 2 * c;
    Tensor<T> y(shape);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < c; ++j) {
            const T v = x[r * c + j];
            y[r * 2 * c + j] = v > T(0) ? v : T(0);
            y[r * 2 * c + c + j] = v < T(0) ? -v : T(0);
        }
    return y;
}

template <typename T>
Tensor<T> crelu_backward(const Tensor<T>& x, const Tensor<T>& dy) {
    const std::size_t c = x.shape().back(), rows = x.size() / c;
    detail::require(dy.size() == 2 * x.size(), "crelu_backward: gradient width");
    Tensor<T> dx(x.shape());
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < c; ++j) {
            const T v = x[r * c + j];
            dx[r * c + j] = v > T(0) ? dy[r * 2 * c + j] : (v < T(0) ? -dy[r * 2 * c + c + j] : T(0));
        }
    return dx;
}

// ---------------------------------------------------------------------------
// Dense

/// y = x W^T + b for x of shape n x in. Weights ~ N(0, 1/fan_in), bias 0.
template <typename T>
class Dense {
public:
    Dense() = default;
    Dense(std::size_t in, std::size_t out, Rng& rng, const std::string& name = "dense")
        : weight_(name + ".weight", sample_normal<T>(rng, {out, in}, T(0), T(1.0 / std::sqrt(double(in))))),
          bias_(name + ".bias", Tensor<T>({out})) {}

    std::size_t in_features() const { return weight_.value.dim(1); }
    std::size_t out_features() const { return weight_.value.dim(0); }

    Tensor<T> forward(const Tensor<T>& x) const { return affine(x, weight_.value); }

    /// Accumulates parameter gradients and returns dx.
    Tensor<T> backward(const Tensor<T>& x, const Tensor<T>& dy) {
        add_inplace(weight_.grad, matmul(dy, x, Trans::yes, Trans::no));
        accumulate_bias(dy);
        return matmul(dy, weight_.value);
    }

    Param<T>& weight() { return weight_; }
    Param<T>& bias() { return bias_; }
    const Param<T>& weight() const { return weight_; }
    const Param<T>& bias() const { return bias_; }
    ParamRefs<T> params() { return {&weight_, &bias_}; }

protected:
    Tensor<T> affine(const Tensor<T>& x, const Tensor<T>& w) const {
        detail::require(x.rank() == 2 && x.dim(1) == w.dim(1),
                        "dense: input " + shape_string(x.shape()) + " for weight " + shape_string(w.shape()));
        Tensor<T> y = matmul(x, w, Trans::no, Trans::yes);
        const std::size_t out = w.dim(0);
        for (std::size_t i = 0; i < x.dim(0); ++i)
            for (std::size_t j = 0; j < out; ++j) y[i * out + j] += bias_.value[j];
        return y;
    }
    void accumulate_bias(const Tensor<T>& dy) {
        const std::size_t out = out_features();
        for (std::size_t i = 0; i < dy.dim(0); ++i)
            for (std::size_t j = 0; j < out; ++j) bias_.grad[j] += dy[i * out + j];
    }

    Param<T> weight_;
    Param<T> bias_;
};

// ---------------------------------------------------------------------------
// Conv2d

/// Square-kernel "same" convolution. Weights ~ N(0, 1/fan_in), bias 0.
template <typename T>
class Conv2d {
public:
    Conv2d() = default;
    Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, Rng& rng,
           const std::string& name = "conv")
        : weight_(name + ".weight",
                  sample_normal<T>(rng, {out_channels, in_channels, kernel, kernel}, T(0),
                                   T(1.0 / std::sqrt(double(in_channels * kernel * kernel))))),
          bias_(name + ".bias", Tensor<T>({out_channels})) {
        if (kernel % 2 == 0) throw ShapeError("conv: kernel size must be odd");
    }

    std::size_t pad() const { return (weight_.value.dim(2) - 1) / 2; }
    std::size_t in_channels() const { return weight_.value.dim(1); }
    std::size_t out_channels() const { return weight_.value.dim(0); }

    Tensor<T> forward(const Tensor<T>& x) const { return conv2d(x, weight_.value, pad(), &bias_.value); }

    Tensor<T> backward(const Tensor<T>& x, const Tensor<T>& dy, bool need_dx = true) {
        auto g = conv2d_backward(x, weight_.value, pad(), dy, need_dx);
        add_inplace(weight_.grad, g.dw);
        add_inplace(bias_.grad, g.db);
        return std::move(g.dx);
    }

    Param<T>& weight() { return weight_; }
    Param<T>& bias() { return bias_; }
    ParamRefs<T> params() { return {&weight_, &bias_}; }

private:
    Param<T> weight_;
    Param<T> bias_;
};

// ---------------------------------------------------------------------------
// Spectral normalization

/// Dense layer whose forward uses W / sigma, with sigma estimated by power
/// iteration. u and v are buffers, not parameters. Backward differentiates
/// through sigma = u^T W v holding u and v fixed.
template <typename T>
class SpectralDense : public Dense<T> {
public:
    SpectralDense() = default;
    SpectralDense(std::size_t in, std::size_t out, Rng& rng, const std::string& name = "sn_dense",
                  int iterations = 1)
        : Dense<T>(in, out, rng, name), iterations_(iterations),
          u_(sample_normal<T>(rng, {out}, T(0), T(1))), v_({in}) {
        normalize(u_);
    }

    /// Training-mode forward: runs the configured power iterations first.
    Tensor<T> forward(const Tensor<T>& x) {
        if (update_) power_iterate(iterations_);
        return forward_frozen(x);
    }

    /// Forward with the current u, v (no buffer update).
    Tensor<T> forward_frozen(const Tensor<T>& x) {
        refresh_effective_weight();
        return this->affine(x, effective_);
    }

    Tensor<T> backward(const Tensor<T>& x, const Tensor<T>& dy) {
        // dL/dW_sn = dy^T x; dL/dW = (G - <G, W_sn> u v^T) / sigma
        const Tensor<T> g = matmul(dy, x, Trans::yes, Trans::no);
        double inner = 0;
        for (std::size_t i = 0; i < g.size(); ++i) inner += static_cast<double>(g[i]) * effective_[i];
        const std::size_t out = this->out_features(), in = this->in_features();
        for (std::size_t i = 0; i < out; ++i)
            for (std::size_t j = 0; j < in; ++j)
                this->weight_.grad[i * in + j] +=
                    static_cast<T>((g[i * in + j] - inner * u_[i] * v_[j]) / sigma_);
        this->accumulate_bias(dy);
        return matmul(dy, effective_);
    }

    /// u <- W v / |W v|, v <- W^T u / |W^T u|; returns sigma = u^T W v.
    double power_iterate(int iterations) {
        const auto& w = this->weight_.value;
        const std::size_t out = w.dim(0), in = w.dim(1);
        for (int it = 0; it < iterations; ++it) {
            for (std::size_t j = 0; j < in; ++j) {
                double s = 0;
                for (std::size_t i = 0; i < out; ++i) s += static_cast<double>(w[i * in + j]) * u_[i];
                v_[j] = static_cast<T>(s);
            }
            normalize(v_);
            for (std::size_t i = 0; i < out; ++i) {
                double s = 0;
                for (std::size_t j = 0; j < in; ++j) s += static_cast<double>(w[i * in + j]) * v_[j];
                u_[i] = static_cast<T>(s);
            }
            normalize(u_);
        }
        return estimate_sigma();
    }

    double estimate_sigma() const {
        const auto& w = this->weight_.value;
        const std::size_t out = w.dim(0), in = w.dim(1);
        double s = 0;
        for (std::size_t i = 0; i < out; ++i) {
            double row = 0;
            for (std::size_t j = 0; j < in; ++j) row += static_cast<double>(w[i * in + j]) * v_[j];
            s += u_[i] * row;
        }
        return s;
    }

    /// W / sigma for the current buffers.
    const Tensor<T>& effective_weight() {
        refresh_effective_weight();
        return effective_;
    }
    double sigma() const { return sigma_; }

    void set_update(bool update) { update_ = update; }
    int iterations() const { return iterations_; }
    Tensor<T>& u() { return u_; }
    Tensor<T>& v() { return v_; }
    const Tensor<T>& u() const { return u_; }

private:
    static void normalize(Tensor<T>& t) {
        const double n = l2_norm(t);
        if (!(n > 0)) throw ValueError("spectral norm: zero weight matrix, sigma undefined");
        for (auto& x : t) x = static_cast<T>(x / n);
    }

    void refresh_effective_weight() {
        if (l2_norm(v_) == 0) power_iterate(1);
        sigma_ = estimate_sigma();
        if (!(std::abs(sigma_) > 0) || !std::isfinite(sigma_))
            throw ValueError("spectral norm: zero weight matrix, sigma undefined");
        effective_ = scale(this->weight_.value, static_cast<T>(1.0 / sigma_));
    }

    int iterations_ = 1;
    bool update_ = true;
    Tensor<T> u_;
    Tensor<T> v_;
    Tensor<T> effective_;
    double sigma_ = 1.0;
};

} // namespace grevnet
