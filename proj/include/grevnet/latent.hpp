#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "grevnet/layers.hpp"

namespace grevnet {

enum class PriorFamily { standard_normal, uniform };

inline PriorFamily parse_prior_family(const std::string& s) {
    if (s == "standard-normal" || s == "normal") return PriorFamily::standard_normal;
    if (s == "uniform") return PriorFamily::uniform;
    throw ConfigError("prior: unknown family '" + s + "'");
}
inline std::string to_string(PriorFamily f) { return f == PriorFamily::uniform ? "uniform" : "standard-normal"; }

/// Latent sampling distribution restricted to a few active coordinates.
/// Inactive coordinates are identically zero; active ones are clipped to
/// [-clip_bound, clip_bound] when encodings are projected onto the support.
struct PriorSpec {
    std::size_t d_total = 0;
    std::vector<std::size_t> active_dims;
    PriorFamily family = PriorFamily::standard_normal;
    double clip_bound = 2.0;

    PriorSpec() = default;
    PriorSpec(std::size_t d, std::vector<std::size_t> active, PriorFamily fam = PriorFamily::standard_normal,
              double bound = 2.0)
        : d_total(d), active_dims(std::move(active)), family(fam), clip_bound(bound) {
        validate();
    }

    /// Every coordinate active, no clamping.
    static PriorSpec full(std::size_t d) {
        std::vector<std::size_t> all(d);
        std::iota(all.begin(), all.end(), 0);
        return PriorSpec(d, std::move(all), PriorFamily::standard_normal, std::numeric_limits<double>::infinity());
    }

    std::size_t k() const { return active_dims.size(); }

    void validate() const {
        std::vector<char> seen(d_total, 0);
        for (auto i : active_dims) {
            if (i >= d_total) throw ValueError("prior: active dim " + std::to_string(i) + " out of range");
            if (seen[i]) throw ValueError("prior: duplicate active dim " + std::to_string(i));
            seen[i] = 1;
        }
        if (!(clip_bound > 0)) throw ValueError("prior: clip bound must be positive");
    }

    std::vector<char> active_mask() const {
        std::vector<char> m(d_total, 0);
        for (auto i : active_dims) m[i] = 1;
        return m;
    }
};

/// Indices of the k largest per-dimension standard deviations; ties go to the lower index.
template <typename T>
std::vector<std::size_t> select_active_dims(const Tensor<T>& encodings, std::size_t k) {
    const std::size_t d = encodings.size() / encodings.dim(0);
    if (k > d) throw ValueError("select_active_dims: k=" + std::to_string(k) + " exceeds " + std::to_string(d));
    const auto s = std_per_dim(encodings);
    std::vector<std::size_t> idx(d);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return s[a] > s[b]; });
    idx.resize(k);
    return idx;
}

/// Encode inputs in chunks of `batch` rows.
template <typename T, typename Net>
Tensor<T> encode_all(const Net& net, const Tensor<T>& inputs, std::size_t batch = 256) {
    const std::size_t n = inputs.dim(0), per = inputs.size() / n, d = net.latent_size();
    Tensor<T> out({n, d});
    for (std::size_t start = 0; start < n; start += batch) {
        const std::size_t m = std::min(batch, n - start);
        Tensor<T> chunk(Shape{m, per}, std::span<const T>(inputs.data() + start * per, m * per));
        const auto z = net.forward(chunk);
        std::copy(z.begin(), z.end(), out.data() + start * d);
    }
    return out;
}

template <typename T, typename Net>
std::vector<std::size_t> select_active_dims(const Net& net, const Tensor<T>& inputs, std::size_t k) {
    if (inputs.dim(0) < 2) throw ValueError("select_active_dims: need at least two inputs");
    return select_active_dims(encode_all(net, inputs), k);
}

/// Projection onto the prior's support: inactive dims zeroed, active dims clamped.
template <typename T>
Tensor<T> clip_to_prior(const Tensor<T>& z, const PriorSpec& prior) {
    const std::size_t d = prior.d_total;
    if (z.size() % d != 0 || z.size() / z.dim(0) != d)
        throw ShapeError("clip_to_prior: latent " + shape_string(z.shape()) + " vs d=" + std::to_string(d));
    Tensor<T> out(z.shape());
    const T b = static_cast<T>(std::min<double>(prior.clip_bound, std::numeric_limits<T>::max()));
    const std::size_t n = z.size() / d;
    for (std::size_t i = 0; i < n; ++i)
        for (auto j : prior.active_dims) out[i * d + j] = std::clamp(z[i * d + j], -b, b);
    return out;
}

/// Subgradient of clip_to_prior: passes dz only on active dims strictly inside the bounds.
template <typename T>
Tensor<T> clip_backward(const Tensor<T>& z, const PriorSpec& prior, const Tensor<T>& dclipped) {
    const std::size_t d = prior.d_total, n = z.size() / d;
    Tensor<T> dz(z.shape());
    for (std::size_t i = 0; i < n; ++i)
        for (auto j : prior.active_dims) {
            const double v = z[i * d + j];
            if (v > -prior.clip_bound && v < prior.clip_bound) dz[i * d + j] = dclipped[i * d + j];
        }
    return dz;
}

/// n x d draws: active dims from the family, inactive dims zero.
template <typename T>
Tensor<T> sample_prior(const PriorSpec& prior, Rng& rng, std::size_t n) {
    Tensor<T> z({n, prior.d_total});
    for (std::size_t i = 0; i < n; ++i)
        for (auto j : prior.active_dims)
            z[i * prior.d_total + j] = static_cast<T>(
                prior.family == PriorFamily::uniform ? rng.uniform(-2.0, 2.0) : rng.normal());
    return z;
}

/// Columns `dims` of an n x d matrix.
template <typename T>
Tensor<T> gather_dims(const Tensor<T>& z, const std::vector<std::size_t>& dims) {
    const std::size_t n = z.dim(0), d = z.size() / n, k = dims.size();
    Tensor<T> out({n, k});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < k; ++j) out[i * k + j] = z[i * d + dims[j]];
    return out;
}

/// Adjoint of gather_dims.
template <typename T>
Tensor<T> scatter_dims(const Tensor<T>& zk, const std::vector<std::size_t>& dims, std::size_t d) {
    const std::size_t n = zk.dim(0), k = dims.size();
    Tensor<T> out({n, d});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < k; ++j) out[i * d + dims[j]] += zk[i * k + j];
    return out;
}

// ---------------------------------------------------------------------------
// Learnable class-conditional Gaussians

inline double softplus(double x) { return x > 30 ? x : std::log1p(std::exp(x)); }
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double softplus_inverse(double y) { return y > 30 ? y : std::log(std::expm1(y)); }

/// One uncorrelated Gaussian per class. Standard deviations are stored raw
/// and mapped through softplus, so they stay positive under any update.
template <typename T>
class ClassPrior {
public:
    /// Smallest std representable at initialisation.
    static constexpr double min_std = 1e-12;

    struct Draw {
        Tensor<T> z;
        Tensor<T> eps;
    };

    ClassPrior() = default;
    ClassPrior(std::size_t classes, std::size_t d)
        : mean_("prior.mean", Tensor<T>({classes, d})), raw_std_("prior.raw_std", Tensor<T>({classes, d})) {
        for (auto& v : raw_std_.value) v = static_cast<T>(softplus_inverse(1.0));
    }

    /// Means and stds of the encodings of each class.
    static ClassPrior from_encodings(const Tensor<T>& z, const std::vector<int>& labels, std::size_t classes) {
        const std::size_t n = z.dim(0), d = z.size() / n;
        if (labels.size() != n) throw ShapeError("class prior: label count mismatch");
        ClassPrior cp(classes, d);
        for (std::size_t c = 0; c < classes; ++c) {
            std::vector<std::size_t> rows;
            for (std::size_t i = 0; i < n; ++i)
                if (labels[i] == int(c)) rows.push_back(i);
            if (rows.empty()) throw ValueError("class prior: class " + std::to_string(c) + " is empty");
            if (rows.size() < 2) throw ValueError("class prior: class " + std::to_string(c) + " needs two samples");
            std::vector<double> m(d, 0.0), s(d, 0.0);
            for (auto i : rows)
                for (std::size_t j = 0; j < d; ++j) m[j] += z[i * d + j];
            for (auto& v : m) v /= double(rows.size());
            for (auto i : rows)
                for (std::size_t j = 0; j < d; ++j) s[j] += (z[i * d + j] - m[j]) * (z[i * d + j] - m[j]);
            for (std::size_t j = 0; j < d; ++j) {
                const double sd = std::sqrt(s[j] / double(rows.size() - 1));
                cp.mean_.value[c * d + j] = static_cast<T>(m[j]);
                cp.raw_std_.value[c * d + j] = static_cast<T>(softplus_inverse(std::max(sd, min_std)));
            }
        }
        return cp;
    }

    std::size_t classes() const { return mean_.value.dim(0); }
    std::size_t dims() const { return mean_.value.dim(1); }

    double mean(std::size_t c, std::size_t j) const { return mean_.value[c * dims() + j]; }
    double std(std::size_t c, std::size_t j) const { return softplus(raw_std_.value[c * dims() + j]); }
    std::vector<double> stds(std::size_t c) const {
        std::vector<double> s(dims());
        for (std::size_t j = 0; j < dims(); ++j) s[j] = std(c, j);
        return s;
    }

    /// z = mean + std * eps, eps ~ N(0, I); eps is returned for the backward pass.
    Draw sample(std::size_t c, Rng& rng, std::size_t n) const {
        check_class(c);
        const std::size_t d = dims();
        Draw out{Tensor<T>({n, d}), sample_normal<T>(rng, {n, d}, T(0), T(1))};
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j)
                out.z[i * d + j] = static_cast<T>(mean(c, j) + std(c, j) * out.eps[i * d + j]);
        return out;
    }

    /// Accumulates the reparameterisation gradient of a draw of class c.
    void backward(std::size_t c, const Tensor<T>& eps, const Tensor<T>& dz) {
        check_class(c);
        const std::size_t d = dims(), n = dz.dim(0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) {
                const double g = dz[i * d + j];
                mean_.grad[c * d + j] += static_cast<T>(g);
                raw_std_.grad[c * d + j] +=
                    static_cast<T>(g * eps[i * d + j] * sigmoid(raw_std_.value[c * d + j]));
            }
    }

    Param<T>& mean_param() { return mean_; }
    Param<T>& raw_std_param() { return raw_std_; }
    ParamRefs<T> params() { return {&mean_, &raw_std_}; }

private:
    void check_class(std::size_t c) const {
        if (c >= classes()) throw ValueError("class prior: class " + std::to_string(c) + " out of range");
    }

    Param<T> mean_;
    Param<T> raw_std_;
};

} // namespace grevnet
