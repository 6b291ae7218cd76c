#pragma once

#include <Eigen/Dense>

#include "grevnet/data.hpp"
#include "grevnet/latent.hpp"
#include "grevnet/optim.hpp"
#include "grevnet/revnet.hpp"

namespace grevnet {

/// Mean and covariance of a feature distribution.
struct GaussianFit {
    Tensor<double> mean;        // d
    Tensor<double> covariance;  // d x d

    std::size_t dim() const { return mean.size(); }
};

/// Empirical fit of n x d features (covariance denominator n - 1).
template <typename T>
GaussianFit gaussian_fit(const Tensor<T>& features) {
    const std::size_t n = features.dim(0), d = features.size() / n;
    if (n < 2) throw ValueError("gaussian_fit: need at least two samples");
    Eigen::MatrixXd f(n, d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) f(long(i), long(j)) = double(features[i * d + j]);
    const Eigen::RowVectorXd mu = f.colwise().mean();
    const Eigen::MatrixXd c = f.rowwise() - mu;
    const Eigen::MatrixXd cov = (c.transpose() * c) / double(n - 1);
    GaussianFit g{Tensor<double>({d}), Tensor<double>({d, d})};
    for (std::size_t j = 0; j < d; ++j) g.mean[j] = mu(long(j));
    for (std::size_t a = 0; a < d; ++a)
        for (std::size_t b = 0; b < d; ++b) g.covariance(a, b) = 0.5 * (cov(long(a), long(b)) + cov(long(b), long(a)));
    return g;
}

/// Fit of feature_fn applied to images in chunks.
template <typename T, typename FeatureFn>
GaussianFit feature_fit(const Tensor<T>& images, FeatureFn&& feature_fn, std::size_t batch = 256) {
    const std::size_t n = images.dim(0), per = images.size() / n;
    if (n < 2) throw ValueError("feature_fit: need at least two samples");
    Shape chunk_shape = images.shape();
    std::vector<Tensor<T>> parts;
    for (std::size_t s = 0; s < n; s += batch) {
        const std::size_t m = std::min(batch, n - s);
        chunk_shape[0] = m;
        Tensor<T> chunk(chunk_shape, std::span<const T>(images.data() + s * per, m * per));
        parts.push_back(feature_fn(chunk));
    }
    std::vector<const Tensor<T>*> ptrs;
    for (const auto& p : parts) ptrs.push_back(&p);
    return gaussian_fit(concat(ptrs, 0));
}

namespace detail {

inline Eigen::MatrixXd to_eigen(const Tensor<double>& t) {
    const std::size_t d = t.dim(0);
    Eigen::MatrixXd m(d, d);
    for (std::size_t a = 0; a < d; ++a)
        for (std::size_t b = 0; b < d; ++b) m(long(a), long(b)) = t(a, b);
    return m;
}

/// Eigenvalues of a symmetric PSD matrix with small negatives clamped; throws if clearly indefinite.
inline Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> psd_eigen(const Eigen::MatrixXd& m, const char* what) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
    if (es.info() != Eigen::Success) throw NumericError(std::string(what) + ": eigendecomposition failed");
    const double top = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
    if (es.eigenvalues().minCoeff() < -1e-8 * top) throw ValueError(std::string(what) + ": covariance is indefinite");
    return es;
}

} // namespace detail

/// Squared Fréchet distance between two Gaussian fits:
/// |mu_a - mu_b|^2 + Tr(S_a + S_b - 2 (S_a^1/2 S_b S_a^1/2)^1/2).
inline double frechet_distance(const GaussianFit& a, const GaussianFit& b) {
    if (a.dim() != b.dim()) throw ShapeError("frechet_distance: dimensions differ");
    if (a.mean == b.mean && a.covariance == b.covariance) return 0.0;
    const std::size_t d = a.dim();
    double mean_term = 0;
    for (std::size_t j = 0; j < d; ++j) mean_term += (a.mean[j] - b.mean[j]) * (a.mean[j] - b.mean[j]);
    const Eigen::MatrixXd sa = detail::to_eigen(a.covariance), sb = detail::to_eigen(b.covariance);
    auto ea = detail::psd_eigen(sa, "frechet_distance");
    detail::psd_eigen(sb, "frechet_distance");
    const Eigen::VectorXd root = ea.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    const Eigen::MatrixXd half = ea.eigenvectors() * root.asDiagonal() * ea.eigenvectors().transpose();
    const Eigen::MatrixXd m = half * sb * half;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> em(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
    if (em.info() != Eigen::Success) throw NumericError("frechet_distance: eigendecomposition failed");
    const double top = std::max(0.0, em.eigenvalues().maxCoeff());
    double tr_root = 0;
    for (long i = 0; i < em.eigenvalues().size(); ++i) {
        const double l = em.eigenvalues()(i);
        if (l > 1e-10 * top) tr_root += std::sqrt(l);
    }
    return std::max(0.0, mean_term + sa.trace() + sb.trace() - 2.0 * tr_root);
}

// ---------------------------------------------------------------------------
// Evaluation classifier: Dense(in, hidden) -> ReLU -> Dense(hidden, classes).
// The ReLU activations are the feature map for the Fréchet feature distance.

template <typename T>
class Classifier {
public:
    Classifier() = default;
    Classifier(std::size_t in, std::size_t hidden, std::size_t classes, Rng& rng)
        : l1_(in, hidden, rng, "clf.l1"), l2_(hidden, classes, rng, "clf.l2") {}

    Tensor<T> features(const Tensor<T>& x) const { return relu_forward(l1_.forward(flat(x))); }
    Tensor<T> logits(const Tensor<T>& x) const { return l2_.forward(features(x)); }

    std::vector<int> predict(const Tensor<T>& x, std::size_t batch = 256) const {
        const std::size_t n = x.dim(0), per = x.size() / n;
        std::vector<int> out;
        for (std::size_t s = 0; s < n; s += batch) {
            const std::size_t m = std::min(batch, n - s);
            const auto lg = logits(Tensor<T>(Shape{m, per}, std::span<const T>(x.data() + s * per, m * per)));
            const std::size_t k = lg.dim(1);
            for (std::size_t i = 0; i < m; ++i)
                out.push_back(int(std::max_element(lg.data() + i * k, lg.data() + (i + 1) * k) - (lg.data() + i * k)));
        }
        return out;
    }

    double accuracy(const Tensor<T>& x, const std::vector<int>& labels) const {
        const auto p = predict(x);
        std::size_t hit = 0;
        for (std::size_t i = 0; i < p.size(); ++i) hit += p[i] == labels[i];
        return double(hit) / double(p.size());
    }

    /// Mean softmax cross-entropy; accumulates gradients.
    double train_batch(const Tensor<T>& x, const std::vector<int>& labels) {
        const Tensor<T> xf = flat(x);
        const Tensor<T> a1 = l1_.forward(xf);
        const Tensor<T> h = relu_forward(a1);
        const Tensor<T> lg = l2_.forward(h);
        const std::size_t n = lg.dim(0), k = lg.dim(1);
        Tensor<T> dlg(lg.shape());
        double loss = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const T* row = lg.data() + i * k;
            const double mx = *std::max_element(row, row + k);
            double z = 0;
            for (std::size_t j = 0; j < k; ++j) z += std::exp(double(row[j]) - mx);
            loss += std::log(z) + mx - double(row[labels[i]]);
            for (std::size_t j = 0; j < k; ++j) {
                const double p = std::exp(double(row[j]) - mx) / z;
                dlg[i * k + j] = static_cast<T>((p - (int(j) == labels[i])) / double(n));
            }
        }
        const Tensor<T> dh = l2_.backward(h, dlg);
        l1_.backward(xf, relu_backward(a1, dh));
        return loss / double(n);
    }

    ParamRefs<T> params() {
        ParamRefs<T> p;
        for (auto* q : l1_.params()) p.push_back(q);
        for (auto* q : l2_.params()) p.push_back(q);
        return p;
    }

private:
    static Tensor<T> flat(const Tensor<T>& x) { return x.reshaped({x.dim(0), x.size() / x.dim(0)}); }

    Dense<T> l1_, l2_;
};

struct ClassifierConfig {
    std::size_t hidden = 128;
    std::size_t epochs = 10;
    std::size_t batch = 64;
    double lr = 1e-3;
    std::uint64_t seed = 7;
};

/// Trains the evaluation classifier with Adam on a labeled dataset.
template <typename T>
Classifier<T> train_classifier(const Dataset<T>& data, const ClassifierConfig& cfg) {
    if (!data.labeled()) throw DataError("classifier: dataset has no labels");
    Rng init(cfg.seed);
    Classifier<T> clf(data.images.size() / data.size(), cfg.hidden, data.num_classes, init);
    Adam<T> opt(AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});
    const Rng order(cfg.seed + 1);
    for (std::size_t e = 0; e < cfg.epochs; ++e) {
        BatchIterator it(data.size(), cfg.batch, order.split(e));
        for (const auto& idx : it.epoch()) {
            zero_grads(clf.params());
            clf.train_batch(data.gather(idx), data.gather_labels(idx));
            opt.step(clf.params());
        }
    }
    return clf;
}

// ---------------------------------------------------------------------------
// Sampling and latent-space visualisation

/// x = R^-1(z), z ~ prior. Pixel values are returned raw.
template <typename T>
Tensor<T> generate_samples(const InvertibleNet<T>& net, const PriorSpec& prior, Rng& rng, std::size_t n) {
    return net.inverse(sample_prior<T>(prior, rng, n));
}

/// n draws from class c's latent Gaussian, decoded.
template <typename T>
Tensor<T> generate_class_samples(const InvertibleNet<T>& net, const ClassPrior<T>& cp, std::size_t c, Rng& rng,
                                 std::size_t n) {
    return net.inverse(cp.sample(c, rng, n).z);
}

enum class InterpolationMode { restricted, full };

inline InterpolationMode parse_interpolation_mode(const std::string& s) {
    if (s == "restricted") return InterpolationMode::restricted;
    if (s == "full") return InterpolationMode::full;
    throw ConfigError("interpolation mode must be restricted or full, got '" + s + "'");
}

/// Latent codes along the segment between two inputs' encodings (clipped first in restricted mode).
template <typename T>
Tensor<T> interpolate_latents(const InvertibleNet<T>& net, const PriorSpec& prior, const Tensor<T>& xa,
                              const Tensor<T>& xb, std::size_t steps, InterpolationMode mode) {
    if (steps < 2) throw ValueError("interpolate: steps must be at least 2");
    Tensor<T> za = net.forward(xa), zb = net.forward(xb);
    if (mode == InterpolationMode::restricted) {
        za = clip_to_prior(za, prior);
        zb = clip_to_prior(zb, prior);
    }
    const std::size_t d = za.size();
    Tensor<T> z({steps, d});
    for (std::size_t s = 0; s < steps; ++s) {
        const double t = double(s) / double(steps - 1);
        for (std::size_t j = 0; j < d; ++j) z[s * d + j] = static_cast<T>((1.0 - t) * za[j] + t * zb[j]);
    }
    return z;
}

template <typename T>
Tensor<T> interpolate(const InvertibleNet<T>& net, const PriorSpec& prior, const Tensor<T>& xa, const Tensor<T>& xb,
                      std::size_t steps, InterpolationMode mode) {
    return net.inverse(interpolate_latents(net, prior, xa, xb, steps, mode));
}

/// Decodes base + t * scale * e_dim for t evenly spaced in [-range_stds, range_stds].
template <typename T>
Tensor<T> traverse_dimension(const InvertibleNet<T>& net, const PriorSpec& prior, const Tensor<T>& base,
                             std::size_t dim, double scale, double range_stds, std::size_t steps) {
    if (std::find(prior.active_dims.begin(), prior.active_dims.end(), dim) == prior.active_dims.end())
        throw ValueError("traverse: dim " + std::to_string(dim) + " is not an active prior dimension");
    if (steps < 1) throw ValueError("traverse: steps must be positive");
    const std::size_t d = prior.d_total;
    if (base.size() != d) throw ShapeError("traverse: base latent must have " + std::to_string(d) + " entries");
    Tensor<T> z({steps, d});
    for (std::size_t s = 0; s < steps; ++s) {
        const double t = steps == 1 ? 0.0 : -range_stds + 2.0 * range_stds * double(s) / double(steps - 1);
        std::copy(base.begin(), base.end(), z.data() + s * d);
        z[s * d + dim] = static_cast<T>(base[dim] + t * scale);
    }
    return net.inverse(z);
}

/// Per class: number of dims whose std exceeds threshold * (largest std of that class).
template <typename T>
std::vector<std::size_t> effective_dims(const ClassPrior<T>& cp, double threshold) {
    std::vector<std::size_t> out;
    for (std::size_t c = 0; c < cp.classes(); ++c) {
        const auto s = cp.stds(c);
        const double mx = *std::max_element(s.begin(), s.end());
        out.push_back(std::size_t(std::count_if(s.begin(), s.end(), [&](double v) { return v > threshold * mx; })));
    }
    return out;
}

/// Dims ranked by the class-averaged std (largest first).
template <typename T>
std::vector<std::size_t> top_dims_by_mean_std(const ClassPrior<T>& cp, std::size_t k) {
    std::vector<double> avg(cp.dims(), 0.0);
    for (std::size_t c = 0; c < cp.classes(); ++c)
        for (std::size_t j = 0; j < cp.dims(); ++j) avg[j] += cp.std(c, j) / double(cp.classes());
    std::vector<std::size_t> idx(cp.dims());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return avg[a] > avg[b]; });
    idx.resize(std::min(k, idx.size()));
    return idx;
}

/// Mean |x - R^-1(R(x))| per element.
template <typename T>
double round_trip_l1(const InvertibleNet<T>& net, const Tensor<T>& x) {
    const Tensor<T> back = net.inverse(net.forward(x));
    double s = 0;
    for (std::size_t i = 0; i < x.size(); ++i) s += std::abs(double(back[i]) - double(x[i]));
    return s / double(x.size());
}

} // namespace grevnet
