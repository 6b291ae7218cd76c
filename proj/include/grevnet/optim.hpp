#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "grevnet/layers.hpp"

namespace grevnet {

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.0;
    double beta2 = 0.9;
    double eps = 1e-8;
};

/// Adam with bias correction. Moment buffers are created on the first step
/// and must keep matching the parameter list afterwards.
template <typename T>
class Adam {
public:
    Adam() = default;
    explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

    /// Applies one update; throws NumericError before touching anything if a gradient is non-finite.
    void step(const ParamRefs<T>& params) {
        for (auto* p : params)
            if (!p->grad.all_finite()) throw NumericError("adam: non-finite gradient in " + p->name);
        if (m_.empty()) {
            for (auto* p : params) {
                m_.emplace_back(p->value.shape());
                v_.emplace_back(p->value.shape());
            }
        }
        if (m_.size() != params.size()) throw ShapeError("adam: parameter list changed");
        ++t_;
        const double c1 = 1.0 - std::pow(cfg_.beta1, double(t_));
        const double c2 = 1.0 - std::pow(cfg_.beta2, double(t_));
        for (std::size_t k = 0; k < params.size(); ++k) {
            auto& p = *params[k];
            if (m_[k].shape() != p.value.shape()) throw ShapeError("adam: moment shape mismatch for " + p.name);
            for (std::size_t i = 0; i < p.value.size(); ++i) {
                const double g = p.grad[i];
                const double m = cfg_.beta1 * m_[k][i] + (1.0 - cfg_.beta1) * g;
                const double v = cfg_.beta2 * v_[k][i] + (1.0 - cfg_.beta2) * g * g;
                m_[k][i] = static_cast<T>(m);
                v_[k][i] = static_cast<T>(v);
                const double mh = m / c1, vh = v / c2;
                p.value[i] = static_cast<T>(p.value[i] - cfg_.lr * mh / (std::sqrt(vh) + cfg_.eps));
            }
        }
    }

    const AdamConfig& config() const { return cfg_; }
    long steps() const { return t_; }
    std::vector<Tensor<T>>& first_moments() { return m_; }
    std::vector<Tensor<T>>& second_moments() { return v_; }
    void set_steps(long t) { t_ = t; }

private:
    AdamConfig cfg_;
    std::vector<Tensor<T>> m_, v_;
    long t_ = 0;
};

} // namespace grevnet
