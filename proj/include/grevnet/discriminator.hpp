#pragma once

#include "grevnet/layers.hpp"

namespace grevnet {

struct DiscriminatorConfig {
    std::size_t hidden1 = 400;  // CReLU doubles this to the second layer's input width
    std::size_t hidden2 = 800;
    int power_iterations = 1;   // per training-mode forward
    int warmup_iterations = 100;  // power iterations at construction
    bool spectral_norm = true;
};

/// Latent-space adversary: SN-Dense(k, h1) -> CReLU -> SN-Dense(2 h1, h2) ->
/// ReLU -> SN-Dense(h2, 1). Scores are raw (no output nonlinearity).
template <typename T>
class Discriminator {
public:
    Discriminator() = default;
    Discriminator(std::size_t input_width, const DiscriminatorConfig& cfg, Rng& rng)
        : cfg_(cfg), l1_(input_width, cfg.hidden1, rng, "disc.l1", cfg.power_iterations),
          l2_(2 * cfg.hidden1, cfg.hidden2, rng, "disc.l2", cfg.power_iterations),
          l3_(cfg.hidden2, 1, rng, "disc.l3", cfg.power_iterations) {
        if (cfg_.spectral_norm)
            for (auto* l : layers()) l->power_iterate(cfg.warmup_iterations);
    }

    std::size_t input_width() const { return l1_.in_features(); }

    /// Training-mode forward (power iteration runs once per call). Returns n scores.
    Tensor<T> forward(const Tensor<T>& z) { return run(z, true); }
    /// Forward with frozen power-iteration buffers.
    Tensor<T> score(const Tensor<T>& z) { return run(z, false); }

    /// Backward for the last forward. With accumulate=false only dL/dz is computed.
    Tensor<T> backward(const Tensor<T>& dscores, bool accumulate = true) {
        const std::size_t n = dscores.size();
        Tensor<T> d3 = dscores.reshaped({n, 1});
        Tensor<T> dr2 = layer_backward(l3_, r2_, d3, accumulate);
        Tensor<T> da2 = relu_backward(a2_, dr2);
        Tensor<T> dc1 = layer_backward(l2_, c1_, da2, accumulate);
        Tensor<T> da1 = crelu_backward(a1_, dc1);
        return layer_backward(l1_, z_, da1, accumulate);
    }

    std::vector<SpectralDense<T>*> layers() { return {&l1_, &l2_, &l3_}; }

    /// Weight actually applied by each layer.
    std::vector<Tensor<T>> effective_weights() {
        std::vector<Tensor<T>> out;
        for (auto* l : layers()) out.push_back(cfg_.spectral_norm ? l->effective_weight() : l->weight().value);
        return out;
    }

    ParamRefs<T> params() {
        ParamRefs<T> p;
        for (auto* l : layers())
            for (auto* q : l->params()) p.push_back(q);
        return p;
    }

    const DiscriminatorConfig& config() const { return cfg_; }

private:
    Tensor<T> run(const Tensor<T>& z, bool training) {
        if (z.rank() != 2 || z.dim(1) != input_width())
            throw ShapeError("discriminator: expected width " + std::to_string(input_width()) + ", got " +
                             shape_string(z.shape()));
        z_ = z;
        a1_ = layer_forward(l1_, z_, training);
        c1_ = crelu_forward(a1_);
        a2_ = layer_forward(l2_, c1_, training);
        r2_ = relu_forward(a2_);
        Tensor<T> s = layer_forward(l3_, r2_, training);
        return std::move(s).reshaped({z.dim(0)});
    }

    Tensor<T> layer_forward(SpectralDense<T>& l, const Tensor<T>& x, bool training) {
        if (!cfg_.spectral_norm) return l.Dense<T>::forward(x);
        l.set_update(training);
        return l.forward(x);
    }

    Tensor<T> layer_backward(SpectralDense<T>& l, const Tensor<T>& x, const Tensor<T>& dy, bool accumulate) {
        if (!accumulate) return matmul(dy, cfg_.spectral_norm ? l.effective_weight() : l.weight().value);
        if (!cfg_.spectral_norm) return l.Dense<T>::backward(x, dy);
        return l.backward(x, dy);
    }

    DiscriminatorConfig cfg_;
    SpectralDense<T> l1_, l2_, l3_;
    Tensor<T> z_, a1_, c1_, a2_, r2_;
};

} // namespace grevnet
