#pragma once

#include <map>
#include <string>

#include "grevnet/discriminator.hpp"
#include "grevnet/latent.hpp"
#include "grevnet/optim.hpp"
#include "grevnet/revnet.hpp"

namespace grevnet {

/// Named loss components with their weights; total is the weighted sum.
struct LossReport {
    std::map<std::string, double> values;
    std::map<std::string, double> weights;

    void add(const std::string& name, double value, double weight = 1.0) {
        values[name] = value;
        weights[name] = weight;
    }
    double total() const {
        double t = 0;
        for (const auto& [k, v] : values) t += weights.at(k) * v;
        return t;
    }
    double get(const std::string& name) const {
        auto it = values.find(name);
        return it == values.end() ? 0.0 : it->second;
    }
    bool has(const std::string& name) const { return values.count(name) != 0; }
};

inline const std::vector<std::string>& loss_names() {
    static const std::vector<std::string> names{"recon_l1", "clip_l2", "adv_disc", "adv_enc", "perturb", "ot"};
    return names;
}

struct ReconWeights {
    double l1 = 1.0;
    double l2 = 1.0;
};

/// Reconstruction terms for a batch whose encoding z = E(x) is given.
/// dz holds the gradient of the weighted loss w.r.t. z, including the path
/// through the decoder; decoder parameter gradients are accumulated.
template <typename T>
struct ReconTerms {
    double l1 = 0, l2 = 0;
    Tensor<T> dz;
};

template <typename T>
ReconTerms<T> recon_terms(InvertibleNet<T>& net, const PriorSpec& prior, const Tensor<T>& x, const Tensor<T>& z,
                          const ReconWeights& w, bool with_grad = true) {
    const Tensor<T> zc = clip_to_prior(z, prior);
    const Tensor<T> xr = net.inverse(zc);
    const Tensor<T> xf = x.reshaped(xr.shape());
    ReconTerms<T> out;
    const double nx = double(x.size()), nz = double(z.size());
    Tensor<T> dxr(xr.shape());
    for (std::size_t i = 0; i < xr.size(); ++i) {
        const double diff = double(xr[i]) - double(xf[i]);
        out.l1 += std::abs(diff);
        dxr[i] = static_cast<T>(w.l1 * ((diff > 0) - (diff < 0)) / nx);
    }
    out.l1 /= nx;
    for (std::size_t i = 0; i < z.size(); ++i) {
        const double diff = double(z[i]) - double(zc[i]);
        out.l2 += diff * diff;
    }
    out.l2 /= nz;
    if (!with_grad) return out;
    const Tensor<T> dzc = net.inverse_backward(xr, dxr);
    out.dz = clip_backward(z, prior, dzc);
    for (std::size_t i = 0; i < z.size(); ++i)
        out.dz[i] += static_cast<T>(w.l2 * 2.0 * (double(z[i]) - double(zc[i])) / nz);
    return out;
}

/// Full reconstruction loss: lambda_l1 * mean|x - R^-1(clip(E x))| + lambda_l2 * mean (E x - clip(E x))^2.
/// Accumulates net parameter gradients through both the encoder and decoder.
template <typename T>
LossReport recon_loss(InvertibleNet<T>& net, const PriorSpec& prior, const Tensor<T>& x, const ReconWeights& w,
                      bool with_grad = true) {
    const Tensor<T> z = net.forward(x);
    auto terms = recon_terms(net, prior, x, z, w, with_grad);
    if (with_grad) net.backward(z, terms.dz);
    LossReport r;
    r.add("recon_l1", terms.l1, w.l1);
    r.add("clip_l2", terms.l2, w.l2);
    return r;
}

// ---------------------------------------------------------------------------
// Hinge adversarial losses on raw scores

template <typename T>
struct HingeResult {
    double loss = 0;
    Tensor<T> d_prior;  // dL/dscore for prior samples (discriminator loss only)
    Tensor<T> d_enc;    // dL/dscore for encodings
};

/// L_D = -mean min(0, -1 + D(z_prior)) - mean min(0, -1 - D(z_enc))
template <typename T>
HingeResult<T> hinge_disc_loss(const Tensor<T>& s_prior, const Tensor<T>& s_enc) {
    HingeResult<T> r{0, Tensor<T>(s_prior.shape()), Tensor<T>(s_enc.shape())};
    const double np = double(s_prior.size()), ne = double(s_enc.size());
    double a = 0, b = 0;
    for (std::size_t i = 0; i < s_prior.size(); ++i) {
        const double m = -1.0 + s_prior[i];
        if (m < 0) {
            a -= m;
            r.d_prior[i] = static_cast<T>(-1.0 / np);
        }
    }
    for (std::size_t i = 0; i < s_enc.size(); ++i) {
        const double m = -1.0 - s_enc[i];
        if (m < 0) {
            b -= m;
            r.d_enc[i] = static_cast<T>(1.0 / ne);
        }
    }
    r.loss = a / np + b / ne;
    return r;
}

/// L_E = -mean D(z_enc)
template <typename T>
HingeResult<T> hinge_enc_loss(const Tensor<T>& s_enc) {
    HingeResult<T> r{0, Tensor<T>(), Tensor<T>(s_enc.shape())};
    const double n = double(s_enc.size());
    r.loss = -sum(s_enc) / n;
    for (auto& v : r.d_enc) v = static_cast<T>(-1.0 / n);
    return r;
}

/// Encoder adversarial loss through D on the active dims of z; returns
/// (L_E, dL_E/dz). D's parameter gradients are left untouched.
template <typename T>
std::pair<double, Tensor<T>> adversarial_encoder_terms(Discriminator<T>& disc, const PriorSpec& prior,
                                                       const Tensor<T>& z) {
    const Tensor<T> zk = gather_dims(z, prior.active_dims);
    const Tensor<T> scores = disc.forward(zk);
    auto h = hinge_enc_loss(scores);
    const Tensor<T> dzk = disc.backward(h.d_enc, /*accumulate=*/false);
    return {h.loss, scatter_dims(dzk, prior.active_dims, prior.d_total)};
}

/// One discriminator update on L_D. Both batches go through a single
/// training-mode forward, so u, v advance once per step. The inputs are
/// plain tensors, so nothing flows back into the encoder.
template <typename T>
LossReport disc_step(Discriminator<T>& disc, const Tensor<T>& z_prior, const Tensor<T>& z_enc, Adam<T>& opt) {
    const std::size_t np = z_prior.dim(0);
    const Tensor<T> scores = disc.forward(concat(z_prior, z_enc, 0));
    auto parts = split(scores, 0, {np, z_enc.dim(0)});
    auto h = hinge_disc_loss(parts[0], parts[1]);
    zero_grads(disc.params());
    disc.backward(concat(h.d_prior, h.d_enc, 0));
    opt.step(disc.params());
    LossReport r;
    r.add("adv_disc", h.loss);
    return r;
}

// ---------------------------------------------------------------------------
// Perturbation loss

template <typename T>
struct PerturbTerms {
    double loss = 0;
    Tensor<T> dz;
};

/// mean |x - R^-1(z + eps)| for z = R(x) and a given noise tensor. dz is the
/// gradient w.r.t. z (scaled by `weight`); decoder parameter gradients are accumulated.
template <typename T>
PerturbTerms<T> perturbation_terms(InvertibleNet<T>& net, const Tensor<T>& x, const Tensor<T>& z,
                                   const Tensor<T>& eps, double weight = 1.0, bool with_grad = true) {
    const Tensor<T> xr = net.inverse(add(z, eps));
    const Tensor<T> xf = x.reshaped(xr.shape());
    PerturbTerms<T> out;
    const double n = double(x.size());
    Tensor<T> dxr(xr.shape());
    for (std::size_t i = 0; i < xr.size(); ++i) {
        const double diff = double(xr[i]) - double(xf[i]);
        out.loss += std::abs(diff);
        dxr[i] = static_cast<T>(weight * ((diff > 0) - (diff < 0)) / n);
    }
    out.loss /= n;
    if (with_grad) out.dz = net.inverse_backward(xr, dxr);
    return out;
}

/// Draws eps ~ N(0, noise_std^2) per example and returns the loss with
/// gradients accumulated through both R and R^-1.
template <typename T>
double perturbation_loss(InvertibleNet<T>& net, const Tensor<T>& x, double noise_std, Rng& rng,
                         bool with_grad = true) {
    const Tensor<T> z = net.forward(x);
    const Tensor<T> eps = sample_normal<T>(rng, z.shape(), T(0), static_cast<T>(noise_std));
    auto t = perturbation_terms(net, x, z, eps, 1.0, with_grad);
    if (with_grad) net.backward(z, t.dz);
    return t.loss;
}

} // namespace grevnet
