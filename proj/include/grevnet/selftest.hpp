#pragma once

#include <functional>
#include <ostream>

#include <Eigen/SVD>

#include "grevnet/eval.hpp"
#include "grevnet/losses.hpp"
#include "grevnet/ot.hpp"

namespace grevnet {

/// A named invariant. `run` returns an empty string on success, otherwise a reason.
struct SelfCheck {
    std::string name;
    std::function<std::string()> run;
};

namespace detail {

inline std::string near(const std::string& what, double got, double want, double tol) {
    if (std::abs(got - want) <= tol) return "";
    return what + ": got " + std::to_string(got) + ", want " + std::to_string(want);
}

template <typename T>
Tensor<T> uniform_images(Rng& rng, const Shape& chw, std::size_t n) {
    Tensor<T> x({n, chw[0], chw[1], chw[2]});
    for (auto& v : x) v = static_cast<T>(rng.uniform());
    return x;
}

// Worst relative error between analytic parameter gradients of loss(net) and central differences.
template <typename Loss>
double worst_param_fd_error(InvertibleNet<double>& net, Loss&& loss, Rng& rng, std::size_t probes) {
    auto params = net.params();
    double worst = 0;
    for (std::size_t k = 0; k < probes; ++k) {
        auto* p = params[rng.below(params.size())];
        const std::size_t i = rng.below(p->value.size());
        const double analytic = p->grad[i];
        const double h = 1e-6, keep = p->value[i];
        p->value[i] = keep + h;
        const double up = loss();
        p->value[i] = keep - h;
        const double down = loss();
        p->value[i] = keep;
        const double numeric = (up - down) / (2 * h);
        worst = std::max(worst, std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric)));
    }
    return worst;
}

} // namespace detail

inline std::vector<SelfCheck> selftest_registry() {
    std::vector<SelfCheck> checks;

    checks.push_back({"round-trip tiny f64", [] {
        Rng rng(1);
        InvertibleNet<double> net(preset("tiny"), rng);
        const auto x = detail::uniform_images<double>(rng, net.spec().input, 4);
        const auto back = net.inverse(net.forward(x));
        double worst = 0;
        for (std::size_t i = 0; i < x.size(); ++i) worst = std::max(worst, std::abs(back[i] - x[i]));
        return worst <= 1e-8 ? "" : "max abs error " + std::to_string(worst);
    }});

    checks.push_back({"round-trip mnist-small f32", [] {
        Rng rng(2);
        InvertibleNet<float> net(preset("mnist-small"), rng);
        const double err = round_trip_l1(net, detail::uniform_images<float>(rng, net.spec().input, 2));
        return err <= 1e-5 ? "" : "mean L1 error " + std::to_string(err);
    }});

    checks.push_back({"net gradient vs central differences", [] {
        Rng rng(3);
        InvertibleNet<double> net(preset("tiny"), rng);
        const auto x = detail::uniform_images<double>(rng, net.spec().input, 2);
        Tensor<double> w(net.forward(x).shape());
        for (auto& v : w) v = rng.normal();
        auto loss = [&] {
            const auto z = net.forward(x);
            double s = 0;
            for (std::size_t i = 0; i < z.size(); ++i) s += z[i] * w[i];
            return s;
        };
        zero_grads(net.params());
        net.backward(net.forward(x), w);
        const double err = detail::worst_param_fd_error(net, loss, rng, 12);
        return err < 1e-4 ? "" : "relative error " + std::to_string(err);
    }});

    checks.push_back({"recompute backprop equals cached", [] {
        Rng rng(4);
        InvertibleNet<double> net(preset("tiny"), rng);
        const auto x = detail::uniform_images<double>(rng, net.spec().input, 2);
        const auto z = net.forward(x);
        Tensor<double> dz(z.shape());
        for (auto& v : dz) v = rng.normal();
        zero_grads(net.params());
        const auto dx_re = net.backward(z, dz);
        std::vector<Tensor<double>> re;
        for (auto* p : net.params()) re.push_back(p->grad);
        zero_grads(net.params());
        typename InvertibleNet<double>::Tape tape;
        net.forward_cached(x, tape);
        const auto dx_ca = net.backward_cached(tape, dz);
        double worst = 0;
        auto ps = net.params();
        for (std::size_t k = 0; k < ps.size(); ++k)
            for (std::size_t i = 0; i < re[k].size(); ++i)
                worst = std::max(worst, std::abs(re[k][i] - ps[k]->grad[i]) / std::max(1e-12, std::abs(ps[k]->grad[i])));
        for (std::size_t i = 0; i < dx_re.size(); ++i)
            worst = std::max(worst, std::abs(dx_re[i] - dx_ca[i]) / std::max(1e-12, std::abs(dx_ca[i])));
        return worst < 1e-6 ? "" : "relative difference " + std::to_string(worst);
    }});

    checks.push_back({"recon loss gradient vs central differences", [] {
        Rng rng(5);
        InvertibleNet<double> net(preset("tiny"), rng);
        const auto x = detail::uniform_images<double>(rng, net.spec().input, 2);
        PriorSpec prior(64, {0, 1, 2, 3, 4, 5, 6, 7}, PriorFamily::standard_normal, 0.5);
        auto loss = [&] { return recon_loss(net, prior, x, ReconWeights{}, false).total(); };
        zero_grads(net.params());
        recon_loss(net, prior, x, ReconWeights{}, true);
        const double err = detail::worst_param_fd_error(net, loss, rng, 12);
        return err < 1e-4 ? "" : "relative error " + std::to_string(err);
    }});

    checks.push_back({"exact OT vs brute force", [] {
        Rng rng(6);
        for (int t = 0; t < 50; ++t) {
            const std::size_t n = 1 + rng.below(7);
            Tensor<double> c({n, n});
            for (auto& v : c) v = rng.uniform(0, 5);
            std::vector<std::size_t> perm(n);
            std::iota(perm.begin(), perm.end(), 0);
            double best = std::numeric_limits<double>::infinity();
            do {
                double s = 0;
                for (std::size_t i = 0; i < n; ++i) s += c(i, perm[i]);
                best = std::min(best, s / double(n));
            } while (std::next_permutation(perm.begin(), perm.end()));
            const double got = solve_exact(c).cost;
            if (std::abs(got - best) > 1e-12) return detail::near("n=" + std::to_string(n), got, best, 1e-12);
        }
        return std::string();
    }});

    checks.push_back({"hinge closed forms", [] {
        const Tensor<double> prior_hi({2}, {1.5, 3.0}), enc_lo({2}, {-1.0, -4.0}), zeros({3});
        std::string r = detail::near("perfect margin", hinge_disc_loss(prior_hi, enc_lo).loss, 0.0, 0.0);
        if (r.empty()) r = detail::near("D = 0", hinge_disc_loss(zeros, zeros).loss, 2.0, 0.0);
        if (r.empty()) r = detail::near("L_E", hinge_enc_loss(Tensor<double>({4}, {0.75, 0.75, 0.75, 0.75})).loss, -0.75, 0.0);
        return r;
    }});

    checks.push_back({"Frechet closed forms", [] {
        auto fit = [](std::vector<double> m, std::vector<double> c) {
            const std::size_t d = m.size();
            return GaussianFit{Tensor<double>({d}, m), Tensor<double>({d, d}, c)};
        };
        std::string r = detail::near("identical", frechet_distance(fit({1}, {2}), fit({1}, {2})), 0.0, 1e-9);
        if (r.empty()) r = detail::near("mean gap", frechet_distance(fit({0}, {1}), fit({2}, {1})), 4.0, 1e-9);
        if (r.empty()) r = detail::near("std 1 vs 2", frechet_distance(fit({0}, {1}), fit({0}, {4})), 1.0, 1e-9);
        return r;
    }});

    checks.push_back({"clip is idempotent", [] {
        Rng rng(7);
        PriorSpec prior(16, {1, 4, 9}, PriorFamily::standard_normal, 2.0);
        Tensor<double> z({5, 16});
        for (auto& v : z) v = 3 * rng.normal();
        const auto once = clip_to_prior(z, prior), twice = clip_to_prior(once, prior);
        for (std::size_t i = 0; i < z.size(); ++i)
            if (once[i] != twice[i]) return std::string("clip(clip(z)) != clip(z)");
        const auto s = sample_prior<double>(prior, rng, 32);
        const auto cs = clip_to_prior(s, prior);
        for (std::size_t i = 0; i < s.size(); ++i)
            if (std::abs(s[i]) <= prior.clip_bound && s[i] != cs[i]) return std::string("in-support sample moved");
        return std::string();
    }});

    checks.push_back({"spectral norm vs SVD", [] {
        Rng rng(8);
        SpectralDense<double> layer(12, 7, rng, "sn", 1);
        layer.power_iterate(200);
        const auto& w = layer.weight().value;
        Eigen::MatrixXd m(7, 12);
        for (long i = 0; i < 7; ++i)
            for (long j = 0; j < 12; ++j) m(i, j) = w(std::size_t(i), std::size_t(j));
        const double sv = Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues()(0);
        return detail::near("sigma", layer.estimate_sigma(), sv, 1e-8 * sv);
    }});

    return checks;
}

/// Runs every registered check, printing one line each plus a summary. Returns the failure count.
inline std::size_t run_selftest(std::ostream& out) {
    const auto checks = selftest_registry();
    std::size_t failed = 0;
    for (const auto& c : checks) {
        std::string why;
        try {
            why = c.run();
        } catch (const std::exception& e) {
            why = std::string("threw: ") + e.what();
        }
        if (why.empty()) {
            out << "PASS " << c.name << "\n";
        } else {
            ++failed;
            out << "FAIL " << c.name << ": " << why << "\n";
        }
    }
    out << "selftest: " << checks.size() - failed << "/" << checks.size() << " checks passed\n";
    return failed;
}

} // namespace grevnet
