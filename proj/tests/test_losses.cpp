#include <gtest/gtest.h>

#include "grevnet/losses.hpp"
#include "oracles.hpp"

using namespace grevnet;

namespace {

void check_param_grads(InvertibleNet<double>& net, const std::function<double()>& loss, Rng& rng,
                       double tol = 1e-4) {
    for (auto* p : net.params()) {
        auto idx = oracle::sample_indices(p->value.size(), 3, rng);
        auto num = oracle::numeric_grad(p->value, idx, loss);
        for (std::size_t i = 0; i < idx.size(); ++i)
            EXPECT_LT(oracle::rel_err(p->grad[idx[i]], num[i]), tol) << p->name << "[" << idx[i] << "]";
    }
}

} // namespace

TEST(Hinge, DiscriminatorLossIsZeroWhenBothMarginsHold) {
    Tensor<double> sp({3}, {1.5, 2, 1}), se({2}, {-1, -4});
    auto r = hinge_disc_loss(sp, se);
    EXPECT_NEAR(r.loss, 0.0, 1e-12);
    for (double g : r.d_prior) EXPECT_EQ(g, 0.0);
    for (double g : r.d_enc) EXPECT_EQ(g, 0.0);
}

TEST(Hinge, DiscriminatorLossAtZeroScoresIsTwo) {
    Tensor<double> sp({4}), se({4});
    auto r = hinge_disc_loss(sp, se);
    EXPECT_NEAR(r.loss, 2.0, 1e-12);
    EXPECT_NEAR(r.d_prior[0], -0.25, 1e-15);
    EXPECT_NEAR(r.d_enc[0], 0.25, 1e-15);
    // always non-negative
    Rng rng(1);
    for (int t = 0; t < 100; ++t)
        EXPECT_GE(hinge_disc_loss(sample_normal<double>(rng, {5}, 0, 3), sample_normal<double>(rng, {5}, 0, 3)).loss,
                  0.0);
}

TEST(Hinge, EncoderLossOfConstantScores) {
    Tensor<double> se({6}, 0.75);
    auto r = hinge_enc_loss(se);
    EXPECT_NEAR(r.loss, -0.75, 1e-15);
    EXPECT_NEAR(r.d_enc[2], -1.0 / 6, 1e-15);
}

TEST(ReconLoss, ZeroWithFullPriorOnExactInverse) {
    Rng rng(2);
    InvertibleNet<double> net(preset("tiny"), rng);
    auto x = sample_normal<double>(rng, {3, 1, 8, 8}, 0, 1);
    auto r = recon_loss(net, PriorSpec::full(64), x, ReconWeights{}, false);
    EXPECT_NEAR(r.get("recon_l1"), 0.0, 1e-12);
    EXPECT_NEAR(r.get("clip_l2"), 0.0, 1e-12);
}

TEST(ReconLoss, ClipPenaltyMatchesHandValue) {
    Rng rng(3);
    InvertibleNet<double> net(preset("tiny"), rng);
    auto x = sample_normal<double>(rng, {2, 1, 8, 8}, 0, 1);
    PriorSpec prior(64, {0, 5, 9}, PriorFamily::standard_normal, 0.5);
    const auto z = net.forward(x);
    const auto zc = clip_to_prior(z, prior);
    double expect = 0;
    for (std::size_t i = 0; i < z.size(); ++i) expect += (z[i] - zc[i]) * (z[i] - zc[i]);
    expect /= double(z.size());
    auto r = recon_loss(net, prior, x, ReconWeights{}, false);
    EXPECT_NEAR(r.get("clip_l2"), expect, 1e-12);
    EXPECT_GT(r.get("recon_l1"), 0.0);
    EXPECT_NEAR(r.total(), r.get("recon_l1") + r.get("clip_l2"), 1e-12);
}

TEST(ReconLoss, ParameterGradientsMatchFiniteDifferences) {
    Rng rng(4);
    InvertibleNet<double> net(preset("tiny"), rng);
    auto x = sample_normal<double>(rng, {2, 1, 8, 8}, 0, 1);
    PriorSpec prior(64, {1, 2, 3, 7, 20, 40, 63}, PriorFamily::standard_normal, 1.0);
    ReconWeights w{1.0, 0.5};
    zero_grads(net.params());
    recon_loss(net, prior, x, w, true);
    check_param_grads(net, [&] { return recon_loss(net, prior, x, w, false).total(); }, rng);
}

TEST(ReconTerms, LatentGradientMatchesFiniteDifferences) {
    Rng rng(5);
    InvertibleNet<double> net(preset("tiny"), rng);
    auto x = sample_normal<double>(rng, {2, 1, 8, 8}, 0, 1);
    auto z = sample_normal<double>(rng, {2, 64}, 0, 1.5);
    PriorSpec prior(64, {0, 1, 2, 3, 10, 11}, PriorFamily::standard_normal, 1.0);
    ReconWeights w;
    auto t = recon_terms(net, prior, x, z, w, true);
    auto idx = oracle::sample_indices(z.size(), 20, rng);
    auto num = oracle::numeric_grad(z, idx, [&] {
        auto r = recon_terms(net, prior, x, z, w, false);
        return w.l1 * r.l1 + w.l2 * r.l2;
    });
    for (std::size_t i = 0; i < idx.size(); ++i) EXPECT_LT(oracle::rel_err(t.dz[idx[i]], num[i]), 1e-5);
}

TEST(Perturbation, ZeroNoiseGivesZeroLoss) {
    Rng rng(6);
    InvertibleNet<double> net(preset("tiny"), rng);
    auto x = sample_normal<double>(rng, {3, 1, 8, 8}, 0, 1);
    EXPECT_NEAR(perturbation_loss(net, x, 0.0, rng, false), 0.0, 1e-12);
    EXPECT_GT(perturbation_loss(net, x, 0.1, rng, false), 0.0);
}

TEST(Perturbation, GradientsMatchFiniteDifferences) {
    Rng rng(7);
    InvertibleNet<double> net(preset("tiny"), rng);
    auto x = sample_normal<double>(rng, {2, 1, 8, 8}, 0, 1);
    const Rng noise = rng.split(99);
    auto loss = [&] {
        Rng r = noise;
        return perturbation_loss(net, x, 0.1, r, false);
    };
    zero_grads(net.params());
    Rng r = noise;
    perturbation_loss(net, x, 0.1, r, true);
    check_param_grads(net, loss, rng);
}

TEST(AdversarialEncoder, GradientOnlyOnActiveDimsAndDiscUntouched) {
    Rng rng(8);
    DiscriminatorConfig cfg;
    cfg.hidden1 = 6;
    cfg.hidden2 = 5;
    Discriminator<double> disc(3, cfg, rng);
    PriorSpec prior(10, {1, 4, 8});
    auto z = sample_normal<double>(rng, {4, 10}, 0, 1);
    zero_grads(disc.params());
    auto [le, dz] = adversarial_encoder_terms(disc, prior, z);
    for (auto* p : disc.params())
        for (double g : p->grad) EXPECT_EQ(g, 0.0);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 10; ++j)
            if (j != 1 && j != 4 && j != 8) {
                EXPECT_EQ(dz(i, j), 0.0);
            }
    // finite differences with frozen power-iteration buffers
    auto idx = oracle::sample_indices(z.size(), 40, rng);
    auto num = oracle::numeric_grad(z, idx, [&] { return hinge_enc_loss(disc.score(gather_dims(z, prior.active_dims))).loss; });
    for (std::size_t i = 0; i < idx.size(); ++i) EXPECT_LT(oracle::rel_err(dz[idx[i]], num[i]), 1e-6);
    EXPECT_NEAR(le, hinge_enc_loss(disc.score(gather_dims(z, prior.active_dims))).loss, 1e-12);
}
