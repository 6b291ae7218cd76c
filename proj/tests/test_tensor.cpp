#include <gtest/gtest.h>

#include "grevnet/ops.hpp"
#include "oracles.hpp"

using namespace grevnet;

TEST(Tensor, ShapeAndSizeAgree) {
    Tensor<double> t({2, 3, 4});
    EXPECT_EQ(t.size(), 24u);
    EXPECT_EQ(t.rank(), 3u);
    EXPECT_THROW(Tensor<double>({2, 2}, {1.0, 2.0, 3.0}), ShapeError);
    EXPECT_THROW(Tensor<double>({0, 2}), ShapeError);
}

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
    Tensor<double> eye({2, 2}, {1, 0, 0, 1});
    Tensor<double> a({2, 2}, {1, 2, 3, 4});
    EXPECT_EQ(matmul(eye, a), a);
}

TEST(Matmul, HandComputed) {
    Tensor<double> a({2, 2}, {1, 2, 3, 4});
    Tensor<double> b({2, 1}, {1, 1});
    EXPECT_EQ(matmul(a, b), (Tensor<double>({2, 1}, {3, 7})));
}

TEST(Matmul, MatchesNaiveLoops) {
    Rng rng(1);
    for (auto [m, k, n] : {std::tuple{5, 7, 3}, {17, 33, 9}, {64, 40, 70}}) {
        auto a = sample_normal<double>(rng, {std::size_t(m), std::size_t(k)}, 0, 1);
        auto b = sample_normal<double>(rng, {std::size_t(k), std::size_t(n)}, 0, 1);
        EXPECT_LT(max_abs_diff(matmul(a, b), oracle::naive_matmul(a, b)), 1e-12);
        // transposed operand variants
        auto at = Tensor<double>({std::size_t(k), std::size_t(m)});
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < k; ++j) at(j, i) = a(i, j);
        EXPECT_LT(max_abs_diff(matmul(at, b, Trans::yes), oracle::naive_matmul(a, b)), 1e-12);
    }
}

TEST(Matmul, InnerDimensionMismatchThrows) {
    EXPECT_THROW(matmul(Tensor<double>({2, 3}), Tensor<double>({2, 3})), ShapeError);
}

TEST(Matmul, NonFiniteIsSurfaced) {
    Tensor<double> a({1, 1}, {std::numeric_limits<double>::infinity()});
    Tensor<double> b({1, 1}, {0.0});
    EXPECT_THROW(matmul(a, b), NumericError);
}

TEST(Conv2d, UnitOneByOneKernelIsIdentity) {
    Rng rng(2);
    auto x = sample_normal<double>(rng, {2, 1, 5, 5}, 0, 1);
    Tensor<double> w({1, 1, 1, 1}, {1.0});
    EXPECT_EQ(conv2d(x, w, 0), x);
}

TEST(Conv2d, AllOnesCountsOverlap) {
    Tensor<double> x({1, 1, 4, 4}, 1.0);
    Tensor<double> w({1, 1, 3, 3}, 1.0);
    auto y = conv2d(x, w, 1);
    EXPECT_EQ(y(0, 0, 0, 0), 4);
    EXPECT_EQ(y(0, 0, 0, 3), 4);
    EXPECT_EQ(y(0, 0, 3, 3), 4);
    EXPECT_EQ(y(0, 0, 0, 1), 6);
    EXPECT_EQ(y(0, 0, 1, 1), 9);
    EXPECT_EQ(y(0, 0, 2, 2), 9);
}

TEST(Conv2d, MatchesNaiveLoops) {
    Rng rng(3);
    auto x = sample_normal<double>(rng, {2, 3, 6, 5}, 0, 1);
    auto w = sample_normal<double>(rng, {4, 3, 3, 3}, 0, 1);
    EXPECT_LT(max_abs_diff(conv2d(x, w, 1), oracle::naive_conv2d(x, w, 1)), 1e-10);
    auto w5 = sample_normal<double>(rng, {2, 3, 5, 5}, 0, 1);
    EXPECT_LT(max_abs_diff(conv2d(x, w5, 2), oracle::naive_conv2d(x, w5, 2)), 1e-10);
}

TEST(Conv2d, ShapeErrors) {
    EXPECT_THROW(conv2d(Tensor<double>({1, 2, 4, 4}), Tensor<double>({1, 3, 3, 3}), 1), ShapeError);
    EXPECT_THROW(conv2d(Tensor<double>({1, 2, 4, 4}), Tensor<double>({1, 2, 2, 2}), 1), ShapeError);
}

TEST(Conv2d, BackwardMatchesFiniteDifferences) {
    Rng rng(4);
    auto x = sample_normal<double>(rng, {2, 2, 4, 3}, 0, 1);
    auto w = sample_normal<double>(rng, {3, 2, 3, 3}, 0, 1);
    auto r = sample_normal<double>(rng, {2, 3, 4, 3}, 0, 1);  // loss = <r, conv(x, w)>
    auto loss = [&] { return sum(mul(conv2d(x, w, 1), r)); };
    auto g = conv2d_backward(x, w, 1, r);
    auto idx_x = oracle::sample_indices(x.size(), 40, rng);
    auto nx = oracle::numeric_grad(x, idx_x, loss);
    for (std::size_t i = 0; i < idx_x.size(); ++i) EXPECT_LT(oracle::rel_err(g.dx[idx_x[i]], nx[i]), 1e-6);
    auto idx_w = oracle::sample_indices(w.size(), 40, rng);
    auto nw = oracle::numeric_grad(w, idx_w, loss);
    for (std::size_t i = 0; i < idx_w.size(); ++i) EXPECT_LT(oracle::rel_err(g.dw[idx_w[i]], nw[i]), 1e-6);
}

TEST(SampleNormal, ZeroStdGivesMean) {
    Rng rng(5);
    auto t = sample_normal<double>(rng, {10}, 3.5, 0.0);
    for (double v : t) EXPECT_EQ(v, 3.5);
    EXPECT_THROW(sample_normal<double>(rng, {3}, 0.0, -1.0), ValueError);
}

TEST(SampleNormal, SameSeedSameDraws) {
    Rng a(77), b(77);
    EXPECT_EQ(sample_normal<double>(a, {100}, 0, 1), sample_normal<double>(b, {100}, 0, 1));
}

TEST(SampleNormal, MomentsOfAMillionDraws) {
    Rng rng(6);
    auto t = sample_normal<double>(rng, {1000000}, 0, 1);
    const double m = mean(t);
    EXPECT_GT(m, -0.005);
    EXPECT_LT(m, 0.005);
    auto s = std_per_dim(t.reshaped({1000000, 1}));
    EXPECT_NEAR(s[0], 1.0, 0.01);
    auto t2 = sample_normal<double>(rng, {1000000}, 2.0, 3.0);
    EXPECT_NEAR(mean(t2), 2.0, 0.02);
    EXPECT_NEAR(std_per_dim(t2.reshaped({1000000, 1}))[0], 3.0, 0.03);
}

TEST(Rng, SplitStreamsAreIndependentOfParentAdvance) {
    Rng a(9);
    Rng child1 = a.split(3);
    a.next_u64();
    Rng child2 = a.split(3);
    EXPECT_EQ(child1.next_u64(), child2.next_u64());
    EXPECT_NE(a.split(4).next_u64(), a.split(3).next_u64());
}

TEST(Elementwise, HandComputed) {
    Tensor<double> a({3}, {1, 2, 3}), b({3}, {4, 5, 6});
    EXPECT_EQ(add(a, b), (Tensor<double>({3}, {5, 7, 9})));
    EXPECT_EQ(sub(a, b), (Tensor<double>({3}, {-3, -3, -3})));
    EXPECT_EQ(mul(a, b), (Tensor<double>({3}, {4, 10, 18})));
    EXPECT_EQ(scale(a, 2.0), (Tensor<double>({3}, {2, 4, 6})));
    EXPECT_EQ(add_scalar(a, 1.0), (Tensor<double>({3}, {2, 3, 4})));
    EXPECT_EQ(sum(a), 6.0);
    EXPECT_EQ(mean(b), 5.0);
    EXPECT_DOUBLE_EQ(l2_norm(Tensor<double>({2}, {3, 4})), 5.0);
    EXPECT_THROW(add(a, Tensor<double>({2})), ShapeError);
}

TEST(Reductions, PerDimensionStd) {
    Tensor<double> x({3, 2}, {1, 10, 2, 10, 3, 10});
    auto s = std_per_dim(x);
    EXPECT_DOUBLE_EQ(s[0], 1.0);
    EXPECT_DOUBLE_EQ(s[1], 0.0);
}

TEST(Reshape, SplitConcatRoundTripIsBitExact) {
    Rng rng(8);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t a = 1 + rng.below(4), b = 2 + rng.below(5), c = 1 + rng.below(3);
        auto x = sample_normal<double>(rng, {a, b, c}, 0, 1);
        for (std::size_t axis = 0; axis < 3; ++axis) {
            const std::size_t e = x.dim(axis), cut = 1 + rng.below(e);
            if (cut == e) continue;
            auto parts = split(x, axis, {cut, e - cut});
            EXPECT_EQ(concat(parts[0], parts[1], axis), x);
        }
        EXPECT_EQ(x.reshaped({a * b * c}).reshaped({a, b, c}), x);
    }
    Tensor<double> m({2, 2}, {1, 2, 3, 4});
    EXPECT_EQ(concat(m, m, 1), (Tensor<double>({2, 4}, {1, 2, 1, 2, 3, 4, 3, 4})));
    EXPECT_THROW(m.reshaped({3}), ShapeError);
}
