#include <gtest/gtest.h>

#include "grevnet/optim.hpp"
#include "oracles.hpp"

using namespace grevnet;

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
    Param<double> p("p", Tensor<double>({3}, {1, -2, 3}));
    Adam<double> opt;
    opt.step({&p});
    EXPECT_EQ(p.value, (Tensor<double>({3}, {1, -2, 3})));
}

TEST(Adam, FirstStepMovesByLearningRate) {
    Param<double> p("p", Tensor<double>({2}, {0, 0}));
    p.grad = Tensor<double>({2}, {3.0, -0.01});
    Adam<double> opt(AdamConfig{1e-3, 0.0, 0.9, 1e-8});
    opt.step({&p});
    EXPECT_NEAR(p.value[0], -1e-3, 1e-9);
    EXPECT_NEAR(p.value[1], 1e-3, 1e-9);
}

TEST(Adam, MatchesScalarReference) {
    for (double b1 : {0.0, 0.5}) {
        Rng rng(1);
        Param<double> p("p", sample_normal<double>(rng, {5}, 0, 1));
        std::vector<oracle::ScalarAdam> ref(5, oracle::ScalarAdam{1e-2, b1, 0.9, 1e-8});
        std::vector<double> expect(p.value.begin(), p.value.end());
        Adam<double> opt(AdamConfig{1e-2, b1, 0.9, 1e-8});
        for (int t = 0; t < 100; ++t) {
            for (std::size_t i = 0; i < 5; ++i) p.grad[i] = rng.normal() + 0.1 * p.value[i];
            for (std::size_t i = 0; i < 5; ++i) expect[i] = ref[i].step(expect[i], p.grad[i]);
            opt.step({&p});
        }
        for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(p.value[i], expect[i], 1e-12);
        EXPECT_EQ(opt.steps(), 100);
    }
}

TEST(Adam, NonFiniteGradientThrowsWithoutUpdating) {
    Param<double> a("a", Tensor<double>({2}, {1, 1})), b("b", Tensor<double>({1}, {1}));
    a.grad[0] = 1.0;
    b.grad[0] = std::numeric_limits<double>::quiet_NaN();
    Adam<double> opt;
    try {
        opt.step({&a, &b});
        FAIL() << "expected NumericError";
    } catch (const NumericError& e) {
        EXPECT_NE(std::string(e.what()).find("b"), std::string::npos);
    }
    EXPECT_EQ(a.value[0], 1.0);
}
