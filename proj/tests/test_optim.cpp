#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"

using namespace ebmlab;

TEST(Adam, ZeroGradientKeepsParametersAndCountsStep) {
    AdamState s(3, {});
    std::vector<double> p{1.0, -2.0, 3.0};
    adam_step(s, p, std::vector<double>(3, 0.0));
    EXPECT_EQ(p, (std::vector<double>{1.0, -2.0, 3.0}));
    EXPECT_EQ(s.t, 1u);
}

TEST(Adam, FirstStepMovesByLearningRate) {
    AdamState s(1, {});
    std::vector<double> p{1.0};
    adam_step(s, p, std::vector<double>{1.0});
    // m_hat / sqrt(v_hat) = 1, so the step is lr / (1 + eps).
    EXPECT_NEAR(p[0], 1.0 - 0.001 / (1.0 + 1e-8), 1e-15);
    EXPECT_NEAR(p[0], 0.999, 1e-10);
}

TEST(Adam, ConvexQuadraticConverges) {
    // f = (a - 3)^2 + 2 (b + 1)^2 + (a - 3)(b + 1)
    AdamHyper h;
    h.learning_rate = 0.01;
    AdamState s(2, h);
    std::vector<double> p{0.0, 0.0};
    for (int k = 0; k < 1000; ++k) {
        const double u = p[0] - 3.0, v = p[1] + 1.0;
        adam_step(s, p, std::vector<double>{2.0 * u + v, 4.0 * v + u});
    }
    EXPECT_NEAR(p[0], 3.0, 1e-3);
    EXPECT_NEAR(p[1], -1.0, 1e-3);
    for (double v : s.v) EXPECT_GE(v, 0.0);
}

TEST(Adam, IdenticalRunsAreBitIdentical) {
    auto run = [] {
        AdamState s(4, {});
        std::vector<double> p{0.1, 0.2, 0.3, 0.4};
        for (int k = 0; k < 50; ++k) {
            std::vector<double> g(4);
            for (std::size_t i = 0; i < 4; ++i) g[i] = std::sin(p[i] * (k + 1));
            adam_step(s, p, g, 0.5);
        }
        return std::make_pair(p, s);
    };
    EXPECT_EQ(run(), run());
}

TEST(Adam, MultiplierScalesStepButNotMoments) {
    AdamState a(1, {}), b(1, {});
    std::vector<double> pa{0.0}, pb{0.0};
    adam_step(a, pa, std::vector<double>{2.0}, 1.0);
    adam_step(b, pb, std::vector<double>{2.0}, 0.5);
    EXPECT_EQ(a.m, b.m);
    EXPECT_EQ(a.v, b.v);
    EXPECT_NEAR(pb[0], 0.5 * pa[0], 1e-18);
}

TEST(Adam, RejectsBadInput) {
    AdamState s(2, {});
    std::vector<double> p{0.0, 0.0};
    EXPECT_THROW(adam_step(s, p, std::vector<double>{0.0, NAN}), NumericalError);
    EXPECT_THROW(adam_step(s, p, std::vector<double>{0.0}), ShapeError);
    EXPECT_EQ(s.t, 0u);
}

TEST(StepDecay, Multiplier) {
    const StepDecay d{0.99, 100};
    EXPECT_EQ(lr_multiplier(d, 0), 1.0);
    EXPECT_EQ(lr_multiplier(d, 99), 1.0);
    EXPECT_NEAR(lr_multiplier(d, 250), 0.9801, 1e-15);
    EXPECT_THROW((StepDecay{1.5, 10}.validate()), ConfigError);
    EXPECT_THROW((StepDecay{0.9, 0}.validate()), ConfigError);
}
