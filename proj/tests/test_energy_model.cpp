#include <gtest/gtest.h>

#include <random>

#include "support.hpp"

using namespace ebmlab;

TEST(Normalizer, HandExamples) {
    const Normalizer n({0.0}, {10.0});
    EXPECT_EQ(n.normalize(0, 5.0), 0.0);
    EXPECT_EQ(n.normalize(0, 10.0), 1.0);
    EXPECT_NEAR(n.normalize(0, 2.0), -0.6, 1e-15);
    EXPECT_EQ(n.normalize(0, 0.0), -1.0);
    EXPECT_EQ(n.jacobian(0), 0.2);
}

TEST(Normalizer, RoundTripWithinRange) {
    std::mt19937_64 gen(11);
    const Normalizer n({-3.0, 0.5, 100.0}, {2.0, 0.75, 1000.0});
    for (int t = 0; t < 1000; ++t) {
        std::vector<double> v{std::uniform_real_distribution<double>(-3, 2)(gen),
                              std::uniform_real_distribution<double>(0.5, 0.75)(gen),
                              std::uniform_real_distribution<double>(100, 1000)(gen)};
        const auto back = n.denormalize(n.normalize(v));
        for (std::size_t d = 0; d < 3; ++d) EXPECT_NEAR(back[d], v[d], 1e-12 * std::max(1.0, std::abs(v[d])));
    }
}

TEST(Normalizer, FitUsesExtremesAndWidensFlatDimensions) {
    Eigen::MatrixXd rows(2, 3);
    rows << 1, 3, 2, 4, 4, 4;
    const Normalizer n = Normalizer::fit(rows);
    EXPECT_EQ(n.min(), (std::vector<double>{1, 3}));
    EXPECT_EQ(n.max(), (std::vector<double>{3, 5}));
    EXPECT_EQ(n.normalize(0, 1.0), -1.0);
    EXPECT_EQ(n.normalize(0, 3.0), 1.0);
}

TEST(Normalizer, RejectsInvalidRanges) {
    EXPECT_THROW(Normalizer({1.0}, {1.0}), ConfigError);
    EXPECT_THROW(Normalizer({1.0}, {0.0}), ConfigError);
    EXPECT_THROW(Normalizer({0.0, 1.0}, {1.0}), ShapeError);
}

TEST(Normalizer, ValuesOutsideRangePassThroughUnclamped) {
    const Normalizer n({0.0}, {1.0});
    EXPECT_EQ(n.normalize(0, 2.0), 3.0);
}

namespace {

ConditionalEbm make_model(std::uint64_t seed, double act_lo = -1.0, double act_hi = 1.0) {
    return ConditionalEbm(init_net({3, 8, 8, 1}, 0.6, seed), Normalizer({-2.0, 0.0}, {2.0, 4.0}),
                          Normalizer({act_lo}, {act_hi}));
}

} // namespace

TEST(ConditionalEbm, ZeroNetHasZeroEnergy) {
    const ConditionalEbm m(init_net({3, 4, 1}, 0.0, 1), Normalizer::identity(2), Normalizer::identity(1));
    std::mt19937_64 gen(2);
    for (int t = 0; t < 20; ++t) {
        const auto x = test::random_vector(gen, 2, -3, 3);
        const auto y = test::random_vector(gen, 1, -3, 3);
        EXPECT_EQ(m.energy(x, y), 0.0);
        EXPECT_EQ(m.energy_grad_y(x, y), std::vector<double>{0.0});
    }
}

TEST(ConditionalEbm, IdentityNormalizerLeavesInputsUnchanged) {
    const auto net = init_net({3, 8, 1}, 0.5, 4);
    const ConditionalEbm m(net, Normalizer::identity(2), Normalizer::identity(1));
    const std::vector<double> x{0.3, -0.7}, y{0.2};
    EXPECT_EQ(m.energy(x, y), forward(net, std::vector<double>{0.3, -0.7, 0.2}));
}

TEST(ConditionalEbm, EnergyComposesNormalizersAndNet) {
    const auto m = make_model(5);
    const std::vector<double> x{1.0, 3.0}, y{0.25};
    const std::vector<double> in{m.obs_normalizer().normalize(0, 1.0), m.obs_normalizer().normalize(1, 3.0),
                                 m.act_normalizer().normalize(0, 0.25)};
    EXPECT_EQ(m.energy(x, y), forward(m.net(), in));
}

TEST(ConditionalEbm, ActionGradientMatchesFiniteDifferences) {
    std::mt19937_64 gen(6);
    for (int t = 0; t < 50; ++t) {
        const auto m = make_model(gen(), -0.5, 2.0);
        const auto x = test::random_vector(gen, 2, -2, 2);
        const auto y = test::random_vector(gen, 1, -0.5, 2.0);
        const auto g = m.energy_grad_y(x, y);
        const auto num = test::central_diff([&](std::span<const double> v) { return m.energy(x, v); }, y);
        EXPECT_LE(test::grad_mismatch(g, num), 1e-4);
    }
}

TEST(ConditionalEbm, ActionGradientIsNetGradientTimesJacobian) {
    const auto m = make_model(8, -3.0, 1.0);
    const std::vector<double> x{0.5, 1.0}, y{-0.4};
    const auto g = forward_grad(m.net(), m.network_input(x, y), false, true);
    EXPECT_EQ(m.energy_grad_y(x, y)[0], g.input_grad[2] * 0.5);
}

TEST(ConditionalEbm, DoublingActionRangeHalvesRawGradient) {
    const auto net = init_net({3, 16, 1}, 0.5, 9);
    const ConditionalEbm narrow(net, Normalizer::identity(2), Normalizer({-1.0}, {1.0}));
    const ConditionalEbm wide(net, Normalizer::identity(2), Normalizer({-2.0}, {2.0}));
    const std::vector<double> x{0.1, 0.2};
    // The same normalized point: y = 0.3 in the narrow range, 0.6 in the wide one.
    const double gn = narrow.energy_grad_y(x, std::vector<double>{0.3})[0];
    const double gw = wide.energy_grad_y(x, std::vector<double>{0.6})[0];
    EXPECT_NEAR(gw, 0.5 * gn, 1e-15);
    const auto num = test::central_diff([&](std::span<const double> v) { return wide.energy(x, v); },
                                        std::vector<double>{0.6});
    EXPECT_NEAR(num[0], 0.5 * gn, 1e-8);
}

TEST(ConditionalEbm, InputWidthMismatchIsShapeError) {
    EXPECT_THROW(ConditionalEbm(init_net({2, 4, 1}, 0.1, 1), Normalizer::identity(2), Normalizer::identity(1)),
                 ShapeError);
}

TEST(MarginalEbm, GradientMatchesFiniteDifferences) {
    const MarginalEbm m(init_net({2, 8, 1}, 0.5, 10), Normalizer({-1.0, 0.0}, {3.0, 0.5}));
    const std::vector<double> y{0.5, 0.1};
    const auto g = m.energy_grad_y(y);
    const auto num = test::central_diff([&](std::span<const double> v) { return m.energy(v); }, y);
    EXPECT_LE(test::grad_mismatch(g, num), 1e-4);
    EXPECT_EQ(m.obs_dim(), 0u);
}
