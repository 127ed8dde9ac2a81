#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "support.hpp"

using namespace ebmlab;
using ebmlab::test::central_diff;
using ebmlab::test::grad_mismatch;

TEST(DenseNet, LayerSizeValidation) {
    EXPECT_THROW(DenseEnergyNet({3}, {}), ConfigError);
    EXPECT_THROW(DenseEnergyNet({3, 0, 1}, std::vector<double>(4)), ConfigError);
    EXPECT_THROW(DenseEnergyNet({2, 4, 2}, std::vector<double>(count_params(std::vector<std::size_t>{2, 4, 2}))),
                 ConfigError);
    EXPECT_THROW(DenseEnergyNet({2, 1}, {1.0, 2.0}), ShapeError);
    EXPECT_EQ(count_params(std::vector<std::size_t>{3, 4, 1}), 3u * 4 + 4 + 4 + 1);
}

TEST(DenseNet, RejectsNonFiniteParameters) {
    EXPECT_THROW(DenseEnergyNet({1, 1}, {NAN, 0.0}), NumericalError);
}

TEST(DenseNet, LayerMajorLayout) {
    // W0 (2x1), b0 (2), W1 (1x2), b1 (1)
    const DenseEnergyNet net({1, 2, 1}, {1, 2, 3, 4, 5, 6, 7});
    EXPECT_EQ(net.weights(0)(1, 0), 2.0);
    EXPECT_EQ(net.bias(0)(0), 3.0);
    EXPECT_EQ(net.weights(1)(0, 1), 6.0);
    EXPECT_EQ(net.bias(1)(0), 7.0);
    EXPECT_EQ(net.layer_offset(1), 4u);
}

TEST(DenseNet, HandEvaluatedTwoLayerNet) {
    const auto net = test::tiny_net(2.0, 0.0, 3.0, 1.0);
    const std::vector<double> x{0.5};
    EXPECT_DOUBLE_EQ(forward(net, x), 4.0);
    const auto g = forward_grad(net, x, true, true);
    EXPECT_DOUBLE_EQ(g.value, 4.0);
    EXPECT_DOUBLE_EQ(g.input_grad[0], 6.0);
    // dE/d(w1, b1, w2, b2) = (w2 * x, w2, relu(h), 1)
    EXPECT_DOUBLE_EQ(g.param_grad[0], 1.5);
    EXPECT_DOUBLE_EQ(g.param_grad[1], 3.0);
    EXPECT_DOUBLE_EQ(g.param_grad[2], 1.0);
    EXPECT_DOUBLE_EQ(g.param_grad[3], 1.0);
}

TEST(DenseNet, ZeroWeightsReturnOutputBias) {
    std::vector<double> p(count_params(std::vector<std::size_t>{3, 5, 4, 1}), 0.0);
    p.back() = -2.5;
    const DenseEnergyNet net({3, 5, 4, 1}, p);
    std::mt19937_64 gen(1);
    for (int t = 0; t < 10; ++t) {
        const auto x = test::random_vector(gen, 3, -5.0, 5.0);
        EXPECT_EQ(forward(net, x), -2.5);
        const auto g = forward_grad(net, x, false, true);
        for (double v : g.input_grad) EXPECT_EQ(v, 0.0);
    }
}

TEST(DenseNet, DeadReluGivesOutputBias) {
    // Hidden units have negative pre-activation for x > 0.
    const DenseEnergyNet net({1, 2, 1}, {-1.0, -2.0, 0.0, -0.5, 4.0, 5.0, 0.25});
    EXPECT_EQ(forward(net, std::vector<double>{1.0}), 0.25);
    // A pre-activation of exactly 0 takes subgradient 0.
    const auto g = forward_grad(net, std::vector<double>{0.0}, false, true);
    EXPECT_EQ(g.input_grad[0], 0.0);
}

TEST(DenseNet, InitScaleZeroGivesZeroNet) {
    const auto net = init_net({4, 8, 8, 1}, 0.0, 3);
    for (double p : net.params()) EXPECT_EQ(p, 0.0);
    EXPECT_EQ(forward(net, std::vector<double>{1, -2, 3, 4}), 0.0);
    EXPECT_THROW(init_net({4, 1}, -1.0, 3), ConfigError);
}

TEST(DenseNet, InitIsSeedDeterministic) {
    const auto a = init_net({3, 16, 1}, 0.05, 42);
    const auto b = init_net({3, 16, 1}, 0.05, 42);
    const auto c = init_net({3, 16, 1}, 0.05, 43);
    EXPECT_TRUE(a == b);
    EXPECT_FALSE(a == c);
}

TEST(DenseNet, InitScaleMatchesStandardDeviation) {
    const auto net = init_net({2, 256, 256, 1}, 0.05, 7);
    double s = 0.0, s2 = 0.0;
    for (double p : net.params()) {
        s += p;
        s2 += p * p;
    }
    const double n = static_cast<double>(net.param_count());
    const double mean = s / n;
    const double sd = std::sqrt(s2 / n - mean * mean);
    // ~66k draws: standard error of the sd estimate is about 0.05 / sqrt(2n).
    EXPECT_NEAR(mean, 0.0, 0.002);
    EXPECT_NEAR(sd, 0.05, 0.001);
}

TEST(DenseNet, GradientsMatchFiniteDifferences) {
    std::mt19937_64 gen(2024);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t in = 1 + gen() % 6;
        auto net = init_net(test::random_sizes(gen, in, 8), 0.7, gen());
        const auto x = test::random_vector(gen, in, -2.0, 2.0);
        const auto g = forward_grad(net, x, true, true);

        const auto num_in = central_diff([&](std::span<const double> v) { return forward(net, v); }, x);
        worst = std::max(worst, grad_mismatch(g.input_grad, num_in));

        const std::vector<double> p0(net.params().begin(), net.params().end());
        const auto num_p = central_diff(
            [&](std::span<const double> p) {
                std::copy(p.begin(), p.end(), net.mutable_params().begin());
                return forward(net, x);
            },
            p0);
        std::copy(p0.begin(), p0.end(), net.mutable_params().begin());
        worst = std::max(worst, grad_mismatch(g.param_grad, num_p));
    }
    EXPECT_LE(worst, 1e-4);
}

TEST(DenseNet, AffineNetInputGradIsWeightRow) {
    const DenseEnergyNet net({3, 1}, {0.5, -1.25, 2.0, 0.3});
    const auto g = forward_grad(net, std::vector<double>{9, 8, 7}, false, true);
    EXPECT_EQ(g.input_grad, (std::vector<double>{0.5, -1.25, 2.0}));
}

TEST(DenseNet, RepeatedEvaluationIsBitIdentical) {
    const auto net = init_net({4, 32, 32, 1}, 0.3, 5);
    const std::vector<double> x{0.1, -0.2, 0.3, -0.4};
    const auto a = forward_grad(net, x, true, true);
    const auto b = forward_grad(net, x, true, true);
    EXPECT_EQ(a.value, b.value);
    EXPECT_EQ(a.param_grad, b.param_grad);
    EXPECT_EQ(a.input_grad, b.input_grad);
}

TEST(DenseNet, BatchPassMatchesSingleEvaluation) {
    const auto net = init_net({3, 16, 8, 1}, 0.4, 9);
    std::mt19937_64 gen(3);
    const Eigen::MatrixXd in = test::random_matrix(gen, 3, 37);
    BatchPass pass(net);
    const Eigen::VectorXd e = pass.forward(in);
    Eigen::VectorXd upstream = Eigen::VectorXd::LinSpaced(37, -1.0, 1.0);
    std::vector<double> pg(net.param_count(), 0.0);
    Eigen::MatrixXd ig;
    pass.backward(upstream, pg, &ig);

    std::vector<double> ref(net.param_count(), 0.0);
    for (Eigen::Index j = 0; j < 37; ++j) {
        const std::vector<double> x(in.col(j).data(), in.col(j).data() + 3);
        const auto g = forward_grad(net, x, true, true);
        EXPECT_NEAR(e(j), g.value, 1e-14);
        for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(ig(static_cast<Eigen::Index>(k), j), upstream(j) * g.input_grad[k], 1e-13);
        for (std::size_t k = 0; k < ref.size(); ++k) ref[k] += upstream(j) * g.param_grad[k];
    }
    for (std::size_t k = 0; k < ref.size(); ++k) EXPECT_NEAR(pg[k], ref[k], 1e-12);
}

TEST(DenseNet, WrongInputWidthIsShapeError) {
    const auto net = init_net({3, 4, 1}, 0.1, 1);
    EXPECT_THROW(forward(net, std::vector<double>{1.0, 2.0}), ShapeError);
}
