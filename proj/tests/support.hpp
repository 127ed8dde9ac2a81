#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ebmlab/ebmlab.hpp"

namespace ebmlab::test {

/// Central difference of f at x along every coordinate.
inline std::vector<double> central_diff(const std::function<double(std::span<const double>)>& f,
                                        std::vector<double> x, double h = 1e-5) {
    std::vector<double> g(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double keep = x[k];
        x[k] = keep + h;
        const double up = f(x);
        x[k] = keep - h;
        const double down = f(x);
        x[k] = keep;
        g[k] = (up - down) / (2.0 * h);
    }
    return g;
}

/// Largest mismatch between analytic and numeric gradients, relative where
/// the magnitude allows and absolute near zero.
inline double grad_mismatch(std::span<const double> analytic, std::span<const double> numeric, double abs_floor = 1e-8) {
    double worst = 0.0;
    for (std::size_t k = 0; k < analytic.size(); ++k) {
        const double diff = std::abs(analytic[k] - numeric[k]);
        const double scale = std::max(std::abs(analytic[k]), std::abs(numeric[k]));
        if (diff <= abs_floor) continue;
        worst = std::max(worst, diff / std::max(scale, 1e-300));
    }
    return worst;
}

/// Smallest |pre-activation| of any hidden unit over the input columns.
inline double kink_distance(const DenseEnergyNet& net, const Eigen::MatrixXd& inputs) {
    double out = std::numeric_limits<double>::infinity();
    Eigen::MatrixXd a = inputs;
    for (std::size_t k = 0; k + 1 < net.num_layers(); ++k) {
        Eigen::MatrixXd z = net.weights(k) * a;
        z.colwise() += net.bias(k);
        out = std::min(out, z.cwiseAbs().minCoeff());
        a = z.cwiseMax(0.0);
    }
    return out;
}

/// A 1-1-1 net: hidden weight w1, bias b1, output weight w2, bias b2.
inline DenseEnergyNet tiny_net(double w1, double b1, double w2, double b2) {
    return DenseEnergyNet({1, 1, 1}, {w1, b1, w2, b2});
}

inline std::vector<std::size_t> random_sizes(std::mt19937_64& gen, std::size_t input, std::size_t max_width) {
    std::uniform_int_distribution<std::size_t> width(1, max_width), depth(1, 2);
    std::vector<std::size_t> s{input};
    const std::size_t hidden = depth(gen);
    for (std::size_t k = 0; k < hidden; ++k) s.push_back(width(gen));
    s.push_back(1);
    return s;
}

inline std::vector<double> random_vector(std::mt19937_64& gen, std::size_t n, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(n);
    for (double& x : v) x = u(gen);
    return v;
}

inline Eigen::MatrixXd random_matrix(std::mt19937_64& gen, Eigen::Index r, Eigen::Index c, double lo = -1.0,
                                     double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index j = 0; j < c; ++j)
        for (Eigen::Index i = 0; i < r; ++i) m(i, j) = u(gen);
    return m;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("ebmlab_" + tag + "_" + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::string file(const std::string& name) const { return (path_ / name).string(); }

private:
    std::filesystem::path path_;
};

} // namespace ebmlab::test
