#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ebmlab/errors.hpp"
#include "ebmlab/net.hpp"

namespace ebmlab {

/// Per-dimension affine map sending [min, max] onto [-1, 1].
class Normalizer {
public:
    Normalizer() = default;

    Normalizer(std::vector<double> lo, std::vector<double> hi) : lo_(std::move(lo)), hi_(std::move(hi)) {
        detail::require_shape(lo_.size() == hi_.size(), "normalizer min/max lengths differ");
        for (std::size_t d = 0; d < lo_.size(); ++d)
            detail::require_config(std::isfinite(lo_[d]) && std::isfinite(hi_[d]) && hi_[d] > lo_[d],
                                   "normalizer requires finite max > min in every dimension");
    }

    /// Identity map on [-1, 1]^dim.
    static Normalizer identity(std::size_t dim) {
        return {std::vector<double>(dim, -1.0), std::vector<double>(dim, 1.0)};
    }

    /// Fits per-dimension extremes of `rows` (dim x count). A dimension with
    /// zero spread is widened to [v - 1, v + 1].
    static Normalizer fit(const Eigen::Ref<const Eigen::MatrixXd>& rows) {
        detail::require_config(rows.cols() > 0, "cannot fit a normalizer on zero rows");
        std::vector<double> lo(rows.rows()), hi(rows.rows());
        for (Eigen::Index d = 0; d < rows.rows(); ++d) {
            lo[d] = rows.row(d).minCoeff();
            hi[d] = rows.row(d).maxCoeff();
            if (!(hi[d] > lo[d])) {
                lo[d] -= 1.0;
                hi[d] += 1.0;
            }
        }
        return {std::move(lo), std::move(hi)};
    }

    std::size_t dim() const noexcept { return lo_.size(); }
    const std::vector<double>& min() const noexcept { return lo_; }
    const std::vector<double>& max() const noexcept { return hi_; }

    double normalize(std::size_t d, double v) const { return 2.0 * (v - lo_[d]) / (hi_[d] - lo_[d]) - 1.0; }
    double denormalize(std::size_t d, double u) const { return lo_[d] + 0.5 * (u + 1.0) * (hi_[d] - lo_[d]); }
    /// d(normalized)/d(raw) for dimension d.
    double jacobian(std::size_t d) const { return 2.0 / (hi_[d] - lo_[d]); }

    std::vector<double> normalize(std::span<const double> v) const {
        check(v.size());
        std::vector<double> out(v.size());
        for (std::size_t d = 0; d < v.size(); ++d) out[d] = normalize(d, v[d]);
        return out;
    }
    std::vector<double> denormalize(std::span<const double> u) const {
        check(u.size());
        std::vector<double> out(u.size());
        for (std::size_t d = 0; d < u.size(); ++d) out[d] = denormalize(d, u[d]);
        return out;
    }

    /// Column-wise normalization of a (dim x count) matrix.
    Eigen::MatrixXd normalize_cols(const Eigen::Ref<const Eigen::MatrixXd>& raw) const {
        check(static_cast<std::size_t>(raw.rows()));
        Eigen::MatrixXd out(raw.rows(), raw.cols());
        for (Eigen::Index d = 0; d < raw.rows(); ++d)
            for (Eigen::Index c = 0; c < raw.cols(); ++c) out(d, c) = normalize(d, raw(d, c));
        return out;
    }

    friend bool operator==(const Normalizer&, const Normalizer&) = default;

private:
    void check(std::size_t n) const {
        detail::require_shape(n == dim(), "array length " + std::to_string(n) + " != normalizer dimension " +
                                              std::to_string(dim()));
    }

    std::vector<double> lo_;
    std::vector<double> hi_;
};

/// Shared surface of the conditional and marginal models. Network inputs are
/// the concatenation [normalized obs; normalized action]; a marginal model has
/// obs_dim() == 0.
template <typename M>
concept EnergyModel = requires(const M& m, M& mm) {
    { m.net() } -> std::same_as<const DenseEnergyNet&>;
    { mm.mutable_net() } -> std::same_as<DenseEnergyNet&>;
    { m.obs_dim() } -> std::convertible_to<std::size_t>;
    { m.act_dim() } -> std::convertible_to<std::size_t>;
    { m.act_normalizer() } -> std::same_as<const Normalizer&>;
};

/// Conditional energy E(x, y) over raw observation/action units.
class ConditionalEbm {
public:
    ConditionalEbm() = default;

    ConditionalEbm(DenseEnergyNet net, Normalizer obs_norm, Normalizer act_norm)
        : net_(std::move(net)), obs_norm_(std::move(obs_norm)), act_norm_(std::move(act_norm)) {
        detail::require_config(obs_norm_.dim() > 0 && act_norm_.dim() > 0, "obs_dim and act_dim must be positive");
        detail::require_shape(net_.input_width() == obs_norm_.dim() + act_norm_.dim(),
                              "network input width must equal obs_dim + act_dim");
    }

    const DenseEnergyNet& net() const noexcept { return net_; }
    DenseEnergyNet& mutable_net() noexcept { return net_; }
    std::size_t obs_dim() const noexcept { return obs_norm_.dim(); }
    std::size_t act_dim() const noexcept { return act_norm_.dim(); }
    const Normalizer& obs_normalizer() const noexcept { return obs_norm_; }
    const Normalizer& act_normalizer() const noexcept { return act_norm_; }

    /// Network input for raw (x, y).
    std::vector<double> network_input(std::span<const double> x, std::span<const double> y) const {
        std::vector<double> in = obs_norm_.normalize(x);
        std::vector<double> ny = act_norm_.normalize(y);
        in.insert(in.end(), ny.begin(), ny.end());
        return in;
    }

    double energy(std::span<const double> x, std::span<const double> y) const {
        return forward(net_, network_input(x, y));
    }

    /// dE/dy in raw action units.
    std::vector<double> energy_grad_y(std::span<const double> x, std::span<const double> y) const {
        GradientBundle g = forward_grad(net_, network_input(x, y), false, true);
        std::vector<double> out(act_dim());
        for (std::size_t d = 0; d < act_dim(); ++d) out[d] = g.input_grad[obs_dim() + d] * act_norm_.jacobian(d);
        return out;
    }

    friend bool operator==(const ConditionalEbm&, const ConditionalEbm&) = default;

private:
    DenseEnergyNet net_;
    Normalizer obs_norm_;
    Normalizer act_norm_;
};

/// Marginal energy E(y) over raw action units.
class MarginalEbm {
public:
    MarginalEbm() = default;

    MarginalEbm(DenseEnergyNet net, Normalizer act_norm) : net_(std::move(net)), act_norm_(std::move(act_norm)) {
        detail::require_config(act_norm_.dim() > 0, "act_dim must be positive");
        detail::require_shape(net_.input_width() == act_norm_.dim(), "network input width must equal act_dim");
    }

    const DenseEnergyNet& net() const noexcept { return net_; }
    DenseEnergyNet& mutable_net() noexcept { return net_; }
    std::size_t obs_dim() const noexcept { return 0; }
    std::size_t act_dim() const noexcept { return act_norm_.dim(); }
    const Normalizer& act_normalizer() const noexcept { return act_norm_; }

    double energy(std::span<const double> y) const { return forward(net_, act_norm_.normalize(y)); }

    std::vector<double> energy_grad_y(std::span<const double> y) const {
        GradientBundle g = forward_grad(net_, act_norm_.normalize(y), false, true);
        for (std::size_t d = 0; d < act_dim(); ++d) g.input_grad[d] *= act_norm_.jacobian(d);
        return std::move(g.input_grad);
    }

    friend bool operator==(const MarginalEbm&, const MarginalEbm&) = default;

private:
    DenseEnergyNet net_;
    Normalizer act_norm_;
};

static_assert(EnergyModel<ConditionalEbm>);
static_assert(EnergyModel<MarginalEbm>);

} // namespace ebmlab
