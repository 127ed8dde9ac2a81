#pragma once

// Negative-sample generation. All chain state lives in the models' normalized
// action space, where the nominal domain is [-1, 1] per coordinate and the
// sampling domain is [-(1 + margin), 1 + margin].

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ebmlab/energy_model.hpp"
#include "ebmlab/errors.hpp"
#include "ebmlab/net.hpp"
#include "ebmlab/parallel.hpp"
#include "ebmlab/rng.hpp"

namespace ebmlab {

enum class Formulation { correct, ibc };
enum class ChainStrategy { short_chains, long_chain };

inline std::string_view to_string(Formulation f) { return f == Formulation::correct ? "correct" : "ibc"; }
inline std::string_view to_string(ChainStrategy s) {
    return s == ChainStrategy::short_chains ? "short_chains" : "long_chain";
}

inline Formulation parse_formulation(std::string_view s) {
    if (s == "correct") return Formulation::correct;
    if (s == "ibc") return Formulation::ibc;
    throw ConfigError("unknown Langevin formulation '" + std::string(s) + "' (expected correct or ibc)");
}

inline ChainStrategy parse_strategy(std::string_view s) {
    if (s == "short_chains") return ChainStrategy::short_chains;
    if (s == "long_chain") return ChainStrategy::long_chain;
    throw ConfigError("unknown chain strategy '" + std::string(s) + "' (expected short_chains or long_chain)");
}

/// Polynomial decay end + (start - end) * (1 - k / (K - 1))^power over
/// k = 0 .. K-1.
struct PolySchedule {
    double start = 1.0;
    double end = 0.001;
    double power = 2.0;
    std::size_t horizon = 10;

    /// A constant step over `horizon` iterations.
    static PolySchedule constant(double step, std::size_t horizon) { return {step, step, 1.0, horizon}; }

    void validate() const {
        detail::require_config(start > 0.0 && end > 0.0 && std::isfinite(start) && std::isfinite(end),
                               "step schedule start/end must be positive and finite");
        detail::require_config(power > 0.0 && std::isfinite(power), "step schedule power must be positive");
        detail::require_config(horizon > 0, "step schedule horizon must be positive");
    }

    double value(std::size_t k) const {
        detail::require_config(k < horizon, "schedule index " + std::to_string(k) + " outside horizon " +
                                                std::to_string(horizon));
        if (horizon == 1 || k == 0) return start;
        if (k + 1 == horizon) return end;
        const double frac = 1.0 - static_cast<double>(k) / static_cast<double>(horizon - 1);
        return end + (start - end) * std::pow(frac, power);
    }

    friend bool operator==(const PolySchedule&, const PolySchedule&) = default;
};

inline double schedule_value(const PolySchedule& s, std::size_t k) { return s.value(k); }

/// Full description of one negative-sampling run.
struct ChainConfig {
    Formulation formulation = Formulation::ibc;
    std::size_t iterations = 10;
    PolySchedule step_schedule{};
    /// Noise multiplier sigma of the ibc update; ignored by the correct one.
    double noise_scale = 0.1;
    /// Per-coordinate displacement bound as a fraction of the sampling-domain
    /// width 2 (1 + margin). Disabled when empty.
    std::optional<double> per_step_clip_fraction = 0.25;
    /// Clamp states to the sampling domain after every step.
    bool clamp_to_domain = true;
    double domain_margin = 0.1;
    std::size_t num_chains = 256;
    std::size_t burn_in = 0;
    ChainStrategy strategy = ChainStrategy::short_chains;
    std::uint64_t seed = 0;
    /// Fixed starting state (normalized space). Uniform on the sampling domain
    /// when empty.
    std::optional<std::vector<double>> initial_state{};

    void validate() const {
        step_schedule.validate();
        detail::require_config(iterations <= step_schedule.horizon,
                               "chain iterations exceed the step schedule horizon");
        detail::require_config(std::isfinite(noise_scale) && noise_scale > 0.0, "noise_scale must be positive");
        if (per_step_clip_fraction)
            detail::require_config(*per_step_clip_fraction > 0.0 && *per_step_clip_fraction <= 1.0,
                                   "per_step_clip_fraction must lie in (0, 1]");
        detail::require_config(std::isfinite(domain_margin) && domain_margin >= 0.0,
                               "domain_margin must be non-negative");
        if (strategy == ChainStrategy::short_chains) {
            detail::require_config(num_chains > 0, "num_chains must be positive");
            detail::require_config(burn_in == 0, "short_chains strategy keeps only final states; burn_in must be 0");
        } else {
            detail::require_config(burn_in < iterations, "long_chain requires burn_in < iterations");
        }
    }

    double domain_half_width() const { return 1.0 + domain_margin; }
    double step_bound() const { return per_step_clip_fraction ? *per_step_clip_fraction * 2.0 * domain_half_width() : 0.0; }
};

/// i.i.d. uniform draws on [-(1 + margin), 1 + margin]^act_dim, one per
/// column. Sample i uses the same stream as chain i's initial state.
inline Eigen::MatrixXd uniform_negatives(std::size_t act_dim, double margin, std::size_t count, std::uint64_t seed) {
    detail::require_config(act_dim > 0, "act_dim must be positive");
    detail::require_config(count > 0, "count must be positive");
    detail::require_config(std::isfinite(margin) && margin >= 0.0, "margin must be non-negative");
    const double h = 1.0 + margin;
    Eigen::MatrixXd out(act_dim, count);
    for (std::size_t i = 0; i < count; ++i) {
        CounterStream rng(derive_key(seed, i, 0));
        for (std::size_t d = 0; d < act_dim; ++d) out(d, i) = rng.uniform(-h, h);
    }
    return out;
}

/// One Langevin update with explicit noise.
///   correct: y - step * grad + sqrt(2 step) * noise
///   ibc:     y - (step / 2) * grad + step * sigma * noise
inline double langevin_update(Formulation f, double y, double grad, double step, double sigma, double noise) {
    if (f == Formulation::correct) return y - step * grad + std::sqrt(2.0 * step) * noise;
    return y - 0.5 * step * grad + step * sigma * noise;
}

inline std::vector<double> langevin_step(Formulation f, std::span<const double> y, std::span<const double> grad,
                                         double step, double sigma, std::span<const double> noise) {
    detail::require_shape(y.size() == grad.size() && y.size() == noise.size(),
                          "langevin_step arrays must have equal lengths");
    detail::require_config(step > 0.0 && std::isfinite(step), "langevin step must be positive");
    detail::require_config(f == Formulation::correct || (sigma > 0.0 && std::isfinite(sigma)),
                           "ibc noise scale must be positive");
    std::vector<double> out(y.size());
    for (std::size_t d = 0; d < y.size(); ++d) {
        if (!std::isfinite(y[d]) || !std::isfinite(grad[d]) || !std::isfinite(noise[d]))
            throw NumericalError("non-finite input to langevin_step at coordinate " + std::to_string(d));
        out[d] = langevin_update(f, y[d], grad[d], step, sigma, noise[d]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Chain targets: energy gradients over blocks of chain states.

/// Conditional model with per-chain observations. Chain c conditions on
/// observation column c / chains_per_obs of `obs` (already normalized).
class ConditionalTarget {
public:
    ConditionalTarget(const ConditionalEbm& model, Eigen::MatrixXd obs, std::size_t chains_per_obs)
        : model_(&model), obs_(std::move(obs)), per_obs_(chains_per_obs) {
        detail::require_shape(static_cast<std::size_t>(obs_.rows()) == model.obs_dim(),
                              "observation rows must equal obs_dim");
        detail::require_config(per_obs_ > 0, "chains_per_obs must be positive");
    }

    std::size_t act_dim() const { return model_->act_dim(); }
    std::size_t chain_count() const { return static_cast<std::size_t>(obs_.cols()) * per_obs_; }

    void evaluate(const Eigen::MatrixXd& y, std::size_t first_chain, Eigen::VectorXd* energies,
                  Eigen::MatrixXd* grad) const {
        const std::size_t od = model_->obs_dim();
        Eigen::MatrixXd in(od + act_dim(), y.cols());
        for (Eigen::Index j = 0; j < y.cols(); ++j)
            in.col(j).head(od) = obs_.col(static_cast<Eigen::Index>((first_chain + j) / per_obs_));
        in.bottomRows(act_dim()) = y;
        BatchPass pass(model_->net());
        pass.forward(in);
        if (energies) *energies = pass.energies();
        if (grad) {
            Eigen::MatrixXd g;
            pass.input_gradients(g);
            *grad = g.bottomRows(act_dim());
        }
    }

private:
    const ConditionalEbm* model_;
    Eigen::MatrixXd obs_;
    std::size_t per_obs_;
};

class MarginalTarget {
public:
    explicit MarginalTarget(const MarginalEbm& model) : model_(&model) {}

    std::size_t act_dim() const { return model_->act_dim(); }

    void evaluate(const Eigen::MatrixXd& y, std::size_t, Eigen::VectorXd* energies, Eigen::MatrixXd* grad) const {
        BatchPass pass(model_->net());
        pass.forward(y);
        if (energies) *energies = pass.energies();
        if (grad) pass.input_gradients(*grad);
    }

private:
    const MarginalEbm* model_;
};

/// Energy given as a callable: returns E(y) and writes dE/dy into `grad`.
using EnergyFunction = std::function<double(std::span<const double> y, std::span<double> grad)>;

class FunctionTarget {
public:
    FunctionTarget(EnergyFunction fn, std::size_t dim) : fn_(std::move(fn)), dim_(dim) {
        detail::require_config(static_cast<bool>(fn_) && dim_ > 0, "function target needs a callable and dim > 0");
    }

    std::size_t act_dim() const { return dim_; }

    void evaluate(const Eigen::MatrixXd& y, std::size_t, Eigen::VectorXd* energies, Eigen::MatrixXd* grad) const {
        if (energies) energies->resize(y.cols());
        if (grad) grad->resize(y.rows(), y.cols());
        std::vector<double> g(dim_);
        for (Eigen::Index j = 0; j < y.cols(); ++j) {
            const double e = fn_(std::span<const double>(y.col(j).data(), dim_), g);
            if (energies) (*energies)(j) = e;
            if (grad)
                for (std::size_t d = 0; d < dim_; ++d) (*grad)(static_cast<Eigen::Index>(d), j) = g[d];
        }
    }

private:
    EnergyFunction fn_;
    std::size_t dim_;
};

/// E(y) = alpha * |y|^2 / 2, whose Gibbs density is N(0, I / alpha).
inline EnergyFunction quadratic_energy(double alpha = 1.0) {
    return [alpha](std::span<const double> y, std::span<double> grad) {
        double e = 0.0;
        for (std::size_t d = 0; d < y.size(); ++d) {
            e += 0.5 * alpha * y[d] * y[d];
            grad[d] = alpha * y[d];
        }
        return e;
    };
}

/// Constant energy: pure random walk under Langevin.
inline EnergyFunction constant_energy(double c = 0.0) {
    return [c](std::span<const double>, std::span<double> grad) {
        std::fill(grad.begin(), grad.end(), 0.0);
        return c;
    };
}

template <typename T>
concept ChainTarget = requires(const T& t, const Eigen::MatrixXd& y, Eigen::VectorXd* e, Eigen::MatrixXd* g) {
    { t.act_dim() } -> std::convertible_to<std::size_t>;
    t.evaluate(y, std::size_t{}, e, g);
};

namespace detail {

inline constexpr std::size_t kChainBlock = 256;

inline void initial_states(const ChainConfig& cfg, std::size_t dim, std::size_t first, Eigen::MatrixXd& y) {
    const double h = cfg.domain_half_width();
    for (Eigen::Index j = 0; j < y.cols(); ++j) {
        if (cfg.initial_state) {
            require_shape(cfg.initial_state->size() == dim, "initial_state length != act_dim");
            for (std::size_t d = 0; d < dim; ++d) y(static_cast<Eigen::Index>(d), j) = (*cfg.initial_state)[d];
        } else {
            CounterStream rng(derive_key(cfg.seed, first + static_cast<std::size_t>(j), 0));
            for (std::size_t d = 0; d < dim; ++d) y(static_cast<Eigen::Index>(d), j) = rng.uniform(-h, h);
        }
    }
}

/// Advances every column of `y` by one clipped Langevin step.
inline void advance(const ChainConfig& cfg, std::size_t k, std::size_t first, const Eigen::MatrixXd& grad,
                    Eigen::MatrixXd& y) {
    const double step = cfg.step_schedule.value(k);
    const double bound = cfg.step_bound();
    const double h = cfg.domain_half_width();
    for (Eigen::Index j = 0; j < y.cols(); ++j) {
        const std::size_t chain = first + static_cast<std::size_t>(j);
        CounterStream rng(derive_key(cfg.seed, chain, k + 1));
        for (Eigen::Index d = 0; d < y.rows(); ++d) {
            const double cur = y(d, j);
            const double g = grad(d, j);
            if (!std::isfinite(g))
                throw NumericalError("non-finite energy gradient in chain " + std::to_string(chain) + " at step " +
                                     std::to_string(k));
            double next = langevin_update(cfg.formulation, cur, g, step, cfg.noise_scale, rng.normal());
            if (cfg.per_step_clip_fraction) next = cur + std::clamp(next - cur, -bound, bound);
            if (cfg.clamp_to_domain) next = std::clamp(next, -h, h);
            if (!std::isfinite(next))
                throw NumericalError("non-finite chain state in chain " + std::to_string(chain) + " at step " +
                                     std::to_string(k));
            y(d, j) = next;
        }
    }
}

template <ChainTarget T>
Eigen::MatrixXd run_short_chains(const T& target, const ChainConfig& cfg, std::size_t total) {
    const std::size_t dim = target.act_dim();
    Eigen::MatrixXd out(dim, total);
    const std::size_t blocks = (total + kChainBlock - 1) / kChainBlock;
    parallel_for(blocks, [&](std::size_t b) {
        const std::size_t first = b * kChainBlock;
        const std::size_t n = std::min(kChainBlock, total - first);
        Eigen::MatrixXd y(dim, n), grad;
        initial_states(cfg, dim, first, y);
        for (std::size_t k = 0; k < cfg.iterations; ++k) {
            target.evaluate(y, first, nullptr, &grad);
            advance(cfg, k, first, grad, y);
        }
        out.middleCols(static_cast<Eigen::Index>(first), static_cast<Eigen::Index>(n)) = y;
    });
    return out;
}

template <ChainTarget T>
Eigen::MatrixXd run_long_chain(const T& target, const ChainConfig& cfg) {
    const std::size_t dim = target.act_dim();
    Eigen::MatrixXd y(dim, 1), grad;
    initial_states(cfg, dim, 0, y);
    Eigen::MatrixXd out(dim, cfg.iterations - cfg.burn_in);
    for (std::size_t k = 0; k < cfg.iterations; ++k) {
        target.evaluate(y, 0, nullptr, &grad);
        advance(cfg, k, 0, grad, y);
        if (k >= cfg.burn_in) out.col(static_cast<Eigen::Index>(k - cfg.burn_in)) = y.col(0);
    }
    return out;
}

} // namespace detail

/// Runs chains on an arbitrary target. Short chains: `total_chains` chains
/// (chain indices 0..total-1 select RNG streams and, for conditional targets,
/// observations), returning each final state. Long chain: one chain returning
/// the iterations - burn_in states after burn-in.
template <ChainTarget T>
Eigen::MatrixXd run_target_chains(const T& target, const ChainConfig& cfg, std::size_t total_chains) {
    cfg.validate();
    if (cfg.strategy == ChainStrategy::long_chain) return detail::run_long_chain(target, cfg);
    detail::require_config(total_chains > 0, "number of chains must be positive");
    return detail::run_short_chains(target, cfg, total_chains);
}

/// Chains on a conditional model for one raw observation. Returns states in
/// normalized action space, one per column.
inline Eigen::MatrixXd run_chains(const ConditionalEbm& model, std::span<const double> x, const ChainConfig& cfg) {
    const std::vector<double> nx = model.obs_normalizer().normalize(x);
    Eigen::MatrixXd obs = Eigen::Map<const Eigen::VectorXd>(nx.data(), static_cast<Eigen::Index>(nx.size()));
    ConditionalTarget target(model, std::move(obs), cfg.num_chains);
    return run_target_chains(target, cfg, cfg.num_chains);
}

/// Chains on a marginal model; states in normalized action space.
inline Eigen::MatrixXd run_chains(const MarginalEbm& model, const ChainConfig& cfg) {
    return run_target_chains(MarginalTarget(model), cfg, cfg.num_chains);
}

struct MomentsReport {
    std::vector<double> mean;
    std::vector<double> variance;  // biased (1/n) per-coordinate
    Eigen::MatrixXd samples;       // dim x retained
};

/// Per-coordinate mean/variance of one long chain on `target_energy` after
/// discarding the first `discard` states. Clipping follows `cfg`.
inline MomentsReport diagnose_moments(const EnergyFunction& target_energy, std::size_t dim, ChainConfig cfg,
                                      std::size_t discard) {
    detail::require_config(cfg.strategy == ChainStrategy::long_chain, "diagnose_moments needs a long_chain config");
    detail::require_config(discard < cfg.iterations, "zero retained samples: discard must be < iterations");
    cfg.burn_in = discard;
    MomentsReport r;
    r.samples = run_target_chains(FunctionTarget(target_energy, dim), cfg, 1);
    const Eigen::VectorXd mean = r.samples.rowwise().mean();
    const Eigen::VectorXd var = (r.samples.colwise() - mean).array().square().rowwise().mean();
    r.mean.assign(mean.data(), mean.data() + mean.size());
    r.variance.assign(var.data(), var.data() + var.size());
    return r;
}

} // namespace ebmlab
