#pragma once

// Training objectives. Every loss is computed in two stages: energies of the
// positives and negatives are evaluated in bulk, a scalar loss and its
// derivatives with respect to those energies are formed, and the parameter
// gradient is the vector-Jacobian product through the network. Negative
// sample positions are constants throughout (no gradient flows into them).
//
// All losses average over the N positives.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
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

namespace ebmlab {

/// Positives with per-positive negative sets, in normalized model space.
///
/// `negatives` holds column i * M + m for negative m of positive i, or only M
/// columns when `shared_negatives` is set (the same set for every positive).
/// `weights`, when present, has one entry per stored negative column.
struct LabeledBatch {
    Eigen::MatrixXd obs;        // obs_dim x N (zero rows for marginal models)
    Eigen::MatrixXd actions;    // act_dim x N
    Eigen::MatrixXd negatives;  // act_dim x (N * M) or act_dim x M
    std::size_t num_negatives = 0;
    bool shared_negatives = false;
    std::optional<Eigen::VectorXd> weights{};

    std::size_t size() const noexcept { return static_cast<std::size_t>(actions.cols()); }

    /// Column of negative m for positive i.
    Eigen::Index neg_col(std::size_t i, std::size_t m) const noexcept {
        return static_cast<Eigen::Index>(shared_negatives ? m : i * num_negatives + m);
    }

    void validate(std::size_t obs_dim, std::size_t act_dim) const {
        detail::require_config(size() > 0, "empty batch");
        detail::require_config(num_negatives >= 1, "every positive needs at least one negative");
        detail::require_shape(static_cast<std::size_t>(obs.rows()) == obs_dim && obs.cols() == actions.cols(),
                              "batch observations do not match obs_dim / batch size");
        detail::require_shape(static_cast<std::size_t>(actions.rows()) == act_dim &&
                                  static_cast<std::size_t>(negatives.rows()) == act_dim,
                              "batch actions do not match act_dim");
        const std::size_t expect = shared_negatives ? num_negatives : size() * num_negatives;
        detail::require_shape(static_cast<std::size_t>(negatives.cols()) == expect,
                              "negative set sizes are inconsistent with num_negatives");
        if (weights) {
            detail::require_shape(static_cast<std::size_t>(weights->size()) == expect,
                                  "weights must have one entry per negative");
            for (Eigen::Index k = 0; k < weights->size(); ++k)
                if (!std::isfinite((*weights)(k)) || !((*weights)(k) > 0.0))
                    throw ConfigError("importance weights must be finite and positive");
        }
    }
};

struct LossStats {
    double mean_pos_energy = 0.0;
    double mean_neg_energy = 0.0;
    /// Mean over positives of the biased variance of that positive's negative energies.
    double neg_energy_variance = 0.0;
    /// Set when M == 1, where the variance terms vanish identically.
    bool single_negative = false;
};

struct LossReport {
    double loss = 0.0;
    /// The main objective alone, without any additive regularizer.
    double primary_loss = 0.0;
    std::vector<double> param_grad;
    LossStats stats;
};

/// Energies of one batch: pos(i) and neg(m, i).
struct BatchEnergies {
    Eigen::VectorXd pos;
    Eigen::MatrixXd neg;  // M x N

    std::size_t n() const noexcept { return static_cast<std::size_t>(pos.size()); }
    std::size_t m() const noexcept { return static_cast<std::size_t>(neg.rows()); }
};

/// A loss expressed over energies: value plus dL/dE for every energy.
struct EnergyLoss {
    double value = 0.0;
    Eigen::VectorXd d_pos;
    Eigen::MatrixXd d_neg;

    static EnergyLoss zeros(std::size_t n, std::size_t m) {
        return {0.0, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n)),
                Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n))};
    }

    EnergyLoss& add(const EnergyLoss& o, double w = 1.0) {
        value += w * o.value;
        d_pos += w * o.d_pos;
        d_neg += w * o.d_neg;
        return *this;
    }
};

inline double log_sum_exp(const Eigen::Ref<const Eigen::VectorXd>& v) {
    const double mx = v.maxCoeff();
    if (!std::isfinite(mx)) return mx;
    return mx + std::log((v.array() - mx).exp().sum());
}

// ---------------------------------------------------------------------------
// Energy-space objectives.

/// mean_i -log softmax(-[E_pos, E_neg_1..M])_0
inline EnergyLoss info_nce_terms(const BatchEnergies& e) {
    const auto n = static_cast<Eigen::Index>(e.n());
    const auto m = static_cast<Eigen::Index>(e.m());
    EnergyLoss out = EnergyLoss::zeros(e.n(), e.m());
    Eigen::VectorXd logits(m + 1);
    for (Eigen::Index i = 0; i < n; ++i) {
        logits(0) = -e.pos(i);
        logits.tail(m) = -e.neg.col(i);
        const double lse = log_sum_exp(logits);
        out.value += e.pos(i) + lse;
        const Eigen::VectorXd p = (logits.array() - lse).exp();
        out.d_pos(i) = 1.0 - p(0);
        out.d_neg.col(i) = -p.tail(m);
    }
    const double inv = 1.0 / static_cast<double>(n);
    out.value *= inv;
    out.d_pos *= inv;
    out.d_neg *= inv;
    return out;
}

/// mean_i E_pos + log( (1/M) sum_m w_m exp(-E_neg_m) ). `log_w` is M x N.
inline EnergyLoss nll_importance_terms(const BatchEnergies& e, const Eigen::MatrixXd& log_w) {
    const auto n = static_cast<Eigen::Index>(e.n());
    const auto m = static_cast<Eigen::Index>(e.m());
    EnergyLoss out = EnergyLoss::zeros(e.n(), e.m());
    const double log_m = std::log(static_cast<double>(m));
    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::VectorXd a = log_w.col(i) - e.neg.col(i);
        const double lse = log_sum_exp(a);
        out.value += e.pos(i) + lse - log_m;
        out.d_pos(i) = 1.0;
        out.d_neg.col(i) = -(a.array() - lse).exp();
    }
    const double inv = 1.0 / static_cast<double>(n);
    out.value *= inv;
    out.d_pos *= inv;
    out.d_neg *= inv;
    return out;
}

/// Uniform-proposal specialization: every weight equals the domain volume.
inline EnergyLoss nll_importance_terms(const BatchEnergies& e, double proposal_volume) {
    detail::require_config(std::isfinite(proposal_volume) && proposal_volume > 0.0,
                           "nll_importance needs a positive proposal volume");
    return nll_importance_terms(
        e, Eigen::MatrixXd::Constant(e.neg.rows(), e.neg.cols(), std::log(proposal_volume)));
}

/// mean_i E_pos - mean_m E_neg + variance_weight * (1/2) Var_m[E_neg]
/// (biased variance). variance_weight = 0 is the plain MCMC loss and
/// variance_weight = 1 the maximum-entropy loss.
inline EnergyLoss contrastive_terms(const BatchEnergies& e, double variance_weight) {
    const auto n = static_cast<Eigen::Index>(e.n());
    const double m = static_cast<double>(e.m());
    EnergyLoss out = EnergyLoss::zeros(e.n(), e.m());
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto col = e.neg.col(i);
        const double mean = col.mean();
        const double mean_sq = col.array().square().mean();
        out.value += e.pos(i) - mean + variance_weight * (0.5 * mean_sq - 0.5 * mean * mean);
        out.d_pos(i) = 1.0;
        out.d_neg.col(i) = (-1.0 / m) + variance_weight * (col.array() - mean) / m;
    }
    const double inv = 1.0 / static_cast<double>(n);
    out.value *= inv;
    out.d_pos *= inv;
    out.d_neg *= inv;
    return out;
}

inline EnergyLoss mcmc_terms(const BatchEnergies& e) { return contrastive_terms(e, 0.0); }
inline EnergyLoss maxent_terms(const BatchEnergies& e) { return contrastive_terms(e, 1.0); }

/// mean_i E_pos^2
inline EnergyLoss positive_l2_terms(const BatchEnergies& e) {
    const double inv = 1.0 / static_cast<double>(e.n());
    EnergyLoss out = EnergyLoss::zeros(e.n(), e.m());
    out.value = e.pos.squaredNorm() * inv;
    out.d_pos = 2.0 * inv * e.pos;
    return out;
}

inline LossStats energy_stats(const BatchEnergies& e) {
    LossStats s;
    s.mean_pos_energy = e.pos.mean();
    s.mean_neg_energy = e.neg.mean();
    double var = 0.0;
    for (Eigen::Index i = 0; i < e.neg.cols(); ++i) {
        const auto col = e.neg.col(i);
        var += (col.array() - col.mean()).square().mean();
    }
    s.neg_energy_variance = var / static_cast<double>(e.neg.cols());
    s.single_negative = e.m() == 1;
    return s;
}

/// Lower bound on I(x; y) implied by a per-sample InfoNCE loss with M negatives.
inline double mi_lower_bound(double info_nce_loss, std::size_t num_negatives) {
    return std::log(static_cast<double>(num_negatives) + 1.0) - info_nce_loss;
}

// ---------------------------------------------------------------------------
// Model evaluation and backprop over batches.

namespace detail {

inline constexpr Eigen::Index kEvalBlock = 2048;

/// Column blocks of the network input for the positives and the negatives.
template <EnergyModel Model>
class BatchInputs {
public:
    BatchInputs(const Model& model, const LabeledBatch& batch) : model_(model), batch_(batch) {
        batch.validate(model.obs_dim(), model.act_dim());
        // With no observation, shared negatives need only one evaluation each.
        collapse_ = batch.shared_negatives && model.obs_dim() == 0;
        neg_cols_ = collapse_ ? static_cast<Eigen::Index>(batch.num_negatives)
                              : static_cast<Eigen::Index>(batch.size() * batch.num_negatives);
    }

    Eigen::Index total() const { return static_cast<Eigen::Index>(batch_.size()) + neg_cols_; }
    bool collapsed() const { return collapse_; }

    /// Network inputs for evaluation columns [first, first + count). Columns
    /// 0..N-1 are positives, then negatives in (i, m) order.
    Eigen::MatrixXd block(Eigen::Index first, Eigen::Index count) const {
        const auto od = static_cast<Eigen::Index>(model_.obs_dim());
        const auto ad = static_cast<Eigen::Index>(model_.act_dim());
        const auto n = static_cast<Eigen::Index>(batch_.size());
        const auto m = static_cast<Eigen::Index>(batch_.num_negatives);
        Eigen::MatrixXd in(od + ad, count);
        for (Eigen::Index j = 0; j < count; ++j) {
            const Eigen::Index c = first + j;
            if (c < n) {
                if (od) in.col(j).head(od) = batch_.obs.col(c);
                in.col(j).tail(ad) = batch_.actions.col(c);
            } else if (collapse_) {
                in.col(j) = batch_.negatives.col(c - n);
            } else {
                const Eigen::Index i = (c - n) / m;
                const Eigen::Index k = (c - n) % m;
                if (od) in.col(j).head(od) = batch_.obs.col(i);
                in.col(j).tail(ad) = batch_.negatives.col(batch_.neg_col(static_cast<std::size_t>(i),
                                                                         static_cast<std::size_t>(k)));
            }
        }
        return in;
    }

private:
    const Model& model_;
    const LabeledBatch& batch_;
    bool collapse_ = false;
    Eigen::Index neg_cols_ = 0;
};

inline Eigen::Index block_count(Eigen::Index total) { return (total + kEvalBlock - 1) / kEvalBlock; }

} // namespace detail

template <EnergyModel Model>
BatchEnergies evaluate_energies(const Model& model, const LabeledBatch& batch) {
    detail::BatchInputs<Model> inputs(model, batch);
    const Eigen::Index total = inputs.total();
    Eigen::VectorXd flat(total);
    parallel_for(static_cast<std::size_t>(detail::block_count(total)), [&](std::size_t b) {
        const Eigen::Index first = static_cast<Eigen::Index>(b) * detail::kEvalBlock;
        const Eigen::Index count = std::min(detail::kEvalBlock, total - first);
        BatchPass pass(model.net());
        flat.segment(first, count) = pass.forward(inputs.block(first, count));
    });
    const auto n = static_cast<Eigen::Index>(batch.size());
    const auto m = static_cast<Eigen::Index>(batch.num_negatives);
    BatchEnergies e;
    e.pos = flat.head(n);
    e.neg.resize(m, n);
    for (Eigen::Index i = 0; i < n; ++i)
        e.neg.col(i) = inputs.collapsed() ? Eigen::VectorXd(flat.segment(n, m)) : Eigen::VectorXd(flat.segment(n + i * m, m));
    return e;
}

/// sum over energies of dL/dE * dE/dtheta. Blocks are reduced in fixed order.
template <EnergyModel Model>
std::vector<double> backprop_energies(const Model& model, const LabeledBatch& batch, const EnergyLoss& terms) {
    detail::BatchInputs<Model> inputs(model, batch);
    const auto n = static_cast<Eigen::Index>(batch.size());
    const auto m = static_cast<Eigen::Index>(batch.num_negatives);
    Eigen::VectorXd upstream(inputs.total());
    upstream.head(n) = terms.d_pos;
    if (inputs.collapsed()) {
        upstream.tail(m) = terms.d_neg.rowwise().sum();
    } else {
        for (Eigen::Index i = 0; i < n; ++i) upstream.segment(n + i * m, m) = terms.d_neg.col(i);
    }
    const std::size_t p = model.net().param_count();
    const auto blocks = static_cast<std::size_t>(detail::block_count(inputs.total()));
    std::vector<std::vector<double>> partial(blocks);
    parallel_for(blocks, [&](std::size_t b) {
        const Eigen::Index first = static_cast<Eigen::Index>(b) * detail::kEvalBlock;
        const Eigen::Index count = std::min(detail::kEvalBlock, inputs.total() - first);
        BatchPass pass(model.net());
        pass.forward(inputs.block(first, count));
        partial[b].assign(p, 0.0);
        pass.backward(upstream.segment(first, count), partial[b], nullptr);
    });
    std::vector<double> grad(p, 0.0);
    for (const auto& part : partial)
        for (std::size_t k = 0; k < p; ++k) grad[k] += part[k];
    return grad;
}

namespace detail {

template <EnergyModel Model>
LossReport finish(const Model& model, const LabeledBatch& batch, const BatchEnergies& e, const EnergyLoss& terms) {
    LossReport r;
    r.loss = terms.value;
    r.primary_loss = terms.value;
    r.stats = energy_stats(e);
    if (!std::isfinite(r.loss)) throw NumericalError("non-finite loss value");
    r.param_grad = backprop_energies(model, batch, terms);
    for (double g : r.param_grad)
        if (!std::isfinite(g)) throw NumericalError("non-finite loss gradient");
    return r;
}

} // namespace detail

template <EnergyModel Model>
LossReport info_nce(const Model& model, const LabeledBatch& batch) {
    const BatchEnergies e = evaluate_energies(model, batch);
    return detail::finish(model, batch, e, info_nce_terms(e));
}

/// Importance-sampled NLL. Uses the batch weights w_m = 1 / q(y_m) when
/// present, otherwise a uniform proposal of the given volume.
template <EnergyModel Model>
LossReport nll_importance(const Model& model, const LabeledBatch& batch, double proposal_volume) {
    const BatchEnergies e = evaluate_energies(model, batch);
    if (!batch.weights) return detail::finish(model, batch, e, nll_importance_terms(e, proposal_volume));
    Eigen::MatrixXd log_w(e.neg.rows(), e.neg.cols());
    for (Eigen::Index i = 0; i < log_w.cols(); ++i)
        for (Eigen::Index k = 0; k < log_w.rows(); ++k)
            log_w(k, i) = std::log((*batch.weights)(batch.neg_col(static_cast<std::size_t>(i),
                                                                    static_cast<std::size_t>(k))));
    return detail::finish(model, batch, e, nll_importance_terms(e, log_w));
}

template <EnergyModel Model>
LossReport mcmc_loss(const Model& model, const LabeledBatch& batch) {
    const BatchEnergies e = evaluate_energies(model, batch);
    return detail::finish(model, batch, e, mcmc_terms(e));
}

template <EnergyModel Model>
LossReport maxent_loss(const Model& model, const LabeledBatch& batch) {
    const BatchEnergies e = evaluate_energies(model, batch);
    return detail::finish(model, batch, e, maxent_terms(e));
}

template <EnergyModel Model>
LossReport positive_l2(const Model& model, const LabeledBatch& batch) {
    const BatchEnergies e = evaluate_energies(model, batch);
    return detail::finish(model, batch, e, positive_l2_terms(e));
}

enum class LossKind { info_nce, nll_importance, mcmc, maxent };

inline std::string_view to_string(LossKind k) {
    switch (k) {
    case LossKind::info_nce: return "info_nce";
    case LossKind::nll_importance: return "nll_importance";
    case LossKind::mcmc: return "mcmc";
    case LossKind::maxent: return "maxent";
    }
    return "?";
}

inline LossKind parse_loss_kind(std::string_view s) {
    if (s == "info_nce") return LossKind::info_nce;
    if (s == "nll_importance") return LossKind::nll_importance;
    if (s == "mcmc") return LossKind::mcmc;
    if (s == "maxent") return LossKind::maxent;
    throw ConfigError("unknown loss '" + std::string(s) + "' (expected info_nce, nll_importance, mcmc or maxent)");
}

/// A main objective plus an optional positive-energy anchor, evaluated with a
/// single pass over the batch.
struct Objective {
    LossKind kind = LossKind::info_nce;
    double positive_l2_weight = 0.0;
    /// Weight on the variance term of LossKind::maxent (1 = printed loss).
    double variance_weight = 1.0;
    /// Uniform proposal volume for LossKind::nll_importance.
    double proposal_volume = 0.0;
};

template <EnergyModel Model>
LossReport evaluate_objective(const Model& model, const LabeledBatch& batch, const Objective& obj) {
    const BatchEnergies e = evaluate_energies(model, batch);
    EnergyLoss terms;
    switch (obj.kind) {
    case LossKind::info_nce: terms = info_nce_terms(e); break;
    case LossKind::nll_importance: terms = nll_importance_terms(e, obj.proposal_volume); break;
    case LossKind::mcmc: terms = mcmc_terms(e); break;
    case LossKind::maxent: terms = contrastive_terms(e, obj.variance_weight); break;
    }
    const double primary = terms.value;
    if (obj.positive_l2_weight != 0.0) terms.add(positive_l2_terms(e), obj.positive_l2_weight);
    LossReport r = detail::finish(model, batch, e, terms);
    r.primary_loss = primary;
    return r;
}

} // namespace ebmlab
