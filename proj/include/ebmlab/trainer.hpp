#pragma once

// Training loops for the conditional EBM (with model-conditional Langevin or
// uniform negatives) and for the Marginal Action Sampler pipeline, plus
// inference and per-epoch metrics.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ebmlab/config.hpp"
#include "ebmlab/data.hpp"
#include "ebmlab/energy_model.hpp"
#include "ebmlab/errors.hpp"
#include "ebmlab/losses.hpp"
#include "ebmlab/net.hpp"
#include "ebmlab/optim.hpp"
#include "ebmlab/parallel.hpp"
#include "ebmlab/rng.hpp"
#include "ebmlab/samplers.hpp"

namespace ebmlab {

enum class Trial { ibc, ibc_mas, correct_mas, correct_mas_maxent, custom };
enum class NegativeSource { langevin, uniform };

inline constexpr std::array<std::string_view, 5> kTrialNames{"Ibc", "Ibc_MAS", "Correct_MAS", "Correct_MAS_MaxEnt",
                                                             "custom"};

inline std::string_view to_string(Trial t) { return kTrialNames[static_cast<std::size_t>(t)]; }

inline std::string valid_trial_names() {
    std::string s;
    for (auto n : kTrialNames) s += (s.empty() ? "" : ", ") + std::string(n);
    return s;
}

inline Trial parse_trial(std::string_view s) {
    for (std::size_t k = 0; k < kTrialNames.size(); ++k)
        if (kTrialNames[k] == s) return static_cast<Trial>(k);
    throw ConfigError("invalid trial '" + std::string(s) + "'; valid names: " + valid_trial_names());
}

inline std::string_view to_string(NegativeSource s) { return s == NegativeSource::langevin ? "langevin" : "uniform"; }

inline NegativeSource parse_negative_source(std::string_view s) {
    if (s == "langevin") return NegativeSource::langevin;
    if (s == "uniform") return NegativeSource::uniform;
    throw ConfigError("unknown sampler '" + std::string(s) + "' (expected langevin or uniform)");
}

struct MasConfig {
    bool enabled = false;
    std::size_t hidden_width = 64;
    std::size_t hidden_layers = 2;
    /// Weight of the negative-energy variance term in the marginal loss.
    double variance_weight = 1.0;
    double positive_l2_weight = 0.0;
    /// Chains on the marginal model; num_chains is the number of shared negatives.
    ChainConfig chains{};

    friend bool operator==(const MasConfig&, const MasConfig&) = default;
};

struct TrainConfig {
    Trial trial = Trial::ibc;
    std::uint64_t seed = 0;
    std::size_t epochs = 100;
    std::size_t batch_size = 512;

    LossKind loss = LossKind::info_nce;
    NegativeSource sampler = NegativeSource::langevin;
    double positive_l2_weight = 0.0;

    /// Training negatives; num_chains is M, the negatives per positive.
    ChainConfig train_chains{};
    ChainConfig infer_chains{};

    AdamHyper adam{};
    StepDecay lr_decay{};

    std::size_t hidden_width = 256;
    std::size_t hidden_layers = 2;
    double init_scale = 0.05;

    MasConfig mas{};

    TaskSpec task{};
    std::size_t eval_every = 10;
    /// Validation rows used for the per-epoch success rate (0 = all).
    std::size_t eval_rows = 0;
    double success_tol = 0.05;

    std::size_t num_negatives() const { return mas.enabled ? mas.chains.num_chains : train_chains.num_chains; }

    void validate() const {
        detail::require_config(batch_size > 0, "batch_size must be positive");
        detail::require_config(hidden_width > 0 && hidden_layers > 0, "network width and depth must be positive");
        detail::require_config(std::isfinite(init_scale) && init_scale >= 0.0, "init_scale must be >= 0");
        detail::require_config(adam.learning_rate > 0.0, "learning rate must be positive");
        detail::require_config(eval_every > 0, "eval.every must be positive");
        detail::require_config(success_tol > 0.0, "eval.success_tol must be positive");
        detail::require_config(train_chains.strategy == ChainStrategy::short_chains || sampler == NegativeSource::langevin,
                               "uniform sampler uses independent draws; strategy must be short_chains");
        detail::require_config(train_chains.strategy == ChainStrategy::short_chains,
                               "training negatives need one retained state per chain (short_chains)");
        detail::require_config(infer_chains.strategy == ChainStrategy::short_chains,
                               "inference requires the short_chains strategy");
        lr_decay.validate();
        train_chains.validate();
        infer_chains.validate();
        if (mas.enabled) {
            detail::require_config(loss == LossKind::info_nce, "the marginal action sampler feeds info_nce");
            detail::require_config(mas.hidden_width > 0 && mas.hidden_layers > 0, "mas network must be non-empty");
            detail::require_config(mas.chains.strategy == ChainStrategy::short_chains,
                                   "mas chains must use short_chains");
            mas.chains.validate();
        }
        task.validate();
    }
};

/// The combinations each named trial fixes. Marginal chains always use the
/// correct formulation; the formulation in a trial's name selects the sampler
/// run on the conditional model itself (inference, and training negatives
/// when MAS is off).
struct TrialBinding {
    LossKind loss = LossKind::info_nce;
    NegativeSource sampler = NegativeSource::langevin;
    Formulation conditional_formulation = Formulation::ibc;
    bool mas_enabled = false;
    Formulation mas_formulation = Formulation::correct;
    double mas_variance_weight = 1.0;
    double mas_positive_l2_weight = 0.0;
};

inline TrialBinding trial_binding(Trial t) {
    TrialBinding b;
    switch (t) {
    case Trial::ibc:
    case Trial::custom: break;
    case Trial::ibc_mas: b.mas_enabled = true; break;
    case Trial::correct_mas:
        b.mas_enabled = true;
        b.conditional_formulation = Formulation::correct;
        break;
    case Trial::correct_mas_maxent:
        b.mas_enabled = true;
        b.conditional_formulation = Formulation::correct;
        b.mas_positive_l2_weight = 0.1;
        break;
    }
    return b;
}

inline TrainConfig default_train_config(Trial trial = Trial::ibc) {
    TrainConfig c;
    c.trial = trial;
    const TrialBinding b = trial_binding(trial);
    c.loss = b.loss;
    c.sampler = b.sampler;
    c.train_chains.formulation = b.conditional_formulation;
    c.train_chains.noise_scale = 0.1;
    c.infer_chains.formulation = b.conditional_formulation;
    c.infer_chains.noise_scale = 0.01;
    c.mas.enabled = b.mas_enabled;
    c.mas.chains = c.train_chains;
    c.mas.chains.formulation = b.mas_formulation;
    c.mas.variance_weight = b.mas_variance_weight;
    c.mas.positive_l2_weight = b.mas_positive_l2_weight;
    return c;
}

inline TrainConfig read_train_config(const KeyValues& kv) {
    const Trial trial = parse_trial(kv.get("trial", std::string("Ibc")));
    TrainConfig c = default_train_config(trial);
    c.seed = kv.get("seed", c.seed);
    c.epochs = kv.get("epochs", c.epochs);
    c.batch_size = kv.get("batch_size", c.batch_size);
    c.loss = parse_loss_kind(kv.get("loss", std::string(to_string(c.loss))));
    c.sampler = parse_negative_source(kv.get("sampler", std::string(to_string(c.sampler))));
    c.positive_l2_weight = kv.get("positive_l2_weight", c.positive_l2_weight);
    c.train_chains = read_chain(kv, "train", c.train_chains);
    c.infer_chains = read_chain(kv, "infer", c.infer_chains);
    c.adam.learning_rate = kv.get("lr", c.adam.learning_rate);
    c.adam.beta1 = kv.get("adam.beta1", c.adam.beta1);
    c.adam.beta2 = kv.get("adam.beta2", c.adam.beta2);
    c.adam.epsilon = kv.get("adam.epsilon", c.adam.epsilon);
    c.lr_decay.gamma = kv.get("lr_decay.gamma", c.lr_decay.gamma);
    c.lr_decay.period = kv.get("lr_decay.period", c.lr_decay.period);
    c.hidden_width = kv.get("net.hidden_width", c.hidden_width);
    c.hidden_layers = kv.get("net.hidden_layers", c.hidden_layers);
    c.init_scale = kv.get("net.init_scale", c.init_scale);
    c.mas.enabled = kv.get("mas.enabled", c.mas.enabled);
    c.mas.hidden_width = kv.get("mas.hidden_width", c.mas.hidden_width);
    c.mas.hidden_layers = kv.get("mas.hidden_layers", c.mas.hidden_layers);
    c.mas.variance_weight = kv.get("mas.variance_weight", c.mas.variance_weight);
    c.mas.positive_l2_weight = kv.get("mas.positive_l2_weight", c.mas.positive_l2_weight);
    // MAS chains inherit the training chain settings unless overridden.
    ChainConfig mas_defaults = c.train_chains;
    mas_defaults.formulation = c.mas.chains.formulation;
    c.mas.chains = read_chain(kv, "mas", mas_defaults);
    c.task = read_task(kv);
    c.eval_every = kv.get("eval.every", c.eval_every);
    c.eval_rows = kv.get("eval.rows", c.eval_rows);
    c.success_tol = kv.get("eval.success_tol", c.success_tol);

    if (trial != Trial::custom) {
        const TrialBinding b = trial_binding(trial);
        auto fixed = [&](bool ok, const char* key) {
            if (!ok)
                throw ConfigError(std::string("key '") + key + "' is fixed by trial " + std::string(to_string(trial)) +
                                  "; use trial = custom to change it");
        };
        fixed(c.loss == b.loss, "loss");
        fixed(c.sampler == b.sampler, "sampler");
        fixed(c.train_chains.formulation == b.conditional_formulation, "train.formulation");
        fixed(c.infer_chains.formulation == b.conditional_formulation, "infer.formulation");
        fixed(c.mas.enabled == b.mas_enabled, "mas.enabled");
        if (b.mas_enabled) {
            fixed(c.mas.chains.formulation == b.mas_formulation, "mas.formulation");
            fixed(c.mas.variance_weight == b.mas_variance_weight, "mas.variance_weight");
            fixed(c.mas.positive_l2_weight == b.mas_positive_l2_weight, "mas.positive_l2_weight");
        }
    }
    c.validate();
    return c;
}

inline std::string write_train_config(const TrainConfig& c) {
    KeyValueWriter w;
    w.put("trial", to_string(c.trial));
    w.put("seed", c.seed);
    w.put("epochs", c.epochs);
    w.put("batch_size", c.batch_size);
    w.put("loss", to_string(c.loss));
    w.put("sampler", to_string(c.sampler));
    w.put("positive_l2_weight", c.positive_l2_weight);
    write_chain(w, "train", c.train_chains);
    write_chain(w, "infer", c.infer_chains);
    w.put("lr", c.adam.learning_rate);
    w.put("adam.beta1", c.adam.beta1);
    w.put("adam.beta2", c.adam.beta2);
    w.put("adam.epsilon", c.adam.epsilon);
    w.put("lr_decay.gamma", c.lr_decay.gamma);
    w.put("lr_decay.period", c.lr_decay.period);
    w.put("net.hidden_width", c.hidden_width);
    w.put("net.hidden_layers", c.hidden_layers);
    w.put("net.init_scale", c.init_scale);
    w.put("mas.enabled", c.mas.enabled);
    w.put("mas.hidden_width", c.mas.hidden_width);
    w.put("mas.hidden_layers", c.mas.hidden_layers);
    w.put("mas.variance_weight", c.mas.variance_weight);
    w.put("mas.positive_l2_weight", c.mas.positive_l2_weight);
    write_chain(w, "mas", c.mas.chains);
    write_task(w, c.task);
    w.put("eval.every", c.eval_every);
    w.put("eval.rows", c.eval_rows);
    w.put("eval.success_tol", c.success_tol);
    return w.str();
}

// ---------------------------------------------------------------------------
// Training state and metrics.

struct MetricsRow {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_success = 0.0;
    double mean_pos_energy = 0.0;
    double mean_neg_energy = 0.0;
    double neg_energy_variance = 0.0;
    double mi_lower_bound = 0.0;
    double marginal_loss = 0.0;
    double marginal_neg_energy_variance = 0.0;
    /// Not written to metrics.csv, which must be reproducible byte for byte.
    double wall_seconds = 0.0;
};

inline std::string metrics_csv_header() {
    return "epoch,train_loss,val_success,mean_pos_energy,mean_neg_energy,neg_energy_variance,mi_lower_bound,"
           "marginal_loss,marginal_neg_energy_variance\n";
}

inline std::string metrics_csv_line(const MetricsRow& r) {
    return std::to_string(r.epoch) + ',' + format_double(r.train_loss) + ',' + format_double(r.val_success) + ',' +
           format_double(r.mean_pos_energy) + ',' + format_double(r.mean_neg_energy) + ',' +
           format_double(r.neg_energy_variance) + ',' + format_double(r.mi_lower_bound) + ',' +
           format_double(r.marginal_loss) + ',' + format_double(r.marginal_neg_energy_variance) + '\n';
}

/// Everything that evolves during training. All randomness is a function of
/// (seed, epoch, batch), so this plus the config resumes a run exactly.
struct TrainingState {
    ConditionalEbm model;
    AdamState model_opt;
    std::optional<MarginalEbm> marginal;
    std::optional<AdamState> marginal_opt;
    std::size_t epoch = 0;
    std::uint64_t seed = 0;
    double last_val_success = 0.0;

    friend bool operator==(const TrainingState&, const TrainingState&) = default;
};

namespace detail {

enum : std::uint64_t {
    kTagInitModel = 11,
    kTagInitMarginal = 12,
    kTagShuffle = 13,
    kTagChains = 14,
    kTagMasChains = 15,
    kTagInfer = 16,
};

inline std::vector<std::size_t> mlp_sizes(std::size_t in, std::size_t width, std::size_t layers) {
    std::vector<std::size_t> s{in};
    for (std::size_t k = 0; k < layers; ++k) s.push_back(width);
    s.push_back(1);
    return s;
}

} // namespace detail

/// Fresh state: normalizers fit on the training split, networks initialized
/// from the config seed.
inline TrainingState init_training(const TrainConfig& cfg, const Dataset& train) {
    cfg.validate();
    train.validate();
    detail::require_config(train.rows() > 0, "training set is empty");
    TrainingState s;
    s.seed = cfg.seed;
    const Normalizer obs_norm = Normalizer::fit(train.obs);
    const Normalizer act_norm = Normalizer::fit(train.act);
    s.model = ConditionalEbm(init_net(detail::mlp_sizes(train.obs_dim() + train.act_dim(), cfg.hidden_width,
                                                        cfg.hidden_layers),
                                      cfg.init_scale, derive_key(cfg.seed, detail::kTagInitModel)),
                             obs_norm, act_norm);
    s.model_opt = AdamState(s.model.net().param_count(), cfg.adam);
    if (cfg.mas.enabled) {
        s.marginal = MarginalEbm(init_net(detail::mlp_sizes(train.act_dim(), cfg.mas.hidden_width, cfg.mas.hidden_layers),
                                          cfg.init_scale, derive_key(cfg.seed, detail::kTagInitMarginal)),
                                 act_norm);
        s.marginal_opt = AdamState(s.marginal->net().param_count(), cfg.adam);
    }
    return s;
}

// ---------------------------------------------------------------------------
// Inference.

struct InferenceResult {
    Eigen::MatrixXd actions;   // act_dim x rows, raw units
    Eigen::VectorXd energies;  // energy at each returned action
};

/// Runs the inference chains for every observation column (raw units) and
/// returns, per observation, the final chain state of lowest energy,
/// denormalized. Chain c of observation r uses RNG stream r * C + c.
inline InferenceResult infer_batch(const ConditionalEbm& model, const Eigen::Ref<const Eigen::MatrixXd>& obs_raw,
                                   const ChainConfig& cfg) {
    cfg.validate();
    detail::require_config(cfg.strategy == ChainStrategy::short_chains, "inference requires short_chains");
    detail::require_shape(static_cast<std::size_t>(obs_raw.rows()) == model.obs_dim(),
                          "observation rows must equal the model's obs_dim");
    const auto rows = obs_raw.cols();
    InferenceResult out;
    out.actions.resize(static_cast<Eigen::Index>(model.act_dim()), rows);
    out.energies.resize(rows);
    if (rows == 0) return out;
    const std::size_t per = cfg.num_chains;
    ConditionalTarget target(model, model.obs_normalizer().normalize_cols(obs_raw), per);
    const Eigen::MatrixXd finals = run_target_chains(target, cfg, target.chain_count());

    Eigen::VectorXd energies(finals.cols());
    const std::size_t blocks = (static_cast<std::size_t>(finals.cols()) + detail::kChainBlock - 1) / detail::kChainBlock;
    parallel_for(blocks, [&](std::size_t b) {
        const auto first = static_cast<Eigen::Index>(b * detail::kChainBlock);
        const auto n = std::min<Eigen::Index>(static_cast<Eigen::Index>(detail::kChainBlock), finals.cols() - first);
        Eigen::VectorXd e;
        target.evaluate(finals.middleCols(first, n), static_cast<std::size_t>(first), &e, nullptr);
        energies.segment(first, n) = e;
    });

    const Normalizer& an = model.act_normalizer();
    for (Eigen::Index r = 0; r < rows; ++r) {
        Eigen::Index best = 0;
        energies.segment(r * static_cast<Eigen::Index>(per), static_cast<Eigen::Index>(per)).minCoeff(&best);
        const Eigen::Index col = r * static_cast<Eigen::Index>(per) + best;
        for (Eigen::Index d = 0; d < out.actions.rows(); ++d)
            out.actions(d, r) = an.denormalize(static_cast<std::size_t>(d), finals(d, col));
        out.energies(r) = energies(col);
    }
    return out;
}

/// argmin-energy action for one raw observation.
inline std::vector<double> infer(const ConditionalEbm& model, std::span<const double> x, const ChainConfig& cfg) {
    const Eigen::Map<const Eigen::VectorXd> col(x.data(), static_cast<Eigen::Index>(x.size()));
    const InferenceResult r = infer_batch(model, col, cfg);
    return {r.actions.data(), r.actions.data() + r.actions.size()};
}

struct EvalResult {
    InferenceResult inference;
    std::vector<double> distance;
    std::vector<bool> ok;
    double rate = 0.0;
};

/// Success rate of inference on the first `max_rows` rows of `data` (0 = all).
inline EvalResult evaluate_success(const ConditionalEbm& model, const Dataset& data, const TaskSpec& task,
                                   ChainConfig cfg, double tol, std::size_t max_rows = 0) {
    detail::require_shape(data.obs_dim() == model.obs_dim() && data.act_dim() == model.act_dim(),
                          "dataset dims do not match the model");
    const std::size_t rows = max_rows == 0 ? data.rows() : std::min(max_rows, data.rows());
    detail::require_config(rows > 0, "evaluation set is empty");
    EvalResult r;
    r.inference = infer_batch(model, data.obs.leftCols(static_cast<Eigen::Index>(rows)), cfg);
    std::size_t hits = 0;
    for (std::size_t k = 0; k < rows; ++k) {
        const auto c = static_cast<Eigen::Index>(k);
        const double d = nearest_mode_distance(task, data.x(k), {r.inference.actions.col(c).data(), data.act_dim()});
        r.distance.push_back(d);
        r.ok.push_back(d <= tol);
        hits += d <= tol;
    }
    r.rate = static_cast<double>(hits) / static_cast<double>(rows);
    return r;
}

// ---------------------------------------------------------------------------
// Training.

/// Training data in the model's normalized coordinates.
struct PreparedData {
    Eigen::MatrixXd obs;
    Eigen::MatrixXd act;

    static PreparedData from(const ConditionalEbm& model, const Dataset& d) {
        detail::require_shape(d.obs_dim() == model.obs_dim() && d.act_dim() == model.act_dim(),
                              "dataset dims do not match the model");
        return {model.obs_normalizer().normalize_cols(d.obs), model.act_normalizer().normalize_cols(d.act)};
    }
};

namespace detail {

struct BatchOutcome {
    double loss = 0.0;
    double primary = 0.0;
    LossStats stats;
    double marginal_loss = 0.0;
    double marginal_variance = 0.0;
};

inline Objective conditional_objective(const TrainConfig& cfg) {
    Objective o;
    o.kind = cfg.loss;
    o.positive_l2_weight = cfg.positive_l2_weight;
    o.variance_weight = 1.0;
    const double h = 1.0 + cfg.train_chains.domain_margin;
    o.proposal_volume = std::pow(2.0 * h, static_cast<double>(cfg.task.act_dim));
    return o;
}

inline BatchOutcome conditional_step(TrainingState& s, const TrainConfig& cfg, const Eigen::MatrixXd& obs,
                                     const Eigen::MatrixXd& act, std::size_t batch_index, double lr_mult) {
    const std::size_t n = static_cast<std::size_t>(act.cols());
    const std::size_t m = cfg.train_chains.num_chains;
    ChainConfig chains = cfg.train_chains;
    chains.seed = derive_key(s.seed, kTagChains, s.epoch, batch_index);

    LabeledBatch batch;
    batch.obs = obs;
    batch.actions = act;
    batch.num_negatives = m;
    if (cfg.sampler == NegativeSource::uniform) {
        batch.negatives = uniform_negatives(act.rows(), chains.domain_margin, n * m, chains.seed);
    } else {
        ConditionalTarget target(s.model, obs, m);
        batch.negatives = run_target_chains(target, chains, n * m);
    }
    const LossReport rep = evaluate_objective(s.model, batch, conditional_objective(cfg));
    adam_step(s.model_opt, s.model.mutable_net().mutable_params(), rep.param_grad, lr_mult);
    return {rep.loss, rep.primary_loss, rep.stats, 0.0, 0.0};
}

inline BatchOutcome mas_step(TrainingState& s, const TrainConfig& cfg, const Eigen::MatrixXd& obs,
                             const Eigen::MatrixXd& act, std::size_t batch_index, double lr_mult) {
    ChainConfig chains = cfg.mas.chains;
    chains.seed = derive_key(s.seed, kTagMasChains, s.epoch, batch_index);
    // (1) chains on the marginal model; these are shared by every positive.
    const Eigen::MatrixXd samples = run_chains(*s.marginal, chains);

    // (2) marginal update: dataset actions are the positives.
    LabeledBatch mb;
    mb.obs.resize(0, act.cols());
    mb.actions = act;
    mb.negatives = samples;
    mb.num_negatives = chains.num_chains;
    mb.shared_negatives = true;
    Objective mo;
    mo.kind = LossKind::maxent;
    mo.variance_weight = cfg.mas.variance_weight;
    mo.positive_l2_weight = cfg.mas.positive_l2_weight;
    const LossReport mrep = evaluate_objective(*s.marginal, mb, mo);

    // (3) conditional update with the same samples as InfoNCE negatives.
    LabeledBatch cb;
    cb.obs = obs;
    cb.actions = act;
    cb.negatives = samples;
    cb.num_negatives = chains.num_chains;
    cb.shared_negatives = true;
    const LossReport crep = evaluate_objective(s.model, cb, conditional_objective(cfg));

    adam_step(*s.marginal_opt, s.marginal->mutable_net().mutable_params(), mrep.param_grad, lr_mult);
    adam_step(s.model_opt, s.model.mutable_net().mutable_params(), crep.param_grad, lr_mult);
    return {crep.loss, crep.primary_loss, crep.stats, mrep.loss, mrep.stats.neg_energy_variance};
}

} // namespace detail

/// One pass over the shuffled training rows in minibatches, followed by a
/// validation success readout every `eval_every` epochs (and at epoch 0).
/// On a numerical failure the state is rolled back to the start of the epoch
/// before the error propagates.
inline MetricsRow train_epoch(TrainingState& s, const PreparedData& train, const Dataset& validation,
                              const TrainConfig& cfg) {
    detail::require_shape(static_cast<std::size_t>(train.obs.rows()) == s.model.obs_dim() &&
                              static_cast<std::size_t>(train.act.rows()) == s.model.act_dim(),
                          "training data dims do not match the model");
    detail::require_config(!cfg.mas.enabled || s.marginal.has_value(), "MAS enabled but no marginal model");
    const auto t0 = std::chrono::steady_clock::now();
    const TrainingState snapshot = s;
    try {
        const std::size_t rows = static_cast<std::size_t>(train.obs.cols());
        std::vector<std::size_t> order(rows);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::mt19937_64 gen(derive_key(s.seed, detail::kTagShuffle, s.epoch));
        std::shuffle(order.begin(), order.end(), gen);

        const double lr_mult = lr_multiplier(cfg.lr_decay, s.epoch);
        MetricsRow row;
        row.epoch = s.epoch;
        std::size_t batches = 0;
        double primary = 0.0;
        for (std::size_t start = 0; start < rows; start += cfg.batch_size, ++batches) {
            const std::size_t n = std::min(cfg.batch_size, rows - start);
            Eigen::MatrixXd obs(train.obs.rows(), static_cast<Eigen::Index>(n));
            Eigen::MatrixXd act(train.act.rows(), static_cast<Eigen::Index>(n));
            for (std::size_t k = 0; k < n; ++k) {
                obs.col(static_cast<Eigen::Index>(k)) = train.obs.col(static_cast<Eigen::Index>(order[start + k]));
                act.col(static_cast<Eigen::Index>(k)) = train.act.col(static_cast<Eigen::Index>(order[start + k]));
            }
            const detail::BatchOutcome out = cfg.mas.enabled
                                                 ? detail::mas_step(s, cfg, obs, act, batches, lr_mult)
                                                 : detail::conditional_step(s, cfg, obs, act, batches, lr_mult);
            row.train_loss += out.loss;
            primary += out.primary;
            row.mean_pos_energy += out.stats.mean_pos_energy;
            row.mean_neg_energy += out.stats.mean_neg_energy;
            row.neg_energy_variance += out.stats.neg_energy_variance;
            row.marginal_loss += out.marginal_loss;
            row.marginal_neg_energy_variance += out.marginal_variance;
        }
        const double inv = batches ? 1.0 / static_cast<double>(batches) : 0.0;
        row.train_loss *= inv;
        primary *= inv;
        row.mean_pos_energy *= inv;
        row.mean_neg_energy *= inv;
        row.neg_energy_variance *= inv;
        row.marginal_loss *= inv;
        row.marginal_neg_energy_variance *= inv;
        row.mi_lower_bound = cfg.loss == LossKind::info_nce ? mi_lower_bound(primary, cfg.num_negatives()) : 0.0;
        if (!std::isfinite(row.train_loss)) throw NumericalError("non-finite training loss");

        const bool last = s.epoch + 1 == cfg.epochs;
        if (validation.rows() > 0 && (s.epoch % cfg.eval_every == 0 || last)) {
            ChainConfig ic = cfg.infer_chains;
            ic.seed = derive_key(s.seed, detail::kTagInfer);
            s.last_val_success = evaluate_success(s.model, validation, cfg.task, ic, cfg.success_tol, cfg.eval_rows).rate;
        }
        row.val_success = s.last_val_success;
        ++s.epoch;
        row.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        return row;
    } catch (const NumericalError&) {
        s = snapshot;
        throw;
    }
}

/// Epochs of the Marginal Action Sampler pipeline. With MAS disabled this is
/// plain train_epoch with conditional Langevin negatives.
inline std::vector<MetricsRow> train_mas(TrainingState& s, const PreparedData& train, const Dataset& validation,
                                         const TrainConfig& cfg, std::size_t epochs) {
    std::vector<MetricsRow> rows;
    for (std::size_t e = 0; e < epochs; ++e) rows.push_back(train_epoch(s, train, validation, cfg));
    return rows;
}

} // namespace ebmlab
