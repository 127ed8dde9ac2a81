#pragma once

// Long-chain moment diagnostics on a Gaussian target, comparing the two
// Langevin formulations.

#include <cstddef>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "ebmlab/config.hpp"
#include "ebmlab/data.hpp"
#include "ebmlab/samplers.hpp"

namespace ebmlab {

struct DiagnoseConfig {
    std::size_t dim = 2;
    /// Target E(y) = alpha |y|^2 / 2.
    double alpha = 1.0;
    std::size_t iterations = 4000;
    std::size_t discard = 3000;
    std::vector<Formulation> formulations{Formulation::correct, Formulation::ibc};
    double correct_step = 0.25;  // tau
    double ibc_step = 0.1;       // lambda
    double ibc_sigma = 1.0;
    double clip_fraction = 0.0;  // 0 disables per-step clipping
    bool clamp_to_domain = false;
    double margin = 0.1;
    std::uint64_t seed = 0;

    void validate() const {
        detail::require_config(dim > 0, "diagnose.dim must be positive");
        detail::require_config(alpha > 0.0, "diagnose.alpha must be positive");
        detail::require_config(discard < iterations, "zero retained samples: diagnose.discard must be < iterations");
        detail::require_config(!formulations.empty(), "diagnose.formulations is empty");
    }

    ChainConfig chain(Formulation f) const {
        ChainConfig c;
        c.formulation = f;
        c.iterations = iterations;
        c.step_schedule = PolySchedule::constant(f == Formulation::correct ? correct_step : ibc_step, iterations);
        c.noise_scale = ibc_sigma;
        c.per_step_clip_fraction = clip_fraction > 0.0 ? std::optional<double>(clip_fraction) : std::nullopt;
        c.clamp_to_domain = clamp_to_domain;
        c.domain_margin = margin;
        c.num_chains = 1;
        c.strategy = ChainStrategy::long_chain;
        c.burn_in = discard;
        c.seed = seed;
        return c;
    }
};

inline DiagnoseConfig read_diagnose_config(const KeyValues& kv) {
    DiagnoseConfig d;
    d.dim = kv.get("diagnose.dim", d.dim);
    d.alpha = kv.get("diagnose.alpha", d.alpha);
    d.iterations = kv.get("diagnose.iterations", d.iterations);
    d.discard = kv.get("diagnose.discard", d.discard);
    if (auto f = kv.raw("diagnose.formulations")) {
        d.formulations.clear();
        for (auto part : detail::split_csv(*f)) d.formulations.push_back(parse_formulation(detail::trim(part)));
    }
    d.correct_step = kv.get("diagnose.correct_step", d.correct_step);
    d.ibc_step = kv.get("diagnose.ibc_step", d.ibc_step);
    d.ibc_sigma = kv.get("diagnose.ibc_sigma", d.ibc_sigma);
    d.clip_fraction = kv.get("diagnose.clip_fraction", d.clip_fraction);
    d.clamp_to_domain = kv.get("diagnose.clamp_to_domain", d.clamp_to_domain);
    d.margin = kv.get("diagnose.margin", d.margin);
    d.seed = kv.get("seed", d.seed);
    d.validate();
    return d;
}

struct DiagnoseRun {
    Formulation formulation;
    ChainConfig chain;
    MomentsReport moments;
};

inline std::vector<DiagnoseRun> run_diagnose(const DiagnoseConfig& d) {
    d.validate();
    std::vector<DiagnoseRun> out;
    for (Formulation f : d.formulations) {
        ChainConfig c = d.chain(f);
        out.push_back({f, c, diagnose_moments(quadratic_energy(d.alpha), d.dim, c, d.discard)});
    }
    return out;
}

/// One row per retained sample: formulation, iteration index, coordinates.
inline void write_diagnose_samples(std::ostream& out, const DiagnoseConfig& d, const std::vector<DiagnoseRun>& runs) {
    out << "formulation,step";
    for (std::size_t k = 1; k <= d.dim; ++k) out << ",y_" << k;
    out << '\n';
    for (const auto& r : runs)
        for (Eigen::Index j = 0; j < r.moments.samples.cols(); ++j) {
            out << to_string(r.formulation) << ',' << d.discard + static_cast<std::size_t>(j);
            for (Eigen::Index k = 0; k < r.moments.samples.rows(); ++k) out << ',' << format_double(r.moments.samples(k, j));
            out << '\n';
        }
}

inline void write_diagnose_summary(std::ostream& out, const DiagnoseConfig& d, const std::vector<DiagnoseRun>& runs) {
    out << "formulation,step_size,sigma,retained";
    for (std::size_t k = 1; k <= d.dim; ++k) out << ",mean_" << k;
    for (std::size_t k = 1; k <= d.dim; ++k) out << ",var_" << k;
    out << '\n';
    for (const auto& r : runs) {
        out << to_string(r.formulation) << ',' << format_double(r.chain.step_schedule.start) << ','
            << format_double(r.formulation == Formulation::ibc ? r.chain.noise_scale : 0.0) << ','
            << r.moments.samples.cols();
        for (double m : r.moments.mean) out << ',' << format_double(m);
        for (double v : r.moments.variance) out << ',' << format_double(v);
        out << '\n';
    }
}

} // namespace ebmlab
