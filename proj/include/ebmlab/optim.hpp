#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ebmlab/errors.hpp"

namespace ebmlab {

struct AdamHyper {
    double learning_rate = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    friend bool operator==(const AdamHyper&, const AdamHyper&) = default;
};

/// Adam moments for one flattened parameter array.
struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    std::uint64_t t = 0;
    AdamHyper hyper{};

    AdamState() = default;
    AdamState(std::size_t n, AdamHyper h) : m(n, 0.0), v(n, 0.0), hyper(h) {}

    friend bool operator==(const AdamState&, const AdamState&) = default;
};

/// One bias-corrected Adam update of `params` in place. The effective rate is
/// hyper.learning_rate * lr_multiplier; the moments never see the multiplier.
inline void adam_step(AdamState& state, std::span<double> params, std::span<const double> grad,
                      double lr_multiplier = 1.0) {
    detail::require_shape(params.size() == grad.size() && state.m.size() == params.size() &&
                              state.v.size() == params.size(),
                          "adam_step: parameter, gradient and moment sizes differ");
    detail::require_config(lr_multiplier > 0.0 && std::isfinite(lr_multiplier), "lr_multiplier must be positive");
    for (std::size_t k = 0; k < grad.size(); ++k)
        if (!std::isfinite(grad[k])) throw NumericalError("non-finite gradient at parameter " + std::to_string(k));

    const AdamHyper& h = state.hyper;
    ++state.t;
    const double bc1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.t));
    const double lr = h.learning_rate * lr_multiplier;
    for (std::size_t k = 0; k < params.size(); ++k) {
        const double g = grad[k];
        state.m[k] = h.beta1 * state.m[k] + (1.0 - h.beta1) * g;
        state.v[k] = h.beta2 * state.v[k] + (1.0 - h.beta2) * g * g;
        const double m_hat = state.m[k] / bc1;
        const double v_hat = state.v[k] / bc2;
        params[k] -= lr * m_hat / (std::sqrt(v_hat) + h.epsilon);
    }
}

/// Multiplier gamma^floor(epoch / period).
struct StepDecay {
    double gamma = 0.99;
    std::size_t period = 100;

    void validate() const {
        detail::require_config(gamma > 0.0 && gamma <= 1.0, "lr decay gamma must lie in (0, 1]");
        detail::require_config(period > 0, "lr decay period must be positive");
    }

    friend bool operator==(const StepDecay&, const StepDecay&) = default;
};

inline double lr_multiplier(const StepDecay& s, std::size_t epoch) {
    return std::pow(s.gamma, static_cast<double>(epoch / s.period));
}

} // namespace ebmlab
