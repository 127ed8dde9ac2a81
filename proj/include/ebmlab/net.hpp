#pragma once

// Fully-connected scalar-output networks with exact reverse-mode gradients
// with respect to parameters and inputs.
//
// Parameter layout (layer-major): for each layer k in order, the weight
// matrix of shape (out_k x in_k) stored row-major, followed by the bias
// vector of length out_k.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ebmlab/errors.hpp"
#include "ebmlab/rng.hpp"

namespace ebmlab {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline void validate_layer_sizes(std::span<const std::size_t> sizes) {
    detail::require_config(sizes.size() >= 2, "layer_sizes needs at least an input and an output width");
    for (std::size_t s : sizes) detail::require_config(s > 0, "layer widths must be positive");
    detail::require_config(sizes.back() == 1, "output width must be 1 (scalar energy)");
}

inline std::size_t count_params(std::span<const std::size_t> sizes) {
    std::size_t n = 0;
    for (std::size_t k = 0; k + 1 < sizes.size(); ++k) n += sizes[k + 1] * sizes[k] + sizes[k + 1];
    return n;
}

/// ReLU MLP mapping an input vector to a scalar energy. Hidden layers use
/// ReLU, the output layer is affine.
class DenseEnergyNet {
public:
    DenseEnergyNet() = default;

    DenseEnergyNet(std::vector<std::size_t> layer_sizes, std::vector<double> params)
        : sizes_(std::move(layer_sizes)), params_(params.begin(), params.end()) {
        validate_layer_sizes(sizes_);
        detail::require_shape(params_.size() == count_params(sizes_),
                              "parameter count " + std::to_string(params_.size()) + " does not match layer sizes (" +
                                  std::to_string(count_params(sizes_)) + ")");
        for (double p : params_)
            if (!std::isfinite(p)) throw NumericalError("network parameters must be finite");
        offsets_.reserve(num_layers());
        std::size_t off = 0;
        for (std::size_t k = 0; k < num_layers(); ++k) {
            offsets_.push_back(off);
            off += sizes_[k + 1] * sizes_[k] + sizes_[k + 1];
        }
    }

    const std::vector<std::size_t>& layer_sizes() const noexcept { return sizes_; }
    std::size_t input_width() const noexcept { return sizes_.empty() ? 0 : sizes_.front(); }
    std::size_t num_layers() const noexcept { return sizes_.empty() ? 0 : sizes_.size() - 1; }
    std::size_t param_count() const noexcept { return params_.size(); }

    std::span<const double> params() const noexcept { return params_; }
    /// Mutable view for optimizer updates; the caller keeps values finite.
    std::span<double> mutable_params() noexcept { return params_; }

    Eigen::Map<const RowMatrix> weights(std::size_t k) const {
        return {params_.data() + offsets_[k], static_cast<Eigen::Index>(sizes_[k + 1]),
                static_cast<Eigen::Index>(sizes_[k])};
    }
    Eigen::Map<const Eigen::VectorXd> bias(std::size_t k) const {
        return {params_.data() + offsets_[k] + sizes_[k + 1] * sizes_[k], static_cast<Eigen::Index>(sizes_[k + 1])};
    }

    /// Offset of layer k's weight block inside the flattened parameters.
    std::size_t layer_offset(std::size_t k) const { return offsets_[k]; }

    friend bool operator==(const DenseEnergyNet& a, const DenseEnergyNet& b) {
        return a.sizes_ == b.sizes_ && a.params_ == b.params_;
    }

private:
    std::vector<std::size_t> sizes_;
    // Eigen's reductions peel by address; a fixed alignment keeps results
    // independent of where the allocator puts the buffer.
    std::vector<double, Eigen::aligned_allocator<double>> params_;
    std::vector<std::size_t> offsets_;
};

/// Draws every weight and bias i.i.d. from N(0, init_scale^2). A zero scale
/// gives the all-zero network.
inline DenseEnergyNet init_net(std::vector<std::size_t> layer_sizes, double init_scale, std::uint64_t seed) {
    validate_layer_sizes(layer_sizes);
    detail::require_config(std::isfinite(init_scale) && init_scale >= 0.0, "init_scale must be finite and >= 0");
    std::vector<double> params(count_params(layer_sizes));
    CounterStream rng(derive_key(seed, 0x1417ULL));
    for (double& p : params) p = init_scale * rng.normal();
    return DenseEnergyNet(std::move(layer_sizes), std::move(params));
}

/// Energy plus optional gradients for a single input.
struct GradientBundle {
    double value = 0.0;
    std::vector<double> param_grad;  // empty unless requested
    std::vector<double> input_grad;  // empty unless requested
};

/// Forward/backward pass over a batch of inputs stored as columns. Keeps the
/// pre-activations of the last forward() so backward() can reuse them.
class BatchPass {
public:
    explicit BatchPass(const DenseEnergyNet& net) : net_(&net) {}

    /// Energies for each column of `inputs` (input_width x B).
    const Eigen::VectorXd& forward(const Eigen::Ref<const Eigen::MatrixXd>& inputs) {
        const DenseEnergyNet& net = *net_;
        detail::require_shape(static_cast<std::size_t>(inputs.rows()) == net.input_width(),
                              "input width " + std::to_string(inputs.rows()) + " != network input width " +
                                  std::to_string(net.input_width()));
        const std::size_t L = net.num_layers();
        acts_.resize(L);
        input_ = inputs;
        for (std::size_t k = 0; k < L; ++k) {
            const Eigen::MatrixXd& prev = k == 0 ? input_ : acts_[k - 1];
            Eigen::MatrixXd z = net.weights(k) * prev;
            z.colwise() += net.bias(k);
            // Hidden activations are stored post-ReLU; a unit is active iff its value > 0.
            if (k + 1 < L) z = z.cwiseMax(0.0);
            acts_[k] = std::move(z);
        }
        energies_ = acts_.back().row(0).transpose();
        return energies_;
    }

    /// Reverse pass with per-sample upstream weights g_b = dL/dE_b.
    /// Adds sum_b g_b * dE_b/dtheta into `param_grad` when non-empty and
    /// writes dL/dinput (input_width x B) into `input_grad` when non-null.
    void backward(const Eigen::Ref<const Eigen::VectorXd>& upstream, std::span<double> param_grad,
                  Eigen::MatrixXd* input_grad) const {
        const DenseEnergyNet& net = *net_;
        const std::size_t L = net.num_layers();
        detail::require_shape(upstream.size() == input_.cols(), "upstream length must equal batch size");
        const bool want_params = !param_grad.empty();
        if (want_params)
            detail::require_shape(param_grad.size() == net.param_count(), "param_grad length != parameter count");

        Eigen::MatrixXd delta = upstream.transpose();  // 1 x B
        for (std::size_t k = L; k-- > 0;) {
            const Eigen::MatrixXd& prev = k == 0 ? input_ : acts_[k - 1];
            if (want_params) {
                const auto rows = static_cast<Eigen::Index>(net.layer_sizes()[k + 1]);
                const auto cols = static_cast<Eigen::Index>(net.layer_sizes()[k]);
                Eigen::Map<RowMatrix> gw(param_grad.data() + net.layer_offset(k), rows, cols);
                Eigen::Map<Eigen::VectorXd> gb(param_grad.data() + net.layer_offset(k) + rows * cols, rows);
                // Reduce into aligned temporaries; see params_.
                const RowMatrix step = delta * prev.transpose();
                const Eigen::VectorXd bias_step = delta.rowwise().sum();
                gw += step;
                gb += bias_step;
            }
            if (k == 0 && input_grad == nullptr) break;
            Eigen::MatrixXd back = net.weights(k).transpose() * delta;
            if (k > 0) {
                // ReLU'(z) = 1 for z > 0 and 0 otherwise (including z == 0).
                back = back.cwiseProduct((prev.array() > 0.0).cast<double>().matrix());
                delta = std::move(back);
            } else {
                *input_grad = std::move(back);
            }
        }
    }

    /// Input gradients of each energy with unit upstream weights.
    void input_gradients(Eigen::MatrixXd& out) const {
        backward(Eigen::VectorXd::Ones(input_.cols()), {}, &out);
    }

    const Eigen::VectorXd& energies() const noexcept { return energies_; }

private:
    const DenseEnergyNet* net_;
    Eigen::MatrixXd input_;
    std::vector<Eigen::MatrixXd> acts_;
    Eigen::VectorXd energies_;
};

inline double forward(const DenseEnergyNet& net, std::span<const double> input) {
    detail::require_shape(input.size() == net.input_width(), "input length " + std::to_string(input.size()) +
                                                                 " != network input width " +
                                                                 std::to_string(net.input_width()));
    BatchPass pass(net);
    const Eigen::VectorXd col = Eigen::Map<const Eigen::VectorXd>(input.data(), static_cast<Eigen::Index>(input.size()));
    return pass.forward(col)(0);
}

inline GradientBundle forward_grad(const DenseEnergyNet& net, std::span<const double> input, bool want_param_grad,
                                   bool want_input_grad) {
    detail::require_shape(input.size() == net.input_width(), "input length " + std::to_string(input.size()) +
                                                                 " != network input width " +
                                                                 std::to_string(net.input_width()));
    BatchPass pass(net);
    const Eigen::VectorXd col = Eigen::Map<const Eigen::VectorXd>(input.data(), static_cast<Eigen::Index>(input.size()));
    GradientBundle out;
    out.value = pass.forward(col)(0);
    if (!want_param_grad && !want_input_grad) return out;
    if (want_param_grad) out.param_grad.assign(net.param_count(), 0.0);
    Eigen::MatrixXd ig;
    pass.backward(Eigen::VectorXd::Ones(1), out.param_grad, want_input_grad ? &ig : nullptr);
    if (want_input_grad) out.input_grad.assign(ig.data(), ig.data() + ig.size());
    return out;
}

} // namespace ebmlab
