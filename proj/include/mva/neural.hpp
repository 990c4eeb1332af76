#pragma once

// Plain feed-forward autoencoder: dense layers, activations, backpropagation,
// per-sample SGD and reconstruction-error detection.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "mva/multiway.hpp"

namespace mva {

enum class Activation { sigmoid, tanh };

const char* to_string(Activation a);
Activation parse_activation(std::string_view name);

double activation_sigmoid(double z);
double activation_tanh(double z);
double activate(Activation a, double z);
/// Derivative expressed through the activation output a = f(z).
double activation_slope(Activation a, double output);

struct DenseLayer {
    Eigen::MatrixXd weight;  // out x in
    Eigen::VectorXd bias;    // out

    static DenseLayer zeros(std::size_t in, std::size_t out);
};

/// Weights and biases of a stack of dense layers. Hidden layers use
/// hidden_activation; the output layer is linear.
struct NetworkParams {
    std::vector<std::size_t> topology;  // [d_in, h_1, ..., d_out]
    std::vector<DenseLayer> layers;     // layers[l] maps width l -> width l+1
    Activation hidden_activation = Activation::tanh;

    std::size_t input_width() const { return topology.front(); }
    std::size_t output_width() const { return topology.back(); }
    std::size_t parameter_count() const;

    /// Throws InvalidModel on shape mismatch or non-finite entries.
    void validate() const;

    static NetworkParams zeros(std::vector<std::size_t> topology, Activation act);
    /// Entries drawn from N(0, scale^2); scale defaults to 1/sqrt(fan-in) per layer.
    static NetworkParams random(std::vector<std::size_t> topology, Activation act, std::uint64_t seed,
                                std::optional<double> scale = std::nullopt);
};

struct ForwardTrace {
    std::vector<Eigen::VectorXd> pre_activations;  // one per layer
    std::vector<Eigen::VectorXd> activations;      // input first, then one per layer

    const Eigen::VectorXd& output() const { return activations.back(); }
};

using LayerGradients = std::vector<DenseLayer>;

/// Forward pass through an arbitrary layer stack. With activate_last the
/// final layer also goes through the hidden activation.
ForwardTrace forward_layers(std::span<const DenseLayer> layers, Activation act, const Eigen::VectorXd& x,
                            bool activate_last);

/// Backward pass for forward_layers. grad_output is dLoss/d(output); layer
/// gradients are added into `grads`. Returns dLoss/d(input) when
/// need_input_grad, otherwise an empty vector.
Eigen::VectorXd backward_layers(std::span<const DenseLayer> layers, Activation act, const ForwardTrace& trace,
                                Eigen::VectorXd grad_output, bool activate_last, std::span<DenseLayer> grads,
                                bool need_input_grad = true);

LayerGradients zero_gradients(std::span<const DenseLayer> layers);

ForwardTrace forward(const NetworkParams& params, const Eigen::VectorXd& x);

/// (1/n) * sum of 0.5 * ||x - x_hat||^2 over the batch.
double mse_cost(std::span<const Eigen::VectorXd> inputs, std::span<const Eigen::VectorXd> reconstructions);

/// Gradients of 0.5 * ||x - x_hat||^2 for one sample.
LayerGradients backprop(const NetworkParams& params, const ForwardTrace& trace, const Eigen::VectorXd& x);

void sgd_step(std::span<DenseLayer> layers, std::span<const DenseLayer> grads, double learning_rate);
void sgd_step(NetworkParams& params, const LayerGradients& grads, double learning_rate);

struct TrainConfig {
    double learning_rate = 1e-3;
    std::size_t epochs = 100;
    /// Unset means 1/sqrt(fan-in) per layer.
    std::optional<double> init_scale;
    std::uint64_t seed = 0;
    std::vector<std::size_t> hidden_widths{64, 16, 64};
    Activation hidden_activation = Activation::tanh;
    /// Stop once |delta cost| < 1e-8 for 10 consecutive epochs.
    bool early_stop = false;

    void validate() const;
};

struct AutoencoderFit {
    NetworkParams params;
    std::vector<double> cost_curve;  // mean per-sample cost of each epoch
};

AutoencoderFit train_autoencoder(std::span<const EventSlice> data, const TrainConfig& cfg);

/// ||x - x_hat||^2.
double reconstruction_error(const NetworkParams& params, const Eigen::VectorXd& x);

/// true = anomaly, i.e. reconstruction error strictly above threshold.
std::vector<bool> detect_by_re(const NetworkParams& params, std::span<const Eigen::VectorXd> samples,
                               double threshold);

}  // namespace mva
