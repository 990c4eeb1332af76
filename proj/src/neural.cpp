#include "mva/neural.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "mva/common.hpp"

namespace mva {

const char* to_string(Activation a) {
    return a == Activation::sigmoid ? "sigmoid" : "tanh";
}

Activation parse_activation(std::string_view name) {
    if (name == "sigmoid") {
        return Activation::sigmoid;
    }
    if (name == "tanh") {
        return Activation::tanh;
    }
    throw InvalidConfig("unknown activation '" + std::string(name) + "' (expected sigmoid or tanh)");
}

double activation_sigmoid(double z) {
    if (z >= 0.0) {
        return 1.0 / (1.0 + std::exp(-z));
    }
    const double e = std::exp(z);
    return e / (1.0 + e);
}

double activation_tanh(double z) {
    return std::tanh(z);
}

double activate(Activation a, double z) {
    return a == Activation::sigmoid ? activation_sigmoid(z) : activation_tanh(z);
}

double activation_slope(Activation a, double output) {
    return a == Activation::sigmoid ? output * (1.0 - output) : 1.0 - output * output;
}

DenseLayer DenseLayer::zeros(std::size_t in, std::size_t out) {
    return {Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in)),
            Eigen::VectorXd::Zero(static_cast<Eigen::Index>(out))};
}

std::size_t NetworkParams::parameter_count() const {
    std::size_t total = 0;
    for (const auto& layer : layers) {
        total += static_cast<std::size_t>(layer.weight.size() + layer.bias.size());
    }
    return total;
}

void NetworkParams::validate() const {
    if (topology.size() < 2) {
        throw InvalidModel("network topology needs at least input and output widths");
    }
    if (layers.size() + 1 != topology.size()) {
        throw InvalidModel("network has " + std::to_string(layers.size()) + " layers for a topology of " +
                           std::to_string(topology.size()) + " widths");
    }
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& layer = layers[l];
        if (static_cast<std::size_t>(layer.weight.rows()) != topology[l + 1] ||
            static_cast<std::size_t>(layer.weight.cols()) != topology[l] ||
            static_cast<std::size_t>(layer.bias.size()) != topology[l + 1]) {
            throw InvalidModel("layer " + std::to_string(l) + " shape does not match topology");
        }
        if (!layer.weight.allFinite() || !layer.bias.allFinite()) {
            throw InvalidModel("layer " + std::to_string(l) + " has non-finite parameters");
        }
    }
}

NetworkParams NetworkParams::zeros(std::vector<std::size_t> topology, Activation act) {
    NetworkParams p;
    p.hidden_activation = act;
    for (std::size_t l = 0; l + 1 < topology.size(); ++l) {
        p.layers.push_back(DenseLayer::zeros(topology[l], topology[l + 1]));
    }
    p.topology = std::move(topology);
    return p;
}

NetworkParams NetworkParams::random(std::vector<std::size_t> topology, Activation act, std::uint64_t seed,
                                    std::optional<double> scale) {
    NetworkParams p = zeros(std::move(topology), act);
    Rng rng(seed);
    for (auto& layer : p.layers) {
        const double s = scale.value_or(1.0 / std::sqrt(static_cast<double>(layer.weight.cols())));
        for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) {
            for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
                layer.weight(r, c) = s * rng.normal();
            }
        }
        for (Eigen::Index r = 0; r < layer.bias.size(); ++r) {
            layer.bias[r] = s * rng.normal();
        }
    }
    return p;
}

ForwardTrace forward_layers(std::span<const DenseLayer> layers, Activation act, const Eigen::VectorXd& x,
                            bool activate_last) {
    ForwardTrace trace;
    trace.pre_activations.reserve(layers.size());
    trace.activations.reserve(layers.size() + 1);
    trace.activations.push_back(x);
    for (std::size_t l = 0; l < layers.size(); ++l) {
        Eigen::VectorXd z = layers[l].bias;
        z.noalias() += layers[l].weight * trace.activations.back();
        Eigen::VectorXd a = z;
        if (l + 1 < layers.size() || activate_last) {
            a = z.unaryExpr([act](double v) { return activate(act, v); });
        }
        trace.pre_activations.push_back(std::move(z));
        trace.activations.push_back(std::move(a));
    }
    return trace;
}

Eigen::VectorXd backward_layers(std::span<const DenseLayer> layers, Activation act, const ForwardTrace& trace,
                                Eigen::VectorXd grad_output, bool activate_last, std::span<DenseLayer> grads,
                                bool need_input_grad) {
    Eigen::VectorXd delta = std::move(grad_output);
    for (std::size_t l = layers.size(); l-- > 0;) {
        if (l + 1 < layers.size() || activate_last) {
            const auto& a = trace.activations[l + 1];
            for (Eigen::Index i = 0; i < delta.size(); ++i) {
                delta[i] *= activation_slope(act, a[i]);
            }
        }
        grads[l].weight.noalias() += delta * trace.activations[l].transpose();
        grads[l].bias += delta;
        if (l > 0 || need_input_grad) {
            Eigen::VectorXd prev = layers[l].weight.transpose() * delta;
            delta = std::move(prev);
        }
    }
    if (!need_input_grad) {
        return {};
    }
    return delta;
}

LayerGradients zero_gradients(std::span<const DenseLayer> layers) {
    LayerGradients g;
    g.reserve(layers.size());
    for (const auto& layer : layers) {
        g.push_back(DenseLayer::zeros(static_cast<std::size_t>(layer.weight.cols()),
                                      static_cast<std::size_t>(layer.weight.rows())));
    }
    return g;
}

ForwardTrace forward(const NetworkParams& params, const Eigen::VectorXd& x) {
    if (static_cast<std::size_t>(x.size()) != params.input_width()) {
        throw DimensionMismatch("input has " + std::to_string(x.size()) + " entries, network expects " +
                                std::to_string(params.input_width()));
    }
    return forward_layers(params.layers, params.hidden_activation, x, false);
}

double mse_cost(std::span<const Eigen::VectorXd> inputs, std::span<const Eigen::VectorXd> reconstructions) {
    if (inputs.empty()) {
        throw InvalidInput("mse_cost needs a nonempty batch");
    }
    if (inputs.size() != reconstructions.size()) {
        throw DimensionMismatch("mse_cost batch sizes differ");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        if (inputs[i].size() != reconstructions[i].size()) {
            throw DimensionMismatch("mse_cost pair " + std::to_string(i) + " has mismatched lengths");
        }
        total += 0.5 * (inputs[i] - reconstructions[i]).squaredNorm();
    }
    return total / static_cast<double>(inputs.size());
}

LayerGradients backprop(const NetworkParams& params, const ForwardTrace& trace, const Eigen::VectorXd& x) {
    auto grads = zero_gradients(params.layers);
    // d/d x_hat of 0.5 ||x - x_hat||^2
    Eigen::VectorXd residual = trace.output() - x;
    backward_layers(params.layers, params.hidden_activation, trace, std::move(residual), false, grads, false);
    return grads;
}

void sgd_step(std::span<DenseLayer> layers, std::span<const DenseLayer> grads, double learning_rate) {
    if (layers.size() != grads.size()) {
        throw DimensionMismatch("gradient layer count differs from parameter layer count");
    }
    for (std::size_t l = 0; l < layers.size(); ++l) {
        if (layers[l].weight.rows() != grads[l].weight.rows() || layers[l].weight.cols() != grads[l].weight.cols() ||
            layers[l].bias.size() != grads[l].bias.size()) {
            throw DimensionMismatch("gradient shape differs at layer " + std::to_string(l));
        }
        layers[l].weight.noalias() -= learning_rate * grads[l].weight;
        layers[l].bias.noalias() -= learning_rate * grads[l].bias;
    }
}

void sgd_step(NetworkParams& params, const LayerGradients& grads, double learning_rate) {
    sgd_step(std::span<DenseLayer>(params.layers), std::span<const DenseLayer>(grads), learning_rate);
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
        throw InvalidConfig("learning_rate must be positive");
    }
    if (epochs < 1) {
        throw InvalidConfig("epochs must be >= 1");
    }
    if (init_scale && !(*init_scale > 0.0)) {
        throw InvalidConfig("init_scale must be positive");
    }
    for (auto w : hidden_widths) {
        if (w == 0) {
            throw InvalidConfig("hidden layer widths must be >= 1");
        }
    }
}

AutoencoderFit train_autoencoder(std::span<const EventSlice> data, const TrainConfig& cfg) {
    cfg.validate();
    if (data.empty()) {
        throw InvalidInput("train_autoencoder needs at least one sample");
    }
    const auto d = static_cast<std::size_t>(data.front().flat.size());
    for (const auto& s : data) {
        if (static_cast<std::size_t>(s.flat.size()) != d) {
            throw DimensionMismatch("training slices differ in length");
        }
    }
    std::vector<std::size_t> topology{d};
    topology.insert(topology.end(), cfg.hidden_widths.begin(), cfg.hidden_widths.end());
    topology.push_back(d);

    AutoencoderFit fit{NetworkParams::random(topology, cfg.hidden_activation, mix_seed(cfg.seed, 1), cfg.init_scale),
                       {}};
    Rng order_rng(mix_seed(cfg.seed, 2));
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto grads = zero_gradients(fit.params.layers);
    std::size_t flat_epochs = 0;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        order_rng.shuffle(order);
        double total = 0.0;
        for (std::size_t idx : order) {
            const auto& x = data[idx].flat;
            const auto trace = forward(fit.params, x);
            total += 0.5 * (x - trace.output()).squaredNorm();
            for (auto& g : grads) {
                g.weight.setZero();
                g.bias.setZero();
            }
            backward_layers(fit.params.layers, fit.params.hidden_activation, trace, trace.output() - x, false,
                            grads, false);
            sgd_step(fit.params, grads, cfg.learning_rate);
        }
        const double cost = total / static_cast<double>(data.size());
        if (!std::isfinite(cost)) {
            throw TrainingDiverged("autoencoder cost became non-finite at epoch " + std::to_string(epoch + 1));
        }
        if (!fit.cost_curve.empty() && std::abs(cost - fit.cost_curve.back()) < 1e-8) {
            ++flat_epochs;
        } else {
            flat_epochs = 0;
        }
        fit.cost_curve.push_back(cost);
        if (cfg.early_stop && flat_epochs >= 10) {
            break;
        }
    }
    return fit;
}

double reconstruction_error(const NetworkParams& params, const Eigen::VectorXd& x) {
    return (x - forward(params, x).output()).squaredNorm();
}

std::vector<bool> detect_by_re(const NetworkParams& params, std::span<const Eigen::VectorXd> samples,
                               double threshold) {
    if (!(threshold > 0.0)) {
        throw InvalidConfig("detection threshold must be positive");
    }
    std::vector<bool> out;
    out.reserve(samples.size());
    for (const auto& x : samples) {
        out.push_back(reconstruction_error(params, x) > threshold);
    }
    return out;
}

}  // namespace mva
