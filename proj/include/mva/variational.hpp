#pragma once

// Variational autoencoder with diagonal Gaussian encoder and decoder heads.
//
// Training minimizes the negative evidence lower bound
//
//   J(theta, phi) = -E_{z ~ q(z|x)}[log p(x|z)] + KL(q(z|x) || N(0, I))
//
// which follows from log p(x) - KL(q(z|x) || p(z|x)) = E_q[log p(x|z)] -
// KL(q(z|x) || p(z)): the evidence term does not depend on z, so dropping it
// leaves a bound that is tight when q matches the true posterior. The
// expectation is estimated with L reparameterized draws z = mu + sigma * eps.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "mva/multiway.hpp"
#include "mva/neural.hpp"

namespace mva {

/// Log-variance heads are clamped to this range before exponentiation.
inline constexpr double kLogVarMin = -10.0;
inline constexpr double kLogVarMax = 10.0;

struct LatentDistribution {
    Eigen::VectorXd mu;
    Eigen::VectorXd sigma;
};

struct OutputDistribution {
    Eigen::VectorXd mu;
    Eigen::VectorXd sigma;
};

/// Two parallel linear heads on top of a trunk.
struct GaussianHead {
    DenseLayer mu;
    DenseLayer log_var;
};

struct VaeTopology {
    std::size_t input_width = 0;
    std::vector<std::size_t> encoder_hidden{128, 64};
    std::size_t latent_width = 8;
    std::vector<std::size_t> decoder_hidden{64, 128};
    Activation activation = Activation::tanh;
};

/// Encoder (phi) and decoder (theta) parameters. Every trunk layer is
/// activated; both heads of each half are linear.
struct VaeParams {
    std::vector<DenseLayer> encoder_trunk;
    GaussianHead encoder_head;
    std::vector<DenseLayer> decoder_trunk;
    GaussianHead decoder_head;
    Activation activation = Activation::tanh;

    std::size_t input_width() const { return static_cast<std::size_t>(decoder_head.mu.weight.rows()); }
    std::size_t latent_width() const { return static_cast<std::size_t>(encoder_head.mu.weight.rows()); }
    VaeTopology topology() const;
    std::size_t parameter_count() const;

    /// Throws InvalidModel on inconsistent shapes or non-finite entries.
    void validate() const;

    static VaeParams zeros(const VaeTopology& topo);
    /// N(0, scale^2) entries; scale defaults to 1/sqrt(fan-in) per layer.
    static VaeParams random(const VaeTopology& topo, std::uint64_t seed,
                            std::optional<double> scale = std::nullopt);

    /// Visits every layer in a fixed order (encoder trunk, encoder heads,
    /// decoder trunk, decoder heads).
    template <class F>
    void for_each_layer(F&& f) {
        for (auto& l : encoder_trunk) f(l);
        f(encoder_head.mu);
        f(encoder_head.log_var);
        for (auto& l : decoder_trunk) f(l);
        f(decoder_head.mu);
        f(decoder_head.log_var);
    }
    template <class F>
    void for_each_layer(F&& f) const {
        for (const auto& l : encoder_trunk) f(l);
        f(encoder_head.mu);
        f(encoder_head.log_var);
        for (const auto& l : decoder_trunk) f(l);
        f(decoder_head.mu);
        f(decoder_head.log_var);
    }
};

LatentDistribution encode(const VaeParams& params, const Eigen::VectorXd& x);

/// z = mu + sigma * eps, elementwise.
Eigen::VectorXd reparameterize(const LatentDistribution& dist, const Eigen::VectorXd& eps);

OutputDistribution decode(const VaeParams& params, const Eigen::VectorXd& z);

/// KL(N(mu, diag sigma^2) || N(0, I)) = 0.5 * sum(mu^2 + sigma^2 - 1 - ln sigma^2).
double kl_to_standard_normal(const LatentDistribution& dist);

/// log N(x; mu, diag sigma^2).
double gaussian_log_likelihood(const Eigen::VectorXd& x, const OutputDistribution& out);

/// Negative ELBO for one sample with the given noise vectors (one per draw).
double elbo_loss(const VaeParams& params, const Eigen::VectorXd& x, std::span<const Eigen::VectorXd> eps);

struct ElboGradient {
    double loss = 0.0;
    VaeParams grad;  // same shapes as the parameters
};

/// Loss and exact gradient through the reparameterized draws.
ElboGradient elbo_gradient(const VaeParams& params, const Eigen::VectorXd& x,
                           std::span<const Eigen::VectorXd> eps);

void sgd_step(VaeParams& params, const VaeParams& grads, double learning_rate);

struct VaeTrainConfig {
    double learning_rate = 1e-4;
    std::size_t epochs = 30;
    /// Monte Carlo draws per training step.
    std::size_t mc_samples = 10;
    std::size_t latent_width = 8;
    std::vector<std::size_t> encoder_hidden{128, 64};
    std::vector<std::size_t> decoder_hidden{64, 128};
    Activation activation = Activation::tanh;
    std::optional<double> init_scale;
    std::uint64_t seed = 0;
    bool early_stop = false;

    void validate() const;
};

struct VaeFit {
    VaeParams params;
    std::vector<double> loss_curve;  // mean per-sample loss of each epoch
};

/// Per-sample SGD on the negative ELBO, data reshuffled every epoch.
/// `on_epoch`, if set, receives (epoch, mean loss) after every epoch.
VaeFit train_mva(std::span<const EventSlice> data, const VaeTrainConfig& cfg,
                 const std::function<void(std::size_t, double)>& on_epoch = {});

}  // namespace mva
