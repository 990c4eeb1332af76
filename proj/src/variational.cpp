#include "mva/variational.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "mva/common.hpp"

namespace mva {

namespace {

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

std::vector<std::size_t> chain(std::size_t first, const std::vector<std::size_t>& hidden) {
    std::vector<std::size_t> widths{first};
    widths.insert(widths.end(), hidden.begin(), hidden.end());
    return widths;
}

std::vector<DenseLayer> zero_trunk(const std::vector<std::size_t>& widths) {
    std::vector<DenseLayer> layers;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        layers.push_back(DenseLayer::zeros(widths[l], widths[l + 1]));
    }
    return layers;
}

std::size_t trunk_output_width(const std::vector<DenseLayer>& trunk, std::size_t input) {
    return trunk.empty() ? input : static_cast<std::size_t>(trunk.back().weight.rows());
}

double clamp_log_var(double v) {
    return std::clamp(v, kLogVarMin, kLogVarMax);
}

bool inside_clamp(double raw) {
    return raw >= kLogVarMin && raw <= kLogVarMax;
}

Eigen::VectorXd affine(const DenseLayer& layer, const Eigen::VectorXd& in) {
    Eigen::VectorXd out = layer.bias;
    out.noalias() += layer.weight * in;
    return out;
}

void check_layer(const DenseLayer& layer, std::size_t in, std::size_t out, const std::string& name) {
    if (static_cast<std::size_t>(layer.weight.cols()) != in || static_cast<std::size_t>(layer.weight.rows()) != out ||
        static_cast<std::size_t>(layer.bias.size()) != out) {
        throw InvalidModel(name + " has shape " + std::to_string(layer.weight.rows()) + "x" +
                           std::to_string(layer.weight.cols()) + ", expected " + std::to_string(out) + "x" +
                           std::to_string(in));
    }
    if (!layer.weight.allFinite() || !layer.bias.allFinite()) {
        throw InvalidModel(name + " has non-finite parameters");
    }
}

// Cached intermediate values of one encoder pass.
struct EncoderPass {
    ForwardTrace trunk;
    Eigen::VectorXd mu;
    Eigen::VectorXd raw_log_var;
    Eigen::VectorXd sigma;
};

EncoderPass run_encoder(const VaeParams& p, const Eigen::VectorXd& x) {
    EncoderPass e;
    e.trunk = forward_layers(p.encoder_trunk, p.activation, x, true);
    const auto& h = e.trunk.output();
    e.mu = affine(p.encoder_head.mu, h);
    e.raw_log_var = affine(p.encoder_head.log_var, h);
    e.sigma = e.raw_log_var.unaryExpr([](double v) { return std::exp(0.5 * clamp_log_var(v)); });
    return e;
}

struct DecoderPass {
    ForwardTrace trunk;
    Eigen::VectorXd mu;
    Eigen::VectorXd raw_log_var;
    Eigen::VectorXd variance;
};

DecoderPass run_decoder(const VaeParams& p, const Eigen::VectorXd& z) {
    DecoderPass d;
    d.trunk = forward_layers(p.decoder_trunk, p.activation, z, true);
    const auto& g = d.trunk.output();
    d.mu = affine(p.decoder_head.mu, g);
    d.raw_log_var = affine(p.decoder_head.log_var, g);
    d.variance = d.raw_log_var.unaryExpr([](double v) { return std::exp(clamp_log_var(v)); });
    return d;
}

void check_input(const VaeParams& p, const Eigen::VectorXd& x) {
    if (static_cast<std::size_t>(x.size()) != p.input_width()) {
        throw DimensionMismatch("input has " + std::to_string(x.size()) + " entries, model expects " +
                                std::to_string(p.input_width()));
    }
}

void check_noise(const VaeParams& p, std::span<const Eigen::VectorXd> eps) {
    if (eps.empty()) {
        throw InvalidInput("at least one noise vector is required");
    }
    for (const auto& e : eps) {
        if (static_cast<std::size_t>(e.size()) != p.latent_width()) {
            throw DimensionMismatch("noise vector has " + std::to_string(e.size()) + " entries, latent width is " +
                                    std::to_string(p.latent_width()));
        }
    }
}

}  // namespace

VaeTopology VaeParams::topology() const {
    VaeTopology t;
    t.input_width = input_width();
    t.latent_width = latent_width();
    t.activation = activation;
    t.encoder_hidden.clear();
    for (const auto& l : encoder_trunk) {
        t.encoder_hidden.push_back(static_cast<std::size_t>(l.weight.rows()));
    }
    t.decoder_hidden.clear();
    for (const auto& l : decoder_trunk) {
        t.decoder_hidden.push_back(static_cast<std::size_t>(l.weight.rows()));
    }
    return t;
}

std::size_t VaeParams::parameter_count() const {
    std::size_t total = 0;
    for_each_layer([&](const DenseLayer& l) { total += static_cast<std::size_t>(l.weight.size() + l.bias.size()); });
    return total;
}

void VaeParams::validate() const {
    const std::size_t d = input_width();
    const std::size_t dz = latent_width();
    if (d == 0 || dz == 0) {
        throw InvalidModel("model has zero input or latent width");
    }
    std::size_t width = static_cast<std::size_t>(encoder_trunk.empty() ? encoder_head.mu.weight.cols()
                                                                       : encoder_trunk.front().weight.cols());
    if (width != d) {
        throw InvalidModel("encoder input width " + std::to_string(width) + " differs from decoder output width " +
                           std::to_string(d));
    }
    for (std::size_t l = 0; l < encoder_trunk.size(); ++l) {
        const auto out = static_cast<std::size_t>(encoder_trunk[l].weight.rows());
        check_layer(encoder_trunk[l], width, out, "encoder layer " + std::to_string(l));
        width = out;
    }
    check_layer(encoder_head.mu, width, dz, "encoder mu head");
    check_layer(encoder_head.log_var, width, dz, "encoder log-variance head");
    width = dz;
    for (std::size_t l = 0; l < decoder_trunk.size(); ++l) {
        const auto out = static_cast<std::size_t>(decoder_trunk[l].weight.rows());
        check_layer(decoder_trunk[l], width, out, "decoder layer " + std::to_string(l));
        width = out;
    }
    check_layer(decoder_head.mu, width, d, "decoder mu head");
    check_layer(decoder_head.log_var, width, d, "decoder log-variance head");
}

VaeParams VaeParams::zeros(const VaeTopology& topo) {
    if (topo.input_width == 0 || topo.latent_width == 0) {
        throw InvalidConfig("input and latent widths must be >= 1");
    }
    VaeParams p;
    p.activation = topo.activation;
    p.encoder_trunk = zero_trunk(chain(topo.input_width, topo.encoder_hidden));
    const auto h = trunk_output_width(p.encoder_trunk, topo.input_width);
    p.encoder_head = {DenseLayer::zeros(h, topo.latent_width), DenseLayer::zeros(h, topo.latent_width)};
    p.decoder_trunk = zero_trunk(chain(topo.latent_width, topo.decoder_hidden));
    const auto g = trunk_output_width(p.decoder_trunk, topo.latent_width);
    p.decoder_head = {DenseLayer::zeros(g, topo.input_width), DenseLayer::zeros(g, topo.input_width)};
    return p;
}

VaeParams VaeParams::random(const VaeTopology& topo, std::uint64_t seed, std::optional<double> scale) {
    VaeParams p = zeros(topo);
    Rng rng(seed);
    p.for_each_layer([&](DenseLayer& layer) {
        const double s = scale.value_or(1.0 / std::sqrt(static_cast<double>(layer.weight.cols())));
        for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) {
            for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
                layer.weight(r, c) = s * rng.normal();
            }
        }
        for (Eigen::Index r = 0; r < layer.bias.size(); ++r) {
            layer.bias[r] = s * rng.normal();
        }
    });
    return p;
}

LatentDistribution encode(const VaeParams& params, const Eigen::VectorXd& x) {
    check_input(params, x);
    auto e = run_encoder(params, x);
    return {std::move(e.mu), std::move(e.sigma)};
}

Eigen::VectorXd reparameterize(const LatentDistribution& dist, const Eigen::VectorXd& eps) {
    if (eps.size() != dist.mu.size()) {
        throw DimensionMismatch("noise vector has " + std::to_string(eps.size()) + " entries, latent width is " +
                                std::to_string(dist.mu.size()));
    }
    return dist.mu + dist.sigma.cwiseProduct(eps);
}

OutputDistribution decode(const VaeParams& params, const Eigen::VectorXd& z) {
    if (static_cast<std::size_t>(z.size()) != params.latent_width()) {
        throw DimensionMismatch("latent vector has " + std::to_string(z.size()) + " entries, model expects " +
                                std::to_string(params.latent_width()));
    }
    auto d = run_decoder(params, z);
    return {std::move(d.mu), d.variance.cwiseSqrt()};
}

double kl_to_standard_normal(const LatentDistribution& dist) {
    double kl = 0.0;
    for (Eigen::Index j = 0; j < dist.mu.size(); ++j) {
        const double s = dist.sigma[j];
        kl += dist.mu[j] * dist.mu[j] + s * s - 1.0 - 2.0 * std::log(s);
    }
    return 0.5 * kl;
}

double gaussian_log_likelihood(const Eigen::VectorXd& x, const OutputDistribution& out) {
    if (x.size() != out.mu.size() || x.size() != out.sigma.size()) {
        throw DimensionMismatch("likelihood arguments differ in length");
    }
    double ll = 0.0;
    for (Eigen::Index j = 0; j < x.size(); ++j) {
        const double r = (x[j] - out.mu[j]) / out.sigma[j];
        ll += -kHalfLog2Pi - std::log(out.sigma[j]) - 0.5 * r * r;
    }
    return ll;
}

double elbo_loss(const VaeParams& params, const Eigen::VectorXd& x, std::span<const Eigen::VectorXd> eps) {
    check_input(params, x);
    check_noise(params, eps);
    const auto q = encode(params, x);
    double nll = 0.0;
    for (const auto& e : eps) {
        nll -= gaussian_log_likelihood(x, decode(params, reparameterize(q, e)));
    }
    return nll / static_cast<double>(eps.size()) + kl_to_standard_normal(q);
}

namespace {

// Fully activated trunk over a batch of column inputs.
std::vector<Eigen::MatrixXd> forward_batch(const std::vector<DenseLayer>& layers, Activation act,
                                           Eigen::MatrixXd input) {
    std::vector<Eigen::MatrixXd> acts;
    acts.reserve(layers.size() + 1);
    acts.push_back(std::move(input));
    for (const auto& layer : layers) {
        Eigen::MatrixXd z = layer.weight * acts.back();
        z.colwise() += layer.bias;
        acts.push_back(z.unaryExpr([act](double v) { return activate(act, v); }));
    }
    return acts;
}

// Accumulates parameter gradients; returns the gradient w.r.t. the batch input.
Eigen::MatrixXd backward_batch(const std::vector<DenseLayer>& layers, Activation act,
                               const std::vector<Eigen::MatrixXd>& acts, Eigen::MatrixXd delta,
                               std::vector<DenseLayer>& grads) {
    for (std::size_t l = layers.size(); l-- > 0;) {
        delta.array() *= acts[l + 1].unaryExpr([act](double a) { return activation_slope(act, a); }).array();
        grads[l].weight.noalias() += delta * acts[l].transpose();
        grads[l].bias += delta.rowwise().sum();
        Eigen::MatrixXd prev = layers[l].weight.transpose() * delta;
        delta = std::move(prev);
    }
    return delta;
}

// Adds d(loss)/d(params) into `grad` and returns the loss. Columns of `eps`
// are the L noise draws.
double accumulate_elbo_gradient(const VaeParams& params, const Eigen::VectorXd& x, const Eigen::MatrixXd& eps,
                                VaeParams& grad) {
    const double inv_l = 1.0 / static_cast<double>(eps.cols());
    const auto enc = run_encoder(params, x);
    const auto& h = enc.trunk.output();
    const Eigen::Index dz = enc.mu.size();

    // KL(q || N(0, I)) contributions; d/d logvar of 0.5 * (exp(lv) - lv).
    Eigen::VectorXd g_mu = enc.mu;
    Eigen::VectorXd g_lv(dz);
    double kl = 0.0;
    for (Eigen::Index j = 0; j < dz; ++j) {
        const double lv = clamp_log_var(enc.raw_log_var[j]);
        const double var = enc.sigma[j] * enc.sigma[j];
        kl += 0.5 * (enc.mu[j] * enc.mu[j] + var - 1.0 - lv);
        g_lv[j] = 0.5 * (var - 1.0);
    }

    // z = mu + exp(0.5 * lv) * eps, one column per draw.
    Eigen::MatrixXd z = enc.sigma.asDiagonal() * eps;
    z.colwise() += enc.mu;
    const auto acts = forward_batch(params.decoder_trunk, params.activation, std::move(z));
    const auto& g = acts.back();
    Eigen::MatrixXd mu = params.decoder_head.mu.weight * g;
    mu.colwise() += params.decoder_head.mu.bias;
    Eigen::MatrixXd raw_lv = params.decoder_head.log_var.weight * g;
    raw_lv.colwise() += params.decoder_head.log_var.bias;

    const Eigen::Index d = x.size();
    const Eigen::Index l_count = eps.cols();
    Eigen::MatrixXd d_mu(d, l_count);
    Eigen::MatrixXd d_lv(d, l_count);
    double nll_total = 0.0;
    for (Eigen::Index c = 0; c < l_count; ++c) {
        for (Eigen::Index j = 0; j < d; ++j) {
            const double raw = raw_lv(j, c);
            const double lv = clamp_log_var(raw);
            const double inv_var = std::exp(-lv);
            const double r = x[j] - mu(j, c);
            nll_total += kHalfLog2Pi + 0.5 * lv + 0.5 * r * r * inv_var;
            d_mu(j, c) = -inv_l * r * inv_var;
            d_lv(j, c) = inside_clamp(raw) ? inv_l * (0.5 - 0.5 * r * r * inv_var) : 0.0;
        }
    }
    grad.decoder_head.mu.weight.noalias() += d_mu * g.transpose();
    grad.decoder_head.mu.bias += d_mu.rowwise().sum();
    grad.decoder_head.log_var.weight.noalias() += d_lv * g.transpose();
    grad.decoder_head.log_var.bias += d_lv.rowwise().sum();
    Eigen::MatrixXd d_g = params.decoder_head.mu.weight.transpose() * d_mu;
    d_g.noalias() += params.decoder_head.log_var.weight.transpose() * d_lv;
    const Eigen::MatrixXd d_z =
        backward_batch(params.decoder_trunk, params.activation, acts, std::move(d_g), grad.decoder_trunk);

    g_mu += d_z.rowwise().sum();
    g_lv += 0.5 * d_z.cwiseProduct(eps).rowwise().sum().cwiseProduct(enc.sigma);
    for (Eigen::Index j = 0; j < dz; ++j) {
        if (!inside_clamp(enc.raw_log_var[j])) {
            g_lv[j] = 0.0;
        }
    }

    grad.encoder_head.mu.weight.noalias() += g_mu * h.transpose();
    grad.encoder_head.mu.bias += g_mu;
    grad.encoder_head.log_var.weight.noalias() += g_lv * h.transpose();
    grad.encoder_head.log_var.bias += g_lv;
    if (!params.encoder_trunk.empty()) {
        Eigen::VectorXd d_h = params.encoder_head.mu.weight.transpose() * g_mu;
        d_h.noalias() += params.encoder_head.log_var.weight.transpose() * g_lv;
        backward_layers(params.encoder_trunk, params.activation, enc.trunk, std::move(d_h), true, grad.encoder_trunk,
                        false);
    }
    return nll_total * inv_l + kl;
}

void zero_fill(VaeParams& p) {
    p.for_each_layer([](DenseLayer& l) {
        l.weight.setZero();
        l.bias.setZero();
    });
}

}  // namespace

ElboGradient elbo_gradient(const VaeParams& params, const Eigen::VectorXd& x, std::span<const Eigen::VectorXd> eps) {
    check_input(params, x);
    check_noise(params, eps);
    Eigen::MatrixXd noise(static_cast<Eigen::Index>(params.latent_width()), static_cast<Eigen::Index>(eps.size()));
    for (std::size_t c = 0; c < eps.size(); ++c) {
        noise.col(static_cast<Eigen::Index>(c)) = eps[c];
    }
    ElboGradient out{0.0, VaeParams::zeros(params.topology())};
    out.loss = accumulate_elbo_gradient(params, x, noise, out.grad);
    return out;
}

void sgd_step(VaeParams& params, const VaeParams& grads, double learning_rate) {
    std::vector<const DenseLayer*> g;
    grads.for_each_layer([&](const DenseLayer& l) { g.push_back(&l); });
    std::size_t idx = 0;
    params.for_each_layer([&](DenseLayer& l) {
        if (idx >= g.size() || l.weight.rows() != g[idx]->weight.rows() || l.weight.cols() != g[idx]->weight.cols()) {
            throw DimensionMismatch("gradient shape differs from parameter shape");
        }
        l.weight.noalias() -= learning_rate * g[idx]->weight;
        l.bias.noalias() -= learning_rate * g[idx]->bias;
        ++idx;
    });
    if (idx != g.size()) {
        throw DimensionMismatch("gradient layer count differs from parameter layer count");
    }
}

void VaeTrainConfig::validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
        throw InvalidConfig("train.learning_rate must be positive");
    }
    if (epochs < 1) {
        throw InvalidConfig("train.epochs must be >= 1");
    }
    if (mc_samples < 1) {
        throw InvalidConfig("train.mc_samples must be >= 1");
    }
    if (latent_width < 1) {
        throw InvalidConfig("train.latent_width must be >= 1");
    }
    if (init_scale && !(*init_scale > 0.0)) {
        throw InvalidConfig("train.init_scale must be positive");
    }
    for (auto w : encoder_hidden) {
        if (w == 0) {
            throw InvalidConfig("train.encoder_hidden widths must be >= 1");
        }
    }
    for (auto w : decoder_hidden) {
        if (w == 0) {
            throw InvalidConfig("train.decoder_hidden widths must be >= 1");
        }
    }
}

VaeFit train_mva(std::span<const EventSlice> data, const VaeTrainConfig& cfg,
                 const std::function<void(std::size_t, double)>& on_epoch) {
    cfg.validate();
    if (data.empty()) {
        throw InvalidInput("train_mva needs at least one training slice");
    }
    const auto d = static_cast<std::size_t>(data.front().flat.size());
    for (const auto& s : data) {
        if (static_cast<std::size_t>(s.flat.size()) != d) {
            throw DimensionMismatch("training slices differ in length");
        }
    }
    VaeTopology topo{d, cfg.encoder_hidden, cfg.latent_width, cfg.decoder_hidden, cfg.activation};
    VaeFit fit{VaeParams::random(topo, mix_seed(cfg.seed, 1), cfg.init_scale), {}};

    Rng order_rng(mix_seed(cfg.seed, 2));
    Rng noise_rng(mix_seed(cfg.seed, 3));
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Eigen::MatrixXd eps(static_cast<Eigen::Index>(cfg.latent_width), static_cast<Eigen::Index>(cfg.mc_samples));
    VaeParams grad = VaeParams::zeros(topo);
    std::size_t flat_epochs = 0;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        order_rng.shuffle(order);
        double total = 0.0;
        for (std::size_t idx : order) {
            for (Eigen::Index c = 0; c < eps.cols(); ++c) {
                for (Eigen::Index j = 0; j < eps.rows(); ++j) {
                    eps(j, c) = noise_rng.normal();
                }
            }
            zero_fill(grad);
            const double step_loss = accumulate_elbo_gradient(fit.params, data[idx].flat, eps, grad);
            if (!std::isfinite(step_loss)) {
                throw TrainingDiverged("ELBO loss became non-finite at epoch " + std::to_string(epoch + 1) +
                                       " (event " + std::to_string(data[idx].event_index) +
                                       "); lower train.learning_rate");
            }
            total += step_loss;
            sgd_step(fit.params, grad, cfg.learning_rate);
        }
        const double loss = total / static_cast<double>(data.size());
        if (!fit.loss_curve.empty() && std::abs(loss - fit.loss_curve.back()) < 1e-8) {
            ++flat_epochs;
        } else {
            flat_epochs = 0;
        }
        fit.loss_curve.push_back(loss);
        if (on_epoch) {
            on_epoch(epoch + 1, loss);
        }
        if (cfg.early_stop && flat_epochs >= 10) {
            break;
        }
    }
    return fit;
}

}  // namespace mva
