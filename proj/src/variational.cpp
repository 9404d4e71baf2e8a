#include "vbdo/variational.hpp"

#include "vbdo/error.hpp"
#include "vbdo/rng.hpp"

#include <cmath>
#include <numbers>

namespace vbdo {

double softplus(double x) noexcept {
    if (x > 30.0) return x;
    if (x < -30.0) return std::exp(x);
    return std::log1p(std::exp(x));
}

double softplus_derivative(double x) noexcept { return 1.0 / (std::exp(-x) + 1.0); }

double softplus_inverse(double y) {
    require(y > 0.0 && std::isfinite(y), "softplus_inverse: argument must be positive");
    if (y > 30.0) return y;
    if (y < 1e-13) return std::log(y);
    return std::log(std::expm1(y));
}

Vector VariationalParams::sigma() const { return delta.unaryExpr([](double d) { return softplus(d); }); }

void VariationalParams::validate() const {
    require(mu.size() == delta.size(), "variational parameters: mu and delta lengths differ");
    if (!mu.allFinite() || !delta.allFinite()) throw NumericError("variational parameters are not finite");
}

NoiseDraw NoiseDraw::generate(std::size_t size, std::uint64_t seed, std::uint64_t index) {
    NoiseDraw nd{Vector(static_cast<Eigen::Index>(size)), seed, index};
    CounterRng rng = CounterRng(seed).split(index);
    for (auto& k : nd.kappa) k = rng.normal();
    return nd;
}

NoiseDraw NoiseDraw::zeros(std::size_t size) { return {Vector::Zero(static_cast<Eigen::Index>(size)), 0, 0}; }

Vector sample_params(const VariationalParams& vp, const NoiseDraw& noise) {
    require(noise.kappa.size() == vp.mu.size() && vp.delta.size() == vp.mu.size(),
            "sample_params: dimension mismatch");
    Vector theta(vp.mu.size());
    for (Eigen::Index i = 0; i < theta.size(); ++i) theta[i] = vp.mu[i] + softplus(vp.delta[i]) * noise.kappa[i];
    return theta;
}

double complexity_cost(const VariationalParams& vp) {
    double kl = 0.0;
    for (Eigen::Index i = 0; i < vp.mu.size(); ++i) {
        const double s = softplus(vp.delta[i]);
        // log(s^2) through log(s) keeps tiny sigmas finite.
        kl += 0.5 * (s * s + vp.mu[i] * vp.mu[i] - 1.0) - std::log(s);
    }
    return kl;
}

void complexity_cost_gradient(const VariationalParams& vp, double scale, std::span<double> grad_mu,
                              std::span<double> grad_delta) {
    const auto n = static_cast<std::size_t>(vp.mu.size());
    require(grad_mu.size() == n && grad_delta.size() == n, "complexity_cost_gradient: dimension mismatch");
    for (std::size_t i = 0; i < n; ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        const double s = softplus(vp.delta[k]);
        grad_mu[i] += scale * vp.mu[k];
        grad_delta[i] += scale * (s - 1.0 / s) * softplus_derivative(vp.delta[k]);
    }
}

double complexity_cost_sampled(const VariationalParams& vp, const NoiseDraw& noise, double scale,
                               std::span<double> grad_theta, std::span<double> grad_mu,
                               std::span<double> grad_delta) {
    require(noise.kappa.size() == vp.mu.size(), "complexity_cost_sampled: dimension mismatch");
    const bool with_grad = !grad_theta.empty();
    const auto n = static_cast<std::size_t>(vp.mu.size());
    require(!with_grad || (grad_theta.size() == n && grad_mu.size() == n && grad_delta.size() == n),
            "complexity_cost_sampled: gradient buffers have the wrong length");
    // log q(theta) - log p(theta) = -log s - kappa^2 / 2 + theta^2 / 2 (the 2 pi terms cancel).
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        const double s = softplus(vp.delta[k]);
        const double kappa = noise.kappa[k];
        const double theta = vp.mu[k] + s * kappa;
        total += -std::log(s) - 0.5 * kappa * kappa + 0.5 * theta * theta;
        if (with_grad) {
            // Pathwise: d/dtheta [log q - log p] = -(theta - mu)/s^2 + theta.
            grad_theta[i] += scale * (-kappa / s + theta);
            // At fixed theta: d log q / d mu = (theta - mu)/s^2, d log q / d s = -1/s + (theta - mu)^2/s^3.
            grad_mu[i] += scale * (kappa / s);
            grad_delta[i] += scale * (-1.0 / s + kappa * kappa / s) * softplus_derivative(vp.delta[k]);
        }
    }
    return total;
}

VariationalGradient backprop_variational(const Vector& param_grad, const VariationalParams& vp,
                                         const NoiseDraw& noise, const Vector& direct_mu,
                                         const Vector& direct_delta) {
    const auto n = vp.mu.size();
    require(param_grad.size() == n && noise.kappa.size() == n && direct_mu.size() == n && direct_delta.size() == n &&
                vp.delta.size() == n,
            "backprop_variational: dimension mismatch");
    VariationalGradient g{param_grad + direct_mu, Vector(n)};
    for (Eigen::Index i = 0; i < n; ++i)
        g.delta[i] = param_grad[i] * noise.kappa[i] / (std::exp(-vp.delta[i]) + 1.0) + direct_delta[i];
    return g;
}

VariationalParams init_variational(std::span<const nn::NetSpec> nets, std::uint64_t seed, const InitOptions& opts) {
    std::size_t total = 0;
    for (const auto& net : nets) total += nn::param_count(net);
    VariationalParams vp{Vector::Zero(static_cast<Eigen::Index>(total)),
                         Vector::Constant(static_cast<Eigen::Index>(total), softplus_inverse(opts.initial_sigma))};
    CounterRng rng = CounterRng(split_key(seed, 0x696e6974ULL));
    std::size_t base = 0;
    for (const auto& net : nets) {
        const nn::FlatLayout layout(net);
        for (std::size_t i = 0; i < net.layers.size(); ++i) {
            const auto& l = net.layers[i];
            const double sd = std::sqrt(2.0 / static_cast<double>(l.in_dim + l.out_dim));
            for (std::size_t j = 0; j < l.in_dim * l.out_dim; ++j)
                vp.mu[static_cast<Eigen::Index>(base + layout[i].weight + j)] = sd * rng.normal();
        }
        base += layout.size();
    }
    return vp;
}

}  // namespace vbdo
