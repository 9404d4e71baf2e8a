#pragma once

#include "vbdo/grf.hpp"
#include "vbdo/nn.hpp"

#include <cstdint>
#include <span>

namespace vbdo {

/// log(1 + exp(x)) without overflow: x above 30 returns x, below -30 returns exp(x).
double softplus(double x) noexcept;
/// d softplus / dx = 1 / (1 + exp(-x)).
double softplus_derivative(double x) noexcept;
/// Inverse of softplus for y > 0.
double softplus_inverse(double y);

/// Mean-field Gaussian over every network scalar: theta_i ~ N(mu_i, softplus(delta_i)^2).
struct VariationalParams {
    Vector mu;
    Vector delta;

    [[nodiscard]] std::size_t size() const noexcept { return static_cast<std::size_t>(mu.size()); }
    [[nodiscard]] Vector sigma() const;
    void validate() const;

    bool operator==(const VariationalParams& o) const { return mu == o.mu && delta == o.delta; }
};

/// Standard-normal noise for one reparameterized draw, regenerable from
/// (seed, index).
struct NoiseDraw {
    Vector kappa;
    std::uint64_t seed = 0;
    std::uint64_t index = 0;

    static NoiseDraw generate(std::size_t size, std::uint64_t seed, std::uint64_t index);
    static NoiseDraw zeros(std::size_t size);
};

/// theta = mu + softplus(delta) * kappa.
Vector sample_params(const VariationalParams& vp, const NoiseDraw& noise);

/// KL(q || N(0, I)) in closed form.
double complexity_cost(const VariationalParams& vp);
/// Adds d KL / d mu and d KL / d delta (scaled by `scale`).
void complexity_cost_gradient(const VariationalParams& vp, double scale, std::span<double> grad_mu,
                              std::span<double> grad_delta);

/// Single-sample estimate log q(theta) - log p(theta) at theta = sample_params(vp, noise).
/// Its pathwise part (d/d theta) and direct parts (d/d mu, d/d delta at fixed theta)
/// are added, scaled, into the four gradient buffers.
double complexity_cost_sampled(const VariationalParams& vp, const NoiseDraw& noise, double scale = 0.0,
                               std::span<double> grad_theta = {}, std::span<double> grad_mu = {},
                               std::span<double> grad_delta = {});

struct VariationalGradient {
    Vector mu;
    Vector delta;
};

/// Chain rule through the sampling map:
///   d mu    = dL/dtheta + dL/dmu
///   d delta = dL/dtheta * kappa / (exp(-delta) + 1) + dL/ddelta
VariationalGradient backprop_variational(const Vector& param_grad, const VariationalParams& vp,
                                         const NoiseDraw& noise, const Vector& direct_mu,
                                         const Vector& direct_delta);

struct InitOptions {
    double initial_sigma = 0.05;
};

/// Weight means ~ N(0, 2 / (fan_in + fan_out)), bias means 0, every delta at
/// softplus^-1(initial_sigma). Sub-networks are laid out back to back.
VariationalParams init_variational(std::span<const nn::NetSpec> nets, std::uint64_t seed,
                                   const InitOptions& opts = {});

}  // namespace vbdo
