#include <doctest.h>

#include "vbdo/error.hpp"
#include "vbdo/rng.hpp"
#include "vbdo/variational.hpp"

#include <cmath>
#include <numbers>

using namespace vbdo;

namespace {

VariationalParams random_vp(std::size_t n, std::uint64_t seed) {
    CounterRng rng(seed);
    VariationalParams vp{Vector(static_cast<Eigen::Index>(n)), Vector(static_cast<Eigen::Index>(n))};
    for (std::size_t i = 0; i < n; ++i) {
        vp.mu[static_cast<Eigen::Index>(i)] = 2.0 * rng.uniform() - 1.0;
        vp.delta[static_cast<Eigen::Index>(i)] = softplus_inverse(0.3 + 1.7 * rng.uniform());
    }
    return vp;
}

std::span<double> span_of(Vector& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

}  // namespace

TEST_CASE("softplus") {
    CHECK(softplus(0.0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK(std::abs(softplus(100.0) - 100.0) < 1e-12);
    CHECK(softplus(-100.0) > 0.0);
    CHECK(softplus(-100.0) == doctest::Approx(std::exp(-100.0)).epsilon(1e-12));
    CHECK(softplus(5.0) == doctest::Approx(std::log1p(std::exp(5.0))).epsilon(1e-14));
    double prev = softplus(-60.0);
    for (double x = -59.5; x <= 60.0; x += 0.5) {
        const double y = softplus(x);
        CHECK(y > prev);
        prev = y;
    }
    CHECK(softplus_derivative(0.0) == 0.5);
    for (double y : {1e-3, 0.05, 1.0, 7.5}) CHECK(softplus(softplus_inverse(y)) == doctest::Approx(y).epsilon(1e-13));
    CHECK_THROWS_AS(softplus_inverse(0.0), ArgumentError);
}

TEST_CASE("sample_params examples") {
    VariationalParams vp = random_vp(8, 1);
    CHECK(sample_params(vp, NoiseDraw::zeros(8)) == vp.mu);

    vp.delta.setConstant(-50.0);
    const NoiseDraw big = NoiseDraw::generate(8, 3, 0);
    CHECK((sample_params(vp, big) - vp.mu).cwiseAbs().maxCoeff() < 1e-20);

    VariationalParams one{Vector::Zero(1), Vector::Constant(1, softplus_inverse(1.0))};
    NoiseDraw two{Vector::Constant(1, 2.0), 0, 0};
    CHECK(sample_params(one, two)[0] == doctest::Approx(2.0).epsilon(1e-14));

    CHECK_THROWS_AS(sample_params(one, NoiseDraw::zeros(2)), ArgumentError);
}

TEST_CASE("noise draws regenerate from seed and index") {
    CHECK(NoiseDraw::generate(50, 9, 4).kappa == NoiseDraw::generate(50, 9, 4).kappa);
    CHECK(NoiseDraw::generate(50, 9, 4).kappa != NoiseDraw::generate(50, 9, 5).kappa);
    CHECK(NoiseDraw::generate(50, 9, 4).kappa != NoiseDraw::generate(50, 10, 4).kappa);
}

TEST_CASE("sample_params distribution") {
    const VariationalParams vp{(Vector(3) << 0.5, -1.0, 2.0).finished(),
                               (Vector(3) << softplus_inverse(0.1), 0.0, softplus_inverse(2.0)).finished()};
    const std::size_t n = 100000;
    Vector sum = Vector::Zero(3), sq = Vector::Zero(3);
    for (std::size_t i = 0; i < n; ++i) {
        const Vector t = sample_params(vp, NoiseDraw::generate(3, 77, i));
        sum += t;
        sq += t.cwiseProduct(t);
    }
    const Vector mean = sum / static_cast<double>(n);
    const Vector sigma = vp.sigma();
    for (Eigen::Index i = 0; i < 3; ++i) {
        const double var = sq[i] / static_cast<double>(n) - mean[i] * mean[i];
        CHECK(std::abs(mean[i] - vp.mu[i]) < 5.0 * sigma[i] / std::sqrt(static_cast<double>(n)));
        CHECK(std::abs(std::sqrt(var) / sigma[i] - 1.0) < 0.02);
    }
}

TEST_CASE("complexity cost closed form") {
    const double d1 = softplus_inverse(1.0);
    CHECK(std::abs(complexity_cost({Vector::Zero(1), Vector::Constant(1, d1)})) < 1e-15);
    CHECK(complexity_cost({Vector::Ones(1), Vector::Constant(1, d1)}) == doctest::Approx(0.5).epsilon(1e-14));
    // Independent evaluation: KL(N(m, s^2) || N(0, 1)) = log(1/s) + (s^2 + m^2) / 2 - 1/2.
    const VariationalParams vp = random_vp(20, 5);
    double expected = 0.0;
    for (Eigen::Index i = 0; i < 20; ++i) {
        const double s = softplus(vp.delta[i]), m = vp.mu[i];
        expected += -std::log(s) + 0.5 * (s * s + m * m) - 0.5;
    }
    CHECK(complexity_cost(vp) == doctest::Approx(expected).epsilon(1e-13));
}

TEST_CASE("complexity cost is nonnegative and zero only at the prior") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) CHECK(complexity_cost(random_vp(10, seed)) > 0.0);
}

TEST_CASE("complexity cost gradient matches central differences") {
    const VariationalParams vp = random_vp(6, 8);
    Vector gm = Vector::Zero(6), gd = Vector::Zero(6);
    complexity_cost_gradient(vp, 0.7, span_of(gm), span_of(gd));
    const double h = 1e-6;
    for (Eigen::Index i = 0; i < 6; ++i) {
        VariationalParams a = vp, b = vp;
        a.mu[i] += h;
        b.mu[i] -= h;
        CHECK(gm[i] == doctest::Approx(0.7 * (complexity_cost(a) - complexity_cost(b)) / (2 * h)).epsilon(1e-6));
        a = vp;
        b = vp;
        a.delta[i] += h;
        b.delta[i] -= h;
        CHECK(gd[i] == doctest::Approx(0.7 * (complexity_cost(a) - complexity_cost(b)) / (2 * h)).epsilon(1e-6));
    }
}

TEST_CASE("Monte Carlo KL agrees with the closed form") {
    const VariationalParams vp = random_vp(4, 12);
    const std::size_t n = 1000000;
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += complexity_cost_sampled(vp, NoiseDraw::generate(4, 1234, i));
    CHECK(std::abs(sum / static_cast<double>(n) / complexity_cost(vp) - 1.0) < 0.01);
}

TEST_CASE("sampled KL gradients match central differences with frozen noise") {
    const VariationalParams vp = random_vp(5, 21);
    const NoiseDraw noise = NoiseDraw::generate(5, 4, 0);
    Vector gt = Vector::Zero(5), gm = Vector::Zero(5), gd = Vector::Zero(5);
    complexity_cost_sampled(vp, noise, 1.0, span_of(gt), span_of(gm), span_of(gd));
    const VariationalGradient g = backprop_variational(gt, vp, noise, gm, gd);
    const double h = 1e-6;
    for (Eigen::Index i = 0; i < 5; ++i) {
        VariationalParams a = vp, b = vp;
        a.mu[i] += h;
        b.mu[i] -= h;
        CHECK(g.mu[i] ==
              doctest::Approx((complexity_cost_sampled(a, noise) - complexity_cost_sampled(b, noise)) / (2 * h))
                  .epsilon(1e-6));
        a = vp;
        b = vp;
        a.delta[i] += h;
        b.delta[i] -= h;
        CHECK(g.delta[i] ==
              doctest::Approx((complexity_cost_sampled(a, noise) - complexity_cost_sampled(b, noise)) / (2 * h))
                  .epsilon(1e-6));
    }
}

TEST_CASE("backprop_variational chain rule") {
    const VariationalParams vp = random_vp(4, 2);
    const Vector pg = (Vector(4) << 1.0, -2.0, 0.5, 3.0).finished();
    const Vector zero = Vector::Zero(4);

    const VariationalGradient still = backprop_variational(pg, vp, NoiseDraw::zeros(4), zero, zero);
    CHECK(still.delta.isZero());
    CHECK(still.mu == pg);

    const VariationalGradient none = backprop_variational(zero, vp, NoiseDraw::generate(4, 1, 1), zero, zero);
    CHECK(none.mu.isZero());
    CHECK(none.delta.isZero());

    const NoiseDraw noise = NoiseDraw::generate(4, 1, 2);
    const Vector dm = (Vector(4) << 0.1, 0.2, 0.3, 0.4).finished();
    const Vector dd = (Vector(4) << -0.1, 0.0, 0.1, 0.2).finished();
    const VariationalGradient g = backprop_variational(pg, vp, noise, dm, dd);
    for (Eigen::Index i = 0; i < 4; ++i) {
        CHECK(g.mu[i] == pg[i] + dm[i]);
        CHECK(g.delta[i] ==
              doctest::Approx(pg[i] * noise.kappa[i] / (std::exp(-vp.delta[i]) + 1.0) + dd[i]).epsilon(1e-14));
    }
}

TEST_CASE("initialization") {
    const nn::NetSpec a = nn::NetSpec::dense(100, 30, 3, nn::Activation::Relu);
    const nn::NetSpec b = nn::NetSpec::dense(1, 30, 3, nn::Activation::Relu);
    const std::vector<nn::NetSpec> nets{a, b};
    const VariationalParams vp = init_variational(nets, 5);
    CHECK(vp.size() == nn::param_count(a) + nn::param_count(b));
    CHECK((vp.sigma().array() - 0.05).abs().maxCoeff() < 1e-12);
    CHECK(init_variational(nets, 5) == vp);

    const nn::FlatLayout layout(a);
    // First layer of the branch: 3000 weights with variance 2 / 130, then 30 zero biases.
    const Vector w = vp.mu.segment(static_cast<Eigen::Index>(layout[0].weight), 3000);
    const double var = w.squaredNorm() / 3000.0;
    CHECK(var == doctest::Approx(2.0 / 130.0).epsilon(0.1));
    CHECK(vp.mu.segment(static_cast<Eigen::Index>(layout[0].bias), 30).isZero());
}
