#include <doctest.h>

#include "vbdo/error.hpp"
#include "vbdo/grf.hpp"

#include <cmath>
#include <limits>

using namespace vbdo;

TEST_CASE("rbf kernel closed form") {
    CHECK(rbf_kernel(0.3, 0.3, 0.5) == 1.0);
    CHECK(rbf_kernel(0.0, 0.5, 0.5) == doctest::Approx(0.60653065971263342).epsilon(1e-14));
    CHECK(rbf_kernel(0.0, 0.5, 0.5) == rbf_kernel(0.5, 0.0, 0.5));
    for (double x : {-3.0, 0.0, 0.7, 12.5})
        for (double l : {0.01, 0.5, 4.0}) CHECK(rbf_kernel(x, x, l) == 1.0);
    const double v = rbf_kernel(0.0, 2.0, 0.5);
    CHECK(v > 0.0);
    CHECK(v <= 1.0);
}

TEST_CASE("rbf kernel rejects bad input") {
    CHECK_THROWS_AS(rbf_kernel(std::numeric_limits<double>::quiet_NaN(), 0.0, 0.5), NumericError);
    CHECK_THROWS_AS(rbf_kernel(std::numeric_limits<double>::infinity(), 0.0, 0.5), NumericError);
    CHECK_THROWS_AS(rbf_kernel(0.0, 0.1, 0.0), ArgumentError);
}

TEST_CASE("sensor grid") {
    const SensorGrid g = SensorGrid::standard();
    CHECK(g.count() == 100);
    CHECK(g.front() == 0.0);
    CHECK(g.back() == 1.0);
    CHECK(g.spacing() == doctest::Approx(1.0 / 99.0));
    CHECK_THROWS_AS(SensorGrid::from_points({0.0, 0.1, 0.3}), ArgumentError);
    CHECK_THROWS_AS(SensorGrid::from_points({0.0, 0.0, 0.1}), ArgumentError);
    CHECK(SensorGrid::from_points({0.0, 0.25, 0.5}).count() == 3);
}

TEST_CASE("covariance entries") {
    const SensorGrid g = SensorGrid::from_points({0.0, 0.5});
    const Matrix k = build_covariance(g, 0.5, 0.0);
    CHECK(k(0, 0) == 1.0);
    CHECK(k(1, 1) == 1.0);
    CHECK(k(0, 1) == doctest::Approx(std::exp(-0.5)).epsilon(1e-15));
    CHECK(k(1, 0) == k(0, 1));

    const Matrix kj = build_covariance(SensorGrid::standard(), 0.5, 1e-10);
    for (Eigen::Index i = 0; i < kj.rows(); ++i) CHECK(kj(i, i) == 1.0 + 1e-10);
    CHECK(kj == kj.transpose());
}

TEST_CASE("covariance factor reproduces the kernel") {
    const SensorGrid g = SensorGrid::standard();
    const Matrix l = covariance_factor(g, 0.5);
    const Matrix k = build_covariance(g, 0.5, 0.0);
    const Matrix llt = l * l.transpose();
    CHECK((llt - k).cwiseAbs().maxCoeff() < 1e-5);
    for (Eigen::Index i = 0; i < l.rows(); ++i)
        for (Eigen::Index j = i + 1; j < l.cols(); ++j) CHECK(l(i, j) == 0.0);
}

TEST_CASE("sampling is deterministic per seed") {
    const SensorGrid g = SensorGrid::standard();
    const GrfEnsemble a = sample_grf(g, 0.5, 50, 7);
    const GrfEnsemble b = sample_grf(g, 0.5, 50, 7);
    const GrfEnsemble c = sample_grf(g, 0.5, 50, 8);
    CHECK(a.realizations == b.realizations);
    CHECK(a.realizations != c.realizations);
    CHECK(a.realizations.allFinite());
    // Rows depend only on (seed, row), so a shorter ensemble is a prefix.
    const GrfEnsemble head = sample_grf(g, 0.5, 10, 7);
    CHECK(head.realizations == a.realizations.topRows(10));
}

TEST_CASE("ensemble moments match the kernel") {
    const SensorGrid g = SensorGrid::standard();
    const std::size_t n = 10000;
    const GrfEnsemble ens = sample_grf(g, 0.5, n, 2024);
    const Matrix& x = ens.realizations;
    const Vector mean = x.colwise().mean();
    const Matrix centered = x.rowwise() - mean.transpose();
    const Matrix cov = centered.transpose() * centered / static_cast<double>(n - 1);

    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        // Column mean within 5 standard errors of zero; the marginal variance is 1.
        CHECK(std::abs(mean[j]) < 5.0 / std::sqrt(static_cast<double>(n)));
        CHECK(cov(j, j) >= 0.9);
        CHECK(cov(j, j) <= 1.1);
    }

    // Sensor 0 sits at x = 0; sensor 50 is not exactly 0.5 on a 100-point grid,
    // so the oracle uses the kernel at the true sensor positions.
    const auto i0 = 0, i1 = 50;
    const double corr = cov(i0, i1) / std::sqrt(cov(i0, i0) * cov(i1, i1));
    CHECK(std::abs(corr - rbf_kernel(g[i0], g[i1], 0.5)) < 0.03);

    double worst = 0.0;
    for (Eigen::Index i = 0; i < cov.rows(); ++i)
        for (Eigen::Index j = 0; j < cov.cols(); ++j)
            worst = std::max(worst, std::abs(cov(i, j) - rbf_kernel(g[i], g[j], 0.5)));
    CHECK(worst < 0.05);
}

TEST_CASE("two-point grid at exactly 0 and 0.5 reproduces exp(-1/2) correlation") {
    const SensorGrid g = SensorGrid::from_points({0.0, 0.5});
    const std::size_t n = 10000;
    const GrfEnsemble ens = sample_grf(g, 0.5, n, 99);
    const Vector a = ens.realizations.col(0), b = ens.realizations.col(1);
    const double ma = a.mean(), mb = b.mean();
    const double cab = ((a.array() - ma) * (b.array() - mb)).sum();
    const double corr = cab / std::sqrt((a.array() - ma).square().sum() * (b.array() - mb).square().sum());
    CHECK(std::abs(corr - std::exp(-0.5)) < 0.03);
}
