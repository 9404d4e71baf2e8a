#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace vbdo {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

inline std::span<const double> as_span(const Vector& v) noexcept {
    return {v.data(), static_cast<std::size_t>(v.size())};
}

/// Uniformly spaced, strictly increasing coordinates.
class SensorGrid {
public:
    /// `count` points from `lo` to `hi` inclusive.
    static SensorGrid uniform(double lo, double hi, std::size_t count);
    /// Validates `points` for strict increase and uniform spacing.
    static SensorGrid from_points(std::vector<double> points);
    /// The default 100 sensors over [0, 1].
    static SensorGrid standard() { return uniform(0.0, 1.0, 100); }

    [[nodiscard]] std::size_t count() const noexcept { return points_.size(); }
    [[nodiscard]] const std::vector<double>& points() const noexcept { return points_; }
    [[nodiscard]] double operator[](std::size_t i) const { return points_[i]; }
    [[nodiscard]] double front() const { return points_.front(); }
    [[nodiscard]] double back() const { return points_.back(); }
    /// Zero for a single-point grid.
    [[nodiscard]] double spacing() const noexcept;

    bool operator==(const SensorGrid&) const = default;

private:
    explicit SensorGrid(std::vector<double> p) : points_(std::move(p)) {}
    std::vector<double> points_;
};

struct GrfEnsemble {
    SensorGrid grid = SensorGrid::standard();
    Matrix realizations;  // n x grid.count()
    double length_scale = 0.5;
    std::uint64_t seed = 0;

    [[nodiscard]] std::size_t size() const noexcept { return static_cast<std::size_t>(realizations.rows()); }
};

/// Squared-exponential kernel exp(-(xi - xj)^2 / (2 l^2)).
double rbf_kernel(double xi, double xj, double l);

/// Gram matrix of rbf_kernel over the grid plus `jitter` on the diagonal.
Matrix build_covariance(const SensorGrid& grid, double l, double jitter);

/// Lower Cholesky factor of the covariance. Starts at `jitter` and escalates by
/// x10 up to 1e-6 before giving up with NumericError.
Matrix covariance_factor(const SensorGrid& grid, double l, double jitter = 1e-10);

/// n i.i.d. zero-mean field draws L z. Row i depends only on (seed, i).
GrfEnsemble sample_grf(const SensorGrid& grid, double l, std::size_t n, std::uint64_t seed);

/// One realization per line, sensor values as columns, 17 significant digits.
void write_ensemble_csv(const GrfEnsemble& ens, const std::filesystem::path& path);

}  // namespace vbdo
