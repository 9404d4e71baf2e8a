#include "vbdo/grf.hpp"

#include "vbdo/error.hpp"
#include "vbdo/parallel.hpp"
#include "vbdo/rng.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <string>

namespace vbdo {

SensorGrid SensorGrid::uniform(double lo, double hi, std::size_t count) {
    require(count >= 1, "sensor grid needs at least one point");
    require(std::isfinite(lo) && std::isfinite(hi), "sensor grid bounds must be finite");
    require(count == 1 || hi > lo, "sensor grid requires hi > lo");
    std::vector<double> p(count);
    if (count == 1) {
        p[0] = lo;
    } else {
        const double h = (hi - lo) / static_cast<double>(count - 1);
        for (std::size_t i = 0; i < count; ++i) p[i] = lo + h * static_cast<double>(i);
        p.back() = hi;
    }
    return SensorGrid(std::move(p));
}

SensorGrid SensorGrid::from_points(std::vector<double> points) {
    require(!points.empty(), "sensor grid needs at least one point");
    for (double x : points) require(std::isfinite(x), "sensor grid points must be finite");
    if (points.size() > 1) {
        const double h = (points.back() - points.front()) / static_cast<double>(points.size() - 1);
        require(h > 0.0, "sensor grid must be strictly increasing");
        for (std::size_t i = 1; i < points.size(); ++i) {
            const double d = points[i] - points[i - 1];
            require(d > 0.0, "sensor grid must be strictly increasing");
            require(std::abs(d - h) <= 1e-12 * std::max(1.0, std::abs(h)) + 1e-12 * std::abs(points[i]),
                    "sensor grid must be uniformly spaced");
        }
    }
    return SensorGrid(std::move(points));
}

double SensorGrid::spacing() const noexcept {
    if (points_.size() < 2) return 0.0;
    return (points_.back() - points_.front()) / static_cast<double>(points_.size() - 1);
}

double rbf_kernel(double xi, double xj, double l) {
    if (!std::isfinite(xi) || !std::isfinite(xj) || !std::isfinite(l))
        throw NumericError("rbf_kernel: non-finite input");
    require(l > 0.0, "rbf_kernel: length scale must be positive");
    const double d = xi - xj;
    return std::exp(-(d * d) / (2.0 * l * l));
}

Matrix build_covariance(const SensorGrid& grid, double l, double jitter) {
    require(jitter >= 0.0, "build_covariance: jitter must be non-negative");
    const auto n = static_cast<Eigen::Index>(grid.count());
    Matrix k(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        k(i, i) = rbf_kernel(grid[i], grid[i], l) + jitter;
        for (Eigen::Index j = 0; j < i; ++j) {
            const double v = rbf_kernel(grid[i], grid[j], l);
            k(i, j) = v;
            k(j, i) = v;
        }
    }
    return k;
}

Matrix covariance_factor(const SensorGrid& grid, double l, double jitter) {
    constexpr double kMaxJitter = 1e-6;
    double j = jitter > 0.0 ? jitter : 1e-10;
    for (;;) {
        Eigen::LLT<Matrix> llt(build_covariance(grid, l, j));
        if (llt.info() == Eigen::Success) {
            Matrix lower = llt.matrixL();
            if (lower.allFinite()) return lower;
        }
        if (j >= kMaxJitter * (1.0 - 1e-12))
            throw NumericError("covariance factorization failed with jitter up to 1e-6 (l = " +
                               std::to_string(l) + ")");
        j = std::min(j * 10.0, kMaxJitter);
    }
}

GrfEnsemble sample_grf(const SensorGrid& grid, double l, std::size_t n, std::uint64_t seed) {
    require(n >= 1, "sample_grf: n must be positive");
    const Matrix lower = covariance_factor(grid, l);
    const auto s = static_cast<Eigen::Index>(grid.count());

    GrfEnsemble ens{grid, Matrix(static_cast<Eigen::Index>(n), s), l, seed};
    const CounterRng root(split_key(seed, 0x67726600ULL));
    parallel_for(n, [&](std::size_t row) {
        CounterRng rng = root.split(row);
        Vector z(s);
        for (Eigen::Index i = 0; i < s; ++i) z[i] = rng.normal();
        ens.realizations.row(static_cast<Eigen::Index>(row)) = (lower.triangularView<Eigen::Lower>() * z).transpose();
    });
    return ens;
}

void write_ensemble_csv(const GrfEnsemble& ens, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string());
    out << std::setprecision(17);
    for (Eigen::Index r = 0; r < ens.realizations.rows(); ++r) {
        for (Eigen::Index c = 0; c < ens.realizations.cols(); ++c) {
            if (c) out << ',';
            out << ens.realizations(r, c);
        }
        out << '\n';
    }
    if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace vbdo
