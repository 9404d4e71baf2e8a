#include <doctest.h>

#include "vbdo/error.hpp"
#include "vbdo/solvers.hpp"

#include <cmath>
#include <filesystem>
#include <numbers>

using namespace vbdo;
constexpr double pi = std::numbers::pi;

namespace {

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace

TEST_CASE("input function interpolation") {
    const SensorGrid g = SensorGrid::from_points({0.0, 0.5, 1.0});
    const InputFunction u(g, {1.0, 3.0, -1.0});
    CHECK(u(0.0) == 1.0);
    CHECK(u(0.5) == 3.0);
    CHECK(u(1.0) == -1.0);
    CHECK(u(0.25) == doctest::Approx(2.0));
    CHECK(u(0.75) == doctest::Approx(1.0));
    CHECK(u(-1.0) == 1.0);
    CHECK(u(2.0) == -1.0);

    const SensorGrid s = SensorGrid::standard();
    const InputFunction f = InputFunction::from(s, [](double x) { return std::sin(7.0 * x) + x * x; });
    for (std::size_t i = 0; i < s.count(); ++i) CHECK(f(s[i]) == std::sin(7.0 * s[i]) + s[i] * s[i]);
}

TEST_CASE("antiderivative examples") {
    const SensorGrid g = SensorGrid::standard();
    const std::vector<double> t = unit_time_grid(100);

    const OdeSolution one = solve_antiderivative(InputFunction::from(g, [](double) { return 1.0; }), t);
    REQUIRE(one.values.size() == t.size());
    CHECK(max_abs_diff(one.values, t) < 1e-12);

    const OdeSolution lin = solve_antiderivative(InputFunction::from(g, [](double x) { return 2.0 * x; }), t);
    std::vector<double> sq(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) sq[i] = t[i] * t[i];
    CHECK(max_abs_diff(lin.values, sq) < 1e-10);

    const OdeSolution zero = solve_antiderivative(InputFunction::from(g, [](double) { return 0.0; }), t);
    for (double v : zero.values) CHECK(v == 0.0);
    CHECK(zero.times == t);
}

TEST_CASE("pendulum examples") {
    const SensorGrid g = SensorGrid::standard();
    const std::vector<double> t = unit_time_grid(100);
    const InputFunction none = InputFunction::from(g, [](double) { return 0.0; });

    const OdeSolution rest = solve_pendulum(none, t);
    for (double v : rest.values) CHECK(v == 0.0);

    const OdeSolution small = solve_pendulum(none, t, {1e-3, 0.0});
    double dev = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) dev = std::max(dev, std::abs(small.values[i] - 1e-3 * std::cos(t[i])));
    CHECK(dev < 1e-8);

    const InputFunction force = InputFunction::from(g, [](double x) { return std::sin(4.0 * x) + 0.3; });
    const OdeSolution a = solve_pendulum(force, t, {0.2, -0.1}, {1e-3});
    const OdeSolution b = solve_pendulum(force, t, {0.2, -0.1}, {5e-4});
    CHECK(std::abs(a.values.back() - b.values.back()) < 1e-10);
}

TEST_CASE("RK4 observed order") {
    // One input segment so the step is exactly h; nonlinear dynamics from s0 = (1, 0).
    const SensorGrid g = SensorGrid::from_points({0.0, 1.0});
    const InputFunction u(g, {0.5, -0.25});
    const std::vector<double> t{0.0, 1.0};
    auto end = [&](double h) { return solve_pendulum(u, t, {1.0, 0.0}, {h}).values.back(); };
    const double h = 0.1;
    const double e1 = std::abs(end(h) - end(h / 2));
    const double e2 = std::abs(end(h / 2) - end(h / 4));
    const double e3 = std::abs(end(h / 4) - end(h / 8));
    CHECK(std::log2(e1 / e2) >= 3.8);
    CHECK(std::log2(e2 / e3) >= 3.8);
}

TEST_CASE("time grid validation") {
    const InputFunction u = InputFunction::from(SensorGrid::standard(), [](double) { return 1.0; });
    CHECK_THROWS_AS(solve_antiderivative(u, {0.0, 0.5, 0.4}), ArgumentError);
    CHECK_THROWS_AS(solve_antiderivative(u, {0.0, 1.5}), ArgumentError);
    CHECK_THROWS_AS(solve_pendulum(u, {0.0, 1.0}, {0.0, 0.0}, {0.0}), ArgumentError);
}

TEST_CASE("diffusion-reaction zero forcing stays zero") {
    const SensorGrid x = SensorGrid::standard();
    const FieldSolution f = solve_diffusion_reaction(InputFunction::from(x, [](double) { return 0.0; }), {},
                                                     x, unit_time_grid(100));
    CHECK(f.values.rows() == 100);
    CHECK(f.values.cols() == 100);
    CHECK(f.values.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("diffusion-reaction linear case matches the Fourier oracle") {
    const SensorGrid x = SensorGrid::standard();
    const std::vector<double> t = unit_time_grid(100);
    const double d = 0.01;
    const FieldSolution f = solve_diffusion_reaction(InputFunction::from(x, [](double v) { return std::sin(pi * v); }),
                                                     {d, 0.0, 1e6}, x, t);
    const double lambda = d * pi * pi;
    double err = 0.0, peak = 0.0;
    for (std::size_t i = 0; i < x.count(); ++i)
        for (std::size_t j = 0; j < t.size(); ++j) {
            const double exact = (1.0 - std::exp(-lambda * t[j])) * std::sin(pi * x[i]) / lambda;
            err = std::max(err, std::abs(f.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) - exact));
            peak = std::max(peak, std::abs(exact));
        }
    CHECK(err / peak < 0.02);
    for (Eigen::Index j = 0; j < f.values.cols(); ++j) {
        CHECK(f.values(0, j) == 0.0);
        CHECK(f.values(f.values.rows() - 1, j) == 0.0);
    }
}

TEST_CASE("diffusion-reaction self-convergence under x refinement") {
    const std::vector<double> t = unit_time_grid(100);
    auto forcing = [](double v) { return std::sin(pi * v) + 0.5 * std::sin(3.0 * pi * v); };
    const SensorGrid coarse = SensorGrid::uniform(0.0, 1.0, 100);
    const SensorGrid fine = SensorGrid::uniform(0.0, 1.0, 200);
    const SensorGrid sensors = SensorGrid::standard();
    const InputFunction u = InputFunction::from(sensors, forcing);
    const double a = solve_diffusion_reaction(u, {}, coarse, t).values.maxCoeff();
    const double b = solve_diffusion_reaction(u, {}, fine, t).values.maxCoeff();
    CHECK(std::abs(a - b) < 1e-3);
}

TEST_CASE("diffusion-reaction blow-up is a divergence") {
    const SensorGrid x = SensorGrid::standard();
    const InputFunction u = InputFunction::from(x, [](double) { return 50.0; });
    CHECK_THROWS_AS(solve_diffusion_reaction(u, {0.01, 100.0, 1e6}, x, unit_time_grid(100)), DivergenceError);
}

TEST_CASE("advection-diffusion single mode is exact") {
    const SensorGrid x = SensorGrid::standard();
    const std::vector<double> t = unit_time_grid(100);
    const FieldSolution f =
        solve_advection_diffusion(InputFunction::from(x, [](double v) { return std::sin(2.0 * pi * v); }), x, t);
    double err = 0.0;
    for (std::size_t i = 0; i < x.count(); ++i)
        for (std::size_t j = 0; j < t.size(); ++j) {
            const double exact = std::exp(-0.1 * 4.0 * pi * pi * t[j]) * std::sin(2.0 * pi * (x[i] - t[j]));
            err = std::max(err, std::abs(f.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) - exact));
        }
    CHECK(err < 1e-10);
}

TEST_CASE("advection-diffusion constants, mean and damping") {
    const SensorGrid x = SensorGrid::standard();
    const std::vector<double> t = unit_time_grid(100);
    const FieldSolution c = solve_advection_diffusion(InputFunction::from(x, [](double) { return 0.7; }), x, t);
    CHECK((c.values.array() - 0.7).abs().maxCoeff() < 1e-14);

    // Periodic initial data from a smooth non-trivial profile.
    const InputFunction ic = InputFunction::from(x, [](double v) {
        return std::pow(std::sin(2.0 * pi * (0.3 * std::cos(2.0 * pi * v) + v)), 2);
    });
    const FieldSolution f = solve_advection_diffusion(ic, x, t);
    // The last grid point closes the period, so the distinct nodes are 0..98.
    const Eigen::Index nodes = static_cast<Eigen::Index>(x.count()) - 1;
    const double mean0 = f.values.col(0).head(nodes).mean();
    double prev_energy = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < f.values.cols(); ++j) {
        const Vector col = f.values.col(j).head(nodes);
        CHECK(std::abs(col.mean() - mean0) < 1e-12);
        const double energy = (col.array() - col.mean()).square().sum();
        CHECK(energy <= prev_energy);
        prev_energy = energy;
        CHECK(f.values(nodes, j) == f.values(0, j));
    }
}

TEST_CASE("solvers are deterministic") {
    const SensorGrid x = SensorGrid::standard();
    const InputFunction u = InputFunction::from(x, [](double v) { return std::cos(5.0 * v); });
    const std::vector<double> t = unit_time_grid(100);
    CHECK(solve_pendulum(u, t).values == solve_pendulum(u, t).values);
    CHECK(solve_diffusion_reaction(u, {}, x, t).values == solve_diffusion_reaction(u, {}, x, t).values);
    CHECK(solve_advection_diffusion(u, x, t).values == solve_advection_diffusion(u, x, t).values);
}

TEST_CASE("field binary round trip") {
    Matrix m(3, 4);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = 0.1 * static_cast<double>(i) - 0.35;
    const auto path = std::filesystem::temp_directory_path() / "vbdo_field_roundtrip.fld";
    write_field_binary(m, path);
    CHECK(std::filesystem::file_size(path) == 16 + 12 * 8);
    CHECK(read_field_binary(path) == m);
    std::filesystem::resize_file(path, 40);
    CHECK_THROWS_AS(read_field_binary(path), FormatError);
    std::filesystem::remove(path);
}
