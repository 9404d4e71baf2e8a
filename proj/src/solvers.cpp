#include "vbdo/solvers.hpp"

#include "vbdo/error.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <mutex>
#include <numbers>
#include <string>

namespace vbdo {

InputFunction::InputFunction(SensorGrid grid, std::vector<double> samples)
    : grid_(std::move(grid)), samples_(std::move(samples)) {
    require(samples_.size() == grid_.count(), "InputFunction: sample count does not match grid");
    for (double v : samples_)
        if (!std::isfinite(v)) throw NumericError("InputFunction: non-finite sample");
}

double InputFunction::operator()(double x) const {
    const auto& p = grid_.points();
    const std::size_t n = p.size();
    if (n == 1 || x <= p.front()) return samples_.front();
    if (x >= p.back()) return samples_.back();
    auto idx = static_cast<std::size_t>((x - p.front()) / grid_.spacing());
    idx = std::min(idx, n - 2);
    while (idx > 0 && x < p[idx]) --idx;
    while (idx + 2 < n && x >= p[idx + 1]) ++idx;
    if (x == p[idx]) return samples_[idx];
    const double t = (x - p[idx]) / (p[idx + 1] - p[idx]);
    return (1.0 - t) * samples_[idx] + t * samples_[idx + 1];
}

std::vector<double> unit_time_grid(std::size_t n) { return SensorGrid::uniform(0.0, 1.0, n).points(); }

namespace {

void check_times(const std::vector<double>& t_grid) {
    require(!t_grid.empty(), "time grid is empty");
    for (std::size_t i = 0; i < t_grid.size(); ++i) {
        require(std::isfinite(t_grid[i]) && t_grid[i] >= 0.0 && t_grid[i] <= 1.0, "time grid must lie in [0, 1]");
        require(i == 0 || t_grid[i] > t_grid[i - 1], "time grid must be strictly increasing");
    }
}

/// Classical RK4 from t = 0 through every output time. Segment boundaries
/// include the sensor points so the piecewise-linear input is smooth inside
/// each substep.
template <std::size_t N, class Rhs>
std::vector<std::array<double, N>> integrate_rk4(const Rhs& rhs, std::array<double, N> state,
                                                 const SensorGrid& sensors, const std::vector<double>& t_grid,
                                                 double max_step) {
    check_times(t_grid);
    require(max_step > 0.0, "RK4 step bound must be positive");
    std::vector<double> breaks;
    breaks.reserve(sensors.count() + t_grid.size() + 1);
    breaks.push_back(0.0);
    for (double x : sensors.points())
        if (x > 0.0 && x < t_grid.back()) breaks.push_back(x);
    breaks.insert(breaks.end(), t_grid.begin(), t_grid.end());
    std::sort(breaks.begin(), breaks.end());
    breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());

    auto axpy = [](const std::array<double, N>& a, double h, const std::array<double, N>& b) {
        std::array<double, N> r;
        for (std::size_t i = 0; i < N; ++i) r[i] = a[i] + h * b[i];
        return r;
    };

    std::vector<std::array<double, N>> out;
    out.reserve(t_grid.size());
    std::size_t next_out = 0;
    if (t_grid.front() == 0.0) {
        out.push_back(state);
        ++next_out;
    }
    for (std::size_t b = 1; b < breaks.size(); ++b) {
        const double a0 = breaks[b - 1];
        const double len = breaks[b] - a0;
        const auto steps = static_cast<std::size_t>(std::max(1.0, std::ceil(len / max_step - 1e-9)));
        const double h = len / static_cast<double>(steps);
        for (std::size_t k = 0; k < steps; ++k) {
            const double t = a0 + h * static_cast<double>(k);
            const double t_end = (k + 1 == steps) ? breaks[b] : t + h;
            const auto k1 = rhs(t, state);
            const auto k2 = rhs(t + 0.5 * h, axpy(state, 0.5 * h, k1));
            const auto k3 = rhs(t + 0.5 * h, axpy(state, 0.5 * h, k2));
            const auto k4 = rhs(t_end, axpy(state, h, k3));
            for (std::size_t i = 0; i < N; ++i) state[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        for (double v : state)
            if (!std::isfinite(v)) throw DivergenceError("RK4 integration produced a non-finite state");
        if (next_out < t_grid.size() && breaks[b] == t_grid[next_out]) {
            out.push_back(state);
            ++next_out;
        }
    }
    return out;
}

}  // namespace

OdeSolution solve_antiderivative(const InputFunction& u, const std::vector<double>& t_grid) {
    const double spacing = u.grid().spacing();
    const double max_step = spacing > 0.0 ? spacing / 4.0 : 0.25e-2;
    const auto rhs = [&u](double t, const std::array<double, 1>&) { return std::array<double, 1>{u(t)}; };
    const auto states = integrate_rk4<1>(rhs, {0.0}, u.grid(), t_grid, max_step);
    OdeSolution sol{t_grid, std::vector<double>(states.size())};
    for (std::size_t i = 0; i < states.size(); ++i) sol.values[i] = states[i][0];
    return sol;
}

OdeSolution solve_pendulum(const InputFunction& u, const std::vector<double>& t_grid, std::array<double, 2> s0,
                           const RungeKuttaOptions& opts) {
    require(opts.max_step > 0.0, "pendulum step must be positive");
    require(std::isfinite(s0[0]) && std::isfinite(s0[1]), "pendulum initial state must be finite");
    const auto rhs = [&u](double t, const std::array<double, 2>& s) {
        return std::array<double, 2>{s[1], -std::sin(s[0]) + u(t)};
    };
    const auto states = integrate_rk4<2>(rhs, s0, u.grid(), t_grid, opts.max_step);
    OdeSolution sol{t_grid, std::vector<double>(states.size())};
    for (std::size_t i = 0; i < states.size(); ++i) sol.values[i] = states[i][0];
    return sol;
}

FieldSolution solve_diffusion_reaction(const InputFunction& u, const DiffusionReactionParams& p,
                                       const SensorGrid& x_grid, const std::vector<double>& t_grid) {
    require(p.diffusivity > 0.0, "diffusivity must be positive");
    require(std::isfinite(p.reaction), "reaction coefficient must be finite");
    require(x_grid.count() >= 3, "diffusion-reaction needs at least 3 spatial points");
    require(x_grid.front() >= 0.0 && x_grid.back() <= 1.0, "spatial grid must lie in [0, 1]");
    check_times(t_grid);

    const std::size_t nx = x_grid.count();
    const std::size_t interior = nx - 2;
    const double dx = x_grid.spacing();
    const double dt_max = 0.25 * dx * dx / p.diffusivity;

    std::vector<double> source(interior), s(interior, 0.0), rhs(interior), cp(interior), dp(interior);
    for (std::size_t i = 0; i < interior; ++i) source[i] = u(x_grid[i + 1]);

    FieldSolution sol{x_grid, t_grid, Matrix::Zero(static_cast<Eigen::Index>(nx),
                                                   static_cast<Eigen::Index>(t_grid.size()))};
    double t = 0.0;
    for (std::size_t j = 0; j < t_grid.size(); ++j) {
        const double span = t_grid[j] - t;
        if (span > 0.0) {
            const auto steps = static_cast<std::size_t>(std::ceil(span / dt_max - 1e-9));
            const double dt = span / static_cast<double>(steps);
            const double r = 0.5 * dt * p.diffusivity / (dx * dx);
            // Thomas factorization of tridiag(-r, 1 + 2r, -r).
            const double diag = 1.0 + 2.0 * r;
            cp[0] = -r / diag;
            for (std::size_t i = 1; i < interior; ++i) cp[i] = -r / (diag + r * cp[i - 1]);
            for (std::size_t step = 0; step < steps; ++step) {
                for (std::size_t i = 0; i < interior; ++i) {
                    const double left = i > 0 ? s[i - 1] : 0.0;
                    const double right = i + 1 < interior ? s[i + 1] : 0.0;
                    rhs[i] = s[i] + r * (left - 2.0 * s[i] + right) +
                             dt * (p.reaction * s[i] * s[i] + source[i]);
                }
                dp[0] = rhs[0] / diag;
                for (std::size_t i = 1; i < interior; ++i)
                    dp[i] = (rhs[i] + r * dp[i - 1]) / (diag + r * cp[i - 1]);
                s[interior - 1] = dp[interior - 1];
                for (std::size_t i = interior - 1; i-- > 0;) s[i] = dp[i] - cp[i] * s[i + 1];
                for (double v : s)
                    if (!std::isfinite(v) || std::abs(v) > p.blowup)
                        throw DivergenceError("diffusion-reaction solution exceeded the blow-up threshold");
            }
            t = t_grid[j];
        }
        for (std::size_t i = 0; i < interior; ++i)
            sol.values(static_cast<Eigen::Index>(i + 1), static_cast<Eigen::Index>(j)) = s[i];
    }
    return sol;
}

namespace {
std::mutex g_fftw_planner;
}

FieldSolution solve_advection_diffusion(const InputFunction& ic, const SensorGrid& x_grid,
                                        const std::vector<double>& t_grid, double viscosity) {
    require(viscosity >= 0.0, "viscosity must be non-negative");
    require(x_grid.count() >= 2, "advection-diffusion needs at least 2 spatial points");
    check_times(t_grid);
    const std::size_t n = x_grid.count();
    const double h = x_grid.spacing();
    std::size_t nodes = 0;
    if (std::abs(x_grid.back() - x_grid.front() - 1.0) < 1e-9)
        nodes = n - 1;
    else if (std::abs(h * static_cast<double>(n) - 1.0) < 1e-9)
        nodes = n;
    else
        throw ArgumentError("advection-diffusion grid must tile the unit period");

    std::vector<double> f(nodes);
    for (std::size_t j = 0; j < nodes; ++j) f[j] = ic(x_grid[j]);
    const std::size_t modes = nodes / 2 + 1;
    std::vector<std::complex<double>> coeff(modes), evolved(modes);
    std::vector<double> out(nodes);

    fftw_plan forward_plan = nullptr;
    fftw_plan inverse_plan = nullptr;
    {
        std::lock_guard lock(g_fftw_planner);
        forward_plan = fftw_plan_dft_r2c_1d(static_cast<int>(nodes), f.data(),
                                            reinterpret_cast<fftw_complex*>(coeff.data()), FFTW_ESTIMATE);
        inverse_plan = fftw_plan_dft_c2r_1d(static_cast<int>(nodes), reinterpret_cast<fftw_complex*>(evolved.data()),
                                            out.data(), FFTW_ESTIMATE);
    }
    fftw_execute(forward_plan);

    FieldSolution sol{x_grid, t_grid, Matrix(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(t_grid.size()))};
    const double two_pi = 2.0 * std::numbers::pi;
    const bool has_nyquist = nodes % 2 == 0;
    for (std::size_t j = 0; j < t_grid.size(); ++j) {
        const double t = t_grid[j];
        for (std::size_t m = 0; m < modes; ++m) {
            const double k = two_pi * static_cast<double>(m);
            const double decay = std::exp(-viscosity * k * k * t);
            if (has_nyquist && m == nodes / 2)
                evolved[m] = coeff[m] * (decay * std::cos(k * t));
            else
                evolved[m] = coeff[m] * std::polar(decay, -k * t);
        }
        fftw_execute_dft_c2r(inverse_plan, reinterpret_cast<fftw_complex*>(evolved.data()), out.data());
        for (std::size_t i = 0; i < nodes; ++i)
            sol.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = out[i] / static_cast<double>(nodes);
        if (nodes < n) sol.values(static_cast<Eigen::Index>(n - 1), static_cast<Eigen::Index>(j)) = sol.values(0, static_cast<Eigen::Index>(j));
    }
    {
        std::lock_guard lock(g_fftw_planner);
        fftw_destroy_plan(forward_plan);
        fftw_destroy_plan(inverse_plan);
    }
    if (!sol.values.allFinite()) throw NumericError("advection-diffusion produced non-finite values");
    return sol;
}

void write_field_binary(const Matrix& values, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string());
    const auto rows = static_cast<std::uint32_t>(values.rows());
    const auto cols = static_cast<std::uint32_t>(values.cols());
    out.write("VBDOFLD1", 8);
    out.write(reinterpret_cast<const char*>(&rows), 4);
    out.write(reinterpret_cast<const char*>(&cols), 4);
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size() * sizeof(double)));
    if (!out) throw IoError("write failed: " + path.string());
}

Matrix read_field_binary(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    char magic[8];
    std::uint32_t rows = 0, cols = 0;
    in.read(magic, 8);
    in.read(reinterpret_cast<char*>(&rows), 4);
    in.read(reinterpret_cast<char*>(&cols), 4);
    if (!in || std::memcmp(magic, "VBDOFLD1", 8) != 0) throw FormatError(path.string() + ": bad field header");
    Matrix m(rows, cols);
    in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
    if (!in) throw FormatError(path.string() + ": truncated field data");
    return m;
}

}  // namespace vbdo
