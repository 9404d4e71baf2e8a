#pragma once

#include "vbdo/grf.hpp"

#include <array>
#include <filesystem>
#include <vector>

namespace vbdo {

/// Input function known at sensor points, linearly interpolated in between and
/// held constant outside the grid.
class InputFunction {
public:
    InputFunction(SensorGrid grid, std::vector<double> samples);
    /// Samples a callable at every sensor.
    template <class F>
    static InputFunction from(const SensorGrid& grid, F&& f) {
        std::vector<double> s(grid.count());
        for (std::size_t i = 0; i < s.size(); ++i) s[i] = f(grid[i]);
        return InputFunction(grid, std::move(s));
    }

    [[nodiscard]] double operator()(double x) const;
    [[nodiscard]] const SensorGrid& grid() const noexcept { return grid_; }
    [[nodiscard]] const std::vector<double>& samples() const noexcept { return samples_; }

private:
    SensorGrid grid_;
    std::vector<double> samples_;
};

struct OdeSolution {
    std::vector<double> times;
    std::vector<double> values;
};

/// values(i, j) is s(x_i, t_j).
struct FieldSolution {
    SensorGrid x_grid = SensorGrid::standard();
    std::vector<double> t_grid;
    Matrix values;
};

struct RungeKuttaOptions {
    /// Upper bound on the substep; substeps never straddle a sensor or output time.
    double max_step = 1e-3;
};

/// ds/dt = u(t), s(0) = 0. Substeps are at most a quarter of the sensor spacing.
OdeSolution solve_antiderivative(const InputFunction& u, const std::vector<double>& t_grid);

/// ds1/dt = s2, ds2/dt = -sin(s1) + u(t); returns the s1 trajectory.
OdeSolution solve_pendulum(const InputFunction& u, const std::vector<double>& t_grid,
                           std::array<double, 2> s0 = {0.0, 0.0},
                           const RungeKuttaOptions& opts = {});

struct DiffusionReactionParams {
    double diffusivity = 0.01;
    double reaction = 0.01;
    double blowup = 1e6;
};

/// ds/dt = D s_xx + k s^2 + u(x) on [0,1] with zero initial and Dirichlet data.
/// Crank-Nicolson diffusion, explicit source, dt <= 0.25 dx^2 / D.
FieldSolution solve_diffusion_reaction(const InputFunction& u, const DiffusionReactionParams& p,
                                       const SensorGrid& x_grid, const std::vector<double>& t_grid);

/// ds/dt + s_x - nu s_xx = 0 on the unit periodic domain, exact per Fourier mode.
/// A grid whose last point closes the period (x_n - x_0 = 1) is treated as
/// n-1 distinct nodes with the endpoint copied back.
FieldSolution solve_advection_diffusion(const InputFunction& ic, const SensorGrid& x_grid,
                                        const std::vector<double>& t_grid, double viscosity = 0.1);

/// n uniformly spaced times over [0, 1].
std::vector<double> unit_time_grid(std::size_t n = 100);

/// Binary field dump: "VBDOFLD1", u32 rows, u32 cols, row-major little-endian f64.
void write_field_binary(const Matrix& values, const std::filesystem::path& path);
Matrix read_field_binary(const std::filesystem::path& path);

}  // namespace vbdo
