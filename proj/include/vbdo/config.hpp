#pragma once

#include "vbdo/deeponet.hpp"
#include "vbdo/predictor.hpp"
#include "vbdo/solvers.hpp"
#include "vbdo/trainer.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace vbdo {

struct GrfConfig {
    double length_scale = 0.5;
    std::size_t sensors = 100;
    double jitter = 1e-10;
};

struct SolverConfig {
    std::size_t time_steps = 100;
    std::size_t space_points = 100;
    double diffusivity = 0.01;
    double reaction = 0.01;
    double pendulum_step = 1e-3;
    double viscosity = 0.1;
};

struct DatasetConfig {
    std::size_t train_inputs = 3000;
    std::size_t per_input = 20;
    std::size_t test_inputs = 10000;
    bool normalize_inputs = true;
    bool normalize_targets = true;
};

struct NetConfig {
    std::size_t width = 30;
    std::size_t depth = 3;
};

struct ModelConfig {
    NetConfig branch;
    NetConfig trunk;
    MergeMode merge = MergeMode::Hadamard;
    double sigma_floor = 1e-6;
    bool baseline = false;
    double baseline_sigma = 1.0;
};

struct PredictConfig {
    std::size_t samples = 200;
    double ci_level = 0.95;
    CiMethod ci_method = CiMethod::Moments;
    std::size_t pdf_inputs = 10000;
    std::size_t report_inputs = 3;
};

/// Whole experiment definition. Preset defaults are overlaid by the config
/// file and then by command-line overrides.
struct RunConfig {
    Problem problem = Problem::Antiderivative;
    std::uint64_t seed = 0;
    std::size_t threads = 1;
    std::filesystem::path out = "runs/out";
    GrfConfig grf;
    SolverConfig solver;
    DatasetConfig dataset;
    ModelConfig model;
    TrainConfig train;
    PredictConfig predict;

    [[nodiscard]] DeepONetSpec model_spec() const;
    [[nodiscard]] TrainConfig train_config() const;
    [[nodiscard]] SensorGrid sensor_grid() const;
    void validate() const;
};

/// Defaults for one benchmark: sizes, architecture and normalization.
RunConfig preset_config(Problem p);

nlohmann::json to_json(const RunConfig& cfg);
/// Overlays `j` onto `base`. Unknown keys raise ArgumentError.
RunConfig apply_json(RunConfig base, const nlohmann::json& j);

/// Resolves preset -> file -> "a.b=value" overrides. The preset comes from the
/// override list, then the file, then `ad`.
RunConfig resolve_config(const std::filesystem::path& file, const std::vector<std::string>& overrides);

}  // namespace vbdo
