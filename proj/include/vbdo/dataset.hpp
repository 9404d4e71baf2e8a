#pragma once

#include "vbdo/grf.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>

namespace vbdo {

/// Z-score statistics from training data. Columns that are not normalized carry
/// mean 0 and std 1, so the transforms are always well defined.
struct NormStats {
    Vector u_mean;
    Vector u_std;
    double s_mean = 0.0;
    double s_std = 1.0;

    bool operator==(const NormStats& o) const {
        return u_mean == o.u_mean && u_std == o.u_std && s_mean == o.s_mean && s_std == o.s_std;
    }
};

/// (u, y, s) triplets in the block layout: rows [k*m, (k+1)*m) all belong to
/// realization k. The realization matrix is stored once per realization;
/// u_matrix() materializes the repeated (n*m) x sensors view.
struct TripletDataset {
    Matrix inputs;     // n x sensors
    Matrix locations;  // (n*m) x d
    Vector targets;    // n*m, or empty for a query set
    std::size_t per_input = 0;
    std::optional<NormStats> norm;  // present iff the data is normalized

    [[nodiscard]] std::size_t n_inputs() const noexcept { return static_cast<std::size_t>(inputs.rows()); }
    [[nodiscard]] std::size_t rows() const noexcept { return static_cast<std::size_t>(locations.rows()); }
    [[nodiscard]] std::size_t sensors() const noexcept { return static_cast<std::size_t>(inputs.cols()); }
    [[nodiscard]] std::size_t y_dim() const noexcept { return static_cast<std::size_t>(locations.cols()); }
    [[nodiscard]] bool has_targets() const noexcept { return targets.size() > 0; }
    [[nodiscard]] std::size_t input_of(std::size_t row) const noexcept { return row / per_input; }

    [[nodiscard]] Matrix u_matrix() const;
    /// Throws ArgumentError when block sizes disagree.
    void validate() const;

    bool operator==(const TripletDataset& o) const {
        return inputs == o.inputs && locations == o.locations && targets == o.targets &&
               per_input == o.per_input && norm == o.norm;
    }
};

/// Solver output for a batch of realizations on a shared location grid.
struct GridSolutions {
    Matrix locations;  // P x d
    Matrix values;     // n x P
};

/// For every realization, draws m grid locations without replacement.
/// Realization k uses the sub-stream (seed, k).
TripletDataset assemble(const GrfEnsemble& ensemble, const GridSolutions& solutions, std::size_t m,
                        std::uint64_t seed);

/// Every realization paired with every grid location, realization-major.
/// Targets are filled from `solutions` when given.
TripletDataset build_eval_set(const Matrix& inputs, const Matrix& grid_locations,
                              const Matrix* values = nullptr);

struct NormalizeOptions {
    bool inputs = true;
    bool targets = true;
};

/// Statistics use population moments. A zero-variance sensor column raises
/// NumericError naming the sensor.
NormStats compute_norm_stats(const TripletDataset& ds, const NormalizeOptions& opts = {});
TripletDataset normalize(const TripletDataset& ds, const NormalizeOptions& opts = {});
/// Applies existing statistics (e.g. training statistics to a test set).
TripletDataset apply_norm(const TripletDataset& ds, const NormStats& stats);
TripletDataset denormalize(const TripletDataset& ds);

Vector normalize_input(const NormStats& stats, const Eigen::Ref<const Vector>& u);

/// Binary format "VBDODS01"; see README for the layout.
inline constexpr std::uint8_t kDatasetVersion = 1;
void save(const TripletDataset& ds, const std::filesystem::path& path);
TripletDataset load(const std::filesystem::path& path);

/// Columns u_1..u_S, y_1..y_d, s.
void write_dataset_csv(const TripletDataset& ds, const std::filesystem::path& path);

}  // namespace vbdo
