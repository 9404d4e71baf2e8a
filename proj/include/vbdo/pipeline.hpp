#pragma once

#include "vbdo/config.hpp"
#include "vbdo/dataset.hpp"
#include "vbdo/grf.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace vbdo {

/// Inputs and ground truth for one benchmark on its full evaluation grid.
struct ProblemData {
    Matrix inputs;     // n x sensors, as fed to the branch net
    GridSolutions solutions;
};

/// Draws n realizations (sub-stream `stream` of the run seed) and solves them.
/// Location order is t-major for ODEs and x-major then t for PDEs.
ProblemData generate_problem_data(const RunConfig& cfg, std::size_t n, std::uint64_t stream);

/// Full evaluation grid of the configured problem (P x d).
Matrix evaluation_grid(const RunConfig& cfg);

struct GenDataResult {
    std::filesystem::path train_path;
    std::filesystem::path test_path;
};

GenDataResult cmd_gen_data(const RunConfig& cfg);

struct TrainPaths {
    std::filesystem::path data;        // empty: <out>/train.vbds
    std::filesystem::path checkpoint;  // resume only
};

/// Trains (or resumes) and writes checkpoint.vbdo, trace.csv, timing.csv and
/// train_summary.txt into cfg.out.
TrainResult cmd_train(const RunConfig& cfg, const TrainPaths& paths = {});
TrainResult cmd_resume(const RunConfig& cfg, const TrainPaths& paths);

struct EvaluateResult {
    double nmse = 0.0;
    std::vector<std::pair<double, double>> coverage;  // (level, fraction), ascending level
    PredictiveEnsemble ensemble;
};

/// Metrics, coverage table and per-realization plot files for a test set.
EvaluateResult cmd_evaluate(const RunConfig& cfg, const std::filesystem::path& checkpoint,
                            const std::filesystem::path& test);

/// Full per-query prediction CSV.
void cmd_predict(const RunConfig& cfg, const std::filesystem::path& checkpoint, const std::filesystem::path& queries);

struct PdfQuery {
    std::size_t t_index = 1;              // 1-based
    std::optional<std::size_t> x_index;   // 1-based, PDE problems only
};

/// Writes pdf_t<i>.csv (or pdf_x<j>_t<i>.csv) plus the ground-truth curve.
/// Returns the curve path.
std::filesystem::path cmd_pdf(const RunConfig& cfg, const std::filesystem::path& checkpoint, const PdfQuery& query);

/// Side-by-side table of the metrics.json files found in `runs`.
std::filesystem::path cmd_report(const RunConfig& cfg, const std::vector<std::filesystem::path>& runs);

/// Writes <out>/<command>.manifest.json with the resolved config and output checksums.
void write_manifest(const RunConfig& cfg, const std::string& command,
                    const std::vector<std::filesystem::path>& outputs);

/// CRC32 of a file's bytes.
std::uint32_t file_crc32(const std::filesystem::path& path);

}  // namespace vbdo
