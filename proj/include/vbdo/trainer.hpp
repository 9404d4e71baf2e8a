#pragma once

#include "vbdo/checkpoint.hpp"
#include "vbdo/dataset.hpp"
#include "vbdo/deeponet.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>

namespace vbdo {

enum class OptimizerKind { Adam, Sgd };

enum class KlScalePolicy {
    Auto,   // 1 for full batch, batch_size / N_s for minibatches
    Fixed,  // use kl_scale verbatim
};

struct TrainConfig {
    std::uint64_t epochs = 20000;
    double learning_rate = 1e-3;
    std::size_t n_tilde = 25;
    std::size_t batch_size = 0;  // 0 = full batch
    std::uint64_t seed = 0;
    KlScalePolicy kl_policy = KlScalePolicy::Auto;
    double kl_scale = 1.0;
    bool sampled_kl = false;
    OptimizerKind optimizer = OptimizerKind::Adam;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double initial_sigma = 0.05;
    std::uint64_t checkpoint_every = 0;  // epochs, 0 = only on divergence
    std::filesystem::path checkpoint_path;
    std::uint64_t progress_every = 0;  // epochs between stderr lines, 0 = silent

    void validate() const;
};

struct TrainResult {
    VariationalParams params;
    TrainTrace trace;
    TrainerState state;
};

/// Mean-field variational training with per-step resampled noise. For the
/// baseline spec the scale parameters stay frozen at -50, the complexity cost
/// is dropped and a single draw is used per step.
TrainResult train(const DeepONetSpec& spec, const TripletDataset& ds, const TrainConfig& cfg);

/// Continues from explicit state. cfg.epochs is the number of additional epochs.
TrainResult train_from(const DeepONetSpec& spec, const TripletDataset& ds, const TrainConfig& cfg,
                       VariationalParams params, TrainerState state);

/// Loads a checkpoint and runs cfg.epochs more epochs. The checkpoint's
/// network must equal `expected` when given.
TrainResult resume(const std::filesystem::path& checkpoint, const TripletDataset& ds, const TrainConfig& cfg,
                   const std::optional<DeepONetSpec>& expected = std::nullopt);

/// Frozen scale for deterministic (baseline) parameters.
inline constexpr double kFrozenDelta = -50.0;

/// Columns epoch,total_loss,kl,nll. Timings go to write_timing_csv.
void write_trace_csv(const TrainTrace& trace, const std::filesystem::path& path);
void write_timing_csv(const TrainTrace& trace, const std::filesystem::path& path);

}  // namespace vbdo
