#pragma once

#include "vbdo/dataset.hpp"
#include "vbdo/deeponet.hpp"
#include "vbdo/variational.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

namespace vbdo {

struct AdamState {
    Vector m_mu, v_mu, m_delta, v_delta;
    std::uint64_t step = 0;

    bool operator==(const AdamState& o) const {
        return m_mu == o.m_mu && v_mu == o.v_mu && m_delta == o.m_delta && v_delta == o.v_delta &&
               step == o.step;
    }
};

struct EpochRecord {
    std::uint64_t epoch = 0;
    double total = 0.0;
    double kl = 0.0;
    double nll = 0.0;
    double seconds = 0.0;
};

struct TrainTrace {
    std::vector<EpochRecord> epochs;
};

/// Optimizer progress needed to continue a run exactly.
struct TrainerState {
    std::uint64_t epochs_done = 0;
    AdamState adam;
    TrainTrace trace;
};

/// Everything needed to predict with (and optionally keep training) a model.
struct Checkpoint {
    DeepONetSpec spec;
    VariationalParams params;
    std::optional<NormStats> norm;
    std::optional<TrainerState> trainer;
};

/// "VBDOCKP1" | version | model descriptors | mu | delta | norm | trainer state | CRC32.
/// Trace wall times are not stored, so identical runs give identical bytes.
inline constexpr std::uint8_t kCheckpointVersion = 1;
void save_checkpoint(const Checkpoint& ckp, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace vbdo
