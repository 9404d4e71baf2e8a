#pragma once

#include "vbdo/checkpoint.hpp"
#include "vbdo/dataset.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace vbdo {

enum class CiMethod { Moments, Empirical };

struct PredictOptions {
    std::size_t samples = 200;
    std::uint64_t seed = 0;
    double ci_level = 0.95;
    CiMethod ci_method = CiMethod::Moments;
    /// Keep the S x Q (mu, sigma) samples; required for Empirical CIs and PDFs.
    bool keep_samples = false;
};

/// Posterior-predictive summary, in target units. Variances are population
/// moments over the S parameter draws, so total = epistemic + aleatoric.
struct PredictiveEnsemble {
    std::size_t samples = 0;
    Vector mean;
    Vector epistemic_var;
    Vector aleatoric_var;
    Vector total_var;
    Vector ci_lo;
    Vector ci_hi;
    Matrix mu_samples;     // S x Q when kept
    Matrix sigma_samples;  // S x Q when kept

    [[nodiscard]] std::size_t queries() const noexcept { return static_cast<std::size_t>(mean.size()); }
};

/// Queries are in raw units; inputs are normalized with the checkpoint's
/// statistics and outputs denormalized (sigma scaled by s_std).
PredictiveEnsemble predict(const Checkpoint& model, const TripletDataset& queries, const PredictOptions& opts);

/// Two-sided standard-normal quantile for a central interval of mass `level`.
double gaussian_quantile(double level);

/// sum (pred - truth)^2 / sum truth^2.
double nmse(const Vector& pred, const Vector& truth);

/// Fraction of queries whose truth lies in mean +- z(level) sqrt(total_var).
double coverage(const PredictiveEnsemble& ens, const Vector& truth, double level);

struct PdfCurve {
    Vector support;
    Vector mean_density;
    Vector band_lo;
    Vector band_hi;
    double bandwidth = 0.0;  // mean Silverman bandwidth across rows
};

/// Silverman rule 0.9 min(sd, IQR / 1.34) n^(-1/5).
double silverman_bandwidth(std::span<const double> values);

/// One Gaussian KDE per row of `values` (S x Q). The mean curve is the
/// pointwise average; the band is the pointwise 2.5/97.5 percentile across rows.
/// An empty support selects 512 points spanning the data plus 5 bandwidths.
PdfCurve pdf_estimate(const Matrix& values, Vector support = {});

/// Per-row draws mu + sigma z (z from `seed`) for the queries in `columns`.
Matrix predictive_draws(const PredictiveEnsemble& ens, std::span<const std::size_t> columns, std::uint64_t seed);

void write_predictions_csv(const PredictiveEnsemble& ens, const TripletDataset& queries,
                           const std::filesystem::path& path);
void write_pdf_csv(const PdfCurve& curve, const std::filesystem::path& path);

}  // namespace vbdo
