#include "vbdo/predictor.hpp"

#include "vbdo/deeponet.hpp"
#include "vbdo/error.hpp"
#include "vbdo/parallel.hpp"
#include "vbdo/rng.hpp"

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <vector>

namespace vbdo {

namespace {

constexpr std::uint64_t kPredictStream = 0x70726564ULL;
constexpr std::uint64_t kDrawStream = 0x64726177ULL;
constexpr std::size_t kChunkRows = 4096;

/// Linear-interpolated quantile of sorted data.
double sorted_quantile(const std::vector<double>& v, double q) {
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    const double f = pos - static_cast<double>(lo);
    return v[lo] + f * (v[hi] - v[lo]);
}

bool is_grid_structured(const TripletDataset& q) {
    if (q.n_inputs() < 2) return q.n_inputs() == 1;
    const auto p = static_cast<Eigen::Index>(q.per_input);
    const auto first = q.locations.topRows(p);
    for (std::size_t k = 1; k < q.n_inputs(); ++k)
        if (q.locations.middleRows(static_cast<Eigen::Index>(k) * p, p) != first) return false;
    return true;
}

}  // namespace

double gaussian_quantile(double level) {
    require(level > 0.0 && level < 1.0, "confidence level must lie in (0, 1)");
    return boost::math::quantile(boost::math::normal_distribution<double>(), 0.5 + 0.5 * level);
}

PredictiveEnsemble predict(const Checkpoint& model, const TripletDataset& queries, const PredictOptions& opts) {
    require(opts.samples >= 2, "predict: need at least 2 posterior samples");
    const DeepONetSpec& spec = model.spec;
    require(model.params.size() == spec.param_count(), "predict: parameters do not match the model");
    require(queries.sensors() == spec.sensors() && queries.y_dim() == spec.y_dim(),
            "predict: query dimensions do not match the model");
    queries.validate();

    TripletDataset q;
    if (queries.norm) {
        if (!model.norm) throw ArgumentError("predict: missing NormStats for normalized queries");
        q = queries;
    } else if (model.norm) {
        q = apply_norm(queries, *model.norm);
    } else {
        q = queries;
    }
    const double scale = model.norm ? model.norm->s_std : 1.0;
    const double shift = model.norm ? model.norm->s_mean : 0.0;

    const std::size_t nq = q.rows();
    const std::size_t S = opts.samples;
    const bool keep = opts.keep_samples || opts.ci_method == CiMethod::Empirical;
    PredictiveEnsemble ens;
    ens.samples = S;
    const auto Q = static_cast<Eigen::Index>(nq);
    Vector mean = Vector::Zero(Q), m2 = Vector::Zero(Q), sig2 = Vector::Zero(Q);
    if (keep) {
        ens.mu_samples.resize(static_cast<Eigen::Index>(S), Q);
        ens.sigma_samples.resize(static_cast<Eigen::Index>(S), Q);
    }

    // Query sets built on a shared location grid take the outer-product path.
    const bool grid = is_grid_structured(q);
    const Matrix grid_locations = grid ? Matrix(q.locations.topRows(static_cast<Eigen::Index>(q.per_input))) : Matrix();
    const std::size_t chunks = grid ? 0 : (nq + kChunkRows - 1) / kChunkRows;
    std::vector<ModelBatch> batches(chunks);
    parallel_for(chunks, [&](std::size_t c) {
        batches[c] = ModelBatch::from_range(q, c * kChunkRows, std::min(nq, (c + 1) * kChunkRows));
    });

    const std::uint64_t root = split_key(opts.seed, kPredictStream);
    Vector mu_s(Q), sigma_s(Q);
    for (std::size_t s = 0; s < S; ++s) {
        const Vector theta = sample_params(model.params, NoiseDraw::generate(model.params.size(), root, s));
        if (grid) {
            const GridOutput out = forward_grid(spec, as_span(theta), q.inputs, grid_locations);
            // Row-major n x P flattens to realization-major query order.
            mu_s = Eigen::Map<const Vector>(out.mu.data(), Q).array() * scale + shift;
            sigma_s = Eigen::Map<const Vector>(out.sigma.data(), Q) * scale;
        } else {
            parallel_for(chunks, [&](std::size_t c) {
                const BatchOutput out = forward_batch(spec, as_span(theta), batches[c]);
                const auto begin = static_cast<Eigen::Index>(c * kChunkRows);
                mu_s.segment(begin, out.mu.size()) = out.mu.array() * scale + shift;
                sigma_s.segment(begin, out.sigma.size()) = out.sigma * scale;
            });
        }
        if (keep) {
            ens.mu_samples.row(static_cast<Eigen::Index>(s)) = mu_s.transpose();
            ens.sigma_samples.row(static_cast<Eigen::Index>(s)) = sigma_s.transpose();
        }
        // Welford update, sample-ordered.
        const double k = static_cast<double>(s + 1);
        const Vector d = mu_s - mean;
        mean += d / k;
        m2 += d.cwiseProduct(mu_s - mean);
        sig2 += sigma_s.cwiseAbs2();
    }
    const double inv_s = 1.0 / static_cast<double>(S);
    ens.mean = mean;
    ens.epistemic_var = (m2 * inv_s).cwiseMax(0.0);
    ens.aleatoric_var = sig2 * inv_s;
    ens.total_var = ens.epistemic_var + ens.aleatoric_var;

    if (opts.ci_method == CiMethod::Moments) {
        const double z = gaussian_quantile(opts.ci_level);
        const Vector half = z * ens.total_var.cwiseSqrt();
        ens.ci_lo = ens.mean - half;
        ens.ci_hi = ens.mean + half;
    } else {
        ens.ci_lo.resize(Q);
        ens.ci_hi.resize(Q);
        const double tail = 0.5 * (1.0 - opts.ci_level);
        const std::uint64_t draw_root = split_key(opts.seed, kDrawStream);
        parallel_for(nq, [&](std::size_t i) {
            const auto col = static_cast<Eigen::Index>(i);
            CounterRng rng = CounterRng(draw_root).split(i);
            std::vector<double> v(S);
            for (std::size_t s = 0; s < S; ++s) {
                const auto row = static_cast<Eigen::Index>(s);
                v[s] = ens.mu_samples(row, col) + ens.sigma_samples(row, col) * rng.normal();
            }
            std::sort(v.begin(), v.end());
            ens.ci_lo[col] = std::min(sorted_quantile(v, tail), ens.mean[col]);
            ens.ci_hi[col] = std::max(sorted_quantile(v, 1.0 - tail), ens.mean[col]);
        });
    }
    if (!opts.keep_samples && opts.ci_method == CiMethod::Empirical) {
        ens.mu_samples.resize(0, 0);
        ens.sigma_samples.resize(0, 0);
    }
    return ens;
}

double nmse(const Vector& pred, const Vector& truth) {
    require(pred.size() == truth.size(), "nmse: length mismatch");
    const double denom = truth.squaredNorm();
    if (!(denom > 0.0)) throw NumericError("nmse: truth has zero norm");
    return (pred - truth).squaredNorm() / denom;
}

double coverage(const PredictiveEnsemble& ens, const Vector& truth, double level) {
    require(truth.size() == ens.mean.size(), "coverage: length mismatch");
    if (truth.size() == 0) return 0.0;
    const double z = gaussian_quantile(level);
    Eigen::Index inside = 0;
    for (Eigen::Index i = 0; i < truth.size(); ++i)
        if (std::abs(truth[i] - ens.mean[i]) <= z * std::sqrt(ens.total_var[i])) ++inside;
    return static_cast<double>(inside) / static_cast<double>(truth.size());
}

double silverman_bandwidth(std::span<const double> values) {
    require(values.size() >= 2, "bandwidth needs at least two values");
    std::vector<double> v(values.begin(), values.end());
    std::sort(v.begin(), v.end());
    const double n = static_cast<double>(v.size());
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= n;
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    const double sd = std::sqrt(var / (n - 1.0));
    const double iqr = sorted_quantile(v, 0.75) - sorted_quantile(v, 0.25);
    const double spread = iqr > 0.0 ? std::min(sd, iqr / 1.34) : sd;
    return 0.9 * spread * std::pow(n, -0.2);
}

PdfCurve pdf_estimate(const Matrix& values, Vector support) {
    const auto S = values.rows();
    const auto Q = values.cols();
    require(S >= 1, "pdf_estimate: need at least one sample row");
    require(Q >= 100, "pdf_estimate: need at least 100 values per row");
    if (!values.allFinite()) throw NumericError("pdf_estimate: non-finite values");

    std::vector<std::vector<double>> rows(static_cast<std::size_t>(S));
    std::vector<double> bw(static_cast<std::size_t>(S));
    for (Eigen::Index s = 0; s < S; ++s) {
        auto& r = rows[static_cast<std::size_t>(s)];
        // Rows are contiguous in row-major storage.
        r.assign(values.row(s).data(), values.row(s).data() + Q);
        std::sort(r.begin(), r.end());
        const double tol = 1e-15 * std::max(1.0, std::max(std::abs(r.front()), std::abs(r.back())));
        if (r.back() - r.front() <= tol)
            throw NumericError("pdf_estimate: degenerate value set collapses to a single spike");
        bw[static_cast<std::size_t>(s)] = silverman_bandwidth(r);
        if (!(bw[static_cast<std::size_t>(s)] > 0.0))
            throw NumericError("pdf_estimate: degenerate value set collapses to a single spike");
    }
    const double h_max = *std::max_element(bw.begin(), bw.end());
    if (support.size() == 0) {
        const double lo = values.minCoeff() - 5.0 * h_max;
        const double hi = values.maxCoeff() + 5.0 * h_max;
        support = Vector::LinSpaced(512, lo, hi);
    }
    const auto G = support.size();
    require(G >= 2, "pdf_estimate: support needs at least two points");

    Matrix dens(S, G);
    const double norm_const = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    parallel_for(static_cast<std::size_t>(S), [&](std::size_t s) {
        const auto& r = rows[s];
        const double h = bw[s];
        const double cutoff = 9.0 * h;
        const double coef = norm_const / (h * static_cast<double>(r.size()));
        for (Eigen::Index g = 0; g < G; ++g) {
            const double x = support[g];
            auto it = std::lower_bound(r.begin(), r.end(), x - cutoff);
            const auto end = std::upper_bound(it, r.end(), x + cutoff);
            double acc = 0.0;
            for (; it != end; ++it) {
                const double z = (x - *it) / h;
                acc += std::exp(-0.5 * z * z);
            }
            dens(static_cast<Eigen::Index>(s), g) = coef * acc;
        }
    });

    PdfCurve c;
    c.support = support;
    c.mean_density = dens.colwise().mean().transpose();
    c.band_lo.resize(G);
    c.band_hi.resize(G);
    std::vector<double> col(static_cast<std::size_t>(S));
    for (Eigen::Index g = 0; g < G; ++g) {
        for (Eigen::Index s = 0; s < S; ++s) col[static_cast<std::size_t>(s)] = dens(s, g);
        std::sort(col.begin(), col.end());
        c.band_lo[g] = sorted_quantile(col, 0.025);
        c.band_hi[g] = sorted_quantile(col, 0.975);
    }
    double h_sum = 0.0;
    for (double h : bw) h_sum += h;
    c.bandwidth = h_sum / static_cast<double>(S);
    return c;
}

Matrix predictive_draws(const PredictiveEnsemble& ens, std::span<const std::size_t> columns, std::uint64_t seed) {
    require(ens.mu_samples.rows() == static_cast<Eigen::Index>(ens.samples) && ens.samples > 0,
            "predictive_draws: ensemble was built without keep_samples");
    Matrix out(static_cast<Eigen::Index>(ens.samples), static_cast<Eigen::Index>(columns.size()));
    const CounterRng root(split_key(seed, kDrawStream));
    for (std::size_t j = 0; j < columns.size(); ++j) {
        require(columns[j] < ens.queries(), "predictive_draws: query index out of range");
        CounterRng rng = root.split(columns[j]);
        const auto q = static_cast<Eigen::Index>(columns[j]);
        for (Eigen::Index s = 0; s < out.rows(); ++s)
            out(s, static_cast<Eigen::Index>(j)) = ens.mu_samples(s, q) + ens.sigma_samples(s, q) * rng.normal();
    }
    return out;
}

void write_predictions_csv(const PredictiveEnsemble& ens, const TripletDataset& queries,
                           const std::filesystem::path& path) {
    require(queries.rows() == ens.queries(), "write_predictions_csv: query count mismatch");
    const TripletDataset raw = denormalize(queries);
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string());
    out << "input";
    for (std::size_t c = 0; c < raw.y_dim(); ++c) out << ",y_" << c + 1;
    if (raw.has_targets()) out << ",truth";
    out << ",mean,std_total,std_epistemic,std_aleatoric,ci_lo,ci_hi\n" << std::setprecision(17);
    for (std::size_t r = 0; r < raw.rows(); ++r) {
        const auto i = static_cast<Eigen::Index>(r);
        out << raw.input_of(r);
        for (Eigen::Index c = 0; c < raw.locations.cols(); ++c) out << ',' << raw.locations(i, c);
        if (raw.has_targets()) out << ',' << raw.targets[i];
        out << ',' << ens.mean[i] << ',' << std::sqrt(ens.total_var[i]) << ',' << std::sqrt(ens.epistemic_var[i])
            << ',' << std::sqrt(ens.aleatoric_var[i]) << ',' << ens.ci_lo[i] << ',' << ens.ci_hi[i] << '\n';
    }
    if (!out) throw IoError("write failed: " + path.string());
}

void write_pdf_csv(const PdfCurve& curve, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string());
    out << "support,mean_density,band_lo,band_hi\n" << std::setprecision(17);
    for (Eigen::Index g = 0; g < curve.support.size(); ++g)
        out << curve.support[g] << ',' << curve.mean_density[g] << ',' << curve.band_lo[g] << ',' << curve.band_hi[g]
            << '\n';
    if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace vbdo
