#include "vbdo/dataset.hpp"

#include "binary_io.hpp"
#include "vbdo/error.hpp"
#include "vbdo/parallel.hpp"
#include "vbdo/rng.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <string>

namespace vbdo {

Matrix TripletDataset::u_matrix() const {
    Matrix u(static_cast<Eigen::Index>(rows()), inputs.cols());
    for (std::size_t r = 0; r < rows(); ++r)
        u.row(static_cast<Eigen::Index>(r)) = inputs.row(static_cast<Eigen::Index>(input_of(r)));
    return u;
}

void TripletDataset::validate() const {
    require(per_input >= 1, "dataset: per-input count must be positive");
    require(rows() == n_inputs() * per_input, "dataset: row count is not n * m");
    require(!has_targets() || static_cast<std::size_t>(targets.size()) == rows(),
            "dataset: target count does not match rows");
    if (norm) {
        require(static_cast<std::size_t>(norm->u_mean.size()) == sensors() &&
                    static_cast<std::size_t>(norm->u_std.size()) == sensors(),
                "dataset: normalization statistics do not match sensor count");
    }
}

TripletDataset assemble(const GrfEnsemble& ensemble, const GridSolutions& solutions, std::size_t m,
                        std::uint64_t seed) {
    const std::size_t n = ensemble.size();
    const auto points = static_cast<std::size_t>(solutions.locations.rows());
    require(m >= 1, "assemble: m must be positive");
    require(static_cast<std::size_t>(solutions.values.rows()) == n,
            "assemble: need exactly one solver output per realization");
    require(static_cast<std::size_t>(solutions.values.cols()) == points,
            "assemble: solver output does not match its location grid");
    if (m > points)
        throw ArgumentError("assemble: m = " + std::to_string(m) + " exceeds the " + std::to_string(points) +
                            " available grid points");

    const auto d = solutions.locations.cols();
    TripletDataset ds;
    ds.inputs = ensemble.realizations;
    ds.per_input = m;
    ds.locations.resize(static_cast<Eigen::Index>(n * m), d);
    ds.targets.resize(static_cast<Eigen::Index>(n * m));

    const CounterRng root(split_key(seed, 0x61736d00ULL));
    parallel_for(n, [&](std::size_t k) {
        CounterRng rng = root.split(k);
        // Partial Fisher-Yates: the first m entries are a uniform draw without replacement.
        std::vector<std::size_t> idx(points);
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        for (std::size_t i = 0; i < m; ++i) std::swap(idx[i], idx[i + rng.below(points - i)]);
        for (std::size_t i = 0; i < m; ++i) {
            const auto row = static_cast<Eigen::Index>(k * m + i);
            const auto p = static_cast<Eigen::Index>(idx[i]);
            ds.locations.row(row) = solutions.locations.row(p);
            ds.targets[row] = solutions.values(static_cast<Eigen::Index>(k), p);
        }
    });
    return ds;
}

TripletDataset build_eval_set(const Matrix& inputs, const Matrix& grid_locations, const Matrix* values) {
    const auto n = inputs.rows();
    const auto p = grid_locations.rows();
    require(p >= 1, "build_eval_set: empty location grid");
    TripletDataset ds;
    ds.inputs = inputs;
    ds.per_input = static_cast<std::size_t>(p);
    ds.locations.resize(n * p, grid_locations.cols());
    for (Eigen::Index k = 0; k < n; ++k) ds.locations.middleRows(k * p, p) = grid_locations;
    if (values) {
        require(values->rows() == n && values->cols() == p, "build_eval_set: value matrix shape mismatch");
        ds.targets.resize(n * p);
        for (Eigen::Index k = 0; k < n; ++k) ds.targets.segment(k * p, p) = values->row(k).transpose();
    }
    return ds;
}

NormStats compute_norm_stats(const TripletDataset& ds, const NormalizeOptions& opts) {
    const auto s = static_cast<Eigen::Index>(ds.sensors());
    NormStats st{Vector::Zero(s), Vector::Ones(s), 0.0, 1.0};
    if (opts.inputs) {
        require(ds.n_inputs() >= 1, "normalize: dataset has no inputs");
        // Every realization appears m times, so per-realization moments equal per-row moments.
        st.u_mean = ds.inputs.colwise().mean().transpose();
        for (Eigen::Index c = 0; c < s; ++c) {
            const double var = (ds.inputs.col(c).array() - st.u_mean[c]).square().mean();
            const double sd = std::sqrt(var);
            if (!(sd > 0.0) || !std::isfinite(sd))
                throw NumericError("normalize: degenerate feature, sensor " + std::to_string(c) +
                                   " has zero variance");
            st.u_std[c] = sd;
        }
    }
    if (opts.targets) {
        require(ds.has_targets(), "normalize: dataset has no targets");
        st.s_mean = ds.targets.mean();
        const double sd = std::sqrt((ds.targets.array() - st.s_mean).square().mean());
        if (!(sd > 0.0) || !std::isfinite(sd)) throw NumericError("normalize: degenerate targets, zero variance");
        st.s_std = sd;
    }
    return st;
}

TripletDataset apply_norm(const TripletDataset& ds, const NormStats& stats) {
    require(!ds.norm, "apply_norm: dataset is already normalized");
    require(static_cast<std::size_t>(stats.u_mean.size()) == ds.sensors(), "apply_norm: sensor count mismatch");
    TripletDataset out = ds;
    out.inputs = ((ds.inputs.rowwise() - stats.u_mean.transpose()).array().rowwise() /
                  stats.u_std.transpose().array())
                     .matrix();
    if (ds.has_targets()) out.targets = ((ds.targets.array() - stats.s_mean) / stats.s_std).matrix();
    out.norm = stats;
    return out;
}

TripletDataset normalize(const TripletDataset& ds, const NormalizeOptions& opts) {
    return apply_norm(ds, compute_norm_stats(ds, opts));
}

TripletDataset denormalize(const TripletDataset& ds) {
    if (!ds.norm) return ds;
    const NormStats& st = *ds.norm;
    TripletDataset out = ds;
    out.inputs = ((ds.inputs.array().rowwise() * st.u_std.transpose().array()).rowwise() +
                  st.u_mean.transpose().array())
                     .matrix();
    if (ds.has_targets()) out.targets = (ds.targets.array() * st.s_std + st.s_mean).matrix();
    out.norm.reset();
    return out;
}

Vector normalize_input(const NormStats& stats, const Eigen::Ref<const Vector>& u) {
    return ((u - stats.u_mean).array() / stats.u_std.array()).matrix();
}

void save(const TripletDataset& ds, const std::filesystem::path& path) {
    ds.validate();
    require(ds.has_targets(), "save: query sets without targets cannot be saved");
    io::Writer w;
    w.magic("VBDODS01");
    w.u8(kDatasetVersion);
    w.u32(static_cast<std::uint32_t>(ds.n_inputs()));
    w.u32(static_cast<std::uint32_t>(ds.per_input));
    w.u32(static_cast<std::uint32_t>(ds.sensors()));
    w.u8(static_cast<std::uint8_t>(ds.y_dim()));
    w.u8(ds.norm ? 1 : 0);
    w.f64s(ds.inputs.data(), static_cast<std::size_t>(ds.inputs.size()));
    w.f64s(ds.locations.data(), static_cast<std::size_t>(ds.locations.size()));
    w.vec(ds.targets);
    if (ds.norm) {
        w.vec(ds.norm->u_mean);
        w.vec(ds.norm->u_std);
        w.f64(ds.norm->s_mean);
        w.f64(ds.norm->s_std);
    }
    w.finish(path);
}

TripletDataset load(const std::filesystem::path& path) {
    io::Reader r(path, "VBDODS01");
    r.version(kDatasetVersion);
    const std::size_t n = r.u32();
    const std::size_t m = r.u32();
    const std::size_t sensors = r.u32();
    const std::size_t d = r.u8();
    const std::uint8_t flag = r.u8();
    if (m == 0 || sensors == 0 || d == 0 || flag > 1) throw FormatError(r.name() + ": malformed header");
    TripletDataset ds;
    ds.per_input = m;
    ds.inputs.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(sensors));
    r.f64s(ds.inputs.data(), n * sensors);
    ds.locations.resize(static_cast<Eigen::Index>(n * m), static_cast<Eigen::Index>(d));
    r.f64s(ds.locations.data(), n * m * d);
    ds.targets = r.vec(n * m);
    if (flag) {
        NormStats st;
        st.u_mean = r.vec(sensors);
        st.u_std = r.vec(sensors);
        st.s_mean = r.f64();
        st.s_std = r.f64();
        ds.norm = st;
    }
    r.expect_end();
    return ds;
}

void write_dataset_csv(const TripletDataset& ds, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string());
    out << std::setprecision(17);
    for (std::size_t c = 0; c < ds.sensors(); ++c) out << "u_" << c + 1 << ',';
    for (std::size_t c = 0; c < ds.y_dim(); ++c) out << "y_" << c + 1 << ',';
    out << "s\n";
    for (std::size_t r = 0; r < ds.rows(); ++r) {
        const auto k = static_cast<Eigen::Index>(ds.input_of(r));
        const auto row = static_cast<Eigen::Index>(r);
        for (Eigen::Index c = 0; c < ds.inputs.cols(); ++c) out << ds.inputs(k, c) << ',';
        for (Eigen::Index c = 0; c < ds.locations.cols(); ++c) out << ds.locations(row, c) << ',';
        if (ds.has_targets()) out << ds.targets[row];
        out << '\n';
    }
    if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace vbdo
