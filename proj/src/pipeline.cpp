#include "vbdo/pipeline.hpp"

#include "vbdo/error.hpp"
#include "vbdo/parallel.hpp"
#include "vbdo/rng.hpp"

#include <zlib.h>

#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

namespace vbdo {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kTrainStream = 1;
constexpr std::uint64_t kTestStream = 2;
constexpr std::uint64_t kPdfStream = 3;
constexpr std::uint64_t kAssembleStream = 0x61736d;
constexpr std::uint64_t kPredictStream = 0x707265;
constexpr std::uint64_t kDrawStream = 0x647277;

bool is_pde(Problem p) { return p == Problem::DiffusionReaction || p == Problem::AdvectionDiffusion; }

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

fs::path or_default(const fs::path& given, const fs::path& fallback) { return given.empty() ? fallback : given; }

/// Branch input for one GRF draw. Advection-diffusion maps sin^2(2 pi u).
std::vector<double> branch_input(Problem p, const double* draw, std::size_t n) {
    std::vector<double> v(draw, draw + n);
    if (p == Problem::AdvectionDiffusion)
        for (double& x : v) x = std::pow(std::sin(2.0 * std::numbers::pi * x), 2);
    return v;
}

/// Row of solution values on the evaluation grid for one input function.
Vector solve_one(const RunConfig& cfg, const InputFunction& u, const std::vector<double>& t_grid,
                 const SensorGrid& x_grid) {
    const Eigen::Index nt = static_cast<Eigen::Index>(t_grid.size());
    switch (cfg.problem) {
        case Problem::Antiderivative: {
            const OdeSolution s = solve_antiderivative(u, t_grid);
            return Eigen::Map<const Vector>(s.values.data(), nt);
        }
        case Problem::Pendulum: {
            const OdeSolution s = solve_pendulum(u, t_grid, {0.0, 0.0}, {cfg.solver.pendulum_step});
            return Eigen::Map<const Vector>(s.values.data(), nt);
        }
        case Problem::DiffusionReaction:
        case Problem::AdvectionDiffusion: {
            const FieldSolution f =
                cfg.problem == Problem::DiffusionReaction
                    ? solve_diffusion_reaction(u, {cfg.solver.diffusivity, cfg.solver.reaction, 1e6}, x_grid, t_grid)
                    : solve_advection_diffusion(u, x_grid, t_grid, cfg.solver.viscosity);
            // values is nx x nt row-major, which is already the x-major location order.
            return Eigen::Map<const Vector>(f.values.data(), f.values.size());
        }
    }
    throw ArgumentError("unknown problem");
}

std::string fmt17(double v) {
    std::ostringstream s;
    s << std::setprecision(17) << v;
    return s.str();
}

// Shortest representation that reads back to the same double, e.g. "0.68".
std::string fmt_short(double v) {
    std::array<char, 32> buf{};
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), res.ptr);
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string());
    out << text;
    if (!out) throw IoError("write failed: " + path.string());
}

void write_matrix_csv(const Matrix& m, const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string());
    out << std::setprecision(17);
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << m(i, j);
        out << '\n';
    }
    if (!out) throw IoError("write failed: " + path.string());
}

PredictOptions predict_options(const RunConfig& cfg, bool keep) {
    PredictOptions o;
    o.samples = cfg.predict.samples;
    o.seed = split_key(cfg.seed, kPredictStream);
    o.ci_level = cfg.predict.ci_level;
    o.ci_method = cfg.predict.ci_method;
    o.keep_samples = keep || cfg.predict.ci_method == CiMethod::Empirical;
    return o;
}

Checkpoint load_compatible(const RunConfig& cfg, const fs::path& path) {
    Checkpoint ckp = load_checkpoint(path);
    const DeepONetSpec want = cfg.model_spec();
    if (!(ckp.spec.branch == want.branch) || !(ckp.spec.trunk == want.trunk) || ckp.spec.merge != want.merge)
        throw ArgumentError("spec mismatch: checkpoint " + path.string() + " does not match the configured model");
    return ckp;
}

void write_train_outputs(const RunConfig& cfg, const DeepONetSpec& spec, const TripletDataset& ds,
                         const TrainResult& r, const std::string& command) {
    const fs::path ckp_path = cfg.out / "checkpoint.vbdo";
    save_checkpoint(Checkpoint{spec, r.params, ds.norm, r.state}, ckp_path);
    write_trace_csv(r.trace, cfg.out / "trace.csv");
    write_timing_csv(r.trace, cfg.out / "timing.csv");

    std::ostringstream s;
    s << "problem: " << problem_name(cfg.problem) << '\n'
      << "mode: " << (spec.baseline ? "baseline" : "vb") << '\n'
      << "parameters: " << spec.param_count() << '\n'
      << "training rows: " << ds.rows() << " (" << ds.n_inputs() << " x " << ds.per_input << ")\n"
      << "epochs completed: " << r.state.epochs_done << '\n';
    if (!r.trace.epochs.empty()) {
        const EpochRecord& last = r.trace.epochs.back();
        s << "final loss: " << fmt17(last.total) << '\n'
          << "final kl: " << fmt17(last.kl) << '\n'
          << "final nll: " << fmt17(last.nll) << '\n'
          << "wall seconds (this session): " << last.seconds << '\n';
    }
    write_text(cfg.out / "train_summary.txt", s.str());
    write_manifest(cfg, command,
                   {ckp_path, cfg.out / "trace.csv", cfg.out / "timing.csv", cfg.out / "train_summary.txt"});
}

Checkpoint load_model(const RunConfig& cfg, const fs::path& checkpoint) {
    return load_compatible(cfg, or_default(checkpoint, cfg.out / "checkpoint.vbdo"));
}

}  // namespace

std::uint32_t file_crc32(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<char> buf(1 << 16);
    uLong crc = crc32(0L, Z_NULL, 0);
    while (in) {
        in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        const auto got = in.gcount();
        if (got > 0) crc = crc32(crc, reinterpret_cast<const Bytef*>(buf.data()), static_cast<uInt>(got));
    }
    return static_cast<std::uint32_t>(crc);
}

void write_manifest(const RunConfig& cfg, const std::string& command, const std::vector<fs::path>& outputs) {
    json j;
    j["command"] = command;
    j["config"] = to_json(cfg);
    json files = json::array();
    for (const fs::path& p : outputs) {
        std::ostringstream crc;
        crc << std::hex << std::setw(8) << std::setfill('0') << file_crc32(p);
        files.push_back({{"path", p.filename().string()}, {"bytes", fs::file_size(p)}, {"crc32", crc.str()}});
    }
    j["outputs"] = files;
    write_text(cfg.out / (command + ".manifest.json"), j.dump(2) + "\n");
}

Matrix evaluation_grid(const RunConfig& cfg) {
    const std::vector<double> t = unit_time_grid(cfg.solver.time_steps);
    if (!is_pde(cfg.problem)) return Eigen::Map<const Vector>(t.data(), static_cast<Eigen::Index>(t.size()));
    const SensorGrid x = SensorGrid::uniform(0.0, 1.0, cfg.solver.space_points);
    Matrix g(static_cast<Eigen::Index>(x.count() * t.size()), 2);
    Eigen::Index r = 0;
    for (std::size_t i = 0; i < x.count(); ++i)
        for (double tj : t) {
            g(r, 0) = x[i];
            g(r, 1) = tj;
            ++r;
        }
    return g;
}

ProblemData generate_problem_data(const RunConfig& cfg, std::size_t n, std::uint64_t stream) {
    const SensorGrid grid = cfg.sensor_grid();
    const GrfEnsemble ens = sample_grf(grid, cfg.grf.length_scale, n, split_key(cfg.seed, stream));
    const std::vector<double> t_grid = unit_time_grid(cfg.solver.time_steps);
    const SensorGrid x_grid = SensorGrid::uniform(0.0, 1.0, cfg.solver.space_points);

    ProblemData d;
    d.solutions.locations = evaluation_grid(cfg);
    d.inputs.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(grid.count()));
    d.solutions.values.resize(static_cast<Eigen::Index>(n), d.solutions.locations.rows());
    parallel_for(n, [&](std::size_t k) {
        const auto row = static_cast<Eigen::Index>(k);
        const std::vector<double> u = branch_input(cfg.problem, ens.realizations.row(row).data(), grid.count());
        d.inputs.row(row) = Eigen::Map<const Vector>(u.data(), static_cast<Eigen::Index>(u.size())).transpose();
        d.solutions.values.row(row) = solve_one(cfg, InputFunction(grid, u), t_grid, x_grid).transpose();
    });
    return d;
}

GenDataResult cmd_gen_data(const RunConfig& cfg) {
    cfg.validate();
    ensure_dir(cfg.out);

    const ProblemData train = generate_problem_data(cfg, cfg.dataset.train_inputs, kTrainStream);
    GrfEnsemble shell;
    shell.grid = cfg.sensor_grid();
    shell.realizations = train.inputs;
    shell.length_scale = cfg.grf.length_scale;
    TripletDataset train_ds =
        assemble(shell, train.solutions, cfg.dataset.per_input, split_key(cfg.seed, kAssembleStream));
    if (cfg.dataset.normalize_inputs || cfg.dataset.normalize_targets)
        train_ds = normalize(train_ds, {cfg.dataset.normalize_inputs, cfg.dataset.normalize_targets});

    const ProblemData test = generate_problem_data(cfg, cfg.dataset.test_inputs, kTestStream);
    const TripletDataset test_ds = build_eval_set(test.inputs, test.solutions.locations, &test.solutions.values);

    GenDataResult r{cfg.out / "train.vbds", cfg.out / "test.vbds"};
    save(train_ds, r.train_path);
    save(test_ds, r.test_path);
    write_manifest(cfg, "gen-data", {r.train_path, r.test_path});
    return r;
}

TrainResult cmd_train(const RunConfig& cfg, const TrainPaths& paths) {
    cfg.validate();
    ensure_dir(cfg.out);
    const TripletDataset ds = load(or_default(paths.data, cfg.out / "train.vbds"));
    const DeepONetSpec spec = cfg.model_spec();
    TrainConfig tc = cfg.train_config();
    if (tc.checkpoint_path.empty()) tc.checkpoint_path = cfg.out / "checkpoint.vbdo";
    const TrainResult r = train(spec, ds, tc);
    write_train_outputs(cfg, spec, ds, r, "train");
    return r;
}

TrainResult cmd_resume(const RunConfig& cfg, const TrainPaths& paths) {
    cfg.validate();
    ensure_dir(cfg.out);
    const TripletDataset ds = load(or_default(paths.data, cfg.out / "train.vbds"));
    const fs::path from = or_default(paths.checkpoint, cfg.out / "checkpoint.vbdo");
    TrainConfig tc = cfg.train_config();
    if (tc.checkpoint_path.empty()) tc.checkpoint_path = cfg.out / "checkpoint.vbdo";
    const DeepONetSpec spec = cfg.model_spec();
    const TrainResult r = resume(from, ds, tc, spec);
    write_train_outputs(cfg, spec, ds, r, "resume");
    return r;
}

EvaluateResult cmd_evaluate(const RunConfig& cfg, const fs::path& checkpoint, const fs::path& test) {
    cfg.validate();
    ensure_dir(cfg.out);
    const Checkpoint ckp = load_model(cfg, checkpoint);
    const TripletDataset ds = load(or_default(test, cfg.out / "test.vbds"));
    require(ds.has_targets(), "evaluate: test set has no targets");
    const TripletDataset raw = denormalize(ds);

    EvaluateResult r;
    r.ensemble = predict(ckp, ds, predict_options(cfg, false));
    r.nmse = nmse(r.ensemble.mean, raw.targets);
    for (double level : {0.68, 0.95, 0.99}) r.coverage.emplace_back(level, coverage(r.ensemble, raw.targets, level));

    std::vector<fs::path> outputs;
    {
        std::ostringstream s;
        s << "level,coverage\n" << std::setprecision(17);
        for (const auto& [level, frac] : r.coverage) s << fmt_short(level) << ',' << frac << '\n';
        write_text(cfg.out / "coverage.csv", s.str());
        outputs.push_back(cfg.out / "coverage.csv");
    }
    {
        json j;
        j["problem"] = problem_name(cfg.problem);
        j["mode"] = ckp.spec.baseline ? "baseline" : "vb";
        j["nmse"] = r.nmse;
        j["samples"] = r.ensemble.samples;
        j["queries"] = r.ensemble.queries();
        j["realizations"] = ds.n_inputs();
        json cov = json::object();
        for (const auto& [level, frac] : r.coverage) cov[fmt_short(level)] = frac;
        j["coverage"] = cov;
        j["mean_std_total"] = r.ensemble.total_var.array().sqrt().mean();
        j["mean_std_epistemic"] = r.ensemble.epistemic_var.array().sqrt().mean();
        j["mean_std_aleatoric"] = r.ensemble.aleatoric_var.array().sqrt().mean();
        write_text(cfg.out / "metrics.json", j.dump(2) + "\n");
        outputs.push_back(cfg.out / "metrics.json");
    }

    const std::size_t shown = std::min(cfg.predict.report_inputs, ds.n_inputs());
    const auto m = static_cast<Eigen::Index>(ds.per_input);
    for (std::size_t k = 0; k < shown; ++k) {
        const Eigen::Index base = static_cast<Eigen::Index>(k) * m;
        if (!is_pde(cfg.problem)) {
            std::ostringstream s;
            s << "t,truth,mean,std_total,ci_lo,ci_hi\n" << std::setprecision(17);
            for (Eigen::Index i = base; i < base + m; ++i)
                s << raw.locations(i, 0) << ',' << raw.targets[i] << ',' << r.ensemble.mean[i] << ','
                  << std::sqrt(r.ensemble.total_var[i]) << ',' << r.ensemble.ci_lo[i] << ',' << r.ensemble.ci_hi[i]
                  << '\n';
            const fs::path p = cfg.out / ("ci_input" + std::to_string(k + 1) + ".csv");
            write_text(p, s.str());
            outputs.push_back(p);
            continue;
        }
        const auto nx = static_cast<Eigen::Index>(cfg.solver.space_points);
        const auto nt = static_cast<Eigen::Index>(cfg.solver.time_steps);
        Matrix mean(nx, nt), err(nx, nt), sd(nx, nt);
        for (Eigen::Index i = 0; i < nx; ++i)
            for (Eigen::Index j = 0; j < nt; ++j) {
                const Eigen::Index q = base + i * nt + j;
                mean(i, j) = r.ensemble.mean[q];
                err(i, j) = std::abs(r.ensemble.mean[q] - raw.targets[q]);
                sd(i, j) = std::sqrt(r.ensemble.total_var[q]);
            }
        const std::string stem = "field_input" + std::to_string(k + 1);
        for (const auto& [name, mat] : {std::pair<const char*, const Matrix*>{"mean", &mean}, {"abs_error", &err},
                                        {"std", &sd}}) {
            const fs::path p = cfg.out / (stem + "_" + name + ".csv");
            write_matrix_csv(*mat, p);
            outputs.push_back(p);
        }
        // Fixed-x slices in the middle of the domain, as CI plots over time.
        std::ostringstream s;
        s << "x,t,truth,mean,std_total,ci_lo,ci_hi\n" << std::setprecision(17);
        const Eigen::Index mid = nx / 2;
        for (Eigen::Index j = 0; j < nt; ++j) {
            const Eigen::Index q = base + mid * nt + j;
            s << raw.locations(q, 0) << ',' << raw.locations(q, 1) << ',' << raw.targets[q] << ','
              << r.ensemble.mean[q] << ',' << std::sqrt(r.ensemble.total_var[q]) << ',' << r.ensemble.ci_lo[q] << ',' << r.ensemble.ci_hi[q]
              << '\n';
        }
        const fs::path p = cfg.out / ("ci_input" + std::to_string(k + 1) + ".csv");
        write_text(p, s.str());
        outputs.push_back(p);
    }
    write_manifest(cfg, "evaluate", outputs);
    return r;
}

void cmd_predict(const RunConfig& cfg, const fs::path& checkpoint, const fs::path& queries) {
    cfg.validate();
    ensure_dir(cfg.out);
    const Checkpoint ckp = load_model(cfg, checkpoint);
    const TripletDataset q = load(or_default(queries, cfg.out / "test.vbds"));
    const PredictiveEnsemble ens = predict(ckp, q, predict_options(cfg, false));
    const fs::path p = cfg.out / "predictions.csv";
    write_predictions_csv(ens, q, p);
    write_manifest(cfg, "predict", {p});
}

fs::path cmd_pdf(const RunConfig& cfg, const fs::path& checkpoint, const PdfQuery& query) {
    cfg.validate();
    const std::size_t nt = cfg.solver.time_steps;
    const std::size_t nx = cfg.solver.space_points;
    if (query.t_index < 1 || query.t_index > nt)
        throw ArgumentError("t index " + std::to_string(query.t_index) + " outside 1.." + std::to_string(nt));
    if (is_pde(cfg.problem)) {
        if (!query.x_index) throw ArgumentError("an x index is required for " + problem_name(cfg.problem));
        if (*query.x_index < 1 || *query.x_index > nx)
            throw ArgumentError("x index " + std::to_string(*query.x_index) + " outside 1.." + std::to_string(nx));
    } else if (query.x_index) {
        throw ArgumentError("x index given for a problem without a spatial grid");
    }
    ensure_dir(cfg.out);
    const Checkpoint ckp = load_model(cfg, checkpoint);

    const ProblemData data = generate_problem_data(cfg, cfg.predict.pdf_inputs, kPdfStream);
    const std::size_t col = is_pde(cfg.problem) ? (*query.x_index - 1) * nt + (query.t_index - 1) : query.t_index - 1;
    const auto c = static_cast<Eigen::Index>(col);
    const Matrix location = data.solutions.locations.row(c);
    const TripletDataset q = build_eval_set(data.inputs, location);

    const PredictiveEnsemble ens = predict(ckp, q, predict_options(cfg, true));
    std::vector<std::size_t> columns(ens.queries());
    for (std::size_t i = 0; i < columns.size(); ++i) columns[i] = i;
    const Matrix draws = predictive_draws(ens, columns, split_key(cfg.seed, kDrawStream));
    const PdfCurve curve = pdf_estimate(draws);

    const Matrix truth = data.solutions.values.col(c).transpose();
    const PdfCurve truth_curve = pdf_estimate(truth, curve.support);

    const std::string stem = is_pde(cfg.problem)
                                 ? "pdf_x" + std::to_string(*query.x_index) + "_t" + std::to_string(query.t_index)
                                 : "pdf_t" + std::to_string(query.t_index);
    const fs::path path = cfg.out / (stem + ".csv");
    const fs::path truth_path = cfg.out / (stem + "_truth.csv");
    write_pdf_csv(curve, path);
    {
        std::ostringstream s;
        s << "support,density\n" << std::setprecision(17);
        for (Eigen::Index g = 0; g < truth_curve.support.size(); ++g)
            s << truth_curve.support[g] << ',' << truth_curve.mean_density[g] << '\n';
        write_text(truth_path, s.str());
    }
    write_manifest(cfg, "pdf", {path, truth_path});
    return path;
}

fs::path cmd_report(const RunConfig& cfg, const std::vector<fs::path>& runs) {
    require(!runs.empty(), "report: no run directories given");
    ensure_dir(cfg.out);
    std::ostringstream csv, md;
    csv << "run,problem,mode,nmse,coverage_68,coverage_95,coverage_99\n" << std::setprecision(17);
    md << "| run | problem | mode | NMSE | cov 0.68 | cov 0.95 | cov 0.99 |\n|---|---|---|---|---|---|---|\n";
    for (const fs::path& run : runs) {
        const fs::path mpath = fs::is_directory(run) ? run / "metrics.json" : run;
        std::ifstream in(mpath);
        if (!in) throw IoError("cannot open " + mpath.string());
        json j;
        try {
            in >> j;
        } catch (const json::exception& e) {
            throw FormatError(mpath.string() + ": " + e.what());
        }
        const std::string label = (fs::is_directory(run) ? run : run.parent_path()).filename().string();
        const json& cov = j.at("coverage");
        auto level = [&](double l) { return cov.at(fmt_short(l)).get<double>(); };
        csv << label << ',' << j.at("problem").get<std::string>() << ',' << j.at("mode").get<std::string>() << ','
            << j.at("nmse").get<double>() << ',' << level(0.68) << ',' << level(0.95) << ',' << level(0.99) << '\n';
        md << "| " << label << " | " << j.at("problem").get<std::string>() << " | " << j.at("mode").get<std::string>()
           << " | " << std::setprecision(6) << j.at("nmse").get<double>() << " | " << level(0.68) << " | "
           << level(0.95) << " | " << level(0.99) << " |\n";
    }
    const fs::path csv_path = cfg.out / "report.csv";
    const fs::path md_path = cfg.out / "report.md";
    write_text(csv_path, csv.str());
    write_text(md_path, md.str());
    write_manifest(cfg, "report", {csv_path, md_path});
    return csv_path;
}

}  // namespace vbdo
