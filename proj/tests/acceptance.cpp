#include "vbdo/config.hpp"
#include "vbdo/deeponet.hpp"
#include "vbdo/error.hpp"
#include "vbdo/parallel.hpp"
#include "vbdo/pipeline.hpp"
#include "vbdo/rng.hpp"
#include "vbdo/solvers.hpp"
#include "vbdo/variational.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <sstream>

using namespace vbdo;
namespace fs = std::filesystem;

namespace {

constexpr double pi = std::numbers::pi;

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

Vector normal_vector(std::size_t n, std::uint64_t seed, double scale) {
    CounterRng rng(seed);
    Vector v(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = scale * rng.normal();
    return v;
}

Outcome gradient_check() {
    const auto start = Clock::now();
    DeepONetSpec spec;
    spec.branch = nn::NetSpec{{nn::LayerSpec{5, 4, nn::Activation::Relu}}};
    spec.trunk = nn::NetSpec{{nn::LayerSpec{1, 4, nn::Activation::Relu}}};
    const std::size_t n = spec.param_count();

    VariationalParams vp{normal_vector(n, 101, 0.7), normal_vector(n, 102, 0.4)};
    vp.delta.array() -= 2.0;

    TripletDataset ds;
    ds.per_input = 4;
    const Vector u = normal_vector(3 * 5, 103, 1.0);
    ds.inputs = Eigen::Map<const Matrix>(u.data(), 3, 5);
    CounterRng rng(104);
    ds.locations.resize(12, 1);
    for (Eigen::Index i = 0; i < 12; ++i) ds.locations(i, 0) = rng.uniform();
    ds.targets = normal_vector(12, 105, 0.5);
    const ModelBatch batch = ModelBatch::all(ds);

    std::vector<NoiseDraw> draws;
    for (std::uint64_t l = 0; l < 3; ++l) draws.push_back(NoiseDraw::generate(n, 106, l));
    const LossOptions opts{1.0, false};

    Vector gm, gd;
    elbo_loss(spec, vp, batch, draws, opts, &gm, &gd);
    auto loss = [&](const VariationalParams& p) { return elbo_loss(spec, p, batch, draws, opts).total; };

    const double h = 1e-5;
    double worst = 0.0;
    for (Eigen::Index i = 0; i < vp.mu.size(); ++i) {
        for (int which = 0; which < 2; ++which) {
            VariationalParams a = vp, b = vp;
            Vector& pa = which == 0 ? a.mu : a.delta;
            Vector& pb = which == 0 ? b.mu : b.delta;
            pa[i] += h;
            pb[i] -= h;
            const double fd = (loss(a) - loss(b)) / (2 * h);
            const double an = which == 0 ? gm[i] : gd[i];
            const double scale = std::max({std::abs(fd), std::abs(an), 1e-8});
            worst = std::max(worst, std::abs(fd - an) / scale);
        }
    }
    const double t = seconds_since(start);
    std::ostringstream d;
    d << n << " params, worst relative error " << worst << ", " << t << " s";
    return {worst < 1e-4 && t < 10.0, d.str()};
}

Outcome kl_oracle() {
    const auto start = Clock::now();
    const std::size_t n = 6;
    const std::size_t samples = 1000000;
    double worst = 0.0;
    for (std::uint64_t trial = 0; trial < 20; ++trial) {
        CounterRng rng(split_key(7, trial));
        VariationalParams vp{Vector(n), Vector(n)};
        for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(n); ++i) {
            vp.mu[i] = 2.0 * rng.uniform() - 1.0;
            vp.delta[i] = softplus_inverse(0.2 + 1.5 * rng.uniform());
        }
        const double closed = complexity_cost(vp);
        double sum = 0.0;
        for (std::size_t s = 0; s < samples; ++s)
            sum += complexity_cost_sampled(vp, NoiseDraw::generate(n, 500 + trial, s));
        worst = std::max(worst, std::abs(sum / static_cast<double>(samples) / closed - 1.0));
    }
    const double t = seconds_since(start);
    std::ostringstream d;
    d << "worst relative gap " << worst << " over 20 trials, " << t << " s";
    return {worst < 0.01 && t < 30.0, d.str()};
}

Outcome solver_oracles() {
    const auto start = Clock::now();

    const SensorGrid two = SensorGrid::from_points({0.0, 1.0});
    const InputFunction fu(two, {0.5, -0.25});
    auto end = [&](double h) { return solve_pendulum(fu, {0.0, 1.0}, {1.0, 0.0}, {h}).values.back(); };
    const double e1 = std::abs(end(0.1) - end(0.05));
    const double e2 = std::abs(end(0.05) - end(0.025));
    const double order = std::log2(e1 / e2);

    const SensorGrid x = SensorGrid::standard();
    const std::vector<double> t = unit_time_grid(100);
    const FieldSolution advd =
        solve_advection_diffusion(InputFunction::from(x, [](double v) { return std::sin(2.0 * pi * v); }), x, t);
    double advd_err = 0.0;
    for (std::size_t i = 0; i < x.count(); ++i)
        for (std::size_t j = 0; j < t.size(); ++j) {
            const double exact = std::exp(-0.1 * 4.0 * pi * pi * t[j]) * std::sin(2.0 * pi * (x[i] - t[j]));
            advd_err = std::max(advd_err, std::abs(advd.values(static_cast<Eigen::Index>(i),
                                                               static_cast<Eigen::Index>(j)) - exact));
        }

    const double dcoef = 0.01;
    const FieldSolution dr = solve_diffusion_reaction(
        InputFunction::from(x, [](double v) { return std::sin(pi * v); }), {dcoef, 0.0, 1e6}, x, t);
    const double lambda = dcoef * pi * pi;
    double dr_err = 0.0, peak = 0.0;
    for (std::size_t i = 0; i < x.count(); ++i)
        for (std::size_t j = 0; j < t.size(); ++j) {
            const double exact = (1.0 - std::exp(-lambda * t[j])) * std::sin(pi * x[i]) / lambda;
            dr_err = std::max(dr_err, std::abs(dr.values(static_cast<Eigen::Index>(i),
                                                         static_cast<Eigen::Index>(j)) - exact));
            peak = std::max(peak, std::abs(exact));
        }

    const double secs = seconds_since(start);
    std::ostringstream d;
    d << "rk4 order " << order << ", advection max error " << advd_err << ", diffusion relative error "
      << dr_err / peak << ", " << secs << " s";
    return {order >= 3.8 && advd_err < 1e-10 && dr_err / peak < 0.02 && secs < 60.0, d.str()};
}

RunConfig desk_config(const fs::path& out) {
    RunConfig c = preset_config(Problem::Antiderivative);
    c.out = out;
    c.threads = 1;
    c.dataset.train_inputs = 300;
    c.dataset.per_input = 10;
    c.dataset.test_inputs = 500;
    c.train.epochs = 5000;
    c.train.progress_every = 1000;
    c.validate();
    return c;
}

struct DeskRuns {
    EvaluateResult vb;
    EvaluateResult baseline;
    double vb_seconds = 0.0;
    double baseline_seconds = 0.0;
    fs::path report;
};

DeskRuns run_desk(const fs::path& workdir) {
    DeskRuns r;
    const fs::path vb_dir = workdir / "ad_vb";
    const fs::path base_dir = workdir / "ad_baseline";
    for (const fs::path& d : {vb_dir, base_dir}) {
        fs::remove_all(d);
        fs::create_directories(d);
    }

    const RunConfig vb_cfg = desk_config(vb_dir);
    const GenDataResult data = cmd_gen_data(vb_cfg);
    auto start = Clock::now();
    cmd_train(vb_cfg);
    r.vb_seconds = seconds_since(start);
    r.vb = cmd_evaluate(vb_cfg, vb_dir / "checkpoint.vbdo", data.test_path);

    RunConfig base_cfg = desk_config(base_dir);
    base_cfg.model.baseline = true;
    start = Clock::now();
    cmd_train(base_cfg, {data.train_path, {}});
    r.baseline_seconds = seconds_since(start);
    r.baseline = cmd_evaluate(base_cfg, base_dir / "checkpoint.vbdo", data.test_path);

    RunConfig rep_cfg = desk_config(workdir);
    r.report = cmd_report(rep_cfg, {vb_dir, base_dir});
    return r;
}

Outcome desk_training(const DeskRuns& r) {
    std::ostringstream d;
    d << "nmse " << r.vb.nmse << " (limit 0.01), training " << r.vb_seconds << " s";
    return {r.vb.nmse <= 0.01, d.str()};
}

Outcome baseline_comparison(const DeskRuns& r) {
    const std::string report = slurp(r.report);
    const bool both = report.find(",ad,vb,") != std::string::npos &&
                      report.find(",ad,baseline,") != std::string::npos;
    std::ostringstream d;
    d << "vb nmse " << r.vb.nmse << ", baseline nmse " << r.baseline.nmse << " (limit 0.02), baseline training "
      << r.baseline_seconds << " s, report " << (both ? "lists both" : "incomplete");
    return {r.vb.nmse <= 0.02 && r.baseline.nmse <= 0.02 && both, d.str()};
}

Outcome calibration(const DeskRuns& r) {
    const auto& cov = r.vb.coverage;
    bool monotone = cov.size() == 3;
    for (std::size_t i = 1; i < cov.size(); ++i) monotone = monotone && cov[i - 1].second <= cov[i].second;
    const PredictiveEnsemble& e = r.vb.ensemble;
    double worst = 0.0;
    for (Eigen::Index q = 0; q < e.mean.size(); ++q) {
        const double gap = std::abs(e.total_var[q] - (e.epistemic_var[q] + e.aleatoric_var[q]));
        worst = std::max(worst, gap / std::max(1.0, e.total_var[q]));
    }
    std::ostringstream d;
    d << "coverage";
    for (const auto& [level, frac] : cov) d << ' ' << level << "->" << frac;
    d << ", variance decomposition gap " << worst;
    return {monotone && worst <= 1e-12, d.str()};
}

Outcome determinism(const fs::path& workdir) {
    const fs::path a = workdir / "det_a";
    const fs::path b = workdir / "det_b";
    for (const fs::path& d : {a, b}) {
        fs::remove_all(d);
        fs::create_directories(d);
    }
    RunConfig cfg = preset_config(Problem::Antiderivative);
    cfg.threads = 1;
    cfg.seed = 11;
    cfg.dataset.train_inputs = 40;
    cfg.dataset.per_input = 10;
    cfg.dataset.test_inputs = 2;
    cfg.train.epochs = 50;
    cfg.train.batch_size = 100;
    cfg.out = a;
    const GenDataResult data = cmd_gen_data(cfg);
    cmd_train(cfg, {data.train_path, {}});
    cfg.out = b;
    cmd_train(cfg, {data.train_path, {}});
    const bool ckp = slurp(a / "checkpoint.vbdo") == slurp(b / "checkpoint.vbdo");
    const bool trace = slurp(a / "trace.csv") == slurp(b / "trace.csv");
    std::ostringstream d;
    d << "checkpoints " << (ckp ? "identical" : "differ") << ", traces " << (trace ? "identical" : "differ");
    return {ckp && trace, d.str()};
}

void report(int id, const std::string& name, const std::function<Outcome()>& check, bool& all) {
    Outcome o;
    try {
        o = check();
    } catch (const std::exception& e) {
        o = {false, std::string("threw: ") + e.what()};
    }
    all = all && o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << name << "): " << o.detail << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance checks"};
    fs::path workdir = fs::temp_directory_path() / "vbdo_acceptance";
    bool skip_training = false;
    app.add_option("--workdir", workdir, "Scratch directory for training runs");
    app.add_flag("--skip-training", skip_training, "Report criteria 4-6 as skipped (FAIL)");
    CLI11_PARSE(app, argc, argv);
    fs::create_directories(workdir);
    set_thread_count(1);

    bool all = true;
    report(1, "gradient correctness", gradient_check, all);
    report(2, "KL oracle", kl_oracle, all);
    report(3, "solver oracles", solver_oracles, all);

    std::optional<DeskRuns> desk;
    std::string desk_error = "skipped";
    if (!skip_training) {
        try {
            desk = run_desk(workdir);
        } catch (const std::exception& e) {
            desk_error = std::string("threw: ") + e.what();
        }
    }
    auto gated = [&](Outcome (*f)(const DeskRuns&)) {
        return [&, f]() { return desk ? f(*desk) : Outcome{false, desk_error}; };
    };
    report(4, "desk-scale AD training", gated(desk_training), all);
    report(5, "baseline comparison", gated(baseline_comparison), all);
    report(6, "calibration structure", gated(calibration), all);
    report(7, "determinism", [&] { return determinism(workdir); }, all);
    return all ? 0 : 1;
}
