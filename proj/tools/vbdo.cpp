#include "vbdo/config.hpp"
#include "vbdo/error.hpp"
#include "vbdo/parallel.hpp"
#include "vbdo/pipeline.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

struct Globals {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> threads;
    std::string out;
    std::string problem;
    std::vector<std::string> sets;
};

vbdo::RunConfig resolve(const Globals& g, const std::vector<std::string>& extra = {}) {
    std::vector<std::string> overrides;
    if (!g.problem.empty()) overrides.push_back("problem=" + g.problem);
    overrides.insert(overrides.end(), g.sets.begin(), g.sets.end());
    overrides.insert(overrides.end(), extra.begin(), extra.end());
    vbdo::RunConfig cfg = vbdo::resolve_config(g.config, overrides);
    if (g.seed) cfg.seed = *g.seed;
    if (!g.out.empty()) cfg.out = g.out;

    std::size_t threads = cfg.threads;
    if (g.threads) {
        threads = *g.threads;
    } else if (const char* env = std::getenv("VBDO_THREADS")) {
        try {
            threads = std::stoul(env);
        } catch (const std::exception&) {
            throw vbdo::ArgumentError(std::string("VBDO_THREADS is not a number: ") + env);
        }
    }
    vbdo::require(threads >= 1, "thread count must be at least 1");
    cfg.threads = threads;
    vbdo::set_thread_count(threads);
    cfg.validate();
    return cfg;
}

int exit_code(vbdo::ErrorKind kind) {
    switch (kind) {
        case vbdo::ErrorKind::Argument: return 2;
        case vbdo::ErrorKind::Numeric:
        case vbdo::ErrorKind::Divergence: return 3;
        case vbdo::ErrorKind::Io:
        case vbdo::ErrorKind::Format: return 4;
    }
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Variational Bayes DeepONet toolkit"};
    app.require_subcommand(1);
    app.fallthrough();

    Globals g;
    app.add_option("--config", g.config, "JSON config file");
    app.add_option("--seed", g.seed, "Global seed");
    app.add_option("--threads", g.threads, "Worker threads (falls back to VBDO_THREADS)");
    app.add_option("--out", g.out, "Output directory");
    app.add_option("--problem", g.problem, "Preset: ad, pendulum, dr, advd");
    app.add_option("--set", g.sets, "Override a config key, e.g. train.epochs=100");

    auto* gen = app.add_subcommand("gen-data", "Generate training and test datasets");

    std::string data, checkpoint, test;
    bool baseline = false;
    auto* trn = app.add_subcommand("train", "Train a model");
    trn->add_option("--data", data, "Training dataset (default <out>/train.vbds)");
    trn->add_flag("--baseline", baseline, "Train the deterministic DeepONet variant");

    auto* res = app.add_subcommand("resume", "Continue training from a checkpoint");
    res->add_option("--data", data, "Training dataset (default <out>/train.vbds)");
    res->add_option("--checkpoint", checkpoint, "Checkpoint (default <out>/checkpoint.vbdo)");

    auto* eval = app.add_subcommand("evaluate", "NMSE, coverage and plot files on a test set");
    eval->add_option("--checkpoint", checkpoint, "Checkpoint (default <out>/checkpoint.vbdo)");
    eval->add_option("--test", test, "Test dataset (default <out>/test.vbds)");

    auto* pred = app.add_subcommand("predict", "Per-query predictive summaries");
    pred->add_option("--checkpoint", checkpoint, "Checkpoint (default <out>/checkpoint.vbdo)");
    pred->add_option("--queries", test, "Query dataset (default <out>/test.vbds)");

    vbdo::PdfQuery pdf_query;
    std::optional<std::size_t> x_index;
    auto* pdf = app.add_subcommand("pdf", "Predictive PDF at one grid location");
    pdf->add_option("--checkpoint", checkpoint, "Checkpoint (default <out>/checkpoint.vbdo)");
    pdf->add_option("--t", pdf_query.t_index, "1-based time index")->required();
    pdf->add_option("--x", x_index, "1-based space index (dr, advd)");

    std::vector<std::string> runs;
    auto* rep = app.add_subcommand("report", "Side-by-side metrics of evaluated runs");
    rep->add_option("runs", runs, "Run directories or metrics.json files")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        if (gen->parsed()) {
            vbdo::cmd_gen_data(resolve(g));
        } else if (trn->parsed()) {
            const auto cfg = resolve(g, baseline ? std::vector<std::string>{"model.baseline=true"}
                                                 : std::vector<std::string>{});
            vbdo::cmd_train(cfg, {data, {}});
        } else if (res->parsed()) {
            vbdo::cmd_resume(resolve(g), {data, checkpoint});
        } else if (eval->parsed()) {
            const auto r = vbdo::cmd_evaluate(resolve(g), checkpoint, test);
            std::cout << "nmse " << r.nmse << '\n';
            for (const auto& [level, frac] : r.coverage) std::cout << "coverage " << level << ' ' << frac << '\n';
        } else if (pred->parsed()) {
            vbdo::cmd_predict(resolve(g), checkpoint, test);
        } else if (pdf->parsed()) {
            pdf_query.x_index = x_index;
            std::cout << vbdo::cmd_pdf(resolve(g), checkpoint, pdf_query).string() << '\n';
        } else if (rep->parsed()) {
            std::cout << vbdo::cmd_report(resolve(g), {runs.begin(), runs.end()}).string() << '\n';
        }
    } catch (const vbdo::Error& e) {
        std::cerr << "vbdo: " << e.what() << '\n';
        return exit_code(e.kind());
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "vbdo: " << e.what() << '\n';
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "vbdo: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
