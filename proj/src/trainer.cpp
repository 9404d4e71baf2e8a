#include "vbdo/trainer.hpp"

#include "vbdo/error.hpp"
#include "vbdo/rng.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>

namespace vbdo {

void TrainConfig::validate() const {
    require(learning_rate >= 0.0 && std::isfinite(learning_rate), "learning rate must be non-negative");
    require(n_tilde >= 1, "n_tilde must be positive");
    require(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0, "moment decay rates must lie in (0, 1)");
    require(epsilon > 0.0, "optimizer epsilon must be positive");
    require(kl_scale >= 0.0, "kl_scale must be non-negative");
    require(initial_sigma > 0.0, "initial sigma must be positive");
    require(checkpoint_every == 0 || !checkpoint_path.empty(), "checkpoint cadence set without a checkpoint path");
}

namespace {

constexpr std::uint64_t kNoiseStream = 0x6e6f697365ULL;
constexpr std::uint64_t kShuffleStream = 0x73687566ULL;

void check_compatible(const DeepONetSpec& spec, const TripletDataset& ds) {
    spec.validate();
    ds.validate();
    require(ds.has_targets(), "training data has no targets");
    require(ds.rows() > 0, "training data is empty");
    require(ds.sensors() == spec.sensors(), "dataset sensor count does not match the branch input");
    require(ds.y_dim() == spec.y_dim(), "dataset location dimension does not match the trunk input");
}

void adam_update(Vector& param, const Vector& g, Vector& m, Vector& v, const TrainConfig& cfg, std::uint64_t step) {
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseAbs2();
    param.array() -= cfg.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg.epsilon);
}

Checkpoint make_checkpoint(const DeepONetSpec& spec, const TripletDataset& ds, const VariationalParams& params,
                           const TrainerState& state) {
    return Checkpoint{spec, params, ds.norm, state};
}

}  // namespace

TrainResult train(const DeepONetSpec& spec, const TripletDataset& ds, const TrainConfig& cfg) {
    check_compatible(spec, ds);
    cfg.validate();
    VariationalParams params = init_variational(spec.nets(), cfg.seed, {cfg.initial_sigma});
    if (spec.baseline) params.delta.setConstant(kFrozenDelta);
    TrainerState state;
    const auto n = static_cast<Eigen::Index>(params.size());
    state.adam = {Vector::Zero(n), Vector::Zero(n), Vector::Zero(n), Vector::Zero(n), 0};
    return train_from(spec, ds, cfg, std::move(params), std::move(state));
}

TrainResult train_from(const DeepONetSpec& spec, const TripletDataset& ds, const TrainConfig& cfg,
                       VariationalParams params, TrainerState state) {
    check_compatible(spec, ds);
    cfg.validate();
    params.validate();
    require(params.size() == spec.param_count(), "parameters do not match the model");
    const auto n = static_cast<Eigen::Index>(params.size());
    for (Vector* v : {&state.adam.m_mu, &state.adam.v_mu, &state.adam.m_delta, &state.adam.v_delta})
        if (v->size() != n) *v = Vector::Zero(n);

    const std::size_t rows = ds.rows();
    const bool full_batch = cfg.batch_size == 0 || cfg.batch_size >= rows;
    const std::size_t batch_rows = full_batch ? rows : cfg.batch_size;
    const std::size_t draws_per_step = spec.baseline ? 1 : cfg.n_tilde;
    const std::uint64_t noise_root = split_key(cfg.seed, kNoiseStream);
    const double kl_scale = cfg.kl_policy == KlScalePolicy::Fixed
                                ? cfg.kl_scale
                                : static_cast<double>(batch_rows) / static_cast<double>(rows);
    const LossOptions loss_opts{kl_scale, cfg.sampled_kl};

    ModelBatch full;
    if (full_batch) full = ModelBatch::all(ds);
    std::vector<std::size_t> order(rows);

    const auto start = std::chrono::steady_clock::now();
    std::vector<NoiseDraw> draws(draws_per_step);
    Vector g_mu, g_delta;

    auto save_state = [&](const VariationalParams& p, const TrainerState& s) {
        if (!cfg.checkpoint_path.empty()) save_checkpoint(make_checkpoint(spec, ds, p, s), cfg.checkpoint_path);
    };

    for (std::uint64_t e = 0; e < cfg.epochs; ++e) {
        const std::uint64_t epoch = state.epochs_done + 1;
        if (!full_batch) {
            std::iota(order.begin(), order.end(), std::size_t{0});
            CounterRng rng = CounterRng(split_key(cfg.seed, kShuffleStream)).split(epoch);
            for (std::size_t i = rows; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
        }
        EpochRecord rec{epoch, 0.0, 0.0, 0.0, 0.0};
        for (std::size_t begin = 0; begin < rows; begin += batch_rows) {
            const std::size_t end = std::min(rows, begin + batch_rows);
            const ModelBatch mb = full_batch ? ModelBatch{} : ModelBatch::from_rows(ds, {order.data() + begin, end - begin});
            const ModelBatch& batch = full_batch ? full : mb;

            const std::uint64_t step = state.adam.step + 1;
            const std::uint64_t step_seed = split_key(noise_root, step);
            for (std::size_t l = 0; l < draws_per_step; ++l) draws[l] = NoiseDraw::generate(params.size(), step_seed, l);

            LossTerms terms;
            try {
                terms = elbo_loss(spec, params, batch, draws, loss_opts, &g_mu, &g_delta);
            } catch (const DivergenceError& err) {
                save_state(params, state);
                throw DivergenceError(std::string(err.what()) + " at epoch " + std::to_string(epoch));
            }
            rec.total += terms.total;
            rec.kl += kl_scale * terms.kl;
            rec.nll += terms.nll;

            state.adam.step = step;
            if (cfg.optimizer == OptimizerKind::Adam) {
                adam_update(params.mu, g_mu, state.adam.m_mu, state.adam.v_mu, cfg, step);
                if (!spec.baseline) adam_update(params.delta, g_delta, state.adam.m_delta, state.adam.v_delta, cfg, step);
            } else {
                params.mu -= cfg.learning_rate * g_mu;
                if (!spec.baseline) params.delta -= cfg.learning_rate * g_delta;
            }
            if (!params.mu.allFinite() || !params.delta.allFinite())
                throw DivergenceError("training diverged: non-finite parameters at epoch " + std::to_string(epoch));
        }
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        state.trace.epochs.push_back(rec);
        state.epochs_done = epoch;
        if (cfg.progress_every && epoch % cfg.progress_every == 0)
            std::cerr << "epoch " << epoch << "  loss " << rec.total << "  kl " << rec.kl << "  nll " << rec.nll
                      << "  " << std::fixed << std::setprecision(1) << rec.seconds << "s" << std::defaultfloat
                      << std::setprecision(6) << '\n';
        if (cfg.checkpoint_every && epoch % cfg.checkpoint_every == 0) save_state(params, state);
    }
    return TrainResult{params, state.trace, std::move(state)};
}

TrainResult resume(const std::filesystem::path& checkpoint, const TripletDataset& ds, const TrainConfig& cfg,
                   const std::optional<DeepONetSpec>& expected) {
    Checkpoint ckp = load_checkpoint(checkpoint);
    if (expected && !(*expected == ckp.spec))
        throw ArgumentError("resume: checkpoint network does not match the configured network (spec mismatch)");
    if (!ckp.trainer) throw ArgumentError("resume: checkpoint carries no trainer state");
    if (!(ds.norm == ckp.norm)) throw ArgumentError("resume: dataset normalization differs from the checkpoint");
    return train_from(ckp.spec, ds, cfg, std::move(ckp.params), std::move(*ckp.trainer));
}

void write_trace_csv(const TrainTrace& trace, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string());
    out << "epoch,total_loss,kl,nll\n" << std::setprecision(17);
    for (const auto& e : trace.epochs) out << e.epoch << ',' << e.total << ',' << e.kl << ',' << e.nll << '\n';
    if (!out) throw IoError("write failed: " + path.string());
}

void write_timing_csv(const TrainTrace& trace, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string());
    out << "epoch,seconds\n" << std::setprecision(9);
    for (const auto& e : trace.epochs) out << e.epoch << ',' << e.seconds << '\n';
    if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace vbdo
