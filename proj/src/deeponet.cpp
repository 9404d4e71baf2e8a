#include "vbdo/deeponet.hpp"

#include "vbdo/error.hpp"
#include "vbdo/parallel.hpp"
#include "vbdo/rng.hpp"

#include <bit>
#include <cmath>
#include <numbers>
#include <string>
#include <unordered_map>

namespace vbdo {

Problem parse_problem(const std::string& name) {
    if (name == "ad") return Problem::Antiderivative;
    if (name == "pendulum") return Problem::Pendulum;
    if (name == "dr") return Problem::DiffusionReaction;
    if (name == "advd") return Problem::AdvectionDiffusion;
    throw ArgumentError("unknown problem preset '" + name + "' (expected ad, pendulum, dr or advd)");
}

std::string problem_name(Problem p) {
    switch (p) {
        case Problem::Antiderivative: return "ad";
        case Problem::Pendulum: return "pendulum";
        case Problem::DiffusionReaction: return "dr";
        case Problem::AdvectionDiffusion: return "advd";
    }
    return "?";
}

nn::NetSpec DeepONetSpec::head() const {
    const std::size_t in = merge == MergeMode::Hadamard ? merge_dim() : 1;
    return nn::NetSpec{{nn::LayerSpec{in, 2, nn::Activation::Linear}}};
}

std::size_t DeepONetSpec::trunk_offset() const { return nn::param_count(branch); }
std::size_t DeepONetSpec::head_offset() const { return trunk_offset() + nn::param_count(trunk); }
std::size_t DeepONetSpec::param_count() const { return head_offset() + nn::param_count(head()); }

void DeepONetSpec::validate() const {
    require(!branch.layers.empty() && !trunk.layers.empty(), "DeepONet needs non-empty branch and trunk nets");
    branch.validate();
    trunk.validate();
    require(branch.out_dim() == trunk.out_dim(), "branch and trunk outputs must have the same dimension");
    require(sigma_floor > 0.0, "sigma floor must be positive");
    require(baseline_sigma > 0.0, "baseline sigma must be positive");
}

DeepONetSpec preset_spec(Problem p) {
    using nn::Activation;
    using nn::NetSpec;
    DeepONetSpec s;
    switch (p) {
        case Problem::Antiderivative:
            s.branch = NetSpec::dense(100, 30, 3, Activation::Relu);
            s.trunk = NetSpec::dense(1, 30, 3, Activation::Relu);
            break;
        case Problem::Pendulum:
            s.branch = NetSpec::dense(100, 25, 4, Activation::Relu);
            s.trunk = NetSpec::dense(1, 25, 4, Activation::Relu);
            break;
        case Problem::DiffusionReaction:
            s.branch = NetSpec::dense(100, 25, 4, Activation::Relu);
            s.trunk = NetSpec::dense(2, 25, 4, Activation::Relu);
            break;
        case Problem::AdvectionDiffusion:
            s.branch = NetSpec::dense(100, 35, 3, Activation::Relu);
            s.trunk = NetSpec::dense(2, 35, 3, Activation::Relu);
            break;
    }
    return s;
}

double gaussian_nll(const GaussianOutput& out, double s) {
    const double r = (s - out.mu) / out.sigma;
    return 0.5 * std::log(2.0 * std::numbers::pi) + std::log(out.sigma) + 0.5 * r * r;
}

namespace {

struct RowHash {
    std::size_t operator()(const std::vector<double>& v) const noexcept {
        std::uint64_t h = 0x9e3779b97f4a7c15ULL;
        for (double x : v) h = mix64(h ^ std::bit_cast<std::uint64_t>(x));
        return static_cast<std::size_t>(h);
    }
};

}  // namespace

void ModelBatch::set_locations(const Matrix& raw) {
    std::unordered_map<std::vector<double>, std::size_t, RowHash> seen;
    std::vector<Eigen::Index> first;
    location_of.resize(static_cast<std::size_t>(raw.rows()));
    std::vector<double> key(static_cast<std::size_t>(raw.cols()));
    for (Eigen::Index i = 0; i < raw.rows(); ++i) {
        for (Eigen::Index c = 0; c < raw.cols(); ++c) key[static_cast<std::size_t>(c)] = raw(i, c);
        auto [it, inserted] = seen.try_emplace(key, first.size());
        if (inserted) first.push_back(i);
        location_of[static_cast<std::size_t>(i)] = it->second;
    }
    locations.resize(static_cast<Eigen::Index>(first.size()), raw.cols());
    for (std::size_t j = 0; j < first.size(); ++j) locations.row(static_cast<Eigen::Index>(j)) = raw.row(first[j]);
}

ModelBatch ModelBatch::from_rows(const TripletDataset& ds, std::span<const std::size_t> rows) {
    ModelBatch b;
    std::unordered_map<std::size_t, std::size_t> local;
    std::vector<std::size_t> order;
    b.input_of.reserve(rows.size());
    Matrix raw(static_cast<Eigen::Index>(rows.size()), ds.locations.cols());
    if (ds.has_targets()) b.targets.resize(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        require(rows[i] < ds.rows(), "batch row out of range");
        const std::size_t k = ds.input_of(rows[i]);
        auto [it, inserted] = local.try_emplace(k, order.size());
        if (inserted) order.push_back(k);
        b.input_of.push_back(it->second);
        raw.row(static_cast<Eigen::Index>(i)) = ds.locations.row(static_cast<Eigen::Index>(rows[i]));
        if (ds.has_targets()) b.targets[static_cast<Eigen::Index>(i)] = ds.targets[static_cast<Eigen::Index>(rows[i])];
    }
    b.set_locations(raw);
    b.inputs.resize(static_cast<Eigen::Index>(order.size()), ds.inputs.cols());
    for (std::size_t j = 0; j < order.size(); ++j)
        b.inputs.row(static_cast<Eigen::Index>(j)) = ds.inputs.row(static_cast<Eigen::Index>(order[j]));
    return b;
}

ModelBatch ModelBatch::from_range(const TripletDataset& ds, std::size_t begin, std::size_t end) {
    require(begin <= end && end <= ds.rows(), "batch range out of bounds");
    ModelBatch b;
    if (begin == end) {
        b.inputs.resize(0, ds.inputs.cols());
        b.locations.resize(0, ds.locations.cols());
        return b;
    }
    const std::size_t first = ds.input_of(begin);
    const std::size_t last = ds.input_of(end - 1);
    b.inputs = ds.inputs.middleRows(static_cast<Eigen::Index>(first), static_cast<Eigen::Index>(last - first + 1));
    b.input_of.resize(end - begin);
    for (std::size_t r = begin; r < end; ++r) b.input_of[r - begin] = ds.input_of(r) - first;
    b.set_locations(ds.locations.middleRows(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(end - begin)));
    if (ds.has_targets())
        b.targets = ds.targets.segment(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(end - begin));
    return b;
}

namespace {

struct SubParams {
    std::span<const double> branch, trunk, head;
};

SubParams split(const DeepONetSpec& spec, std::span<const double> params) {
    require(params.size() == spec.param_count(), "DeepONet parameter vector has the wrong length");
    return {params.subspan(0, spec.trunk_offset()),
            params.subspan(spec.trunk_offset(), spec.head_offset() - spec.trunk_offset()),
            params.subspan(spec.head_offset())};
}

}  // namespace

BatchOutput forward_batch(const DeepONetSpec& spec, std::span<const double> params, const ModelBatch& batch,
                          BatchCache* cache) {
    require(static_cast<std::size_t>(batch.inputs.cols()) == spec.sensors(),
            "input function has " + std::to_string(batch.inputs.cols()) + " sensors, model expects " +
                std::to_string(spec.sensors()));
    require(static_cast<std::size_t>(batch.locations.cols()) == spec.y_dim(),
            "location has dimension " + std::to_string(batch.locations.cols()) + ", model expects " +
                std::to_string(spec.y_dim()));
    require(batch.location_of.size() == batch.rows(), "batch index does not match its rows");
    const auto p = split(spec, params);
    BatchCache local;
    BatchCache& c = cache ? *cache : local;
    const nn::NetSpec head = spec.head();

    c.branch_out = nn::forward(spec.branch, p.branch, batch.inputs, cache ? &c.branch : nullptr);
    c.trunk_out = nn::forward(spec.trunk, p.trunk, batch.locations, cache ? &c.trunk : nullptr);
    const auto r = static_cast<Eigen::Index>(batch.rows());
    Matrix merged(r, spec.merge == MergeMode::Hadamard ? c.trunk_out.cols() : 1);
    for (Eigen::Index i = 0; i < r; ++i) {
        const auto k = static_cast<Eigen::Index>(batch.input_of[static_cast<std::size_t>(i)]);
        const auto j = static_cast<Eigen::Index>(batch.location_of[static_cast<std::size_t>(i)]);
        if (spec.merge == MergeMode::Hadamard)
            merged.row(i) = c.branch_out.row(k).cwiseProduct(c.trunk_out.row(j));
        else
            merged(i, 0) = c.branch_out.row(k).dot(c.trunk_out.row(j));
    }
    const Matrix out = nn::forward(head, p.head, merged, cache ? &c.head : nullptr);

    BatchOutput o{out.col(0), Vector(r)};
    c.delta = out.col(1);
    for (Eigen::Index i = 0; i < r; ++i)
        o.sigma[i] = spec.baseline ? spec.baseline_sigma : std::max(softplus(c.delta[i]), spec.sigma_floor);
    return o;
}

void backward_batch(const DeepONetSpec& spec, std::span<const double> params, const ModelBatch& batch,
                    const BatchCache& cache, const Vector& grad_mu, const Vector& grad_sigma,
                    std::span<double> grad) {
    require(grad.size() == spec.param_count(), "gradient buffer has the wrong length");
    const auto r = static_cast<Eigen::Index>(batch.rows());
    require(grad_mu.size() == r && grad_sigma.size() == r, "output gradient length mismatch");
    const auto p = split(spec, params);

    Matrix d_out(r, 2);
    d_out.col(0) = grad_mu;
    for (Eigen::Index i = 0; i < r; ++i) {
        const double d = cache.delta[i];
        const bool active = !spec.baseline && softplus(d) >= spec.sigma_floor;
        d_out(i, 1) = active ? grad_sigma[i] * softplus_derivative(d) : 0.0;
    }
    const Matrix d_merged =
        nn::backward(spec.head(), p.head, cache.head, d_out, grad.subspan(spec.head_offset()));

    Matrix d_trunk = Matrix::Zero(cache.trunk_out.rows(), cache.trunk_out.cols());
    Matrix d_branch = Matrix::Zero(cache.branch_out.rows(), cache.branch_out.cols());
    for (Eigen::Index i = 0; i < r; ++i) {
        const auto k = static_cast<Eigen::Index>(batch.input_of[static_cast<std::size_t>(i)]);
        const auto j = static_cast<Eigen::Index>(batch.location_of[static_cast<std::size_t>(i)]);
        if (spec.merge == MergeMode::Hadamard) {
            d_trunk.row(j) += d_merged.row(i).cwiseProduct(cache.branch_out.row(k));
            d_branch.row(k) += d_merged.row(i).cwiseProduct(cache.trunk_out.row(j));
        } else {
            d_trunk.row(j) += d_merged(i, 0) * cache.branch_out.row(k);
            d_branch.row(k) += d_merged(i, 0) * cache.trunk_out.row(j);
        }
    }
    nn::backward(spec.trunk, p.trunk, cache.trunk, d_trunk,
                 grad.subspan(spec.trunk_offset(), spec.head_offset() - spec.trunk_offset()));
    nn::backward(spec.branch, p.branch, cache.branch, d_branch, grad.subspan(0, spec.trunk_offset()));
}

GridOutput forward_grid(const DeepONetSpec& spec, std::span<const double> params, const Matrix& inputs,
                        const Matrix& locations) {
    require(static_cast<std::size_t>(inputs.cols()) == spec.sensors(), "forward_grid: sensor count mismatch");
    require(static_cast<std::size_t>(locations.cols()) == spec.y_dim(), "forward_grid: location dimension mismatch");
    const auto p = split(spec, params);
    const Matrix b = nn::forward(spec.branch, p.branch, inputs);
    const Matrix t = nn::forward(spec.trunk, p.trunk, locations);
    const Eigen::Index in = spec.merge == MergeMode::Hadamard ? b.cols() : 1;
    const Eigen::Map<const Matrix> w(p.head.data(), in, 2);
    const double b_mu = p.head[static_cast<std::size_t>(in * 2)];
    const double b_delta = p.head[static_cast<std::size_t>(in * 2 + 1)];

    GridOutput o;
    Matrix delta;
    if (spec.merge == MergeMode::Hadamard) {
        o.mu = (b * w.col(0).asDiagonal()) * t.transpose();
        delta = (b * w.col(1).asDiagonal()) * t.transpose();
    } else {
        const Matrix z = b * t.transpose();
        o.mu = w(0, 0) * z;
        delta = w(0, 1) * z;
    }
    o.mu.array() += b_mu;
    delta.array() += b_delta;
    if (spec.baseline)
        o.sigma = Matrix::Constant(delta.rows(), delta.cols(), spec.baseline_sigma);
    else
        o.sigma = delta.unaryExpr([&](double d) { return std::max(softplus(d), spec.sigma_floor); });
    return o;
}

GaussianOutput model_forward(const DeepONetSpec& spec, std::span<const double> params, std::span<const double> u,
                             std::span<const double> y) {
    ModelBatch b;
    b.inputs.resize(1, static_cast<Eigen::Index>(u.size()));
    for (std::size_t i = 0; i < u.size(); ++i) b.inputs(0, static_cast<Eigen::Index>(i)) = u[i];
    b.locations.resize(1, static_cast<Eigen::Index>(y.size()));
    for (std::size_t i = 0; i < y.size(); ++i) b.locations(0, static_cast<Eigen::Index>(i)) = y[i];
    b.input_of = {0};
    b.location_of = {0};
    const BatchOutput o = forward_batch(spec, params, b);
    return {o.mu[0], o.sigma[0]};
}

LossTerms elbo_loss(const DeepONetSpec& spec, const VariationalParams& vp, const ModelBatch& batch,
                    std::span<const NoiseDraw> draws, const LossOptions& opts, Vector* grad_mu,
                    Vector* grad_delta) {
    require(!draws.empty(), "elbo_loss: need at least one noise draw");
    require(batch.targets.size() == static_cast<Eigen::Index>(batch.rows()), "elbo_loss: batch has no targets");
    require(vp.size() == spec.param_count(), "elbo_loss: variational parameters do not match the model");
    const bool with_grad = grad_mu != nullptr;
    require(with_grad == (grad_delta != nullptr), "elbo_loss: pass both gradient buffers or neither");

    const std::size_t n_draws = draws.size();
    const auto n_params = static_cast<Eigen::Index>(vp.size());
    const bool use_kl = !spec.baseline;
    const double inv_draws = 1.0 / static_cast<double>(n_draws);
    const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);

    struct DrawResult {
        double nll = 0.0;
        double kl = 0.0;
        Vector g_mu, g_delta;
    };
    std::vector<DrawResult> results(n_draws);

    parallel_for(n_draws, [&](std::size_t l) {
        DrawResult& res = results[l];
        const Vector theta = sample_params(vp, draws[l]);
        BatchCache cache;
        const BatchOutput out = forward_batch(spec, as_span(theta), batch, with_grad ? &cache : nullptr);
        const Eigen::ArrayXd resid = (batch.targets - out.mu).array();
        const Eigen::ArrayXd inv_sigma = out.sigma.array().inverse();
        res.nll = (half_log_2pi + out.sigma.array().log() + 0.5 * (resid * inv_sigma).square()).sum();
        if (!std::isfinite(res.nll))
            throw DivergenceError("training diverged: non-finite likelihood in noise draw " + std::to_string(l));
        if (use_kl && opts.sampled_kl) res.kl = complexity_cost_sampled(vp, draws[l]);
        if (!with_grad) return;

        const Vector d_mu = (-resid * inv_sigma.square() * inv_draws).matrix();
        const Vector d_sigma = ((inv_sigma - resid.square() * inv_sigma.cube()) * inv_draws).matrix();
        Vector g_theta = Vector::Zero(n_params);
        backward_batch(spec, as_span(theta), batch, cache, d_mu, d_sigma, {g_theta.data(), vp.size()});
        Vector direct_mu = Vector::Zero(n_params);
        Vector direct_delta = Vector::Zero(n_params);
        if (use_kl && opts.sampled_kl)
            complexity_cost_sampled(vp, draws[l], opts.kl_scale * inv_draws, {g_theta.data(), vp.size()},
                                    {direct_mu.data(), vp.size()}, {direct_delta.data(), vp.size()});
        VariationalGradient g = backprop_variational(g_theta, vp, draws[l], direct_mu, direct_delta);
        res.g_mu = std::move(g.mu);
        res.g_delta = std::move(g.delta);
    });

    LossTerms terms;
    if (with_grad) {
        *grad_mu = Vector::Zero(n_params);
        *grad_delta = Vector::Zero(n_params);
    }
    for (std::size_t l = 0; l < n_draws; ++l) {
        terms.nll += results[l].nll;
        terms.kl += results[l].kl;
        if (with_grad) {
            *grad_mu += results[l].g_mu;
            *grad_delta += results[l].g_delta;
        }
    }
    terms.nll *= inv_draws;
    if (use_kl) {
        if (opts.sampled_kl) {
            terms.kl *= inv_draws;
        } else {
            terms.kl = complexity_cost(vp);
            if (with_grad)
                complexity_cost_gradient(vp, opts.kl_scale, {grad_mu->data(), vp.size()},
                                         {grad_delta->data(), vp.size()});
        }
    }
    terms.total = opts.kl_scale * terms.kl + terms.nll;
    if (!std::isfinite(terms.total)) throw DivergenceError("training diverged: non-finite loss");
    return terms;
}

}  // namespace vbdo
