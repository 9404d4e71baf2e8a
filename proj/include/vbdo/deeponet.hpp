#pragma once

#include "vbdo/dataset.hpp"
#include "vbdo/nn.hpp"
#include "vbdo/variational.hpp"

#include <span>
#include <string>
#include <vector>

namespace vbdo {

enum class Problem { Antiderivative, Pendulum, DiffusionReaction, AdvectionDiffusion };

Problem parse_problem(const std::string& name);
std::string problem_name(Problem p);

/// How branch and trunk outputs reach the two-node head.
enum class MergeMode {
    Hadamard,  // elementwise product vector (merge_dim inputs to the head)
    Dot,       // scalar dot product (one input to the head)
};

struct DeepONetSpec {
    nn::NetSpec branch;
    nn::NetSpec trunk;
    MergeMode merge = MergeMode::Hadamard;
    double sigma_floor = 1e-6;
    /// Deterministic baseline: only the mu output is used and sigma is fixed.
    bool baseline = false;
    double baseline_sigma = 1.0;

    [[nodiscard]] std::size_t merge_dim() const { return branch.out_dim(); }
    [[nodiscard]] nn::NetSpec head() const;
    [[nodiscard]] std::size_t sensors() const { return branch.in_dim(); }
    [[nodiscard]] std::size_t y_dim() const { return trunk.in_dim(); }
    /// Branch, trunk, head parameters back to back.
    [[nodiscard]] std::size_t param_count() const;
    [[nodiscard]] std::size_t branch_offset() const { return 0; }
    [[nodiscard]] std::size_t trunk_offset() const;
    [[nodiscard]] std::size_t head_offset() const;
    [[nodiscard]] std::vector<nn::NetSpec> nets() const { return {branch, trunk, head()}; }
    void validate() const;

    bool operator==(const DeepONetSpec&) const = default;
};

/// Architectures of the four benchmarks (hidden ReLU stacks, two-node linear head).
DeepONetSpec preset_spec(Problem p);

struct GaussianOutput {
    double mu = 0.0;
    double sigma = 1.0;
};

/// -log N(s; mu, sigma^2).
double gaussian_nll(const GaussianOutput& out, double s);

/// Single query forward pass.
GaussianOutput model_forward(const DeepONetSpec& spec, std::span<const double> params,
                             std::span<const double> u, std::span<const double> y);

/// Rows of a TripletDataset prepared for batched evaluation. Each distinct
/// realization is stored once and the branch net runs once per realization.
struct ModelBatch {
    Matrix inputs;                     // k x sensors
    std::vector<std::size_t> input_of;  // per row, index into inputs
    Matrix locations;                  // distinct locations, u x d
    std::vector<std::size_t> location_of;  // per row, index into locations
    Vector targets;                    // r, may be empty

    [[nodiscard]] std::size_t rows() const noexcept { return input_of.size(); }
    [[nodiscard]] std::size_t location_index(std::size_t row) const noexcept { return location_of[row]; }
    /// Collapses repeated rows of `raw` (r x d) into `locations` and `location_of`.
    void set_locations(const Matrix& raw);
    static ModelBatch from_rows(const TripletDataset& ds, std::span<const std::size_t> rows);
    static ModelBatch from_range(const TripletDataset& ds, std::size_t begin, std::size_t end);
    static ModelBatch all(const TripletDataset& ds) { return from_range(ds, 0, ds.rows()); }
};

struct BatchCache {
    nn::ForwardCache branch;
    nn::ForwardCache trunk;
    nn::ForwardCache head;
    Matrix branch_out;  // k x merge_dim
    Matrix trunk_out;   // u x merge_dim
    Vector delta;       // raw head output, r
};

struct BatchOutput {
    Vector mu;
    Vector sigma;
};

BatchOutput forward_batch(const DeepONetSpec& spec, std::span<const double> params, const ModelBatch& batch,
                          BatchCache* cache = nullptr);

/// Accumulates parameter gradients given dL/dmu and dL/dsigma per row.
void backward_batch(const DeepONetSpec& spec, std::span<const double> params, const ModelBatch& batch,
                    const BatchCache& cache, const Vector& grad_mu, const Vector& grad_sigma,
                    std::span<double> grad);

struct GridOutput {
    Matrix mu;     // n x P
    Matrix sigma;  // n x P
};

/// Every input paired with every location. Since the head is linear in the
/// merged features, this reduces to one n x merge_dim x P product per output.
GridOutput forward_grid(const DeepONetSpec& spec, std::span<const double> params, const Matrix& inputs,
                        const Matrix& locations);

struct LossTerms {
    double total = 0.0;
    double kl = 0.0;
    double nll = 0.0;
};

struct LossOptions {
    double kl_scale = 1.0;
    /// Use the single-sample log-ratio estimator instead of the closed form.
    bool sampled_kl = false;
};

/// kl_scale * KL(q || p) + (1 / N) sum_draws sum_rows nll. When the gradient
/// pointers are non-null they receive d loss / d mu and d loss / d delta.
/// Draw evaluations run through parallel_for and are reduced in draw order.
LossTerms elbo_loss(const DeepONetSpec& spec, const VariationalParams& vp, const ModelBatch& batch,
                    std::span<const NoiseDraw> draws, const LossOptions& opts = {},
                    Vector* grad_mu = nullptr, Vector* grad_delta = nullptr);

}  // namespace vbdo
