#pragma once

#include "vbdo/grf.hpp"

#include <span>
#include <vector>

namespace vbdo::nn {

enum class Activation { Relu, Linear };

struct LayerSpec {
    std::size_t in_dim = 1;
    std::size_t out_dim = 1;
    Activation activation = Activation::Linear;

    bool operator==(const LayerSpec&) const = default;
};

struct NetSpec {
    std::vector<LayerSpec> layers;

    /// `depth` layers of width `width`, all with `act`.
    static NetSpec dense(std::size_t in_dim, std::size_t width, std::size_t depth, Activation act);

    [[nodiscard]] std::size_t in_dim() const { return layers.front().in_dim; }
    [[nodiscard]] std::size_t out_dim() const { return layers.back().out_dim; }
    void validate() const;

    bool operator==(const NetSpec&) const = default;
};

/// Offsets of each layer's weight block (in_dim x out_dim, row-major) and bias
/// block inside a flat parameter vector.
struct LayerOffsets {
    std::size_t weight = 0;
    std::size_t bias = 0;
};

class FlatLayout {
public:
    explicit FlatLayout(const NetSpec& spec);
    [[nodiscard]] const LayerOffsets& operator[](std::size_t layer) const { return offsets_[layer]; }
    [[nodiscard]] std::size_t size() const noexcept { return total_; }

private:
    std::vector<LayerOffsets> offsets_;
    std::size_t total_ = 0;
};

std::size_t param_count(const NetSpec& spec);

/// Per-layer inputs and pre-activations of a batched forward pass.
struct ForwardCache {
    std::vector<Matrix> inputs;
    std::vector<Matrix> pre;
};

/// Batched forward pass; x holds one sample per row.
Matrix forward(const NetSpec& spec, std::span<const double> params, const Matrix& x,
               ForwardCache* cache = nullptr);

/// Single-sample convenience wrapper.
Vector forward(const NetSpec& spec, std::span<const double> params, std::span<const double> x);

/// Reverse pass. Parameter gradients are accumulated into `grad` (same layout
/// as params); the gradient w.r.t. the batch input is returned.
Matrix backward(const NetSpec& spec, std::span<const double> params, const ForwardCache& cache,
                const Matrix& upstream, std::span<double> grad);

}  // namespace vbdo::nn
