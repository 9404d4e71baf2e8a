#include "vbdo/nn.hpp"

#include "vbdo/error.hpp"

#include <string>

namespace vbdo::nn {

namespace {

using RowMajorMap = Eigen::Map<const Matrix>;
using MutRowMajorMap = Eigen::Map<Matrix>;

void apply_activation(Activation act, Matrix& z) {
    if (act == Activation::Relu) z = z.cwiseMax(0.0);
}

}  // namespace

NetSpec NetSpec::dense(std::size_t in_dim, std::size_t width, std::size_t depth, Activation act) {
    NetSpec s;
    for (std::size_t i = 0; i < depth; ++i) s.layers.push_back({i == 0 ? in_dim : width, width, act});
    return s;
}

void NetSpec::validate() const {
    for (std::size_t i = 0; i < layers.size(); ++i) {
        require(layers[i].in_dim >= 1 && layers[i].out_dim >= 1, "layer dimensions must be positive");
        if (i > 0)
            require(layers[i].in_dim == layers[i - 1].out_dim,
                    "layer " + std::to_string(i) + " input does not chain to the previous output");
    }
}

FlatLayout::FlatLayout(const NetSpec& spec) {
    offsets_.reserve(spec.layers.size());
    for (const auto& l : spec.layers) {
        LayerOffsets o;
        o.weight = total_;
        o.bias = total_ + l.in_dim * l.out_dim;
        total_ = o.bias + l.out_dim;
        offsets_.push_back(o);
    }
}

std::size_t param_count(const NetSpec& spec) { return FlatLayout(spec).size(); }

Matrix forward(const NetSpec& spec, std::span<const double> params, const Matrix& x, ForwardCache* cache) {
    require(!spec.layers.empty(), "forward: empty network");
    require(static_cast<std::size_t>(x.cols()) == spec.in_dim(),
            "forward: input has " + std::to_string(x.cols()) + " columns, network expects " +
                std::to_string(spec.in_dim()));
    const FlatLayout layout(spec);
    require(params.size() == layout.size(), "forward: parameter vector has the wrong length");
    if (cache) {
        cache->inputs.resize(spec.layers.size());
        cache->pre.resize(spec.layers.size());
    }
    Matrix a = x;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const auto& l = spec.layers[i];
        const RowMajorMap w(params.data() + layout[i].weight, static_cast<Eigen::Index>(l.in_dim),
                            static_cast<Eigen::Index>(l.out_dim));
        const Eigen::Map<const Eigen::RowVectorXd> b(params.data() + layout[i].bias,
                                                     static_cast<Eigen::Index>(l.out_dim));
        Matrix z = a * w;
        z.rowwise() += b;
        if (cache) {
            cache->inputs[i] = std::move(a);
            cache->pre[i] = z;
        }
        apply_activation(l.activation, z);
        a = std::move(z);
    }
    return a;
}

Vector forward(const NetSpec& spec, std::span<const double> params, std::span<const double> x) {
    Matrix in(1, static_cast<Eigen::Index>(x.size()));
    for (std::size_t i = 0; i < x.size(); ++i) in(0, static_cast<Eigen::Index>(i)) = x[i];
    return forward(spec, params, in).row(0).transpose();
}

Matrix backward(const NetSpec& spec, std::span<const double> params, const ForwardCache& cache,
                const Matrix& upstream, std::span<double> grad) {
    const FlatLayout layout(spec);
    require(params.size() == layout.size() && grad.size() == layout.size(),
            "backward: parameter/gradient length mismatch");
    require(cache.inputs.size() == spec.layers.size() && cache.pre.size() == spec.layers.size(),
            "backward: cache does not match network");
    require(upstream.rows() == cache.pre.back().rows() &&
                static_cast<std::size_t>(upstream.cols()) == spec.out_dim(),
            "backward: upstream gradient shape mismatch");

    Matrix d = upstream;
    for (std::size_t i = spec.layers.size(); i-- > 0;) {
        const auto& l = spec.layers[i];
        if (l.activation == Activation::Relu) d = (cache.pre[i].array() > 0.0).select(d, 0.0);
        const RowMajorMap w(params.data() + layout[i].weight, static_cast<Eigen::Index>(l.in_dim),
                            static_cast<Eigen::Index>(l.out_dim));
        MutRowMajorMap gw(grad.data() + layout[i].weight, static_cast<Eigen::Index>(l.in_dim),
                          static_cast<Eigen::Index>(l.out_dim));
        Eigen::Map<Eigen::RowVectorXd> gb(grad.data() + layout[i].bias, static_cast<Eigen::Index>(l.out_dim));
        gw.noalias() += cache.inputs[i].transpose() * d;
        gb += d.colwise().sum();
        Matrix prev = d * w.transpose();
        d = std::move(prev);
    }
    return d;
}

}  // namespace vbdo::nn
