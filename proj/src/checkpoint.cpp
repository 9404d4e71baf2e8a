#include "vbdo/checkpoint.hpp"

#include "binary_io.hpp"
#include "vbdo/error.hpp"

namespace vbdo {

namespace {

void write_net(io::Writer& w, const nn::NetSpec& net) {
    w.u32(static_cast<std::uint32_t>(net.layers.size()));
    for (const auto& l : net.layers) {
        w.u32(static_cast<std::uint32_t>(l.in_dim));
        w.u32(static_cast<std::uint32_t>(l.out_dim));
        w.u8(l.activation == nn::Activation::Relu ? 1 : 0);
    }
}

nn::NetSpec read_net(io::Reader& r) {
    nn::NetSpec net;
    const std::uint32_t n = r.u32();
    if (n > 4096) throw FormatError(r.name() + ": malformed network descriptor");
    for (std::uint32_t i = 0; i < n; ++i) {
        nn::LayerSpec l;
        l.in_dim = r.u32();
        l.out_dim = r.u32();
        const std::uint8_t act = r.u8();
        if (act > 1 || l.in_dim == 0 || l.out_dim == 0) throw FormatError(r.name() + ": malformed layer descriptor");
        l.activation = act == 1 ? nn::Activation::Relu : nn::Activation::Linear;
        net.layers.push_back(l);
    }
    return net;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckp, const std::filesystem::path& path) {
    ckp.spec.validate();
    ckp.params.validate();
    require(ckp.params.size() == ckp.spec.param_count(), "checkpoint: parameters do not match the model");
    io::Writer w;
    w.magic("VBDOCKP1");
    w.u8(kCheckpointVersion);
    w.u8(ckp.spec.merge == MergeMode::Hadamard ? 0 : 1);
    w.u8(ckp.spec.baseline ? 1 : 0);
    w.f64(ckp.spec.sigma_floor);
    w.f64(ckp.spec.baseline_sigma);
    write_net(w, ckp.spec.branch);
    write_net(w, ckp.spec.trunk);
    write_net(w, ckp.spec.head());
    w.u64(ckp.params.size());
    w.vec(ckp.params.mu);
    w.vec(ckp.params.delta);
    w.u8(ckp.norm ? 1 : 0);
    if (ckp.norm) {
        w.u32(static_cast<std::uint32_t>(ckp.norm->u_mean.size()));
        w.vec(ckp.norm->u_mean);
        w.vec(ckp.norm->u_std);
        w.f64(ckp.norm->s_mean);
        w.f64(ckp.norm->s_std);
    }
    w.u8(ckp.trainer ? 1 : 0);
    if (ckp.trainer) {
        const auto& t = *ckp.trainer;
        w.u64(t.epochs_done);
        w.u64(t.adam.step);
        const auto n = static_cast<Eigen::Index>(ckp.params.size());
        for (const Vector* v : {&t.adam.m_mu, &t.adam.v_mu, &t.adam.m_delta, &t.adam.v_delta}) {
            if (v->size() == n)
                w.vec(*v);
            else
                w.vec(Vector::Zero(n));
        }
        w.u64(t.trace.epochs.size());
        for (const auto& e : t.trace.epochs) {
            w.u64(e.epoch);
            w.f64(e.total);
            w.f64(e.kl);
            w.f64(e.nll);
        }
    }
    w.finish(path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    io::Reader r(path, "VBDOCKP1");
    r.version(kCheckpointVersion);
    Checkpoint c;
    const std::uint8_t merge = r.u8();
    const std::uint8_t baseline = r.u8();
    if (merge > 1 || baseline > 1) throw FormatError(r.name() + ": malformed model flags");
    c.spec.merge = merge == 0 ? MergeMode::Hadamard : MergeMode::Dot;
    c.spec.baseline = baseline == 1;
    c.spec.sigma_floor = r.f64();
    c.spec.baseline_sigma = r.f64();
    c.spec.branch = read_net(r);
    c.spec.trunk = read_net(r);
    const nn::NetSpec head = read_net(r);
    try {
        c.spec.validate();
    } catch (const ArgumentError& e) {
        throw FormatError(r.name() + ": invalid model descriptor: " + e.what());
    }
    if (!(head == c.spec.head())) throw FormatError(r.name() + ": output head descriptor is inconsistent");
    const std::uint64_t n = r.u64();
    if (n != c.spec.param_count()) throw FormatError(r.name() + ": dimension mismatch in parameter block");
    c.params.mu = r.vec(n);
    c.params.delta = r.vec(n);
    const std::uint8_t has_norm = r.u8();
    if (has_norm > 1) throw FormatError(r.name() + ": malformed normalization flag");
    if (has_norm) {
        const std::uint32_t s = r.u32();
        if (s != c.spec.sensors()) throw FormatError(r.name() + ": normalization statistics do not match sensors");
        NormStats st;
        st.u_mean = r.vec(s);
        st.u_std = r.vec(s);
        st.s_mean = r.f64();
        st.s_std = r.f64();
        c.norm = st;
    }
    const std::uint8_t has_trainer = r.u8();
    if (has_trainer > 1) throw FormatError(r.name() + ": malformed trainer flag");
    if (has_trainer) {
        TrainerState t;
        t.epochs_done = r.u64();
        t.adam.step = r.u64();
        t.adam.m_mu = r.vec(n);
        t.adam.v_mu = r.vec(n);
        t.adam.m_delta = r.vec(n);
        t.adam.v_delta = r.vec(n);
        const std::uint64_t records = r.u64();
        if (records > t.epochs_done) throw FormatError(r.name() + ": trace longer than the epoch counter");
        t.trace.epochs.resize(records);
        for (auto& e : t.trace.epochs) {
            e.epoch = r.u64();
            e.total = r.f64();
            e.kl = r.f64();
            e.nll = r.f64();
        }
        c.trainer = std::move(t);
    }
    r.expect_end();
    return c;
}

}  // namespace vbdo
