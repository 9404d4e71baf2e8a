#include "vbdo/config.hpp"

#include "vbdo/error.hpp"

#include <fstream>
#include <set>
#include <type_traits>

namespace vbdo {

using nlohmann::json;

DeepONetSpec RunConfig::model_spec() const {
    const auto act = nn::Activation::Relu;
    const std::size_t y_dim =
        (problem == Problem::DiffusionReaction || problem == Problem::AdvectionDiffusion) ? 2 : 1;
    DeepONetSpec s;
    s.branch = nn::NetSpec::dense(grf.sensors, model.branch.width, model.branch.depth, act);
    s.trunk = nn::NetSpec::dense(y_dim, model.trunk.width, model.trunk.depth, act);
    s.merge = model.merge;
    s.sigma_floor = model.sigma_floor;
    s.baseline = model.baseline;
    s.baseline_sigma = model.baseline_sigma;
    return s;
}

TrainConfig RunConfig::train_config() const {
    TrainConfig t = train;
    t.seed = seed;
    return t;
}

SensorGrid RunConfig::sensor_grid() const { return SensorGrid::uniform(0.0, 1.0, grf.sensors); }

void RunConfig::validate() const {
    require(grf.length_scale > 0.0, "grf.length_scale must be positive");
    require(grf.sensors >= 2, "grf.sensors must be at least 2");
    require(grf.jitter >= 0.0, "grf.jitter must be non-negative");
    require(solver.time_steps >= 2 && solver.space_points >= 3, "solver grids are too small");
    require(solver.diffusivity > 0.0, "solver.diffusivity must be positive");
    require(solver.pendulum_step > 0.0 && solver.pendulum_step <= 1e-3, "solver.pendulum_step must lie in (0, 1e-3]");
    require(solver.viscosity >= 0.0, "solver.viscosity must be non-negative");
    require(dataset.train_inputs >= 1 && dataset.per_input >= 1 && dataset.test_inputs >= 1,
            "dataset sizes must be positive");
    require(model.branch.width >= 1 && model.branch.depth >= 1 && model.trunk.width >= 1 && model.trunk.depth >= 1,
            "network sizes must be positive");
    require(model.branch.width == model.trunk.width, "branch and trunk widths must match");
    require(predict.samples >= 2, "predict.samples must be at least 2");
    require(predict.ci_level > 0.0 && predict.ci_level < 1.0, "predict.ci_level must lie in (0, 1)");
    require(predict.pdf_inputs >= 100, "predict.pdf_inputs must be at least 100");
    train_config().validate();
    model_spec().validate();
}

RunConfig preset_config(Problem p) {
    RunConfig c;
    c.problem = p;
    c.out = "runs/" + problem_name(p);
    switch (p) {
        case Problem::Antiderivative:
            c.dataset = {3000, 20, 10000, true, true};
            c.model.branch = c.model.trunk = {30, 3};
            c.train.epochs = 20000;
            break;
        case Problem::Pendulum:
            c.dataset = {3500, 20, 10000, true, true};
            c.model.branch = c.model.trunk = {25, 4};
            c.train.epochs = 20000;
            break;
        case Problem::DiffusionReaction:
            c.dataset = {500, 100, 100, false, false};
            c.model.branch = c.model.trunk = {25, 4};
            c.train.epochs = 50000;
            break;
        case Problem::AdvectionDiffusion:
            c.dataset = {1000, 100, 100, false, false};
            c.model.branch = c.model.trunk = {35, 3};
            c.train.epochs = 50000;
            break;
    }
    return c;
}

namespace {

std::string merge_name(MergeMode m) { return m == MergeMode::Hadamard ? "hadamard" : "dot"; }

MergeMode parse_merge(const std::string& s) {
    if (s == "hadamard") return MergeMode::Hadamard;
    if (s == "dot") return MergeMode::Dot;
    throw ArgumentError("model.merge must be 'hadamard' or 'dot'");
}

/// Reads known keys from an object and rejects anything else.
class Fields {
public:
    Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ArgumentError("config: '" + path_ + "' must be an object");
    }
    void finish() const {
        for (const auto& [k, v] : j_.items())
            if (!seen_.count(k)) throw ArgumentError("config: unknown key '" + prefix() + k + "'");
    }

    template <class T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        if (!j_.contains(key)) return;
        if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
            const json& v = j_.at(key);
            if (!v.is_number_unsigned())
                throw ArgumentError("config: '" + prefix() + key + "' must be a non-negative integer");
        }
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception& e) {
            throw ArgumentError("config: bad value for '" + prefix() + key + "': " + e.what());
        }
    }
    const json* object(const char* key) {
        seen_.insert(key);
        return j_.contains(key) ? &j_.at(key) : nullptr;
    }
    [[nodiscard]] std::string child(const char* key) const { return prefix() + key; }

private:
    [[nodiscard]] std::string prefix() const { return path_.empty() ? "" : path_ + "."; }
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

void read_net(const json& j, const std::string& path, NetConfig& n) {
    Fields f(j, path);
    f.get("width", n.width);
    f.get("depth", n.depth);
    f.finish();
}

}  // namespace

json to_json(const RunConfig& c) {
    const auto& t = c.train;
    return json{
        {"problem", problem_name(c.problem)},
        {"seed", c.seed},
        {"threads", c.threads},
        {"out", c.out.string()},
        {"grf", {{"length_scale", c.grf.length_scale}, {"sensors", c.grf.sensors}, {"jitter", c.grf.jitter}}},
        {"solver",
         {{"time_steps", c.solver.time_steps},
          {"space_points", c.solver.space_points},
          {"diffusivity", c.solver.diffusivity},
          {"reaction", c.solver.reaction},
          {"pendulum_step", c.solver.pendulum_step},
          {"viscosity", c.solver.viscosity}}},
        {"dataset",
         {{"train_inputs", c.dataset.train_inputs},
          {"per_input", c.dataset.per_input},
          {"test_inputs", c.dataset.test_inputs},
          {"normalize_inputs", c.dataset.normalize_inputs},
          {"normalize_targets", c.dataset.normalize_targets}}},
        {"model",
         {{"branch", {{"width", c.model.branch.width}, {"depth", c.model.branch.depth}}},
          {"trunk", {{"width", c.model.trunk.width}, {"depth", c.model.trunk.depth}}},
          {"merge", merge_name(c.model.merge)},
          {"sigma_floor", c.model.sigma_floor},
          {"baseline", c.model.baseline},
          {"baseline_sigma", c.model.baseline_sigma}}},
        {"train",
         {{"epochs", t.epochs},
          {"learning_rate", t.learning_rate},
          {"n_tilde", t.n_tilde},
          {"batch_size", t.batch_size},
          {"kl_policy", t.kl_policy == KlScalePolicy::Auto ? "auto" : "fixed"},
          {"kl_scale", t.kl_scale},
          {"sampled_kl", t.sampled_kl},
          {"optimizer", t.optimizer == OptimizerKind::Adam ? "adam" : "sgd"},
          {"beta1", t.beta1},
          {"beta2", t.beta2},
          {"epsilon", t.epsilon},
          {"initial_sigma", t.initial_sigma},
          {"checkpoint_every", t.checkpoint_every},
          {"progress_every", t.progress_every}}},
        {"predict",
         {{"samples", c.predict.samples},
          {"ci_level", c.predict.ci_level},
          {"ci_method", c.predict.ci_method == CiMethod::Moments ? "moments" : "empirical"},
          {"pdf_inputs", c.predict.pdf_inputs},
          {"report_inputs", c.predict.report_inputs}}},
    };
}

RunConfig apply_json(RunConfig c, const json& j) {
    Fields root(j, "");
    std::string problem = problem_name(c.problem);
    root.get("problem", problem);
    c.problem = parse_problem(problem);
    root.get("seed", c.seed);
    root.get("threads", c.threads);
    std::string out = c.out.string();
    root.get("out", out);
    c.out = out;
    if (const json* g = root.object("grf")) {
        Fields f(*g, "grf");
        f.get("length_scale", c.grf.length_scale);
        f.get("sensors", c.grf.sensors);
        f.get("jitter", c.grf.jitter);
        f.finish();
    }
    if (const json* s = root.object("solver")) {
        Fields f(*s, "solver");
        f.get("time_steps", c.solver.time_steps);
        f.get("space_points", c.solver.space_points);
        f.get("diffusivity", c.solver.diffusivity);
        f.get("reaction", c.solver.reaction);
        f.get("pendulum_step", c.solver.pendulum_step);
        f.get("viscosity", c.solver.viscosity);
        f.finish();
    }
    if (const json* d = root.object("dataset")) {
        Fields f(*d, "dataset");
        f.get("train_inputs", c.dataset.train_inputs);
        f.get("per_input", c.dataset.per_input);
        f.get("test_inputs", c.dataset.test_inputs);
        f.get("normalize_inputs", c.dataset.normalize_inputs);
        f.get("normalize_targets", c.dataset.normalize_targets);
        f.finish();
    }
    if (const json* m = root.object("model")) {
        Fields f(*m, "model");
        if (const json* b = f.object("branch")) read_net(*b, "model.branch", c.model.branch);
        if (const json* t = f.object("trunk")) read_net(*t, "model.trunk", c.model.trunk);
        std::string merge = merge_name(c.model.merge);
        f.get("merge", merge);
        c.model.merge = parse_merge(merge);
        f.get("sigma_floor", c.model.sigma_floor);
        f.get("baseline", c.model.baseline);
        f.get("baseline_sigma", c.model.baseline_sigma);
        f.finish();
    }
    if (const json* t = root.object("train")) {
        Fields f(*t, "train");
        auto& tr = c.train;
        f.get("epochs", tr.epochs);
        f.get("learning_rate", tr.learning_rate);
        f.get("n_tilde", tr.n_tilde);
        if (t->contains("batch_size") && t->at("batch_size").is_string()) {
            std::string b;
            f.get("batch_size", b);
            if (b != "full") throw ArgumentError("config: train.batch_size must be a count or \"full\"");
            tr.batch_size = 0;
        } else {
            f.get("batch_size", tr.batch_size);
        }
        std::string policy = tr.kl_policy == KlScalePolicy::Auto ? "auto" : "fixed";
        f.get("kl_policy", policy);
        if (policy != "auto" && policy != "fixed") throw ArgumentError("config: train.kl_policy must be auto or fixed");
        tr.kl_policy = policy == "auto" ? KlScalePolicy::Auto : KlScalePolicy::Fixed;
        f.get("kl_scale", tr.kl_scale);
        f.get("sampled_kl", tr.sampled_kl);
        std::string opt = tr.optimizer == OptimizerKind::Adam ? "adam" : "sgd";
        f.get("optimizer", opt);
        if (opt != "adam" && opt != "sgd") throw ArgumentError("config: train.optimizer must be adam or sgd");
        tr.optimizer = opt == "adam" ? OptimizerKind::Adam : OptimizerKind::Sgd;
        f.get("beta1", tr.beta1);
        f.get("beta2", tr.beta2);
        f.get("epsilon", tr.epsilon);
        f.get("initial_sigma", tr.initial_sigma);
        f.get("checkpoint_every", tr.checkpoint_every);
        f.get("progress_every", tr.progress_every);
        f.finish();
    }
    if (const json* p = root.object("predict")) {
        Fields f(*p, "predict");
        f.get("samples", c.predict.samples);
        f.get("ci_level", c.predict.ci_level);
        std::string method = c.predict.ci_method == CiMethod::Moments ? "moments" : "empirical";
        f.get("ci_method", method);
        if (method != "moments" && method != "empirical")
            throw ArgumentError("config: predict.ci_method must be moments or empirical");
        c.predict.ci_method = method == "moments" ? CiMethod::Moments : CiMethod::Empirical;
        f.get("pdf_inputs", c.predict.pdf_inputs);
        f.get("report_inputs", c.predict.report_inputs);
        f.finish();
    }
    root.finish();
    return c;
}

namespace {

/// "a.b.c=value" -> nested object; the value is parsed as JSON when possible.
json override_to_json(const std::string& kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw ArgumentError("override '" + kv + "' must look like key.path=value");
    const std::string path = kv.substr(0, eq);
    const std::string raw = kv.substr(eq + 1);
    json value = json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;
    json root = json::object();
    json* node = &root;
    std::size_t start = 0;
    for (;;) {
        const auto dot = path.find('.', start);
        const std::string key = path.substr(start, dot - start);
        if (key.empty()) throw ArgumentError("override '" + kv + "' has an empty key");
        if (dot == std::string::npos) {
            (*node)[key] = value;
            break;
        }
        node = &(*node)[key];
        start = dot + 1;
    }
    return root;
}

}  // namespace

RunConfig resolve_config(const std::filesystem::path& file, const std::vector<std::string>& overrides) {
    json file_json = json::object();
    if (!file.empty()) {
        std::ifstream in(file);
        if (!in) throw IoError("cannot open config " + file.string());
        file_json = json::parse(in, nullptr, false, true);
        if (file_json.is_discarded()) throw ArgumentError("config " + file.string() + " is not valid JSON");
        if (!file_json.is_object()) throw ArgumentError("config " + file.string() + " must hold a JSON object");
    }
    json merged = file_json;
    for (const auto& kv : overrides) merged.merge_patch(override_to_json(kv));

    std::string problem = "ad";
    if (merged.contains("problem")) {
        if (!merged["problem"].is_string()) throw ArgumentError("config: problem must be a string");
        problem = merged["problem"].get<std::string>();
    }
    RunConfig cfg = apply_json(preset_config(parse_problem(problem)), merged);
    cfg.validate();
    return cfg;
}

}  // namespace vbdo
