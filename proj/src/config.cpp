#include "lilkit/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>

#include <fmt/format.h>

#include "lilkit/errors.hpp"

namespace lilkit {

using nlohmann::json;

namespace {

const std::set<std::string> kCommands{"check-conditions", "coupling", "ergodicity", "lil", "simulate"};

std::string task_key(const std::string& command) {
    std::string k = command;
    std::replace(k.begin(), k.end(), '-', '_');
    return k;
}

/// Reads typed fields from one JSON object and rejects keys nobody asked for.
class Section {
  public:
    Section(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
        if (!obj_.is_object()) throw ConfigError(fmt::format("{} must be an object", path_));
    }

    ~Section() noexcept(false) {
        if (std::uncaught_exceptions() > 0) return;
        for (const auto& [k, v] : obj_.items())
            if (!used_.count(k)) throw ConfigError(fmt::format("unknown key {}.{}", path_, k));
    }

    bool has(const std::string& key) const { return obj_.contains(key); }
    const json& raw(const std::string& key) {
        used_.insert(key);
        return obj_.at(key);
    }
    std::string where(const std::string& key) const { return path_ + "." + key; }

    void number(const std::string& key, double& out, double lo = -HUGE_VAL, double hi = HUGE_VAL) {
        if (!has(key)) return;
        const json& v = raw(key);
        if (!v.is_number()) throw ConfigError(fmt::format("{} must be a number", where(key)));
        const double x = v.get<double>();
        if (!(x >= lo && x <= hi)) throw ConfigError(fmt::format("{} = {} is outside [{}, {}]", where(key), x, lo, hi));
        out = x;
    }

    template <class Int>
    void integer(const std::string& key, Int& out, long long lo, long long hi) {
        if (!has(key)) return;
        const json& v = raw(key);
        if (!v.is_number_integer()) throw ConfigError(fmt::format("{} must be an integer", where(key)));
        if (v.is_number_unsigned()) {
            const auto x = v.get<unsigned long long>();
            if (lo > 0 && x < static_cast<unsigned long long>(lo))
                throw ConfigError(fmt::format("{} = {} is below {}", where(key), x, lo));
            if (hi >= 0 && x > static_cast<unsigned long long>(hi))
                throw ConfigError(fmt::format("{} = {} is above {}", where(key), x, hi));
            out = static_cast<Int>(x);
            return;
        }
        const auto x = v.get<long long>();
        if (x < lo || x > hi) throw ConfigError(fmt::format("{} = {} is outside [{}, {}]", where(key), x, lo, hi));
        out = static_cast<Int>(x);
    }

    void seed(const std::string& key, std::uint64_t& out) {
        if (!has(key)) return;
        const json& v = raw(key);
        if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
            throw ConfigError(fmt::format("{} must be a non-negative integer", where(key)));
        out = v.get<std::uint64_t>();
    }

    void boolean(const std::string& key, bool& out) {
        if (!has(key)) return;
        const json& v = raw(key);
        if (!v.is_boolean()) throw ConfigError(fmt::format("{} must be true or false", where(key)));
        out = v.get<bool>();
    }

    void string(const std::string& key, std::string& out, const std::set<std::string>& allowed = {}) {
        if (!has(key)) return;
        const json& v = raw(key);
        if (!v.is_string()) throw ConfigError(fmt::format("{} must be a string", where(key)));
        out = v.get<std::string>();
        if (!allowed.empty() && !allowed.count(out))
            throw ConfigError(fmt::format("{} = \"{}\" is not one of the allowed values", where(key), out));
    }

    void numbers(const std::string& key, std::vector<double>& out) {
        if (!has(key)) return;
        const json& v = raw(key);
        if (!v.is_array()) throw ConfigError(fmt::format("{} must be an array of numbers", where(key)));
        out.clear();
        for (const auto& e : v) {
            if (!e.is_number()) throw ConfigError(fmt::format("{} must be an array of numbers", where(key)));
            out.push_back(e.get<double>());
        }
    }

    void counts(const std::string& key, std::vector<std::size_t>& out) {
        if (!has(key)) return;
        const json& v = raw(key);
        if (!v.is_array()) throw ConfigError(fmt::format("{} must be an array of integers", where(key)));
        out.clear();
        for (const auto& e : v) {
            if (!e.is_number_unsigned() && !(e.is_number_integer() && e.get<long long>() >= 0))
                throw ConfigError(fmt::format("{} must be an array of non-negative integers", where(key)));
            out.push_back(e.get<std::size_t>());
        }
    }

    void point(const std::string& key, PointConfig& out) {
        if (!has(key)) return;
        out = to_point(raw(key), where(key));
    }

    static PointConfig to_point(const json& v, const std::string& where) {
        if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number_integer() ||
            v[1].get<long long>() < 1)
            throw ConfigError(fmt::format("{} must be [y, mode] with mode >= 1", where));
        return {v[0].get<double>(), static_cast<int>(v[1].get<long long>())};
    }

  private:
    const json& obj_;
    std::string path_;
    std::set<std::string> used_;
};

void parse_model(const json& doc, ModelConfig& m) {
    Section s(doc, "model");
    std::string kind = "gene";
    s.string("kind", kind, {"gene", "iid", "ar1"});
    if (kind == "gene") {
        m.kind = ModelKind::gene;
        bool reference = true;
        s.boolean("reference", reference);
        LinearGeneParams& p = m.gene;
        const bool custom = s.has("lambda") || s.has("decay_rates") || s.has("density_power") ||
                            s.has("zero_jump") || s.has("switching") || s.has("epsilon") ||
                            s.has("epsilon_star") || s.has("r") || s.has("mode_weight");
        if (reference && custom && s.has("reference"))
            throw ConfigError("model.reference = true cannot be combined with explicit gene parameters");
        s.number("lambda", p.lambda, 0.0, HUGE_VAL);
        s.numbers("decay_rates", p.decay_rates);
        s.number("density_power", p.density_power, 0.0, 100.0);
        s.boolean("zero_jump", p.zero_jump);
        if (s.has("switching")) {
            const json& v = s.raw("switching");
            if (!v.is_array()) throw ConfigError("model.switching must be an array of rows");
            p.switching.clear();
            for (const auto& row : v) {
                if (!row.is_array()) throw ConfigError("model.switching must be an array of rows");
                std::vector<double> r;
                for (const auto& e : row) {
                    if (!e.is_number()) throw ConfigError("model.switching entries must be numbers");
                    r.push_back(e.get<double>());
                }
                p.switching.push_back(std::move(r));
            }
        }
        s.number("epsilon", p.epsilon, 0.0, HUGE_VAL);
        s.number("epsilon_star", p.epsilon_star, 0.0, HUGE_VAL);
        s.number("r", p.r, 0.0, HUGE_VAL);
        s.number("mode_weight", p.mode_weight, 0.0, HUGE_VAL);
    } else if (kind == "iid") {
        m.kind = ModelKind::iid;
        s.numbers("atoms", m.iid_atoms);
        s.numbers("weights", m.iid_weights);
        if (m.iid_atoms.empty() || m.iid_atoms.size() != m.iid_weights.size())
            throw ConfigError("model.atoms and model.weights must be nonempty and of equal length");
    } else {
        m.kind = ModelKind::ar1;
        s.number("kappa", m.ar1_kappa, -1.0, 1.0);
        if (!(std::abs(m.ar1_kappa) < 1.0)) throw ConfigError("model.kappa must satisfy |kappa| < 1");
        std::string noise = "gaussian";
        s.string("noise", noise, {"gaussian", "uniform"});
        m.ar1_noise.kind = noise == "gaussian" ? NoiseLaw::Kind::gaussian : NoiseLaw::Kind::uniform;
        s.number("noise_scale", m.ar1_noise.scale, 0.0, HUGE_VAL);
    }
}

void parse_run(const json& doc, RunConfig& r) {
    Section s(doc, "run");
    s.seed("seed", r.seed);
    s.integer("n", r.n, 1, -1);
    s.integer("trajectories", r.trajectories, 1, -1);
    s.integer("burn_in", r.burn_in, 0, -1);
    s.integer("thinning", r.thinning, 1, -1);
    s.integer("workers", r.workers, 1, 1024);
    s.number("confidence", r.confidence, 0.5, 0.9999);
}

void parse_output(const json& doc, OutputConfig& o) {
    Section s(doc, "output");
    s.string("directory", o.directory);
    std::string f = "both";
    s.string("formats", f, {"csv", "json", "both"});
    o.formats = f == "csv" ? OutputFormat::csv : f == "json" ? OutputFormat::json : OutputFormat::both;
}

void parse_task(const json& doc, ExperimentConfig& c) {
    Section s(doc, "task." + task_key(c.command));
    if (c.command == "check-conditions") {
        auto& t = c.check_conditions;
        s.integer("sample_budget", t.sample_budget, 10, -1);
        s.integer("drift_budget", t.drift_budget, 100, -1);
        s.integer("grid_points", t.grid_points, 2, 10000);
        s.number("tolerance", t.tolerance, 0.0, 1.0);
    } else if (c.command == "coupling") {
        auto& t = c.coupling;
        s.number("gamma", t.gamma, 0.0, 1.0);
        if (!(t.gamma > 0.0 && t.gamma < 1.0)) throw ConfigError("task.coupling.gamma must be in (0, 1)");
        s.number("Gamma", t.Gamma, 0.0, HUGE_VAL);
        s.integer("drift_budget", t.drift_budget, 100, -1);
        if (s.has("pairs")) {
            const json& v = s.raw("pairs");
            if (!v.is_array() || v.empty()) throw ConfigError("task.coupling.pairs must be a nonempty array");
            t.pairs.clear();
            for (const auto& p : v) {
                if (!p.is_array() || p.size() != 2) throw ConfigError("task.coupling.pairs entries are [[y, i], [y, i]]");
                t.pairs.emplace_back(Section::to_point(p[0], "task.coupling.pairs"),
                                     Section::to_point(p[1], "task.coupling.pairs"));
            }
        }
        s.integer("horizon", t.horizon, 1, -1);
        s.number("hit_floor", t.hit_floor, 0.0, 1.0);
        if (s.has("decay_start")) {
            const json& v = s.raw("decay_start");
            if (!v.is_array() || v.size() != 2) throw ConfigError("task.coupling.decay_start is [[y, i], [y, i]]");
            t.decay_start = {Section::to_point(v[0], "task.coupling.decay_start"),
                             Section::to_point(v[1], "task.coupling.decay_start")};
        }
        s.counts("decay_grid", t.decay_grid);
        s.integer("marginal_steps", t.marginal_steps, 0, -1);
        s.integer("marginal_horizon", t.marginal_horizon, 1, -1);
        s.integer("block_size", t.block_size, 10, -1);
        s.boolean("restricted_overlap", t.restricted_overlap);
    } else if (c.command == "ergodicity") {
        auto& t = c.ergodicity;
        s.point("x", t.x);
        s.point("y", t.y);
        s.counts("grid", t.grid);
        s.integer("bootstrap", t.bootstrap, 2, 10000);
        s.integer("lp_budget", t.lp_budget, 2, 100000);
        if (t.grid.size() < 3) throw ConfigError("task.ergodicity.grid needs at least three points");
    } else if (c.command == "lil") {
        auto& t = c.lil;
        s.string("g", t.g, {"coordinate", "clamp", "tanh", "min1"});
        s.integer("invariant_atoms", t.invariant_atoms, 10, -1);
        s.integer("sigma2_states", t.sigma2_states, 2, -1);
        s.integer("truncation", t.truncation, -1, 100000);
        s.integer("inner_samples", t.inner_samples, 2, -1);
        s.number("tail_c", t.tail_c);
        s.number("tail_q", t.tail_q, 0.0, 1.0);
        s.number("truncation_tol", t.truncation_tol, 0.0, HUGE_VAL);
        s.counts("checkpoints", t.checkpoints);
        s.counts("path_lengths", t.path_lengths);
        s.integer("path_nodes", t.path_nodes, 2, -1);
        s.integer("rhat_from", t.rhat_from, 0, -1);
        s.integer("series_length", t.series_length, 0, -1);
        s.integer("series_trajectories", t.series_trajectories, 0, -1);
        s.integer("eta_tilde_sign", t.eta_tilde_sign, -1, 1);
        if (t.eta_tilde_sign == 0) throw ConfigError("task.lil.eta_tilde_sign must be 1 or -1");
        s.number("g_mean", t.g_mean);
        s.integer("tail_trajectories", t.tail_trajectories, 10, -1);
        s.counts("tail_grid", t.tail_grid);
        s.integer("chi_nodes", t.chi_nodes, 2, -1);
        s.integer("regression_length", t.regression_length, 0, -1);
        s.integer("regression_trajectories", t.regression_trajectories, 0, -1);
        s.integer("identity_states", t.identity_states, 0, -1);
        s.integer("identity_outer", t.identity_outer, 10, -1);
    } else {
        s.point("start", c.simulate.start);
    }
}

json parse_scalar(const std::string& text) {
    json v = json::parse(text, nullptr, false);
    if (v.is_discarded()) return json(text);
    return v;
}

}  // namespace

void apply_env_overrides(json& doc, char** envp) {
    if (!envp) return;
    const std::string prefix = kEnvPrefix;
    std::vector<std::pair<std::string, std::string>> entries;
    for (char** e = envp; *e; ++e) {
        const std::string kv = *e;
        const auto eq = kv.find('=');
        if (eq == std::string::npos || kv.compare(0, prefix.size(), prefix) != 0) continue;
        entries.emplace_back(kv.substr(prefix.size(), eq - prefix.size()), kv.substr(eq + 1));
    }
    std::sort(entries.begin(), entries.end());
    for (const auto& [name, value] : entries) {
        std::vector<std::string> path;
        std::size_t start = 0;
        for (;;) {
            const auto sep = name.find("__", start);
            std::string part = name.substr(start, sep == std::string::npos ? std::string::npos : sep - start);
            std::transform(part.begin(), part.end(), part.begin(),
                           [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
            path.push_back(part);
            if (sep == std::string::npos) break;
            start = sep + 2;
        }
        if (path.size() < 2 || path.front().empty())
            throw ConfigError(fmt::format("environment override {}{} needs SECTION__KEY", prefix, name));
        json* node = &doc;
        for (std::size_t i = 0; i + 1 < path.size(); ++i) {
            if (!node->is_object()) throw ConfigError(fmt::format("override {}{} crosses a non-object", prefix, name));
            node = &(*node)[path[i]];
            if (node->is_null()) *node = json::object();
        }
        if (!node->is_object()) throw ConfigError(fmt::format("override {}{} crosses a non-object", prefix, name));
        (*node)[path.back()] = parse_scalar(value);
    }
}

ExperimentConfig parse_config(const json& doc, const std::string& command) {
    if (!kCommands.count(command)) throw ConfigError(fmt::format("unknown command \"{}\"", command));
    if (!doc.is_object()) throw ConfigError("config must be a JSON object");
    ExperimentConfig c;
    c.command = command;
    for (const auto& [k, v] : doc.items())
        if (k != "model" && k != "run" && k != "task" && k != "output")
            throw ConfigError(fmt::format("unknown top-level key {}", k));
    if (doc.contains("model")) parse_model(doc["model"], c.model);
    if (doc.contains("run")) parse_run(doc["run"], c.run);
    if (doc.contains("output")) parse_output(doc["output"], c.output);
    if (doc.contains("task")) {
        const json& task = doc["task"];
        if (!task.is_object()) throw ConfigError("task must be an object");
        const std::string key = task_key(command);
        for (const auto& [k, v] : task.items()) {
            bool known = false;
            for (const auto& cmd : kCommands) known = known || k == task_key(cmd);
            if (!known) throw ConfigError(fmt::format("unknown task block {}", k));
        }
        if (task.contains(key)) parse_task(task[key], c);
    }
    if (c.command == "check-conditions" || c.command == "coupling") {
        if (c.model.kind != ModelKind::gene)
            throw ConfigError(fmt::format("{} needs a gene model", c.command));
    }
    try {
        if (c.model.kind == ModelKind::gene) build_gene_model(c.model).validate();
        else build_kernel(c.model);
    } catch (const InputError& e) {
        throw ConfigError(fmt::format("model: {}", e.what()));
    }
    c.resolved = doc;
    return c;
}

ExperimentConfig load_config(const std::string& path, const std::string& command, char** envp) {
    json doc = json::object();
    if (!path.empty()) {
        std::ifstream in(path);
        if (!in) throw ConfigError(fmt::format("cannot open config {}", path));
        doc = json::parse(in, nullptr, false);
        if (doc.is_discarded()) throw ConfigError(fmt::format("{} is not valid JSON", path));
    }
    apply_env_overrides(doc, envp);
    return parse_config(doc, command);
}

Kernel build_kernel(const ModelConfig& m) {
    switch (m.kind) {
    case ModelKind::gene:
        return gene_kernel(build_gene_model(m));
    case ModelKind::iid: {
        std::vector<Point> atoms;
        for (double a : m.iid_atoms) atoms.push_back(make_point(a));
        return iid_kernel(EmpiricalMeasure(std::move(atoms), m.iid_weights));
    }
    case ModelKind::ar1:
        return ar1_kernel(m.ar1_kappa, m.ar1_noise);
    }
    throw ConfigError("unknown model kind");
}

GeneModelSpec build_gene_model(const ModelConfig& m) {
    if (m.kind != ModelKind::gene) throw ConfigError("model is not a gene model");
    return linear_gene_model(m.gene);
}

}  // namespace lilkit
