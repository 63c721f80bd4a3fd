#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "chns/mms.hpp"
#include "chns/params.hpp"
#include "chns/schemes.hpp"

namespace chns {

class ConfigError : public std::runtime_error {
  public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

enum class ExperimentKind {
    mms_convergence,
    shape_relaxation,
    shrinking_bubble,
    stability_sweep,
    custom
};

enum class StabPolicy { numeric, three_l_over_dt };
enum class InitialCondition { preset, random_smooth };

/// Fully resolved, validated experiment description.
struct ExperimentConfig {
    ExperimentKind experiment = ExperimentKind::custom;
    SchemeKind scheme = SchemeKind::betf_linear;
    PressureFilter pressure_filter = PressureFilter::option_a;
    GridSpec grid{};
    bool grid_from_dt = false;  // mms: nx = round(Lx/dt) per sweep entry
    PhysicalParams params{};
    StabPolicy stab_policy = StabPolicy::three_l_over_dt;
    double stab_value = 1.0;  // used when stab_policy == numeric
    double dt = 0.0;
    std::vector<double> dt_list;
    double T_final = 1.0;
    bool dt_equals_h = true;
    StartupMode startup = StartupMode::be_step;
    NewtonSettings newton{};
    std::string output_directory = "out";
    std::vector<double> snapshot_times;
    int series_every = 1;
    bool assert_energy_monotone = false;
    std::uint64_t seed = 12345;
    CrossShape shape{};
    PhaseConvection phase_conv = PhaseConvection::divergence;
    InitialCondition initial_condition = InitialCondition::preset;

    /// Stabilization coefficient for a concrete step size.
    double stabilization_for(double step_dt) const {
        return stab_policy == StabPolicy::three_l_over_dt
                   ? 3.0 * params.lipschitz_L / step_dt
                   : stab_value;
    }
};

namespace detail_cfg {

using nlohmann::json;

inline void reject_unknown(const json& obj, const std::set<std::string>& allowed,
                           const std::string& path) {
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!allowed.count(it.key()))
            throw ConfigError("unknown key '" + path + it.key() + "'");
}

template <class T>
T get_or(const json& obj, const std::string& key, const std::string& path, T fallback) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("bad value type at '" + path + key + "'");
    }
}

inline double positive(const json& obj, const std::string& key, const std::string& path,
                       double fallback) {
    const double v = get_or<double>(obj, key, path, fallback);
    if (!(v > 0.0)) throw ConfigError("'" + path + key + "' must be > 0");
    return v;
}

inline ExperimentKind parse_experiment(const std::string& s) {
    if (s == "mms_convergence") return ExperimentKind::mms_convergence;
    if (s == "shape_relaxation") return ExperimentKind::shape_relaxation;
    if (s == "shrinking_bubble") return ExperimentKind::shrinking_bubble;
    if (s == "stability_sweep") return ExperimentKind::stability_sweep;
    if (s == "custom") return ExperimentKind::custom;
    throw ConfigError("unknown experiment '" + s + "'");
}

inline SchemeKind parse_scheme(const std::string& s) {
    if (s == "be_linear") return SchemeKind::be_linear;
    if (s == "betf_linear") return SchemeKind::betf_linear;
    if (s == "betf_nonlinear") return SchemeKind::betf_nonlinear;
    throw ConfigError("unknown scheme '" + s + "'");
}

inline std::string scheme_name(SchemeKind k) {
    switch (k) {
        case SchemeKind::be_linear: return "be_linear";
        case SchemeKind::betf_linear: return "betf_linear";
        case SchemeKind::betf_nonlinear: return "betf_nonlinear";
    }
    return "?";
}

inline std::string experiment_name(ExperimentKind k) {
    switch (k) {
        case ExperimentKind::mms_convergence: return "mms_convergence";
        case ExperimentKind::shape_relaxation: return "shape_relaxation";
        case ExperimentKind::shrinking_bubble: return "shrinking_bubble";
        case ExperimentKind::stability_sweep: return "stability_sweep";
        case ExperimentKind::custom: return "custom";
    }
    return "?";
}

}  // namespace detail_cfg

/// Parse a strict JSON config: unknown keys are rejected, defaults are
/// experiment-specific, domain errors carry the offending field path.
inline ExperimentConfig parse_config(const std::string& text) {
    using nlohmann::json;
    using namespace detail_cfg;

    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw ConfigError("config root must be a JSON object");

    reject_unknown(doc, {"experiment", "scheme", "pressure_filter", "grid", "params", "dt",
                         "dt_list", "T_final", "dt_equals_h", "startup", "newton", "output",
                         "assert_energy_monotone", "seed", "shape", "phase_convection",
                         "initial_condition"},
                   "");

    if (!doc.contains("experiment")) throw ConfigError("missing required key 'experiment'");
    ExperimentConfig cfg;
    cfg.experiment = parse_experiment(get_or<std::string>(doc, "experiment", "", ""));

    // Experiment presets; explicit keys below override them.
    switch (cfg.experiment) {
        case ExperimentKind::mms_convergence:
            cfg.scheme = SchemeKind::betf_linear;
            cfg.grid = GridSpec{0, 0, 0.0, 0.0, 1.0, 1.0};
            cfg.grid_from_dt = true;
            cfg.params = PhysicalParams{0.2, 0.01, 0.01, 1.0, {}, 1.0, 1.0};
            cfg.dt_list = {1.0 / 8, 1.0 / 16, 1.0 / 32, 1.0 / 64};
            cfg.T_final = 1.0;
            cfg.startup = StartupMode::exact_injection;
            // Fixed S for the convergence study: a step-proportional
            // stabilization coefficient (S dt = const) leaves a first-order
            // residue in the phase equation and caps the observed order at 1.
            cfg.stab_policy = StabPolicy::numeric;
            cfg.stab_value = 1.0;
            break;
        case ExperimentKind::shape_relaxation:
            cfg.grid = GridSpec{64, 64, 0.0, 0.0, 1.0, 1.0};
            cfg.params = PhysicalParams{0.02, 0.01, 0.01, 1.0, {}, 1.0, 1.0};
            cfg.dt = 0.1;
            cfg.T_final = 10.0;
            cfg.snapshot_times = {0.0, 1.0, 2.0, 3.0, 5.0, 10.0};
            break;
        case ExperimentKind::shrinking_bubble:
            cfg.grid = GridSpec{64, 64, 0.0, 0.0, 2.0 * 3.14159265358979323846,
                                2.0 * 3.14159265358979323846};
            cfg.params = PhysicalParams{0.15, 0.4, 0.01, 1.0, {}, 1.0, 1.0};
            cfg.dt = 0.1;
            cfg.T_final = 15.0;
            cfg.snapshot_times = {0.0, 2.0, 3.0, 5.0, 7.0, 15.0};
            break;
        case ExperimentKind::stability_sweep:
            cfg.dt_list = {0.1, 0.5, 1.0, 5.0};
            cfg.assert_energy_monotone = true;
            break;
        case ExperimentKind::custom:
            cfg.grid = GridSpec{64, 64, 0.0, 0.0, 1.0, 1.0};
            cfg.initial_condition = InitialCondition::random_smooth;
            break;
    }

    if (doc.contains("scheme")) cfg.scheme = parse_scheme(doc.at("scheme").get<std::string>());
    if (cfg.scheme == SchemeKind::be_linear) cfg.stab_policy = StabPolicy::numeric;

    if (doc.contains("pressure_filter")) {
        const std::string s = doc.at("pressure_filter").get<std::string>();
        if (s == "option_a")
            cfg.pressure_filter = PressureFilter::option_a;
        else if (s == "option_b")
            cfg.pressure_filter = PressureFilter::option_b;
        else
            throw ConfigError("'pressure_filter' must be option_a or option_b");
    }

    cfg.dt_equals_h = get_or<bool>(doc, "dt_equals_h", "", cfg.dt_equals_h);
    if (cfg.experiment == ExperimentKind::mms_convergence) cfg.grid_from_dt = cfg.dt_equals_h;

    if (doc.contains("grid")) {
        const json& g = doc.at("grid");
        if (!g.is_object()) throw ConfigError("'grid' must be an object");
        reject_unknown(g, {"nx", "ny", "x0", "y0", "Lx", "Ly"}, "grid.");
        if (cfg.grid_from_dt && (g.contains("nx") || g.contains("ny")))
            throw ConfigError("'grid.nx'/'grid.ny' are derived from dt in mms_convergence");
        cfg.grid.nx = get_or<int>(g, "nx", "grid.", cfg.grid.nx);
        cfg.grid.ny = get_or<int>(g, "ny", "grid.", cfg.grid.ny);
        cfg.grid.x0 = get_or<double>(g, "x0", "grid.", cfg.grid.x0);
        cfg.grid.y0 = get_or<double>(g, "y0", "grid.", cfg.grid.y0);
        cfg.grid.Lx = positive(g, "Lx", "grid.", cfg.grid.Lx);
        cfg.grid.Ly = positive(g, "Ly", "grid.", cfg.grid.Ly);
    }

    if (doc.contains("params")) {
        const json& p = doc.at("params");
        if (!p.is_object()) throw ConfigError("'params' must be an object");
        reject_unknown(p, {"epsilon", "mobility", "gamma", "nu", "lambda", "lipschitz_L",
                           "stabilization"},
                       "params.");
        cfg.params.epsilon = positive(p, "epsilon", "params.", cfg.params.epsilon);
        cfg.params.mobility = positive(p, "mobility", "params.", cfg.params.mobility);
        cfg.params.nu = positive(p, "nu", "params.", cfg.params.nu);
        cfg.params.gamma = get_or<double>(p, "gamma", "params.", cfg.params.gamma);
        if (cfg.params.gamma < 0.0) throw ConfigError("'params.gamma' must be >= 0");
        if (p.contains("lambda")) cfg.params.lambda_mix = positive(p, "lambda", "params.", 1.0);
        cfg.params.lipschitz_L = positive(p, "lipschitz_L", "params.", cfg.params.lipschitz_L);
        if (p.contains("stabilization")) {
            const json& s = p.at("stabilization");
            if (s.is_string()) {
                if (s.get<std::string>() != "3L/dt")
                    throw ConfigError("'params.stabilization' string form must be \"3L/dt\"");
                cfg.stab_policy = StabPolicy::three_l_over_dt;
            } else if (s.is_number()) {
                cfg.stab_policy = StabPolicy::numeric;
                cfg.stab_value = s.get<double>();
                if (!(cfg.stab_value >= 0.0))
                    throw ConfigError("'params.stabilization' must be >= 0");
            } else {
                throw ConfigError("'params.stabilization' must be a number or \"3L/dt\"");
            }
        }
    }

    if (doc.contains("dt")) {
        cfg.dt = doc.at("dt").get<double>();
        if (!(cfg.dt > 0.0)) throw ConfigError("'dt' must be > 0");
    }
    if (doc.contains("dt_list")) {
        cfg.dt_list.clear();
        for (const auto& v : doc.at("dt_list")) {
            const double d = v.get<double>();
            if (!(d > 0.0)) throw ConfigError("'dt_list' entries must be > 0");
            cfg.dt_list.push_back(d);
        }
    }
    if (doc.contains("T_final")) {
        cfg.T_final = doc.at("T_final").get<double>();
        if (!(cfg.T_final > 0.0)) throw ConfigError("'T_final' must be > 0");
    }

    if (doc.contains("startup")) {
        const std::string s = doc.at("startup").get<std::string>();
        if (s == "be_step")
            cfg.startup = StartupMode::be_step;
        else if (s == "exact_injection")
            cfg.startup = StartupMode::exact_injection;
        else
            throw ConfigError("'startup' must be be_step or exact_injection");
    }

    if (doc.contains("newton")) {
        const json& nw = doc.at("newton");
        reject_unknown(nw, {"abs_tol", "rel_tol", "max_iters"}, "newton.");
        cfg.newton.abs_tol = positive(nw, "abs_tol", "newton.", cfg.newton.abs_tol);
        cfg.newton.rel_tol = positive(nw, "rel_tol", "newton.", cfg.newton.rel_tol);
        cfg.newton.max_iters = get_or<int>(nw, "max_iters", "newton.", cfg.newton.max_iters);
        if (cfg.newton.max_iters < 1) throw ConfigError("'newton.max_iters' must be >= 1");
    }

    if (doc.contains("output")) {
        const json& o = doc.at("output");
        reject_unknown(o, {"directory", "snapshot_times", "series_every"}, "output.");
        cfg.output_directory = get_or<std::string>(o, "directory", "output.", cfg.output_directory);
        if (o.contains("snapshot_times")) {
            cfg.snapshot_times.clear();
            for (const auto& v : o.at("snapshot_times")) cfg.snapshot_times.push_back(v.get<double>());
        }
        cfg.series_every = get_or<int>(o, "series_every", "output.", cfg.series_every);
        if (cfg.series_every < 1) throw ConfigError("'output.series_every' must be >= 1");
    }

    cfg.assert_energy_monotone =
        get_or<bool>(doc, "assert_energy_monotone", "", cfg.assert_energy_monotone);
    cfg.seed = get_or<std::uint64_t>(doc, "seed", "", cfg.seed);

    if (doc.contains("shape")) {
        const json& s = doc.at("shape");
        reject_unknown(s, {"arm_width", "arm_length"}, "shape.");
        cfg.shape.arm_width = positive(s, "arm_width", "shape.", cfg.shape.arm_width);
        cfg.shape.arm_length = positive(s, "arm_length", "shape.", cfg.shape.arm_length);
    }

    if (doc.contains("phase_convection")) {
        const std::string s = doc.at("phase_convection").get<std::string>();
        if (s == "divergence")
            cfg.phase_conv = PhaseConvection::divergence;
        else if (s == "advective")
            cfg.phase_conv = PhaseConvection::advective;
        else
            throw ConfigError("'phase_convection' must be divergence or advective");
    }

    if (doc.contains("initial_condition")) {
        const std::string s = doc.at("initial_condition").get<std::string>();
        if (s == "preset")
            cfg.initial_condition = InitialCondition::preset;
        else if (s == "random_smooth")
            cfg.initial_condition = InitialCondition::random_smooth;
        else
            throw ConfigError("'initial_condition' must be preset or random_smooth");
    }

    // Cross-field validation.
    try {
        cfg.params.validate();
        if (!cfg.grid_from_dt && cfg.grid.nx > 0) cfg.grid.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    switch (cfg.experiment) {
        case ExperimentKind::mms_convergence: {
            if (cfg.dt_list.empty()) throw ConfigError("'dt_list' must not be empty");
            for (std::size_t k = 1; k < cfg.dt_list.size(); ++k)
                if (std::abs(cfg.dt_list[k] - 0.5 * cfg.dt_list[k - 1]) >
                    1e-12 * cfg.dt_list[k - 1])
                    throw ConfigError("'dt_list' must halve successively");
            if (!cfg.dt_equals_h && (cfg.grid.nx < 4 || cfg.grid.ny < 4))
                throw ConfigError("'grid.nx'/'grid.ny' required when dt_equals_h is false");
            if (std::abs(cfg.grid.Lx - 1.0) > 1e-12 || std::abs(cfg.grid.Ly - 1.0) > 1e-12 ||
                cfg.grid.x0 != 0.0 || cfg.grid.y0 != 0.0)
                throw ConfigError("mms_convergence runs on the unit square");
            if (cfg.params.lambda_mix &&
                std::abs(*cfg.params.lambda_mix - cfg.params.epsilon) >
                    1e-12 * cfg.params.epsilon)
                throw ConfigError(
                    "'params.lambda' must equal params.epsilon for mms_convergence");
            for (double d : cfg.dt_list) {
                const double n = cfg.grid.Lx / d;
                if (cfg.dt_equals_h && std::abs(n - std::round(n)) > 1e-9)
                    throw ConfigError("'dt_list' entries must divide the domain when dt = h");
            }
            break;
        }
        case ExperimentKind::stability_sweep:
            if (cfg.dt_list.empty()) throw ConfigError("'dt_list' must not be empty");
            if (cfg.scheme == SchemeKind::be_linear)
                throw ConfigError("stability_sweep requires a betf_* scheme");
            if (cfg.stab_policy != StabPolicy::three_l_over_dt)
                throw ConfigError("stability_sweep requires params.stabilization = \"3L/dt\"");
            break;
        case ExperimentKind::shape_relaxation:
        case ExperimentKind::shrinking_bubble:
        case ExperimentKind::custom:
            if (!(cfg.dt > 0.0)) throw ConfigError("'dt' must be set and > 0");
            break;
    }

    if (cfg.assert_energy_monotone && cfg.stab_policy == StabPolicy::numeric) {
        const double d = cfg.dt > 0.0 ? cfg.dt : (cfg.dt_list.empty() ? 0.0 : cfg.dt_list.front());
        if (!(cfg.stab_value * d >= 3.0 * cfg.params.lipschitz_L))
            throw ConfigError(
                "energy assertion enabled but S*dt < 3L; use params.stabilization = \"3L/dt\"");
    }
    return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

}  // namespace chns
