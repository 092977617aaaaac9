#include <cctype>
#include <cmath>
#include <fstream>
#include <initializer_list>
#include <regex>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "pmsm/scenario.hpp"

namespace pmsm {

namespace {

using nlohmann::json;

double rpm_to_electrical(double rpm, int p) { return rpm_to_rad_s(rpm) * p; }

SpeedProfile benchmark_profile(int p) {
    const double k = rpm_to_electrical(1.0, p);
    std::vector<Segment> segs{
        segment::Hold{3500.0 * k, 0.3},
        segment::Ramp{3500.0 * k, 6000.0 * k, 0.7},
        segment::Hold{6000.0 * k, 0.2},
        segment::Sinusoid{6000.0 * k, 500.0 * k, 1.0, 0.8},
    };
    return SpeedProfile(std::move(segs), 3000.0 * k, 8000.0 * k, 20000.0 * k);
}

class Section {
public:
    Section(const json& j, std::string path, std::initializer_list<const char*> allowed) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) {
            throw ConfigError(path_ + ": expected an object");
        }
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            bool known = false;
            for (const char* a : allowed) {
                known = known || it.key() == a;
            }
            if (!known) {
                throw ConfigError(path_ + ": unknown key '" + it.key() + "'");
            }
        }
    }

    bool has(const char* key) const { return j_.contains(key); }
    const json& at(const char* key) const { return j_.at(key); }
    std::string where(const char* key) const { return path_ + "." + key; }

    void read(const char* key, double& out) const {
        if (!has(key)) return;
        const json& v = j_.at(key);
        if (!v.is_number()) throw ConfigError(where(key) + ": expected a number");
        out = v.get<double>();
        if (!std::isfinite(out)) throw ConfigError(where(key) + ": must be finite");
    }
    void read(const char* key, int& out) const {
        if (!has(key)) return;
        const json& v = j_.at(key);
        if (!v.is_number_integer()) throw ConfigError(where(key) + ": expected an integer");
        out = v.get<int>();
    }
    void read(const char* key, std::uint64_t& out) const {
        if (!has(key)) return;
        const json& v = j_.at(key);
        if (!v.is_number_unsigned()) throw ConfigError(where(key) + ": expected a non-negative integer");
        out = v.get<std::uint64_t>();
    }
    void read(const char* key, bool& out) const {
        if (!has(key)) return;
        const json& v = j_.at(key);
        if (!v.is_boolean()) throw ConfigError(where(key) + ": expected true or false");
        out = v.get<bool>();
    }
    void read(const char* key, std::string& out) const {
        if (!has(key)) return;
        const json& v = j_.at(key);
        if (!v.is_string()) throw ConfigError(where(key) + ": expected a string");
        out = v.get<std::string>();
    }
    void read(const char* key, std::optional<double>& out) const {
        if (!has(key)) return;
        if (j_.at(key).is_null()) {
            out.reset();
            return;
        }
        double v = 0.0;
        read(key, v);
        out = v;
    }
    template <int N>
    void read(const char* key, Eigen::Matrix<double, N, 1>& out) const {
        if (!has(key)) return;
        const json& v = j_.at(key);
        if (!v.is_array() || static_cast<int>(v.size()) != N) {
            throw ConfigError(fmt::format("{}: expected an array of {} numbers", where(key), N));
        }
        for (int k = 0; k < N; ++k) {
            if (!v[k].is_number()) throw ConfigError(where(key) + ": expected numbers");
            out[k] = v[k].get<double>();
        }
        if (!out.allFinite()) throw ConfigError(where(key) + ": must be finite");
    }
    void read(const char* key, std::optional<Vec3>& out) const {
        if (!has(key)) return;
        Vec3 v = Vec3::Zero();
        read(key, v);
        out = v;
    }

private:
    const json& j_;
    std::string path_;
};

LoadModel parse_load(const json& j, double nominal_rpm) {
    Section s(j, "plant.load", {"kind", "torque", "coefficient", "rated_torque", "fraction"});
    std::string kind = "propeller";
    s.read("kind", kind);
    if (kind == "none") {
        return LoadModel::none();
    }
    if (kind == "constant") {
        double torque = 0.0;
        s.read("torque", torque);
        return LoadModel::constant(torque);
    }
    if (kind == "quadratic") {
        double c = 0.0;
        s.read("coefficient", c);
        if (c < 0.0) throw ConfigError("plant.load.coefficient: must be non-negative");
        return LoadModel::quadratic(c);
    }
    if (kind == "propeller") {
        double rated = 0.25;
        double fraction = 0.8;
        s.read("rated_torque", rated);
        s.read("fraction", fraction);
        if (rated < 0.0 || fraction < 0.0) throw ConfigError("plant.load: rated_torque and fraction must be non-negative");
        return LoadModel::propeller(rated, fraction, rpm_to_rad_s(nominal_rpm));
    }
    throw ConfigError("plant.load.kind: unknown load '" + kind + "'");
}

SpeedProfile parse_profile(const json& j, int p) {
    Section s(j, "speed_profile", {"bounds_rpm", "max_rate_rpm_per_s", "segments"});
    Vec2 bounds(3000.0, 8000.0);
    double max_rate = 20000.0;
    s.read("bounds_rpm", bounds);
    s.read("max_rate_rpm_per_s", max_rate);
    if (!s.has("segments") || !s.at("segments").is_array() || s.at("segments").empty()) {
        throw ConfigError("speed_profile.segments: expected a non-empty array");
    }
    const double k = rpm_to_electrical(1.0, p);
    std::vector<Segment> segs;
    int n = 0;
    for (const json& item : s.at("segments")) {
        const std::string path = fmt::format("speed_profile.segments[{}]", n++);
        if (!item.is_object() || !item.contains("type") || !item.at("type").is_string()) {
            throw ConfigError(path + ": expected an object with a 'type'");
        }
        const std::string type = item.at("type").get<std::string>();
        double duration = 0.0;
        if (type == "hold") {
            Section seg(item, path, {"type", "rpm", "duration"});
            double rpm = 0.0;
            seg.read("rpm", rpm);
            seg.read("duration", duration);
            segs.emplace_back(segment::Hold{rpm * k, duration});
        } else if (type == "ramp") {
            Section seg(item, path, {"type", "from_rpm", "to_rpm", "duration"});
            double a = 0.0;
            double b = 0.0;
            seg.read("from_rpm", a);
            seg.read("to_rpm", b);
            seg.read("duration", duration);
            segs.emplace_back(segment::Ramp{a * k, b * k, duration});
        } else if (type == "sinusoid") {
            Section seg(item, path, {"type", "offset_rpm", "amplitude_rpm", "frequency_hz", "duration"});
            double off = 0.0;
            double amp = 0.0;
            double f = 0.0;
            seg.read("offset_rpm", off);
            seg.read("amplitude_rpm", amp);
            seg.read("frequency_hz", f);
            seg.read("duration", duration);
            segs.emplace_back(segment::Sinusoid{off * k, amp * k, f, duration});
        } else {
            throw ConfigError(path + ": unknown segment type '" + type + "'");
        }
    }
    try {
        return SpeedProfile(std::move(segs), bounds.x() * k, bounds.y() * k, max_rate * k);
    } catch (const std::invalid_argument& err) {
        throw ConfigError(std::string("speed_profile: ") + err.what());
    }
}

void parse_gains(const json& j, ScenarioConfig& cfg) {
    Section s(j, "gains",
              {"k_eta", "gamma", "poles", "chi", "k_p", "k_e", "k_z", "lambda", "epsilon", "kappa_e", "kappa_p",
               "kappa_z"});
    ControllerGains& g = cfg.gains;
    if (s.has("poles")) {
        std::string text;
        s.read("poles", text);
        double chi = cfg.plant.phi * cfg.plant.pole_pairs * rpm_to_rad_s(3500.0);
        s.read("chi", chi);
        const auto poles = parse_poles(text);
        try {
            const SlowGains slow = gains_from_poles(poles.first, poles.second, chi);
            g.k_eta = slow.k_eta;
            g.gamma = slow.gamma;
        } catch (const std::invalid_argument& err) {
            throw ConfigError(std::string("gains.poles: ") + err.what());
        }
    } else if (s.has("chi")) {
        throw ConfigError("gains.chi: only meaningful together with gains.poles");
    }
    s.read("k_eta", g.k_eta);
    s.read("gamma", g.gamma);

    const bool scaled = s.has("epsilon") || s.has("kappa_e") || s.has("kappa_p") || s.has("kappa_z");
    const bool direct = s.has("k_p") || s.has("k_e") || s.has("k_z") || s.has("lambda");
    if (scaled && direct) {
        throw ConfigError("gains: give either epsilon/kappa_* or k_p/k_e/k_z/lambda, not both");
    }
    if (scaled) {
        FastScaling fs = g.scaling(cfg.plant.L);
        s.read("epsilon", fs.epsilon);
        s.read("kappa_e", fs.kappa_e);
        s.read("kappa_p", fs.kappa_p);
        s.read("kappa_z", fs.kappa_z);
        if (!(fs.epsilon > 0.0)) throw ConfigError("gains.epsilon: must be positive");
        g = ControllerGains::from_scaling(fs, cfg.plant.L, g.k_eta, g.gamma);
    } else {
        s.read("k_p", g.k_p);
        s.read("k_e", g.k_e);
        s.read("k_z", g.k_z);
        s.read("lambda", g.lambda);
    }
}

}  // namespace

std::pair<std::complex<double>, std::complex<double>> parse_poles(const std::string& text) {
    std::string t;
    for (char c : text) {
        if (!std::isspace(static_cast<unsigned char>(c))) t += c;
    }
    static const std::regex real_pair(R"(^([-+]?[0-9.]+(?:[eE][-+]?[0-9]+)?),([-+]?[0-9.]+(?:[eE][-+]?[0-9]+)?)$)");
    static const std::regex conj(
        R"(^([-+]?[0-9.]+(?:[eE][-+]?[0-9]+)?)(\+-|-\+|\xC2\xB1|\+|-)([0-9.]+(?:[eE][-+]?[0-9]+)?)[ij]$)");
    std::smatch m;
    try {
        if (std::regex_match(t, m, real_pair)) {
            return {std::complex<double>(std::stod(m[1]), 0.0), std::complex<double>(std::stod(m[2]), 0.0)};
        }
        if (std::regex_match(t, m, conj)) {
            const std::complex<double> p(std::stod(m[1]), std::stod(m[3]));
            return {p, std::conj(p)};
        }
    } catch (const std::logic_error&) {
    }
    throw ConfigError("cannot parse poles '" + text + "' (expected a+bi, a-bi, a±bi or a,b)");
}

void ScenarioConfig::validate() const {
    auto wrap = [](const char* what, auto&& f) {
        try {
            f();
        } catch (const ConfigError&) {
            throw;
        } catch (const std::invalid_argument& err) {
            throw ConfigError(std::string(what) + ": " + err.what());
        }
    };
    wrap("plant", [&] { plant.validate(); });
    wrap("gains", [&] { gains.validate(); });
    if (!(nominal_speed_rpm > 0.0)) throw ConfigError("plant.nominal_speed_rpm: must be positive");
    if (!(speed_loop.tau_f > 0.0)) throw ConfigError("speed_loop.tau_f: must be positive");
    if (speed_loop.k_p < 0.0 || speed_loop.k_i < 0.0) throw ConfigError("speed_loop: gains must be non-negative");
    if (speed_loop.torque_max && !(*speed_loop.torque_max > 0.0)) {
        throw ConfigError("speed_loop.torque_max: must be positive");
    }
    if (!(analysis.rho > 0.0 && analysis.rho < 1.0)) throw ConfigError("analysis.rho: must lie in (0, 1)");
    if (!(analysis.window > 0.0)) throw ConfigError("analysis.window: must be positive");
    if (analysis.windows < 1) throw ConfigError("analysis.windows: must be at least 1");
    if (analysis.i_star && !(*analysis.i_star >= 0.0)) throw ConfigError("analysis.i_star: must be non-negative");
    if (analysis.initial_fast_error < 0.0) throw ConfigError("analysis.initial_fast_error: must be non-negative");
    if (observer.injection_amplitude < 0.0) throw ConfigError("observer.injection_amplitude: must be non-negative");

    if (mode == ScenarioMode::BoundaryLayer) {
        const BoundaryLayerSettings& bl = boundary_layer;
        if (!(bl.horizon > 0.0) || !(bl.dtau > 0.0)) throw ConfigError("boundary_layer: horizon and dtau must be positive");
        if (bl.dtau > bl.horizon) throw ConfigError("boundary_layer.dtau: larger than the horizon");
        if (bl.record_every < 1) throw ConfigError("boundary_layer.record_every: must be at least 1");
        const BoundaryLayerParams p = boundary_layer_params();
        if (!(p.kappa_e > 0.0) || !(p.kappa_p > 0.0) || !(p.kappa_z.minCoeff() > 0.0)) {
            throw ConfigError("boundary_layer: kappas must be positive");
        }
        return;
    }

    if (!observer.xi_hat_exact && !(std::isfinite(observer.xi_hat) && observer.xi_hat != 0.0)) {
        throw ConfigError("observer.xi_hat: must be finite and non-zero");
    }
    if (!profile) throw ConfigError("speed_profile: required for closed-loop scenarios");
    const IntegrationSettings& in = integration;
    if (!(in.dt > 0.0) || !(in.horizon > 0.0)) throw ConfigError("integration: dt and horizon must be positive");
    if (in.dt > in.horizon) throw ConfigError("integration.dt: larger than the horizon");
    if (in.horizon > profile->horizon() * (1.0 + 1e-12)) {
        throw ConfigError(fmt::format("integration.horizon: {} s exceeds the speed profile length {} s", in.horizon,
                                      profile->horizon()));
    }
    if (in.decimation < 1) throw ConfigError("integration.decimation: must be at least 1");
    if (in.transient && !(*in.transient >= 0.0)) throw ConfigError("integration.transient: must be non-negative");
    if (!(in.current_limit > 0.0)) throw ConfigError("integration.current_limit: must be positive");
    if (noise.current_amplitude < 0.0) throw ConfigError("noise.current_amplitude: must be non-negative");
    if (in.enforce_stiffness_guard && in.dt > max_stable_dt() * (1.0 + 1e-9)) {
        throw ConfigError(fmt::format(
            "integration.dt: {:.6g} s exceeds the stiffness limit {:.6g} s = min(L/R, 1/lambda, 1/k_p, 1/k_e)/20",
            in.dt, max_stable_dt()));
    }
    if (mode != ScenarioMode::ExogenousSpeed && plant_initial.speed_rpm * profile->sign() <= 0.0) {
        throw ConfigError("initial_state.speed_rpm: must be non-zero with the sign of the speed profile");
    }
}

ScenarioConfig benchmark_config() {
    ScenarioConfig cfg;
    cfg.name = "benchmark";
    cfg.mode = ScenarioMode::FullCascade;
    cfg.plant = benchmark_plant();
    cfg.nominal_speed_rpm = 7000.0;
    cfg.plant_initial.current = Vec2::Zero();
    cfg.plant_initial.angle = 1.0;
    cfg.plant_initial.speed_rpm = 3500.0;
    cfg.profile = benchmark_profile(cfg.plant.pole_pairs);
    cfg.gains = benchmark_gains();
    cfg.speed_loop.torque_max = 0.3;
    cfg.integration.transient = 0.5;
    return cfg;
}

ScenarioConfig parse_config(const std::string& json_text) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::parse_error& err) {
        throw ConfigError(std::string("invalid JSON: ") + err.what());
    }
    Section top(root, "config",
                {"name", "mode", "plant", "initial_state", "speed_profile", "gains", "speed_loop", "torque_reference",
                 "observer", "noise", "integration", "analysis", "boundary_layer"});
    ScenarioConfig cfg = benchmark_config();
    top.read("name", cfg.name);
    if (top.has("mode")) {
        std::string mode;
        top.read("mode", mode);
        cfg.mode = scenario_mode_from_string(mode);
    }

    bool plant_changed = false;
    if (top.has("plant")) {
        Section s(top.at("plant"), "plant", {"R", "L", "phi", "pole_pairs", "J_load", "nominal_speed_rpm", "load"});
        s.read("R", cfg.plant.R);
        s.read("L", cfg.plant.L);
        s.read("phi", cfg.plant.phi);
        s.read("pole_pairs", cfg.plant.pole_pairs);
        s.read("J_load", cfg.plant.J_load);
        s.read("nominal_speed_rpm", cfg.nominal_speed_rpm);
        if (s.has("load")) {
            cfg.plant.load = parse_load(s.at("load"), cfg.nominal_speed_rpm);
        } else if (s.has("nominal_speed_rpm")) {
            cfg.plant.load = LoadModel::propeller(0.25, 0.8, rpm_to_rad_s(cfg.nominal_speed_rpm));
        }
        plant_changed = s.has("pole_pairs");
    }
    if (top.has("speed_profile")) {
        cfg.profile = parse_profile(top.at("speed_profile"), cfg.plant.pole_pairs);
    } else if (plant_changed) {
        cfg.profile = benchmark_profile(cfg.plant.pole_pairs);
    }
    if (top.has("initial_state")) {
        Section s(top.at("initial_state"), "initial_state", {"current", "angle", "speed_rpm"});
        s.read("current", cfg.plant_initial.current);
        s.read("angle", cfg.plant_initial.angle);
        s.read("speed_rpm", cfg.plant_initial.speed_rpm);
    }
    if (top.has("gains")) {
        parse_gains(top.at("gains"), cfg);
    }
    if (top.has("speed_loop")) {
        Section s(top.at("speed_loop"), "speed_loop", {"k_p", "k_i", "tau_f", "torque_max", "use_true_speed"});
        s.read("k_p", cfg.speed_loop.k_p);
        s.read("k_i", cfg.speed_loop.k_i);
        s.read("tau_f", cfg.speed_loop.tau_f);
        s.read("torque_max", cfg.speed_loop.torque_max);
        s.read("use_true_speed", cfg.speed_loop_uses_true_speed);
    }
    if (top.has("torque_reference")) {
        Section s(top.at("torque_reference"), "torque_reference", {"kind", "value"});
        std::string kind = "inverse-dynamics";
        s.read("kind", kind);
        if (kind == "inverse-dynamics") {
            cfg.torque_reference.kind = TorqueReference::Kind::InverseDynamics;
        } else if (kind == "constant") {
            cfg.torque_reference.kind = TorqueReference::Kind::Constant;
        } else {
            throw ConfigError("torque_reference.kind: unknown kind '" + kind + "'");
        }
        s.read("value", cfg.torque_reference.value);
    }
    if (top.has("observer")) {
        Section s(top.at("observer"), "observer",
                  {"xi_hat", "angle", "injection_amplitude", "xi_hat_exact", "fast_states_converged"});
        s.read("xi_hat", cfg.observer.xi_hat);
        s.read("angle", cfg.observer.angle);
        s.read("injection_amplitude", cfg.observer.injection_amplitude);
        s.read("xi_hat_exact", cfg.observer.xi_hat_exact);
        s.read("fast_states_converged", cfg.observer.fast_states_converged);
    }
    if (top.has("noise")) {
        Section s(top.at("noise"), "noise", {"current_amplitude", "seed"});
        s.read("current_amplitude", cfg.noise.current_amplitude);
        s.read("seed", cfg.noise.seed);
    }
    if (top.has("integration")) {
        Section s(top.at("integration"), "integration",
                  {"dt", "horizon", "decimation", "transient", "enforce_stiffness_guard", "current_limit"});
        s.read("dt", cfg.integration.dt);
        s.read("horizon", cfg.integration.horizon);
        s.read("decimation", cfg.integration.decimation);
        s.read("transient", cfg.integration.transient);
        s.read("enforce_stiffness_guard", cfg.integration.enforce_stiffness_guard);
        s.read("current_limit", cfg.integration.current_limit);
    }
    if (top.has("analysis")) {
        Section s(top.at("analysis"), "analysis", {"i_star", "rho", "window", "windows", "initial_fast_error"});
        s.read("i_star", cfg.analysis.i_star);
        s.read("rho", cfg.analysis.rho);
        s.read("window", cfg.analysis.window);
        s.read("windows", cfg.analysis.windows);
        s.read("initial_fast_error", cfg.analysis.initial_fast_error);
    }
    if (top.has("boundary_layer")) {
        Section s(top.at("boundary_layer"), "boundary_layer",
                  {"i_q", "initial", "horizon", "dtau", "record_every", "kappa_e", "kappa_p", "kappa_z"});
        BoundaryLayerSettings& bl = cfg.boundary_layer;
        s.read("i_q", bl.i_q);
        s.read("horizon", bl.horizon);
        s.read("dtau", bl.dtau);
        s.read("record_every", bl.record_every);
        s.read("kappa_e", bl.kappa_e);
        s.read("kappa_p", bl.kappa_p);
        s.read("kappa_z", bl.kappa_z);
        if (s.has("initial")) {
            Section init(s.at("initial"), "boundary_layer.initial", {"w", "e", "i_tilde", "z"});
            init.read("w", bl.initial.w);
            init.read("e", bl.initial.e);
            init.read("i_tilde", bl.initial.i_tilde);
            init.read("z", bl.initial.z);
        }
    }
    cfg.validate();
    return cfg;
}

ScenarioConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config file '" + path + "'");
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    try {
        return parse_config(buf.str());
    } catch (const ConfigError& err) {
        throw ConfigError(path + ": " + err.what());
    }
}

}  // namespace pmsm
