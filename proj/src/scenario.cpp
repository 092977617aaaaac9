#include "pmsm/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <random>

namespace pmsm {

const char* to_string(ScenarioMode mode) {
    switch (mode) {
        case ScenarioMode::ExogenousSpeed:
            return "exogenous-speed";
        case ScenarioMode::FullCascade:
            return "full-cascade";
        case ScenarioMode::SensoredAblation:
            return "sensored-ablation";
        case ScenarioMode::BoundaryLayer:
            return "boundary-layer";
    }
    return "unknown";
}

ScenarioMode scenario_mode_from_string(const std::string& s) {
    for (ScenarioMode m : {ScenarioMode::ExogenousSpeed, ScenarioMode::FullCascade, ScenarioMode::SensoredAblation,
                           ScenarioMode::BoundaryLayer}) {
        if (s == to_string(m)) {
            return m;
        }
    }
    throw ConfigError("unknown scenario mode '" + s + "'");
}

double ScenarioConfig::max_stable_dt() const {
    return std::min({plant.L / plant.R, 1.0 / gains.lambda, 1.0 / gains.k_p, 1.0 / gains.k_e}) / 20.0;
}

BoundaryLayerParams ScenarioConfig::boundary_layer_params() const {
    const FastScaling s = gains.scaling(plant.L);
    BoundaryLayerParams p;
    p.kappa_e = boundary_layer.kappa_e.value_or(s.kappa_e);
    p.kappa_p = boundary_layer.kappa_p.value_or(s.kappa_p);
    p.kappa_z = boundary_layer.kappa_z.value_or(s.kappa_z);
    p.i_q = boundary_layer.i_q;
    return p;
}

CertificationInput ScenarioConfig::certification_input() const {
    const BoundaryLayerParams bl = boundary_layer_params();
    CertificationInput in;
    in.injection_amplitude = observer.injection_amplitude;
    if (analysis.i_star) {
        in.i_star = *analysis.i_star;
    } else {
        // |i_q| = 2/(3p) |xi_hat| |T*| with |xi_hat| near max(1/phi, xi_hat(0)).
        const double torque_bound = speed_loop.torque_max.value_or(0.0);
        const double xi_bound = std::max(1.0 / plant.phi, std::abs(observer.xi_hat));
        in.i_star = 2.0 / (3.0 * plant.pole_pairs) * xi_bound * torque_bound;
    }
    in.i_q = in.i_star;
    in.initial_fast_error = analysis.initial_fast_error;
    if (mode == ScenarioMode::BoundaryLayer) {
        in.injection_amplitude = boundary_layer.initial.w.norm();
        in.i_q = boundary_layer.i_q;
        if (!analysis.i_star) in.i_star = std::abs(in.i_q);
        in.initial_fast_error = std::max(in.initial_fast_error, boundary_layer.initial.fast_norm());
    }
    in.rho = analysis.rho;
    in.window = analysis.window;
    in.windows = analysis.windows;
    in.kappa_e = bl.kappa_e;
    in.kappa_p = bl.kappa_p;
    in.kappa_z = bl.kappa_z;
    return in;
}

ClosedLoopModel::ClosedLoopModel(const ScenarioConfig& cfg) : cfg_(cfg), motor_(KnownConstants::from(cfg.plant)) {
    if (cfg_.mode == ScenarioMode::BoundaryLayer) {
        throw ConfigError("ClosedLoopModel: boundary-layer scenarios have no closed-loop plant");
    }
}

PlantState ClosedLoopModel::plant_state(const ClosedLoopBundle& s) const {
    PlantState p;
    p.i_s = s.x.segment<2>(slot::i_s);
    p.zeta = s.circles[slot::zeta];
    p.omega_m = s.x[slot::omega_m];
    return p;
}

ObserverState ClosedLoopModel::observer_state(const ClosedLoopBundle& s, double t, const StepInputs& in) const {
    ObserverState o;
    o.zeta_chi_hat = s.circles[slot::zeta_chi_hat];
    o.xi_hat = s.x[slot::xi_hat];
    o.i_hat = s.x.segment<2>(slot::i_hat);
    o.theta_hat = s.x.segment<3>(slot::theta_hat);
    o.w = exosystem_step(in.w0, cfg_.gains.lambda, t - in.t0);
    return o;
}

void ClosedLoopModel::apply_ground_truth(ObserverState& obs, const PlantState& plant,
                                         const Vec2& i_meas_static) const {
    const double omega = plant.omega(cfg_.plant);
    const double sign = sgn(omega);
    obs.zeta_chi_hat = signed_by(plant.zeta, sign);
    obs.xi_hat = sign / cfg_.plant.phi;
    const double chi = std::abs(omega) * cfg_.plant.phi;
    // eta = identity, so h = -chi J (1, 0) = (0, -chi).
    const Vec3 theta(cfg_.plant.R, 0.0, -chi);
    obs.theta_hat = theta - beta(to_frame(obs.zeta_chi_hat, i_meas_static), cfg_.gains.k_z);
}

ClosedLoopBundle ClosedLoopModel::initial_state() const {
    ClosedLoopBundle s;
    s.x.segment<2>(slot::i_s) = cfg_.plant_initial.current;
    s.circles[slot::zeta] = from_angle(cfg_.plant_initial.angle);
    if (cfg_.mode == ScenarioMode::ExogenousSpeed) {
        s.x[slot::omega_m] = cfg_.profile->at(0.0).omega / cfg_.plant.pole_pairs;
    } else {
        s.x[slot::omega_m] = rpm_to_rad_s(cfg_.plant_initial.speed_rpm);
    }
    const PlantState plant = plant_state(s);
    const double omega = plant.omega(cfg_.plant);

    s.circles[slot::zeta_chi_hat] = from_angle(cfg_.observer.angle);
    s.x[slot::xi_hat] = cfg_.observer.xi_hat_exact ? sgn(omega) / cfg_.plant.phi : cfg_.observer.xi_hat;

    if (cfg_.observer.fast_states_converged) {
        ObserverState obs;
        obs.zeta_chi_hat = s.circles[slot::zeta_chi_hat];
        obs.xi_hat = s.x[slot::xi_hat];
        const Diagnostics d = compute_diagnostics(plant, omega, obs, 0.0, cfg_.plant, cfg_.gains);
        s.x.segment<2>(slot::i_hat) = d.i_chi;
        s.x.segment<3>(slot::theta_hat) = d.theta - beta(d.i_chi, cfg_.gains.k_z);
    }
    return s;
}

void ClosedLoopModel::constrain(double t, ClosedLoopBundle& s) const {
    if (cfg_.mode == ScenarioMode::ExogenousSpeed) {
        s.x[slot::omega_m] = cfg_.profile->at(t).omega / cfg_.plant.pole_pairs;
    }
    if (cfg_.mode == ScenarioMode::SensoredAblation) {
        ObserverState obs;
        const PlantState plant = plant_state(s);
        apply_ground_truth(obs, plant, plant.i_s);
        s.circles[slot::zeta_chi_hat] = obs.zeta_chi_hat;
        s.x[slot::xi_hat] = obs.xi_hat;
        s.x.segment<3>(slot::theta_hat) = obs.theta_hat;
    }
}

ClosedLoopEval ClosedLoopModel::evaluate(double t, const ClosedLoopBundle& s, const StepInputs& in) const {
    const PlantParams& params = cfg_.plant;
    const int p = params.pole_pairs;
    const bool exogenous = cfg_.mode == ScenarioMode::ExogenousSpeed;

    ClosedLoopEval ev;
    ev.plant = plant_state(s);
    if (exogenous) {
        const SpeedSample sp = cfg_.profile->at(t);
        ev.plant.omega_m = sp.omega / p;
        ev.domega = sp.domega;
    }
    ev.omega = ev.plant.omega(params);
    ev.observer = observer_state(s, t, in);
    ev.i_meas_static = ev.plant.i_s + in.noise;
    if (cfg_.mode == ScenarioMode::SensoredAblation) {
        apply_ground_truth(ev.observer, ev.plant, ev.i_meas_static);
    }

    const FilteredTorque ref = filter_response(in.filter0, in.raw_torque, cfg_.speed_loop.tau_f, t - in.t0);
    ev.torque_ref = ref.value;
    ev.torque_ref_rate = ref.rate;
    ev.controller = evaluate_controller(ev.observer, ev.i_meas_static, ref.value, ref.rate, motor_, cfg_.gains);
    ev.i_meas = to_frame(ev.observer.zeta_chi_hat, ev.i_meas_static);
    ev.plant_rate = plant_derivative(ev.plant, ev.controller.u_s, params,
                                     exogenous ? SpeedMode::Exogenous : SpeedMode::Mechanical);
    if (!exogenous) {
        ev.domega = ev.plant_rate.domega_m * p;
    }

    ClosedLoopRate& r = ev.rate;
    r.dx.segment<2>(slot::i_s) = ev.plant_rate.di_s;
    r.dx[slot::omega_m] = ev.plant_rate.domega_m;
    r.dx.segment<2>(slot::i_hat) = ev.controller.observer.i_hat_rate;
    r.dx.segment<3>(slot::theta_hat) = ev.controller.observer.theta_hat_rate;
    r.dx[slot::xi_hat] = ev.controller.attitude.xi_hat_rate;
    r.rates[slot::zeta] = ev.plant_rate.zeta_rate;
    r.rates[slot::zeta_chi_hat] = ev.controller.attitude.omega_chi_hat;
    if (cfg_.mode == ScenarioMode::SensoredAblation) {
        // Overridden from ground truth after every step.
        r.dx.segment<3>(slot::theta_hat).setZero();
        r.dx[slot::xi_hat] = 0.0;
    }
    return ev;
}

namespace {

struct SummaryAccumulator {
    ScenarioSummary s;
    long post_samples = 0;
    double speed_sq = 0.0;
    double torque_sq = 0.0;
    double fast_sq = 0.0;

    void add(double t, const ScenarioConfig& cfg, const TraceRow& row, const Diagnostics& d) {
        const double R = cfg.plant.R;
        s.final_R_hat = row.R_hat;
        const double r_err = std::abs(row.R_hat - R);
        const double speed_err = std::abs(row.omega_m_rpm - row.omega_hat_m_rpm);
        const double e_norm = row.e.norm();
        if (r_err > 0.1 * R) s.R_settling_time = t;
        if (speed_err > 0.02 * cfg.nominal_speed_rpm) s.speed_settling_time = t;
        if (e_norm > 0.1) s.e_settling_time = t;
        if (t < s.transient) {
            return;
        }
        ++post_samples;
        const double torque_err = row.T_el - row.T_ref;
        const double fast = d.fast_norm();
        s.max_R_error = std::max(s.max_R_error, r_err);
        s.max_speed_error_rpm = std::max(s.max_speed_error_rpm, speed_err);
        s.peak_torque_ref = std::max(s.peak_torque_ref, std::abs(row.T_ref));
        s.max_tracking_error = std::max(s.max_tracking_error, e_norm);
        s.max_fast_norm = std::max(s.max_fast_norm, fast);
        s.max_sigma_hat = std::max(s.max_sigma_hat, row.sigma_hat);
        s.max_theta_err = std::max(s.max_theta_err, std::abs(row.theta_err));
        speed_sq += speed_err * speed_err;
        torque_sq += torque_err * torque_err;
        fast_sq += fast * fast;
    }

    void finish() {
        if (post_samples > 0) {
            const double n = static_cast<double>(post_samples);
            s.rms_speed_error_rpm = std::sqrt(speed_sq / n);
            s.torque_rms_error = std::sqrt(torque_sq / n);
            s.rms_fast_norm = std::sqrt(fast_sq / n);
        }
    }
};

TraceRow make_row(double t, const ScenarioConfig& cfg, const ClosedLoopEval& ev, const Diagnostics& d) {
    const int p = cfg.plant.pole_pairs;
    const Estimates& est = ev.controller.estimates;
    TraceRow row;
    row.t = t;
    row.omega_m_rpm = rad_s_to_rpm(ev.plant.omega_m);
    row.omega_hat_m_rpm = rad_s_to_rpm(est.omega_hat / p);
    row.theta_err = d.theta_err;
    row.xi = d.xi;
    row.xi_hat = ev.observer.xi_hat;
    row.R = cfg.plant.R;
    row.R_hat = est.R_hat;
    row.T_el = torque(ev.plant, cfg.plant);
    row.T_hat = est.torque_hat.value_or(0.0);
    row.T_ref = ev.torque_ref;
    row.i_chi = d.i_chi;
    row.i_ref = Vec2(ev.observer.w.x(), ev.controller.reference.i_q);
    row.e = d.e;
    row.i_tilde = d.i_tilde;
    row.z_norm = d.z.norm();
    row.sigma_hat = d.sigma_hat();
    row.u_chi = ev.controller.u_chi;
    row.w = ev.observer.w;
    return row;
}

ScenarioResult run_boundary_layer(const ScenarioConfig& cfg) {
    ScenarioResult result;
    result.config = cfg;
    const BoundaryLayerSettings& bl = cfg.boundary_layer;
    try {
        const auto samples =
            boundary_layer_sim(cfg.boundary_layer_params(), bl.initial, bl.horizon, bl.dtau, bl.record_every);
        for (const auto& s : samples) {
            result.boundary_layer.push_back({s.tau, s.state});
        }
        result.summary.completed = true;
        result.summary.t_end = samples.back().tau;
        result.summary.steps = static_cast<long>(std::llround(bl.horizon / bl.dtau));
    } catch (const std::runtime_error& err) {
        result.summary.diverged = true;
        result.summary.message = err.what();
    }
    return result;
}

}  // namespace

ScenarioResult run_scenario(const ScenarioConfig& cfg, const StepObserver& on_step) {
    cfg.validate();
    if (cfg.mode == ScenarioMode::BoundaryLayer) {
        return run_boundary_layer(cfg);
    }

    ScenarioResult result;
    result.config = cfg;
    const ClosedLoopModel model(cfg);
    const PlantParams& params = cfg.plant;
    const int p = params.pole_pairs;
    const double dt = cfg.integration.dt;
    const auto steps = static_cast<long>(std::llround(cfg.integration.horizon / dt));
    const int decimation = cfg.integration.decimation;
    const bool true_speed = cfg.speed_loop_uses_true_speed || cfg.mode == ScenarioMode::SensoredAblation;

    ClosedLoopBundle state = model.initial_state();
    model.constrain(0.0, state);
    SpeedLoopState loop;
    Vec2 w(cfg.observer.injection_amplitude, 0.0);
    std::mt19937_64 rng(cfg.noise.seed);
    std::uniform_real_distribution<double> noise(-cfg.noise.current_amplitude, cfg.noise.current_amplitude);

    SummaryAccumulator acc;
    acc.s.transient = cfg.integration.transient_time();
    result.trace.reserve(static_cast<std::size_t>(steps / decimation + 2));

    double t = 0.0;
    try {
        for (long k = 0; k <= steps; ++k) {
            t = static_cast<double>(k) * dt;
            StepInputs in{t, w, loop.filtered, loop.filtered, Vec2::Zero()};
            if (cfg.noise.current_amplitude > 0.0) {
                in.noise = Vec2(noise(rng), noise(rng));
            }

            // Speed estimate does not depend on the torque demand.
            const ClosedLoopEval probe = model.evaluate(t, state, in);
            if (k < steps) {
                if (cfg.mode == ScenarioMode::ExogenousSpeed) {
                    if (cfg.torque_reference.kind == TorqueReference::Kind::Constant) {
                        in.raw_torque = cfg.torque_reference.value;
                    } else {
                        in.raw_torque = params.J_load * probe.domega / p + params.load.torque(probe.plant.omega_m);
                    }
                    if (cfg.speed_loop.torque_max) {
                        in.raw_torque = std::clamp(in.raw_torque, -*cfg.speed_loop.torque_max,
                                                   *cfg.speed_loop.torque_max);
                    }
                } else {
                    const double omega_m_meas =
                        true_speed ? probe.plant.omega_m : probe.controller.estimates.omega_hat / p;
                    const double omega_m_ref = cfg.profile->at(t).omega / p;
                    in.raw_torque = speed_pi(omega_m_meas, omega_m_ref, loop, cfg.speed_loop, dt);
                }
            }

            const ClosedLoopEval ev = model.evaluate(t, state, in);
            const Diagnostics d =
                compute_diagnostics(ev.plant, ev.omega, ev.observer, ev.controller.reference.i_q, params, cfg.gains);
            const TraceRow row = make_row(t, cfg, ev, d);
            acc.add(t, cfg, row, d);
            acc.s.max_norm_drift =
                std::max({acc.s.max_norm_drift, std::abs(state.circles[0].norm_error()),
                          std::abs(state.circles[1].norm_error())});
            if (k % decimation == 0 || k == steps) {
                result.trace.push_back(row);
            }
            if (on_step) {
                on_step(StepView{t, state, in, model});
            }
            if (k == steps) {
                break;
            }

            state = rk4_step(state, t, dt,
                             [&](double tt, const ClosedLoopBundle& b) { return model.rates(tt, b, in); });
            model.constrain(t + dt, state);
            reference_filter(in.raw_torque, loop, cfg.speed_loop.tau_f, dt);
            w = exosystem_step(w, cfg.gains.lambda, dt);
            acc.s.steps = k + 1;

            if (!state.x.allFinite() ||
                state.x.segment<2>(slot::i_s).norm() > cfg.integration.current_limit) {
                throw DivergenceError("state left the admissible region (|i_s| above " +
                                          std::to_string(cfg.integration.current_limit) + " A or non-finite)",
                                      t + dt);
            }
        }
        acc.s.completed = true;
        acc.s.t_end = t;
    } catch (const DivergenceError& err) {
        acc.s.diverged = true;
        acc.s.t_end = err.time();
        acc.s.message = std::string("numerical divergence at t = ") + std::to_string(err.time()) + " s: " + err.what();
    } catch (const std::invalid_argument& err) {
        if (dynamic_cast<const ConfigError*>(&err) != nullptr) {
            throw;
        }
        acc.s.diverged = true;
        acc.s.t_end = t;
        acc.s.message = std::string("numerical divergence at t = ") + std::to_string(t) + " s: " + err.what();
    }
    acc.finish();
    result.summary = acc.s;
    return result;
}

SweepReport epsilon_sweep(const ScenarioConfig& base, const std::vector<double>& epsilons, double band,
                          bool parallel) {
    const FastScaling scaling = base.gains.scaling(base.plant.L);
    auto run_one = [&base, scaling](double eps) {
        SweepEntry entry;
        entry.epsilon = eps;
        try {
            FastScaling s = scaling;
            s.epsilon = eps;
            ScenarioConfig cfg = base;
            cfg.gains = ControllerGains::from_scaling(s, base.plant.L, base.gains.k_eta, base.gains.gamma);
            entry.gains = cfg.gains;
            const ScenarioResult r = run_scenario(cfg);
            entry.summary = r.summary;
            entry.ok = r.summary.completed;
            entry.error = r.summary.message;
            entry.fast_residual = r.summary.max_fast_norm;
            entry.slow_residual = r.summary.max_sigma_hat;
        } catch (const std::exception& err) {
            entry.ok = false;
            entry.error = err.what();
        }
        return entry;
    };

    SweepReport report;
    if (parallel) {
        std::vector<std::future<SweepEntry>> jobs;
        for (double eps : epsilons) {
            jobs.push_back(std::async(std::launch::async, run_one, eps));
        }
        for (auto& j : jobs) {
            report.entries.push_back(j.get());
        }
    } else {
        for (double eps : epsilons) {
            report.entries.push_back(run_one(eps));
        }
    }

    std::vector<const SweepEntry*> ok;
    for (const SweepEntry& e : report.entries) {
        if (e.ok) ok.push_back(&e);
    }
    std::sort(ok.begin(), ok.end(), [](const SweepEntry* a, const SweepEntry* b) { return a->epsilon > b->epsilon; });
    report.fast_monotone = !ok.empty();
    report.slow_monotone = !ok.empty();
    for (std::size_t k = 1; k < ok.size(); ++k) {
        if (ok[k]->fast_residual > (1.0 + band) * ok[k - 1]->fast_residual) report.fast_monotone = false;
        if (ok[k]->slow_residual > (1.0 + band) * ok[k - 1]->slow_residual) report.slow_monotone = false;
    }
    return report;
}

}  // namespace pmsm
