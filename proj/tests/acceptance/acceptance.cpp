// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "pmsm/controller_observer.hpp"
#include "pmsm/excitation.hpp"
#include "pmsm/integrator.hpp"
#include "pmsm/scenario.hpp"
#include "pmsm/trace.hpp"

using namespace pmsm;
namespace fs = std::filesystem;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
const std::string kConfigDir = PMSM_LAB_CONFIG_DIR;

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Check = std::function<Outcome()>;

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Outcome benchmark_convergence() {
    const ScenarioConfig cfg = load_config(kConfigDir + "/benchmark.json");
    const auto t0 = std::chrono::steady_clock::now();
    const ScenarioResult r = run_scenario(cfg);
    const double runtime = seconds_since(t0);
    const ScenarioSummary& s = r.summary;
    const double r_tol = 0.1 * cfg.plant.R;
    const double w_tol = 0.02 * cfg.nominal_speed_rpm;
    const double t_tol = 0.05 * s.peak_torque_ref;
    const bool pass = s.completed && cfg.integration.dt == 1e-6 && cfg.integration.horizon == 2.0 &&
                      s.transient == 0.5 && s.max_R_error < r_tol && s.max_speed_error_rpm < w_tol &&
                      s.torque_rms_error < t_tol && runtime < 30.0;
    return {pass, fmt::format("max|R_hat-R| = {:.3g} Ohm (< {:.3g}), max speed error = {:.3g} rpm (< {:.3g}), "
                              "torque RMS error = {:.3g} N*m (< {:.3g}), runtime = {:.1f} s (< 30)",
                              s.max_R_error, r_tol, s.max_speed_error_rpm, w_tol, s.torque_rms_error, t_tol, runtime)};
}

Outcome gramian_closed_form() {
    const double W = 2.0;
    const Mat3 g = gramian(nominal_regressor(W, 0.0, 1e-3, kTwoPi), 0.0, kTwoPi);
    const double exact = std::numbers::pi * W * W;
    const double rel = std::abs(g(0, 0) - exact) / exact;
    const UcoBounds torque_only = uco_bounds(nominal_regressor(0.0, 8.0, 1e-3, 4 * kTwoPi), kTwoPi, kTwoPi);
    const bool pass = rel < 1e-6 && torque_only.alpha1 < 1e-12 && !torque_only.uniformly_observable;
    return {pass, fmt::format("G11 = {:.12g} vs pi W^2 = {:.12g} (rel {:.2g}); torque-current-only alpha1 = {:.2g}",
                              g(0, 0), exact, rel, torque_only.alpha1)};
}

Outcome boundary_layer_certificate() {
    const ScenarioConfig cfg = load_config(kConfigDir + "/boundary_layer.json");
    CertificationInput in = cfg.certification_input();
    in.initial_fast_error = 0.0;  // isolated z-dynamics
    const double i_q = in.i_q;
    const double w_target = 1.01 * w_star(in.i_star, 0.5);
    in.rho = 0.5;
    in.injection_amplitude = w_target;
    const GramianReport rep = certify(in);
    if (!rep.uniformly_observable) {
        return {false, "certificate unavailable: perturbed Gramian not positive definite"};
    }

    BoundaryLayerParams params = cfg.boundary_layer_params();
    params.i_q = i_q;
    BoundaryLayerState init;
    init.w = Vec2(w_target, 0.0);
    init.z = cfg.boundary_layer.initial.z;
    const double horizon = 50.0 * rep.window;
    const auto traj = boundary_layer_sim(params, init, horizon, 1e-3, 10);
    const double z0 = init.z.norm();
    double worst_ratio = 0.0;
    for (const auto& smp : traj) {
        const double envelope = rep.overshoot * std::exp(-rep.decay_rate * smp.tau) * z0;
        worst_ratio = std::max(worst_ratio, smp.state.z.norm() / envelope);
    }
    const double z_end = traj.back().state.z.norm();

    // Negative control: no injection, constant i_q, z(0) on the unexcited direction.
    BoundaryLayerState ctrl;
    ctrl.z = Vec3(1.0, 0.0, i_q).normalized();
    const auto flat = boundary_layer_sim(params, ctrl, horizon, 1e-3, 1000);
    const double z_ctrl = flat.back().state.z.norm();

    const bool pass = worst_ratio <= 1.0 && z_end < z0 && z_ctrl > 0.999;
    return {pass, fmt::format("|w(0)| = {:.4g} A (W* = {:.4g}), 50 windows: max |z|/envelope = {:.3g}, "
                              "|z| {:.3g} -> {:.3g} (certified rate {:.3g}); w = 0 control keeps |z| = {:.6f}",
                              w_target, rep.w_star, worst_ratio, z0, z_end, rep.decay_rate, z_ctrl)};
}

Outcome torque_masking() {
    ScenarioConfig base = load_config(kConfigDir + "/sensored_ablation.json");
    std::vector<std::vector<TraceRow>> traces;
    for (double W : {0.0, 2.0, 5.0}) {
        ScenarioConfig cfg = base;
        cfg.observer.injection_amplitude = W;
        const ScenarioResult r = run_scenario(cfg);
        if (!r.summary.completed) return {false, fmt::format("W = {} run failed: {}", W, r.summary.message)};
        traces.push_back(r.trace);
    }
    double worst = 0.0;
    for (std::size_t k = 0; k < traces[0].size(); ++k) {
        for (int j = 1; j < 3; ++j) {
            worst = std::max(worst, std::abs(traces[j][k].T_el - traces[0][k].T_el));
        }
    }
    const bool same_len = traces[1].size() == traces[0].size() && traces[2].size() == traces[0].size();
    return {same_len && worst < 1e-6,
            fmt::format("W in {{0, 2, 5}} A over {} samples: max |T_el difference| = {:.3g} N*m (< 1e-6)",
                        traces[0].size(), worst)};
}

Outcome error_dynamics_oracle() {
    ScenarioConfig cfg = load_config(kConfigDir + "/benchmark.json");
    cfg.integration.horizon = 0.05;
    cfg.integration.transient = 0.0;
    const ControllerGains& g = cfg.gains;
    double e_worst = 0.0;
    double z_worst = 0.0;
    run_scenario(cfg, [&](const StepView& v) {
        const ClosedLoopEval ev = v.model.evaluate(v.t, v.state, v.inputs);
        const ObserverState& s = ev.observer;
        const Diagnostics d = compute_diagnostics(ev.plant, ev.omega, s, ev.controller.reference.i_q, cfg.plant, g);
        // e' from the simulated vector field vs the designed tracking dynamics.
        const Vec2 e_rate = ev.controller.observer.i_hat_rate - Vec2(g.lambda * s.w.y(), ev.controller.reference.p_q);
        const Vec2 e_model = -g.k_e * d.e + g.k_p * d.i_tilde;
        e_worst = std::max(e_worst, (e_rate - e_model).norm() / std::max(1.0, e_model.norm()));
        // z' without the theta drift: theta_hat' + d beta/di * d/dt (current in the estimated frame).
        const double frame_rate = ev.rate.rates[slot::zeta_chi_hat];
        const Vec2 i_rate = to_frame(s.zeta_chi_hat, ev.plant_rate.di_s) - frame_rate * apply_j(d.i_chi);
        const Vec3 z_rate = ev.controller.observer.theta_hat_rate + beta_jacobian(d.i_chi, g.k_z) * i_rate;
        const Mat32 om = regressor(d.i_chi);
        const Vec3 z_model = -(g.k_z.asDiagonal() * om * om.transpose() * d.z) / cfg.plant.L;
        const double scale = std::max({1.0, z_model.norm(), ev.controller.observer.theta_hat_rate.norm()});
        z_worst = std::max(z_worst, (z_rate - z_model).norm() / scale);
    });
    const bool pass = e_worst < 1e-8 && z_worst < 1e-8;
    return {pass, fmt::format("over 50 ms of the benchmark cascade: max relative residual e' = {:.2g}, "
                              "z' = {:.2g} (< 1e-8)",
                              e_worst, z_worst)};
}

Outcome pole_placement() {
    const PlantParams p = benchmark_plant();
    const double chi = p.phi * p.pole_pairs * rpm_to_rad_s(3500.0);
    const std::complex<double> pole(-100.0, 100.0 / 3.0);
    const SlowGains s = gains_from_poles(pole, std::conj(pole), chi);
    const double ek = std::abs(s.k_eta / 34.75 - 1.0);
    const double eg = std::abs(s.gamma / 335.34 - 1.0);
    return {ek < 0.005 && eg < 0.005, fmt::format("chi = {:.6g}: k_eta = {:.6g} ({:.2g} off), gamma = {:.6g} "
                                                  "({:.2g} off), limit 0.5%",
                                                  chi, s.k_eta, ek, s.gamma, eg)};
}

Outcome epsilon_practical_stability() {
    const ScenarioConfig cfg = load_config(kConfigDir + "/epsilon_sweep.json");
    const double eps = 1.0 / cfg.gains.lambda;
    const SweepReport rep = epsilon_sweep(cfg, {eps, eps / 2, eps / 4}, 0.10, true);
    std::string detail = "fast residual";
    bool all_ok = true;
    for (const SweepEntry& e : rep.entries) {
        all_ok = all_ok && e.ok;
        detail += fmt::format(" eps={:.3g}: {}", e.epsilon,
                              e.ok ? fmt::format("{:.4g}", e.fast_residual) : "failed (" + e.error + ")");
        detail += ";";
    }
    detail += fmt::format(" non-increasing within 10%: {}", rep.fast_monotone ? "yes" : "no");
    return {all_ok && rep.fast_monotone, detail};
}

Outcome saddle_probe() {
    ScenarioConfig base = load_config(kConfigDir + "/exogenous_speed.json");
    const double omega = base.plant.pole_pairs * rpm_to_rad_s(3500.0);
    base.profile = SpeedProfile({segment::Hold{omega, 0.5}}, 0.5 * omega, 1.5 * omega, 1.0);
    base.observer.xi_hat_exact = true;
    base.observer.fast_states_converged = true;
    base.plant_initial.angle = 0.0;
    base.integration.transient = 0.0;
    base.integration.decimation = 100;

    ScenarioConfig near = base;
    near.observer.angle = -(std::numbers::pi - 0.2);
    near.integration.horizon = 0.2;
    const ScenarioResult a = run_scenario(near);
    const double final_err = std::abs(a.trace.back().theta_err);

    ScenarioConfig exact = base;
    exact.observer.angle = std::numbers::pi;
    exact.integration.horizon = 0.02;
    const ScenarioResult b = run_scenario(exact);
    double min_dist = std::numbers::pi;
    for (const TraceRow& row : b.trace) min_dist = std::min(min_dist, std::abs(row.theta_err));
    const double saddle_gap = std::numbers::pi - min_dist;

    const bool pass = a.summary.completed && b.summary.completed && final_err < 1e-3 && saddle_gap < 1e-6;
    return {pass, fmt::format("start at pi-0.2: |theta_err| after 0.2 s = {:.3g}; start at pi: max distance from "
                              "the saddle over 20 ms = {:.3g} rad",
                              final_err, saddle_gap)};
}

Outcome numerics_hygiene() {
    // S^1 drift over 10^6 closed-loop steps.
    ScenarioConfig cfg = load_config(kConfigDir + "/benchmark.json");
    cfg.integration.horizon = 1.0;
    cfg.integration.transient = 0.5;
    cfg.integration.decimation = 1000;
    const ScenarioResult r = run_scenario(cfg);
    UnitVec z;
    double standalone = 0.0;
    for (int k = 0; k < 1000000; ++k) {
        z = step(z, 100.0, 1e-6);
        standalone = std::max(standalone, std::abs(z.norm_error()));
    }
    const double drift = std::max(r.summary.max_norm_drift, standalone);

    double fd_worst = 0.0;
    const Vec3 kz = cfg.gains.k_z;
    for (int k = 0; k < 100; ++k) {
        const Vec2 i(10.0 * std::cos(0.7 * k), 15.0 * std::sin(1.3 * k + 0.2));
        Mat32 fd;
        for (int c = 0; c < 2; ++c) {
            Vec2 d = Vec2::Zero();
            d[c] = 1e-5;
            fd.col(c) = (beta(i + d, kz) - beta(i - d, kz)) / 2e-5;
        }
        fd_worst = std::max(fd_worst, (fd - beta_jacobian(i, kz)).norm());
    }

    ScenarioConfig short_cfg = cfg;
    short_cfg.integration.horizon = 0.05;
    short_cfg.integration.transient = 0.01;
    short_cfg.integration.decimation = 10;
    std::ostringstream a;
    std::ostringstream b;
    write_trace_csv(a, run_scenario(short_cfg).trace);
    write_trace_csv(b, run_scenario(short_cfg).trace);
    const bool identical = a.str() == b.str();

    const bool pass = r.summary.completed && r.summary.steps == 1000000 && drift < 1e-9 && fd_worst < 1e-6 && identical;
    return {pass, fmt::format("S^1 norm drift over 10^6 steps = {:.2g}; beta jacobian FD error = {:.2g}; "
                              "repeated run byte-identical: {}",
                              drift, fd_worst, identical ? "yes" : "no")};
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, Check>> criteria{
        {"benchmark convergence", benchmark_convergence},
        {"gramian closed form", gramian_closed_form},
        {"boundary-layer decay certificate", boundary_layer_certificate},
        {"torque masking", torque_masking},
        {"error-dynamics oracle", error_dynamics_oracle},
        {"pole-placement round trip", pole_placement},
        {"epsilon-sweep practical stability", epsilon_practical_stability},
        {"saddle probe", saddle_probe},
        {"numerics hygiene", numerics_hygiene},
    };
    int failures = 0;
    for (std::size_t k = 0; k < criteria.size(); ++k) {
        Outcome out;
        try {
            out = criteria[k].second();
        } catch (const std::exception& err) {
            out = {false, std::string("exception: ") + err.what()};
        }
        failures += out.pass ? 0 : 1;
        std::printf("criterion %zu %-36s %s  %s\n", k + 1, criteria[k].first.c_str(), out.pass ? "PASS" : "FAIL",
                    out.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
    return failures == 0 ? 0 : 1;
}
