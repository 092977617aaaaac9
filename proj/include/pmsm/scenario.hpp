#pragma once

#include <complex>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "pmsm/controller_observer.hpp"
#include "pmsm/excitation.hpp"
#include "pmsm/integrator.hpp"
#include "pmsm/plant.hpp"
#include "pmsm/speed_loop.hpp"
#include "pmsm/speed_profile.hpp"

namespace pmsm {

/// Invalid or inconsistent scenario configuration (CLI exit code 1).
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

enum class ScenarioMode {
    /// Speed imposed by the profile; torque reference from inverse dynamics or a constant.
    ExogenousSpeed,
    /// PI speed loop on the observer speed estimate, mechanical load dynamics.
    FullCascade,
    /// Full cascade with the observer replaced by ground truth (frame, xi, theta).
    SensoredAblation,
    /// Frozen-time fast dynamics in fast time.
    BoundaryLayer,
};

const char* to_string(ScenarioMode mode);
ScenarioMode scenario_mode_from_string(const std::string& s);

struct TorqueReference {
    enum class Kind { InverseDynamics, Constant };
    Kind kind = Kind::InverseDynamics;
    double value = 0.0;
};

struct PlantInitial {
    Vec2 current = Vec2::Zero();
    double angle = 0.0;       // electrical rad
    double speed_rpm = 0.0;   // mechanical; ignored in exogenous mode
};

struct ObserverInitial {
    double xi_hat = 802.29;
    double angle = 0.0;
    double injection_amplitude = 2.0;
    /// Start xi_hat at the true 1/phi (with the speed sign).
    bool xi_hat_exact = false;
    /// Start i_hat and theta_hat at their ground-truth values (e.g. for slow-subsystem probes).
    bool fast_states_converged = false;
};

struct NoiseSettings {
    double current_amplitude = 0.0;  // A, uniform in [-a, a] per axis, held over a step
    std::uint64_t seed = 1;
};

struct IntegrationSettings {
    double dt = 1e-6;
    double horizon = 2.0;
    int decimation = 100;
    /// Start of the steady-state window; defaults to 20 % of the horizon.
    std::optional<double> transient;
    bool enforce_stiffness_guard = true;
    double current_limit = 1e3;  // A, divergence guard

    double transient_time() const { return transient.value_or(0.2 * horizon); }
};

struct AnalysisSettings {
    /// Bound on |i_q|; derived from the torque limit when empty.
    std::optional<double> i_star;
    double rho = 0.5;
    double window = 2.0 * std::numbers::pi;
    int windows = 8;
    double initial_fast_error = 0.0;
};

struct BoundaryLayerSettings {
    double i_q = 0.0;
    BoundaryLayerState initial;
    double horizon = 100.0 * std::numbers::pi;
    double dtau = 1e-3;
    int record_every = 100;
    /// Overrides for the kappas; otherwise derived from the gains.
    std::optional<double> kappa_e;
    std::optional<double> kappa_p;
    std::optional<Vec3> kappa_z;
};

struct ScenarioConfig {
    std::string name = "benchmark";
    ScenarioMode mode = ScenarioMode::FullCascade;
    PlantParams plant;
    double nominal_speed_rpm = 7000.0;
    PlantInitial plant_initial;
    /// Electrical rad/s. Speed reference (divided by p) in cascade modes.
    std::optional<SpeedProfile> profile;
    ControllerGains gains;
    SpeedLoopGains speed_loop;
    bool speed_loop_uses_true_speed = false;
    TorqueReference torque_reference;
    ObserverInitial observer;
    NoiseSettings noise;
    IntegrationSettings integration;
    AnalysisSettings analysis;
    BoundaryLayerSettings boundary_layer;

    /// Throws ConfigError describing the first violated constraint.
    void validate() const;

    /// min(L/R, 1/lambda, 1/k_p, 1/k_e) / 20
    double max_stable_dt() const;

    BoundaryLayerParams boundary_layer_params() const;
    CertificationInput certification_input() const;
};

/// Benchmark UAV drive with the published gains and a 2 s ramp + sinusoid profile.
ScenarioConfig benchmark_config();

/// Parses a JSON document; missing keys take the benchmark defaults, unknown keys are errors.
ScenarioConfig parse_config(const std::string& json_text);
ScenarioConfig load_config(const std::string& path);

/// "a+bi", "a-bi" or "a±bi" (conjugate pair) or "a,b" (two real poles).
/// Throws ConfigError on malformed input.
std::pair<std::complex<double>, std::complex<double>> parse_poles(const std::string& text);

/// Euclidean layout of the closed-loop state bundle.
namespace slot {
inline constexpr int i_s = 0;        // 2
inline constexpr int omega_m = 2;    // 1
inline constexpr int i_hat = 3;      // 2
inline constexpr int theta_hat = 5;  // 3
inline constexpr int xi_hat = 8;     // 1
inline constexpr int size = 9;
inline constexpr int zeta = 0;          // circle
inline constexpr int zeta_chi_hat = 1;  // circle
inline constexpr int circles = 2;
}  // namespace slot

using ClosedLoopBundle = StateBundle<slot::size, slot::circles>;
using ClosedLoopRate = BundleRate<slot::size, slot::circles>;

/// Quantities held constant or known in closed form over one integration step.
struct StepInputs {
    double t0 = 0.0;
    Vec2 w0 = Vec2::Zero();
    double filter0 = 0.0;   // T*_el at t0
    double raw_torque = 0.0;
    Vec2 noise = Vec2::Zero();
};

/// Full evaluation of the closed-loop vector field at one instant.
struct ClosedLoopEval {
    PlantState plant;
    ObserverState observer;  // after ground-truth overrides in sensored mode
    Vec2 i_meas_static = Vec2::Zero();
    Vec2 i_meas = Vec2::Zero();  // in the estimated frame
    double torque_ref = 0.0;
    double torque_ref_rate = 0.0;
    double omega = 0.0;   // true electrical speed
    double domega = 0.0;  // true electrical acceleration
    ControllerOutput controller;
    PlantDerivative plant_rate;
    ClosedLoopRate rate;
};

/**
 * Plant + controller-observer vector field for one scenario. Ground truth enters the
 * controller only in sensored-ablation mode.
 */
class ClosedLoopModel {
public:
    explicit ClosedLoopModel(const ScenarioConfig& cfg);

    ClosedLoopBundle initial_state() const;
    ClosedLoopEval evaluate(double t, const ClosedLoopBundle& s, const StepInputs& in) const;
    ClosedLoopRate rates(double t, const ClosedLoopBundle& s, const StepInputs& in) const {
        return evaluate(t, s, in).rate;
    }

    /// Applies the mode's constraints after a step (imposed speed, sensored overrides).
    void constrain(double t, ClosedLoopBundle& s) const;

    ObserverState observer_state(const ClosedLoopBundle& s, double t, const StepInputs& in) const;
    PlantState plant_state(const ClosedLoopBundle& s) const;
    const ScenarioConfig& config() const { return cfg_; }

private:
    void apply_ground_truth(ObserverState& obs, const PlantState& plant, const Vec2& i_meas_static) const;

    ScenarioConfig cfg_;
    KnownConstants motor_;
};

struct TraceRow {
    double t = 0.0;
    double omega_m_rpm = 0.0;
    double omega_hat_m_rpm = 0.0;
    double theta_err = 0.0;
    double xi = 0.0;
    double xi_hat = 0.0;
    double R = 0.0;
    double R_hat = 0.0;
    double T_el = 0.0;
    double T_hat = 0.0;
    double T_ref = 0.0;
    Vec2 i_chi = Vec2::Zero();
    Vec2 i_ref = Vec2::Zero();
    Vec2 e = Vec2::Zero();
    Vec2 i_tilde = Vec2::Zero();
    double z_norm = 0.0;
    double sigma_hat = 0.0;
    Vec2 u_chi = Vec2::Zero();
    Vec2 w = Vec2::Zero();

    bool operator==(const TraceRow&) const = default;
};

struct ScenarioSummary {
    bool completed = false;
    bool diverged = false;
    std::string message;
    double t_end = 0.0;
    long steps = 0;
    double transient = 0.0;
    double final_R_hat = 0.0;
    double max_R_error = 0.0;          // post-transient |R_hat - R|
    double max_speed_error_rpm = 0.0;  // post-transient |omega - omega_hat| / p
    double rms_speed_error_rpm = 0.0;
    double torque_rms_error = 0.0;     // post-transient RMS of T_el - T*_el
    double peak_torque_ref = 0.0;      // post-transient max |T*_el|
    double max_tracking_error = 0.0;   // post-transient max |e|
    double max_fast_norm = 0.0;        // post-transient max |(e, i_tilde, z)|
    double rms_fast_norm = 0.0;
    double max_sigma_hat = 0.0;        // post-transient
    double max_theta_err = 0.0;        // post-transient |theta_err|
    double R_settling_time = 0.0;      // last time |R_hat - R| > 10 % R
    double speed_settling_time = 0.0;  // last time |speed error| > 2 % nominal
    double e_settling_time = 0.0;      // last time |e| > 0.1 A
    double max_norm_drift = 0.0;       // S^1 states
};

struct BoundaryLayerRow {
    double tau = 0.0;
    BoundaryLayerState state;
};

struct ScenarioResult {
    ScenarioConfig config;
    std::vector<TraceRow> trace;
    std::vector<BoundaryLayerRow> boundary_layer;
    ScenarioSummary summary;
};

/// Read-only view handed to an optional per-step observer.
struct StepView {
    double t;
    const ClosedLoopBundle& state;
    const StepInputs& inputs;
    const ClosedLoopModel& model;
};

using StepObserver = std::function<void(const StepView&)>;

/// Integrates the scenario. Config violations throw ConfigError; divergence stops the run
/// and is reported through summary.diverged with the partial trace.
ScenarioResult run_scenario(const ScenarioConfig& cfg, const StepObserver& on_step = {});

struct SweepEntry {
    double epsilon = 0.0;
    ControllerGains gains;
    bool ok = false;
    std::string error;  // config violation or divergence message
    ScenarioSummary summary;
    double fast_residual = 0.0;  // post-transient max |x_f|
    double slow_residual = 0.0;  // post-transient max sigma_hat
};

struct SweepReport {
    std::vector<SweepEntry> entries;  // in the requested order
    /// Residuals non-increasing as epsilon decreases, within the tolerance band.
    bool fast_monotone = false;
    bool slow_monotone = false;
};

/// Runs the base scenario for each epsilon with fixed kappas (lambda = 1/epsilon).
/// Runs are independent and may execute concurrently; failures are recorded, not thrown.
SweepReport epsilon_sweep(const ScenarioConfig& base, const std::vector<double>& epsilons, double band = 0.10,
                          bool parallel = true);

}  // namespace pmsm
