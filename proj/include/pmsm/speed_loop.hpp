#pragma once

#include <optional>

namespace pmsm {

struct SpeedLoopGains {
    double k_p = 0.018;  // N*m / (rad/s)
    double k_i = 0.072;  // N*m / rad
    double tau_f = 1e-4; // s, reference filter time constant
    /// Symmetric clamp on the torque demand, with conditional integration.
    std::optional<double> torque_max;
};

struct SpeedLoopState {
    double integrator = 0.0;  // N*m
    double filtered = 0.0;    // N*m, T*_el
};

struct FilteredTorque {
    double value = 0.0;  // T*_el
    double rate = 0.0;   // dT*_el/dt
};

/// Discrete PI on the mechanical speed error. Returns kp * err + integrator (the
/// integrator value before this update), then integrates k_i * err * dt unless the
/// clamped output is saturated in the direction of the error.
double speed_pi(double omega_hat_m, double omega_ref_m, SpeedLoopState& state, const SpeedLoopGains& gains, double dt);

/// First-order filter T' = (raw - T) / tau evaluated exactly for a demand held over
/// `elapsed` seconds, starting from `initial`.
FilteredTorque filter_response(double initial, double raw, double tau, double elapsed);

/// Advances the filter state by dt under a held demand; returns the new value and its derivative.
FilteredTorque reference_filter(double raw, SpeedLoopState& state, double tau, double dt);

}  // namespace pmsm
