#include "pmsm/speed_loop.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pmsm {

double speed_pi(double omega_hat_m, double omega_ref_m, SpeedLoopState& state, const SpeedLoopGains& gains,
                double dt) {
    if (!(dt > 0.0)) {
        throw std::invalid_argument("speed_pi: dt must be positive");
    }
    const double err = omega_ref_m - omega_hat_m;
    double out = gains.k_p * err + state.integrator;
    bool saturated_along_error = false;
    if (gains.torque_max) {
        const double limit = *gains.torque_max;
        if (out > limit) {
            out = limit;
            saturated_along_error = err > 0.0;
        } else if (out < -limit) {
            out = -limit;
            saturated_along_error = err < 0.0;
        }
    }
    if (!saturated_along_error) {
        state.integrator += gains.k_i * err * dt;
    }
    return out;
}

FilteredTorque filter_response(double initial, double raw, double tau, double elapsed) {
    if (!(tau > 0.0)) {
        throw std::invalid_argument("reference filter: tau must be positive");
    }
    const double value = raw + (initial - raw) * std::exp(-elapsed / tau);
    return {value, (raw - value) / tau};
}

FilteredTorque reference_filter(double raw, SpeedLoopState& state, double tau, double dt) {
    const FilteredTorque f = filter_response(state.filtered, raw, tau, dt);
    state.filtered = f.value;
    return f;
}

}  // namespace pmsm
