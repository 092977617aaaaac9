#pragma once

#include "pmsm/so2.hpp"

namespace pmsm {

/// Mechanical load torque seen by the rotor shaft.
struct LoadModel {
    enum class Kind { None, ConstantTorque, QuadraticDrag };

    Kind kind = Kind::None;
    /// N*m for ConstantTorque, N*m*s^2/rad^2 for QuadraticDrag.
    double coefficient = 0.0;

    static LoadModel none() { return {}; }
    static LoadModel constant(double torque) { return {Kind::ConstantTorque, torque}; }
    static LoadModel quadratic(double coefficient) { return {Kind::QuadraticDrag, coefficient}; }

    /// Quadratic drag whose torque at `nominal_speed` [rad/s, mechanical] equals
    /// `fraction * rated_torque`.
    static LoadModel propeller(double rated_torque, double fraction, double nominal_speed);

    /// Opposing torque at mechanical speed omega_m. Drag always opposes motion.
    double torque(double omega_m) const;
};

struct PlantParams {
    double R = 0.0;       // Ohm
    double L = 0.0;       // H
    double phi = 0.0;     // Wb
    int pole_pairs = 1;
    double J_load = 0.0;  // kg m^2
    LoadModel load;

    /// Throws std::invalid_argument on non-positive constants.
    void validate() const;
};

/// Parameters of the benchmark UAV propulsion motor (T-motor 4006 KV380).
PlantParams benchmark_plant();

struct PlantState {
    Vec2 i_s = Vec2::Zero();  // static frame, A
    UnitVec zeta;             // electrical rotor orientation
    double omega_m = 0.0;     // mechanical speed, rad/s

    double omega(const PlantParams& p) const { return p.pole_pairs * omega_m; }
};

struct PlantDerivative {
    Vec2 di_s = Vec2::Zero();
    double zeta_rate = 0.0;  // electrical speed; zeta' = zeta_rate * J * zeta
    double domega_m = 0.0;
};

enum class SpeedMode {
    /// omega_m is imposed from outside (speed profile); domega_m is reported as zero.
    Exogenous,
    /// J_load * domega_m/dt = T_el - T_load.
    Mechanical,
};

/// Static-frame PMSM dynamics driven by the stator voltage u_s.
/// Throws std::invalid_argument on non-finite state or input.
PlantDerivative plant_derivative(const PlantState& x, const Vec2& u_s, const PlantParams& params,
                                 SpeedMode mode);

/// Electromagnetic torque -(3/2) p phi zeta^T J i_s.
double torque(const PlantState& x, const PlantParams& params);

/// Expresses a static-frame vector in the frame zeta_r: C^T[zeta_r] v.
inline Vec2 to_frame(const UnitVec& zeta_r, const Vec2& v) {
    return Vec2(zeta_r.c() * v.x() + zeta_r.s() * v.y(), -zeta_r.s() * v.x() + zeta_r.c() * v.y());
}

/// Inverse of to_frame: C[zeta_r] v.
inline Vec2 from_frame(const UnitVec& zeta_r, const Vec2& v) {
    return Vec2(zeta_r.c() * v.x() - zeta_r.s() * v.y(), zeta_r.s() * v.x() + zeta_r.c() * v.y());
}

double rpm_to_rad_s(double rpm);
double rad_s_to_rpm(double rad_s);

}  // namespace pmsm
