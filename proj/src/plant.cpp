#include "pmsm/plant.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace pmsm {

LoadModel LoadModel::propeller(double rated_torque, double fraction, double nominal_speed) {
    if (!(rated_torque > 0.0) || !(fraction >= 0.0) || !(nominal_speed > 0.0)) {
        throw std::invalid_argument("LoadModel: propeller load needs positive rated torque and speed");
    }
    return quadratic(fraction * rated_torque / (nominal_speed * nominal_speed));
}

double LoadModel::torque(double omega_m) const {
    switch (kind) {
        case Kind::None:
            return 0.0;
        case Kind::ConstantTorque:
            return coefficient;
        case Kind::QuadraticDrag:
            return coefficient * omega_m * std::abs(omega_m);
    }
    return 0.0;
}

void PlantParams::validate() const {
    auto positive = [](double v, const char* name) {
        if (!(v > 0.0) || !std::isfinite(v)) {
            throw std::invalid_argument(std::string("PlantParams: ") + name + " must be positive");
        }
    };
    positive(R, "R");
    positive(L, "L");
    positive(phi, "phi");
    positive(J_load, "J_load");
    if (pole_pairs < 1) {
        throw std::invalid_argument("PlantParams: pole_pairs must be >= 1");
    }
    if (!std::isfinite(load.coefficient) || load.coefficient < 0.0) {
        throw std::invalid_argument("PlantParams: load coefficient must be finite and non-negative");
    }
}

PlantParams benchmark_plant() {
    PlantParams p;
    p.R = 0.108;
    p.L = 30.62e-6;
    p.phi = 1.309e-3;
    p.pole_pairs = 12;
    p.J_load = 1.4e-4;
    p.load = LoadModel::propeller(0.25, 0.8, rpm_to_rad_s(7000.0));
    return p;
}

PlantDerivative plant_derivative(const PlantState& x, const Vec2& u_s, const PlantParams& params,
                                 SpeedMode mode) {
    if (!x.i_s.allFinite() || !u_s.allFinite() || !std::isfinite(x.omega_m)) {
        throw std::invalid_argument("plant_derivative: non-finite state or voltage");
    }
    const double omega = x.omega(params);
    PlantDerivative d;
    d.di_s = (-params.R * x.i_s + u_s - omega * params.phi * apply_j(x.zeta.vec())) / params.L;
    d.zeta_rate = omega;
    if (mode == SpeedMode::Mechanical) {
        d.domega_m = (torque(x, params) - params.load.torque(x.omega_m)) / params.J_load;
    }
    return d;
}

double torque(const PlantState& x, const PlantParams& params) {
    // zeta^T J i = c * (-i2) + s * i1
    const double zjt_i = -x.zeta.c() * x.i_s.y() + x.zeta.s() * x.i_s.x();
    return -1.5 * params.pole_pairs * params.phi * zjt_i;
}

double rpm_to_rad_s(double rpm) { return rpm * std::numbers::pi / 30.0; }
double rad_s_to_rpm(double rad_s) { return rad_s * 30.0 / std::numbers::pi; }

}  // namespace pmsm
