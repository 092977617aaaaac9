#include "pmsm/controller_observer.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace pmsm {

void ControllerGains::validate() const {
    auto positive = [](double v, const char* name) {
        if (!(v > 0.0) || !std::isfinite(v)) {
            throw std::invalid_argument(std::string("ControllerGains: ") + name + " must be positive and finite");
        }
    };
    positive(k_eta, "k_eta");
    positive(gamma, "gamma");
    positive(k_p, "k_p");
    positive(k_e, "k_e");
    positive(lambda, "lambda");
    for (int i = 0; i < 3; ++i) {
        positive(k_z[i], "k_z");
    }
}

ControllerGains ControllerGains::from_scaling(const FastScaling& s, double L, double k_eta, double gamma) {
    if (!(s.epsilon > 0.0)) {
        throw std::invalid_argument("ControllerGains: epsilon must be positive");
    }
    ControllerGains g;
    g.k_eta = k_eta;
    g.gamma = gamma;
    g.lambda = 1.0 / s.epsilon;
    g.k_e = s.kappa_e / s.epsilon;
    g.k_p = s.kappa_p / s.epsilon;
    g.k_z = L * s.kappa_z / s.epsilon;
    g.validate();
    return g;
}

FastScaling ControllerGains::scaling(double L) const {
    FastScaling s;
    s.epsilon = 1.0 / lambda;
    s.kappa_e = k_e * s.epsilon;
    s.kappa_p = k_p * s.epsilon;
    s.kappa_z = k_z * s.epsilon / L;
    return s;
}

ControllerGains benchmark_gains() {
    const PlantParams plant = benchmark_plant();
    const double chi_nominal = plant.phi * plant.pole_pairs * rpm_to_rad_s(3500.0);
    const std::complex<double> pole(-100.0, 100.0 / 3.0);
    const SlowGains slow = gains_from_poles(pole, std::conj(pole), chi_nominal);

    ControllerGains g;
    g.k_eta = slow.k_eta;
    g.gamma = slow.gamma;
    g.k_p = 3.93e3;
    g.k_e = 1.964e3;
    g.k_z = Vec3(0.005, 0.75, 0.75);
    g.lambda = 2.0 * std::numbers::pi * 2000.0;
    return g;
}

ObserverState ObserverState::initial(double xi_hat0, double injection_amplitude) {
    ObserverState s;
    s.xi_hat = xi_hat0;
    s.w = Vec2(injection_amplitude, 0.0);
    return s;
}

double Diagnostics::sigma_hat() const { return std::abs(eta.angle()) + std::abs(xi_tilde); }

double Diagnostics::fast_norm() const {
    return std::sqrt(e.squaredNorm() + i_tilde.squaredNorm() + z.squaredNorm());
}

Mat32 regressor(const Vec2& i) {
    Mat32 omega;
    omega << -i.x(), -i.y(), 1.0, 0.0, 0.0, 1.0;
    return omega;
}

Vec3 beta(const Vec2& i, const Vec3& k_z) {
    return Vec3(-0.5 * k_z[0] * i.squaredNorm(), k_z[1] * i.x(), k_z[2] * i.y());
}

Mat32 beta_jacobian(const Vec2& i, const Vec3& k_z) { return k_z.asDiagonal() * regressor(i); }

AttitudeRates attitude_observer_derivative(const Vec2& h_hat, double xi_hat, const ControllerGains& gains) {
    return {h_hat.norm() * xi_hat + gains.k_eta * h_hat.x(), gains.gamma * h_hat.x()};
}

CurrentObserverRates current_observer_derivative(const ObserverState& s, const Vec2& i_meas, const Vec2& u,
                                                 double omega_chi_hat, const KnownConstants& motor,
                                                 const ControllerGains& gains) {
    const Mat32 omega = regressor(i_meas);
    // Predicted L di/dt with the current parameter estimate.
    const Vec2 predicted =
        omega.transpose() * (s.theta_hat + beta(i_meas, gains.k_z)) + u - motor.L * omega_chi_hat * apply_j(i_meas);

    CurrentObserverRates r;
    r.i_hat_rate = predicted / motor.L + gains.k_p * (i_meas - s.i_hat);
    r.theta_hat_rate = -beta_jacobian(i_meas, gains.k_z) * predicted / motor.L;
    return r;
}

Estimates extract_estimates(const ObserverState& s, const Vec2& i_meas, const Vec3& k_z, int pole_pairs,
                            double xi_floor) {
    Estimates est;
    est.R_hat = s.theta_hat[0] - 0.5 * k_z[0] * i_meas.squaredNorm();
    est.h_hat = Vec2(s.theta_hat[1] + k_z[1] * i_meas.x(), s.theta_hat[2] + k_z[2] * i_meas.y());
    est.omega_hat = est.h_hat.norm() * s.xi_hat;
    est.zeta_hat = signed_by(s.zeta_chi_hat, s.xi_hat);
    if (s.xi_hat != 0.0) {
        const double xi_display = std::abs(s.xi_hat) < xi_floor ? std::copysign(xi_floor, s.xi_hat) : s.xi_hat;
        est.phi_hat = 1.0 / std::abs(xi_display);
        est.torque_hat = 1.5 * pole_pairs * i_meas.y() / xi_display;
    }
    return est;
}

CurrentReference reference_signals(double xi_hat, double xi_hat_rate, double torque_ref, double torque_ref_rate,
                                   int pole_pairs) {
    const double k = 2.0 / (3.0 * pole_pairs);
    return {k * xi_hat * torque_ref, k * (xi_hat_rate * torque_ref + xi_hat * torque_ref_rate)};
}

Vec2 exosystem_derivative(const Vec2& w, double lambda) { return Vec2(lambda * w.y(), -lambda * w.x()); }

Vec2 exosystem_step(const Vec2& w, double lambda, double dt) {
    const double a = lambda * dt;
    const double c = std::cos(a);
    const double s = std::sin(a);
    const Vec2 out(c * w.x() + s * w.y(), -s * w.x() + c * w.y());
    // Rotation preserves |w|; rescale so rounding does not accumulate over long runs.
    const double n = out.norm();
    return n > 0.0 ? Vec2(out * (w.norm() / n)) : out;
}

Vec2 control_voltage(const ObserverState& s, const Vec2& i_meas, double omega_chi_hat, const CurrentReference& ref,
                     const KnownConstants& motor, const ControllerGains& gains) {
    const Vec2 e = tracking_error(s, ref.i_q);
    return -regressor(i_meas).transpose() * (s.theta_hat + beta(i_meas, gains.k_z)) +
           motor.L * omega_chi_hat * apply_j(i_meas) - motor.L * gains.k_e * e +
           motor.L * Vec2(gains.lambda * s.w.y(), ref.p_q);
}

ControllerOutput evaluate_controller(const ObserverState& s, const Vec2& i_s_meas, double torque_ref,
                                     double torque_ref_rate, const KnownConstants& motor,
                                     const ControllerGains& gains) {
    ControllerOutput out;
    const Vec2 i_meas = to_frame(s.zeta_chi_hat, i_s_meas);
    out.estimates = extract_estimates(s, i_meas, gains.k_z, motor.pole_pairs);
    out.attitude = attitude_observer_derivative(out.estimates.h_hat, s.xi_hat, gains);
    out.reference =
        reference_signals(s.xi_hat, out.attitude.xi_hat_rate, torque_ref, torque_ref_rate, motor.pole_pairs);
    out.u_chi = control_voltage(s, i_meas, out.attitude.omega_chi_hat, out.reference, motor, gains);
    out.u_s = from_frame(s.zeta_chi_hat, out.u_chi);
    out.observer = current_observer_derivative(s, i_meas, out.u_chi, out.attitude.omega_chi_hat, motor, gains);
    out.w_rate = exosystem_derivative(s.w, gains.lambda);
    return out;
}

Diagnostics compute_diagnostics(const PlantState& plant, double omega, const ObserverState& s, double i_q,
                                const PlantParams& params, const ControllerGains& gains) {
    Diagnostics d;
    const double sign = sgn(omega);
    d.chi = std::abs(omega) * params.phi;
    d.xi = sign / params.phi;
    d.xi_tilde = d.xi - s.xi_hat;
    d.eta = mul(s.zeta_chi_hat.inverse(), signed_by(plant.zeta, sign));
    d.h = -d.chi * apply_j(d.eta.vec());
    d.theta = Vec3(params.R, d.h.x(), d.h.y());
    d.i_chi = to_frame(s.zeta_chi_hat, plant.i_s);
    d.z = s.theta_hat + beta(d.i_chi, gains.k_z) - d.theta;
    d.i_tilde = d.i_chi - s.i_hat;
    d.e = tracking_error(s, i_q);
    const Estimates est = extract_estimates(s, d.i_chi, gains.k_z, params.pole_pairs);
    d.omega_eta = d.chi * d.xi - attitude_observer_derivative(est.h_hat, s.xi_hat, gains).omega_chi_hat;
    d.theta_err = d.eta.angle();
    return d;
}

SlowGains gains_from_poles(std::complex<double> p1, std::complex<double> p2, double chi_nominal) {
    if (!(chi_nominal > 0.0) || !std::isfinite(chi_nominal)) {
        throw std::invalid_argument("gains_from_poles: chi_nominal must be positive");
    }
    if (!(p1.real() < 0.0) || !(p2.real() < 0.0)) {
        throw std::invalid_argument("gains_from_poles: poles must have negative real part");
    }
    const double tol = 1e-12 * std::max(std::abs(p1), std::abs(p2));
    const bool both_real = std::abs(p1.imag()) <= tol && std::abs(p2.imag()) <= tol;
    const bool conjugate = std::abs(p1 - std::conj(p2)) <= tol;
    if (!both_real && !conjugate) {
        throw std::invalid_argument("gains_from_poles: poles must be real or a complex-conjugate pair");
    }
    // (s - p1)(s - p2) = s^2 - (p1 + p2) s + p1 p2
    const double sum = (p1 + p2).real();
    const double product = (p1 * p2).real();
    return {-sum / chi_nominal, product / (chi_nominal * chi_nominal)};
}

}  // namespace pmsm
