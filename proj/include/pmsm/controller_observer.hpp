#pragma once

#include <complex>
#include <optional>

#include "pmsm/plant.hpp"
#include "pmsm/so2.hpp"

namespace pmsm {

/// The only motor constants the controller-observer is allowed to use.
struct KnownConstants {
    double L = 0.0;
    int pole_pairs = 1;

    static KnownConstants from(const PlantParams& p) { return {p.L, p.pole_pairs}; }
};

/// Singular-perturbation scaling of the fast gains: each fast gain equals kappa / epsilon,
/// with K_z = L * kappa_z / epsilon.
struct FastScaling {
    double epsilon = 0.0;
    double kappa_e = 0.0;
    double kappa_p = 0.0;
    Vec3 kappa_z = Vec3::Zero();
};

struct ControllerGains {
    double k_eta = 0.0;
    double gamma = 0.0;
    double k_p = 0.0;     // 1/s
    double k_e = 0.0;     // 1/s
    Vec3 k_z = Vec3::Zero();  // diagonal of K_z
    double lambda = 0.0;  // rad/s, injection frequency

    /// Throws std::invalid_argument unless every gain is finite and strictly positive.
    void validate() const;

    /// Fast gains from epsilon and the fixed kappas, slow gains passed through.
    static ControllerGains from_scaling(const FastScaling& s, double L, double k_eta, double gamma);

    /// Inverse of from_scaling: epsilon = 1 / lambda and kappa = gain * epsilon.
    FastScaling scaling(double L) const;
};

/// Gains of the benchmark UAV drive, with k_eta and gamma from pole placement.
ControllerGains benchmark_gains();

/**
 * Controller-observer memory. The current estimate i_hat and the auxiliary parameter
 * vector theta_hat live in the estimated chi-frame zeta_chi_hat; w is the injection
 * exosystem.
 */
struct ObserverState {
    UnitVec zeta_chi_hat;
    double xi_hat = 0.0;  // 1/Wb
    Vec2 i_hat = Vec2::Zero();
    Vec3 theta_hat = Vec3::Zero();
    Vec2 w = Vec2::Zero();

    /// Zero estimates, identity frame, w = (injection_amplitude, 0).
    static ObserverState initial(double xi_hat0, double injection_amplitude);
};

struct Estimates {
    double R_hat = 0.0;
    Vec2 h_hat = Vec2::Zero();
    /// |h_hat| * xi_hat, electrical rad/s, without the k_eta * h_hat_1 correction.
    double omega_hat = 0.0;
    UnitVec zeta_hat;
    /// Empty when xi_hat == 0.
    std::optional<double> phi_hat;
    std::optional<double> torque_hat;
};

/// Ground-truth error coordinates, for reporting only.
struct Diagnostics {
    UnitVec eta;
    double xi = 0.0;
    double xi_tilde = 0.0;
    double chi = 0.0;
    Vec2 h = Vec2::Zero();
    Vec3 theta = Vec3::Zero();
    Vec3 z = Vec3::Zero();
    Vec2 i_tilde = Vec2::Zero();
    Vec2 e = Vec2::Zero();
    Vec2 i_chi = Vec2::Zero();  // true current in the estimated frame
    double omega_eta = 0.0;
    double theta_err = 0.0;  // rad, atan2(eta_2, eta_1)

    /// |angle_of(eta)| + |xi_tilde|, a trend indicator for the slow subsystem.
    double sigma_hat() const;
    /// |(e, i_tilde, z)|
    double fast_norm() const;
};

/// Omega(i) = [[-i1, -i2], [1, 0], [0, 1]], so that Omega^T theta = -R i + h.
Mat32 regressor(const Vec2& i);

/// K_z (-|i|^2/2, i1, i2).
Vec3 beta(const Vec2& i, const Vec3& k_z);

/// d beta / d i = K_z Omega(i).
Mat32 beta_jacobian(const Vec2& i, const Vec3& k_z);

struct AttitudeRates {
    double omega_chi_hat = 0.0;  // rate of zeta_chi_hat
    double xi_hat_rate = 0.0;
};

/// omega_chi_hat = |h_hat| xi_hat + k_eta h_hat_1, xi_hat' = gamma h_hat_1.
AttitudeRates attitude_observer_derivative(const Vec2& h_hat, double xi_hat, const ControllerGains& gains);

struct CurrentObserverRates {
    Vec2 i_hat_rate = Vec2::Zero();
    Vec3 theta_hat_rate = Vec3::Zero();
};

/// I&I current observer with gradient-descent resistance / back-EMF adaptation.
CurrentObserverRates current_observer_derivative(const ObserverState& s, const Vec2& i_meas, const Vec2& u,
                                                 double omega_chi_hat, const KnownConstants& motor,
                                                 const ControllerGains& gains);

/// R_hat = theta_hat_1 - (k_z1/2)|i|^2, h_hat = theta_hat_23 + k_z23 i, and the derived
/// speed, flux, orientation and torque estimates. Flux and torque are left empty when
/// xi_hat == 0; |xi_hat| below xi_floor is clamped for those display quantities.
Estimates extract_estimates(const ObserverState& s, const Vec2& i_meas, const Vec3& k_z, int pole_pairs,
                            double xi_floor = 1e-6);

struct CurrentReference {
    double i_q = 0.0;  // A
    double p_q = 0.0;  // A/s, exact time derivative of i_q
};

CurrentReference reference_signals(double xi_hat, double xi_hat_rate, double torque_ref, double torque_ref_rate,
                                   int pole_pairs);

/// w' = [[0, lambda], [-lambda, 0]] w.
Vec2 exosystem_derivative(const Vec2& w, double lambda);

/// Exact exosystem flow over dt (a rotation by -lambda dt).
Vec2 exosystem_step(const Vec2& w, double lambda, double dt);

/// Control law in the estimated frame. Makes the tracking error obey e' = -k_e e + k_p i_tilde.
Vec2 control_voltage(const ObserverState& s, const Vec2& i_meas, double omega_chi_hat, const CurrentReference& ref,
                     const KnownConstants& motor, const ControllerGains& gains);

/// Tracking error e = i_hat - (w_1, i_q).
inline Vec2 tracking_error(const ObserverState& s, double i_q) { return s.i_hat - Vec2(s.w.x(), i_q); }

/// Everything the controller-observer produces in one evaluation of its vector field.
struct ControllerOutput {
    Estimates estimates;
    AttitudeRates attitude;
    CurrentReference reference;
    Vec2 u_chi = Vec2::Zero();  // voltage in the estimated frame
    Vec2 u_s = Vec2::Zero();    // voltage in the static frame
    CurrentObserverRates observer;
    Vec2 w_rate = Vec2::Zero();
};

/// Evaluates the full controller-observer from the measured static-frame current and the
/// torque reference with its derivative.
ControllerOutput evaluate_controller(const ObserverState& s, const Vec2& i_s_meas, double torque_ref,
                                     double torque_ref_rate, const KnownConstants& motor,
                                     const ControllerGains& gains);

/// Ground-truth error coordinates. `omega` is the true electrical speed and i_q the
/// current q-reference used for the tracking error.
Diagnostics compute_diagnostics(const PlantState& plant, double omega, const ObserverState& s, double i_q,
                                const PlantParams& params, const ControllerGains& gains);

struct SlowGains {
    double k_eta = 0.0;
    double gamma = 0.0;
};

/// Places the poles of the linearized attitude observer s^2 + k_eta chi s + gamma chi^2.
/// Accepts a complex-conjugate pair or two real poles, all with negative real part.
/// Throws std::invalid_argument otherwise.
SlowGains gains_from_poles(std::complex<double> p1, std::complex<double> p2, double chi_nominal);

}  // namespace pmsm
