#pragma once

#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "pmsm/so2.hpp"

namespace pmsm {

/**
 * A 3x2 regressor tau -> Omega(tau) on [0, horizon], either analytic or sampled on a
 * uniform grid (linear interpolation between samples).
 */
class RegressorSignal {
public:
    using Map = std::function<Mat32(double)>;

    static RegressorSignal analytic(Map f, double step, double horizon);
    /// Samples at tau = k * step. Throws std::invalid_argument on non-finite entries.
    static RegressorSignal sampled(std::vector<Mat32> samples, double step);

    Mat32 operator()(double tau) const;

    double step() const { return step_; }
    double horizon() const { return horizon_; }

    /// Omega scaled by c.
    RegressorSignal scaled(double c) const;

private:
    RegressorSignal() = default;

    Map map_;
    std::vector<Mat32> samples_;
    double step_ = 0.0;
    double horizon_ = 0.0;
};

/// Regressor of the boundary layer with e = i_tilde = 0: Omega((w_1(tau), i_q)) for a
/// circular w of radius `amplitude` rotating at unit rate.
RegressorSignal nominal_regressor(double amplitude, double i_q, double step, double horizon);

/// Observability Gramian of (Omega^T, 0) over [start, start + window] by composite
/// trapezoid with step <= min(signal step, 1e-3 * window).
/// Throws std::out_of_range if the window leaves the signal, std::invalid_argument on
/// non-finite values.
Mat3 gramian(const RegressorSignal& sig, double start, double window);

struct WindowEigen {
    double start = 0.0;
    Vec3 eigenvalues = Vec3::Zero();  // ascending
    double trace = 0.0;
};

struct UcoBounds {
    double alpha1 = 0.0;
    double alpha2 = 0.0;
    double trace_max = 0.0;  // largest Gramian trace over the windows
    bool uniformly_observable = false;
    std::vector<WindowEigen> windows;
};

/// Sweeps windows [k * stride, k * stride + window] inside the signal horizon.
/// Throws std::invalid_argument if the signal is shorter than one window.
UcoBounds uco_bounds(const RegressorSignal& sig, double window, double stride);

/// Injection amplitude above which the nominal regressor is certified UCO for any
/// |i_q| <= i_star: W* = i_star * sqrt(2 / rho). Throws unless 0 < rho < 1.
double w_star(double i_star, double rho);

struct WStarPoint {
    double rho = 0.0;
    double w_star = 0.0;
    /// Coefficient 2 pi (1 - rho) left on x_3^2 by the certificate.
    double x3_margin = 0.0;
};

/// W* on an interior grid of rho in (0, 1); the last entry has the least W*.
std::vector<WStarPoint> w_star_scan(double i_star, int points);

/// Bound |Phi(tau)| <= a1f exp(-a2f tau) for the (e, i_tilde) block
/// [[-kappa_e I, kappa_p I], [0, -kappa_p I]].
struct FastDecayBound {
    double a1f = 1.0;
    double a2f = 0.0;
};

/// Closed-form 2x2 transition matrix of [[-kappa_e, kappa_p], [0, -kappa_p]]
/// (the 4x4 block is this matrix Kronecker I_2).
Mat2 fast_block_transition(double kappa_e, double kappa_p, double tau);

/// a2f = rate_fraction * min(kappa_e, kappa_p) and the smallest matching a1f.
FastDecayBound fast_decay_bound(double kappa_e, double kappa_p, double rate_fraction = 0.5);

struct LocalPeBound {
    double radius = 0.0;         // bound on |(e(0), i_tilde(0))|
    double recovery_time = 0.0;  // 0 when already inside the radius
};

/// radius = sqrt(beta1 / window) / (2 a1f); outside it, the wait
/// T = log(|x0| 2 a1f sqrt(window / beta1)) / a2f restores the bound.
LocalPeBound local_pe_radius(double beta1, const FastDecayBound& fast, double initial_fast_error,
                             double window = 2.0 * std::numbers::pi);

/// Lower bound on int |Omega^T z|^2 over a window, relative to |z(tau)|^2, for
/// z' = -K Omega Omega^T z with K <= kappa_max: alpha1 / (1 + kappa_max * trace_max)^2.
double output_injection_alpha(double alpha1, double trace_max, double kappa_max);

struct DecayCertificate {
    double factor = 1.0;     // per-window contraction of the weighted norm
    double rate = 0.0;       // guaranteed exponential rate
    double overshoot = 1.0;  // constant in front of the exponential
};

/// |z(tau)| <= overshoot * exp(-rate tau) |z(0)| for z' = -kappa_z M z given
/// int z^T M z >= alpha |z(tau)|^2 over every window. Throws unless 0 < 2 kappa_z alpha < 1.
DecayCertificate decay_certificate(double alpha, double window, double kappa_z);

/// Diagonal-gain version with V = z^T K^-1 z / 2; reduces to the scalar one when
/// kappa_min == kappa_max.
DecayCertificate decay_certificate(double alpha, double window, double kappa_min, double kappa_max);

struct BoundaryLayerParams {
    double kappa_e = 0.0;
    double kappa_p = 0.0;
    Vec3 kappa_z = Vec3::Zero();
    double i_q = 0.0;  // frozen q-reference
};

struct BoundaryLayerState {
    Vec2 w = Vec2::Zero();
    Vec2 e = Vec2::Zero();
    Vec2 i_tilde = Vec2::Zero();
    Vec3 z = Vec3::Zero();

    double fast_norm() const { return std::sqrt(e.squaredNorm() + i_tilde.squaredNorm()); }
};

struct BoundaryLayerSample {
    double tau = 0.0;
    BoundaryLayerState state;
};

/// Regressor argument of the boundary layer: (w_1, i_q) + e + i_tilde.
Vec2 boundary_layer_current(const BoundaryLayerState& s, double i_q);

/// Integrates the frozen-time fast dynamics in fast time tau. w rotates exactly;
/// (e, i_tilde, z) use RK4 with step dtau. Returns samples every `record_every` steps,
/// including tau = 0 and the final point.
std::vector<BoundaryLayerSample> boundary_layer_sim(const BoundaryLayerParams& params,
                                                    const BoundaryLayerState& initial, double horizon,
                                                    double dtau = 1e-3, int record_every = 1);

/// Regressor along a recorded boundary-layer trajectory (uniform sample spacing required).
RegressorSignal trajectory_regressor(const std::vector<BoundaryLayerSample>& samples, double i_q);

struct CertificationInput {
    double injection_amplitude = 2.0;  // |w(0)|
    double i_star = 0.0;               // bound on |i_q|
    double i_q = 0.0;                  // frozen q-reference used for the nominal Gramian
    double rho = 0.5;
    double window = 2.0 * std::numbers::pi;
    double kappa_e = 0.0;
    double kappa_p = 0.0;
    Vec3 kappa_z = Vec3::Zero();
    double initial_fast_error = 0.0;  // |(e(0), i_tilde(0))|
    int windows = 8;
    double quadrature_step = 1e-3;
};

struct GramianReport {
    double window = 0.0;  // effective window, recovery time included
    double alpha1 = 0.0;
    double alpha2 = 0.0;
    double beta1 = 0.0;
    double trace_max = 0.0;
    double i_star = 0.0;
    double rho = 0.0;
    double w_star = 0.0;
    double injection_amplitude = 0.0;
    double a1f = 1.0;
    double a2f = 0.0;
    double local_pe_radius = 0.0;
    double recovery_time = 0.0;
    double alpha = 0.0;  // decay-relevant bound after output injection
    double contraction_factor = 1.0;
    double decay_rate = 0.0;
    double overshoot = 1.0;
    bool uniformly_observable = false;
    std::vector<WindowEigen> windows;
};

GramianReport certify(const CertificationInput& in);

/// "key: value" lines, one field per line.
std::string to_key_value(const GramianReport& r);

}  // namespace pmsm
