#include "pmsm/excitation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <fmt/format.h>

#include "pmsm/controller_observer.hpp"

namespace pmsm {

namespace {

constexpr double kUcoTolerance = 1e-12;

void require_finite(const Mat32& m) {
    if (!m.allFinite()) {
        throw std::invalid_argument("regressor signal has non-finite samples");
    }
}

// Largest singular value of [[p, q], [0, r]].
double upper_triangular_norm(double p, double q, double r) {
    const double s = p * p + q * q + r * r;
    const double det = p * r;
    return std::sqrt(0.5 * (s + std::sqrt(std::max(0.0, s * s - 4.0 * det * det))));
}

}  // namespace

RegressorSignal RegressorSignal::analytic(Map f, double step, double horizon) {
    if (!f || !(step > 0.0) || !(horizon > 0.0)) {
        throw std::invalid_argument("RegressorSignal: need a map, positive step and horizon");
    }
    RegressorSignal sig;
    sig.map_ = std::move(f);
    sig.step_ = step;
    sig.horizon_ = horizon;
    return sig;
}

RegressorSignal RegressorSignal::sampled(std::vector<Mat32> samples, double step) {
    if (samples.size() < 2 || !(step > 0.0)) {
        throw std::invalid_argument("RegressorSignal: need at least two samples and a positive step");
    }
    for (const Mat32& m : samples) {
        require_finite(m);
    }
    RegressorSignal sig;
    sig.horizon_ = step * static_cast<double>(samples.size() - 1);
    sig.samples_ = std::move(samples);
    sig.step_ = step;
    return sig;
}

Mat32 RegressorSignal::operator()(double tau) const {
    if (map_) {
        return map_(tau);
    }
    const double pos = std::clamp(tau / step_, 0.0, static_cast<double>(samples_.size() - 1));
    const auto k = std::min(static_cast<std::size_t>(pos), samples_.size() - 2);
    const double frac = pos - static_cast<double>(k);
    if (frac == 0.0) {
        return samples_[k];
    }
    return (1.0 - frac) * samples_[k] + frac * samples_[k + 1];
}

RegressorSignal RegressorSignal::scaled(double c) const {
    if (map_) {
        return analytic([f = map_, c](double tau) -> Mat32 { return c * f(tau); }, step_, horizon_);
    }
    std::vector<Mat32> out;
    out.reserve(samples_.size());
    for (const Mat32& m : samples_) {
        out.push_back(c * m);
    }
    return sampled(std::move(out), step_);
}

RegressorSignal nominal_regressor(double amplitude, double i_q, double step, double horizon) {
    return RegressorSignal::analytic(
        [amplitude, i_q](double tau) { return regressor(Vec2(amplitude * std::cos(tau), i_q)); }, step, horizon);
}

Mat3 gramian(const RegressorSignal& sig, double start, double window) {
    if (!(window > 0.0)) {
        throw std::invalid_argument("gramian: window must be positive");
    }
    const double slack = 1e-9 * std::max(1.0, sig.horizon());
    if (start < -slack || start + window > sig.horizon() + slack) {
        throw std::out_of_range("gramian: window extends beyond the signal horizon");
    }
    const double h_max = std::min(sig.step(), 1e-3 * window);
    const auto n = static_cast<long>(std::ceil(window / h_max - 1e-9));
    const double h = window / static_cast<double>(n);

    Mat3 acc = Mat3::Zero();
    for (long k = 0; k <= n; ++k) {
        const Mat32 om = sig(start + h * static_cast<double>(k));
        require_finite(om);
        const double weight = (k == 0 || k == n) ? 0.5 : 1.0;
        acc.noalias() += weight * om * om.transpose();
    }
    acc *= h;
    return 0.5 * (acc + acc.transpose());
}

UcoBounds uco_bounds(const RegressorSignal& sig, double window, double stride) {
    if (!(window > 0.0) || !(stride > 0.0)) {
        throw std::invalid_argument("uco_bounds: window and stride must be positive");
    }
    const double slack = 1e-9 * std::max(1.0, sig.horizon());
    if (window > sig.horizon() + slack) {
        throw std::invalid_argument("uco_bounds: signal shorter than one window");
    }
    UcoBounds out;
    out.alpha1 = std::numeric_limits<double>::infinity();
    out.alpha2 = 0.0;
    for (long k = 0;; ++k) {
        const double start = stride * static_cast<double>(k);
        if (start + window > sig.horizon() + slack) {
            break;
        }
        const Mat3 g = gramian(sig, start, window);
        Eigen::SelfAdjointEigenSolver<Mat3> eig(g, Eigen::EigenvaluesOnly);
        WindowEigen we{start, eig.eigenvalues(), g.trace()};
        out.alpha1 = std::min(out.alpha1, we.eigenvalues[0]);
        out.alpha2 = std::max(out.alpha2, we.eigenvalues[2]);
        out.trace_max = std::max(out.trace_max, we.trace);
        out.windows.push_back(we);
    }
    out.alpha1 = std::max(out.alpha1, 0.0);
    out.uniformly_observable = out.alpha1 > kUcoTolerance;
    return out;
}

double w_star(double i_star, double rho) {
    if (!(rho > 0.0) || !(rho < 1.0)) {
        throw std::invalid_argument("w_star: rho must lie in (0, 1)");
    }
    if (!(i_star >= 0.0)) {
        throw std::invalid_argument("w_star: i_star must be non-negative");
    }
    return i_star * std::sqrt(2.0 / rho);
}

std::vector<WStarPoint> w_star_scan(double i_star, int points) {
    if (points < 1) {
        throw std::invalid_argument("w_star_scan: need at least one point");
    }
    std::vector<WStarPoint> out;
    for (int k = 1; k <= points; ++k) {
        const double rho = static_cast<double>(k) / (points + 1);
        out.push_back({rho, w_star(i_star, rho), 2.0 * std::numbers::pi * (1.0 - rho)});
    }
    return out;
}

Mat2 fast_block_transition(double kappa_e, double kappa_p, double tau) {
    const double ee = std::exp(-kappa_e * tau);
    const double ep = std::exp(-kappa_p * tau);
    const double diff = kappa_p - kappa_e;
    // kappa_p * int_0^tau exp(-kappa_e (tau - s)) exp(-kappa_p s) ds
    const double coupling = std::abs(diff * tau) < 1e-8 ? kappa_p * tau * ee
                                                         : kappa_p * ee * (-std::expm1(-diff * tau)) / diff;
    Mat2 phi;
    phi << ee, coupling, 0.0, ep;
    return phi;
}

FastDecayBound fast_decay_bound(double kappa_e, double kappa_p, double rate_fraction) {
    if (!(kappa_e > 0.0) || !(kappa_p > 0.0) || !(rate_fraction > 0.0) || !(rate_fraction < 1.0)) {
        throw std::invalid_argument("fast_decay_bound: kappas must be positive and rate_fraction in (0, 1)");
    }
    FastDecayBound b;
    b.a2f = rate_fraction * std::min(kappa_e, kappa_p);
    auto weighted = [&](double tau) {
        const Mat2 phi = fast_block_transition(kappa_e, kappa_p, tau);
        return upper_triangular_norm(phi(0, 0), phi(0, 1), phi(1, 1)) * std::exp(b.a2f * tau);
    };
    // The weighted norm decays like exp(-(min kappa - a2f) tau) times a polynomial.
    const double tau_end = 60.0 / (std::min(kappa_e, kappa_p) - b.a2f);
    constexpr int kGrid = 20000;
    double best_tau = 0.0;
    double best = weighted(0.0);
    for (int k = 1; k <= kGrid; ++k) {
        const double tau = tau_end * k / kGrid;
        const double v = weighted(tau);
        if (v > best) {
            best = v;
            best_tau = tau;
        }
    }
    // Golden-section refinement around the grid maximum.
    double lo = std::max(0.0, best_tau - tau_end / kGrid);
    double hi = best_tau + tau_end / kGrid;
    const double g = 0.5 * (std::sqrt(5.0) - 1.0);
    for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, hi); ++it) {
        const double a = hi - g * (hi - lo);
        const double c = lo + g * (hi - lo);
        if (weighted(a) > weighted(c)) {
            hi = c;
        } else {
            lo = a;
        }
    }
    b.a1f = std::max({best, weighted(0.5 * (lo + hi)), 1.0});
    return b;
}

LocalPeBound local_pe_radius(double beta1, const FastDecayBound& fast, double initial_fast_error, double window) {
    if (!(beta1 > 0.0) || !(fast.a1f >= 1.0) || !(window > 0.0)) {
        throw std::invalid_argument("local_pe_radius: need beta1 > 0, a1f >= 1, window > 0");
    }
    LocalPeBound out;
    out.radius = std::sqrt(beta1 / window) / (2.0 * fast.a1f);
    if (initial_fast_error >= out.radius) {
        if (!(fast.a2f > 0.0)) {
            throw std::invalid_argument("local_pe_radius: a2f must be positive to bound the recovery time");
        }
        out.recovery_time = std::log(initial_fast_error * 2.0 * fast.a1f * std::sqrt(window / beta1)) / fast.a2f;
    }
    return out;
}

double output_injection_alpha(double alpha1, double trace_max, double kappa_max) {
    const double d = 1.0 + kappa_max * trace_max;
    return alpha1 / (d * d);
}

DecayCertificate decay_certificate(double alpha, double window, double kappa_z) {
    return decay_certificate(alpha, window, kappa_z, kappa_z);
}

DecayCertificate decay_certificate(double alpha, double window, double kappa_min, double kappa_max) {
    const double q = 2.0 * kappa_min * alpha;
    if (!(q > 0.0) || !(q < 1.0) || !(window > 0.0) || !(kappa_max >= kappa_min)) {
        throw std::invalid_argument("decay_certificate: requires 0 < 2 kappa_z alpha < 1");
    }
    const double remaining = 1.0 - q;
    DecayCertificate c;
    c.factor = std::sqrt(remaining);
    c.rate = std::log(1.0 / remaining) / (2.0 * window);
    c.overshoot = std::sqrt(kappa_max / kappa_min) * std::sqrt(1.0 / remaining);
    return c;
}

Vec2 boundary_layer_current(const BoundaryLayerState& s, double i_q) {
    return Vec2(s.w.x(), i_q) + s.e + s.i_tilde;
}

namespace {

struct FastRates {
    Vec2 e;
    Vec2 i_tilde;
    Vec3 z;
};

FastRates boundary_layer_rates(const BoundaryLayerParams& p, const BoundaryLayerState& s) {
    const Mat32 om = regressor(boundary_layer_current(s, p.i_q));
    return {-p.kappa_e * s.e + p.kappa_p * s.i_tilde, -p.kappa_p * s.i_tilde,
            -(p.kappa_z.asDiagonal() * (om * (om.transpose() * s.z))).eval()};
}

BoundaryLayerState offset(const BoundaryLayerState& s, const FastRates& k, double h, const Vec2& w) {
    return {w, s.e + h * k.e, s.i_tilde + h * k.i_tilde, s.z + h * k.z};
}

}  // namespace

std::vector<BoundaryLayerSample> boundary_layer_sim(const BoundaryLayerParams& params,
                                                    const BoundaryLayerState& initial, double horizon, double dtau,
                                                    int record_every) {
    if (!(horizon >= 0.0) || !(dtau > 0.0) || record_every < 1) {
        throw std::invalid_argument("boundary_layer_sim: need horizon >= 0, dtau > 0, record_every >= 1");
    }
    const auto steps = static_cast<long>(std::llround(horizon / dtau));
    std::vector<BoundaryLayerSample> out;
    out.reserve(static_cast<std::size_t>(steps / record_every + 2));
    BoundaryLayerState s = initial;
    out.push_back({0.0, s});
    for (long k = 0; k < steps; ++k) {
        // w' = -J w: exact rotation by -dtau, i.e. the exosystem with lambda = 1.
        const Vec2 w_half = exosystem_step(s.w, 1.0, 0.5 * dtau);
        const Vec2 w_end = exosystem_step(s.w, 1.0, dtau);
        const FastRates k1 = boundary_layer_rates(params, s);
        const FastRates k2 = boundary_layer_rates(params, offset(s, k1, 0.5 * dtau, w_half));
        const FastRates k3 = boundary_layer_rates(params, offset(s, k2, 0.5 * dtau, w_half));
        const FastRates k4 = boundary_layer_rates(params, offset(s, k3, dtau, w_end));
        s.e += dtau / 6.0 * (k1.e + 2.0 * k2.e + 2.0 * k3.e + k4.e);
        s.i_tilde += dtau / 6.0 * (k1.i_tilde + 2.0 * k2.i_tilde + 2.0 * k3.i_tilde + k4.i_tilde);
        s.z += dtau / 6.0 * (k1.z + 2.0 * k2.z + 2.0 * k3.z + k4.z);
        s.w = w_end;
        if (!s.z.allFinite() || !s.e.allFinite()) {
            throw std::runtime_error("boundary_layer_sim: non-finite state");
        }
        if ((k + 1) % record_every == 0 || k + 1 == steps) {
            out.push_back({dtau * static_cast<double>(k + 1), s});
        }
    }
    return out;
}

RegressorSignal trajectory_regressor(const std::vector<BoundaryLayerSample>& samples, double i_q) {
    if (samples.size() < 2) {
        throw std::invalid_argument("trajectory_regressor: need at least two samples");
    }
    const double step = samples[1].tau - samples[0].tau;
    std::vector<Mat32> om;
    om.reserve(samples.size());
    for (std::size_t k = 0; k < samples.size(); ++k) {
        if (k > 0 && std::abs(samples[k].tau - samples[k - 1].tau - step) > 1e-9 * step) {
            throw std::invalid_argument("trajectory_regressor: samples are not uniformly spaced");
        }
        om.push_back(regressor(boundary_layer_current(samples[k].state, i_q)));
    }
    return RegressorSignal::sampled(std::move(om), step);
}

GramianReport certify(const CertificationInput& in) {
    if (!(in.window > 0.0) || in.windows < 1 || !(in.quadrature_step > 0.0) || !(in.injection_amplitude >= 0.0)) {
        throw std::invalid_argument("certify: invalid window, window count, step or amplitude");
    }
    GramianReport r;
    r.i_star = in.i_star;
    r.rho = in.rho;
    r.injection_amplitude = in.injection_amplitude;
    r.w_star = w_star(in.i_star, in.rho);

    const UcoBounds nominal =
        uco_bounds(nominal_regressor(in.injection_amplitude, in.i_q, in.quadrature_step, in.window), in.window,
                   in.window);
    r.beta1 = nominal.alpha1;

    const FastDecayBound fast = fast_decay_bound(in.kappa_e, in.kappa_p);
    r.a1f = fast.a1f;
    r.a2f = fast.a2f;
    r.window = in.window;
    if (r.beta1 > kUcoTolerance) {
        const LocalPeBound pe = local_pe_radius(r.beta1, fast, in.initial_fast_error, in.window);
        r.local_pe_radius = pe.radius;
        r.recovery_time = pe.recovery_time;
        r.window = in.window + pe.recovery_time;
    }

    // Perturbed regressor along the boundary layer from the requested fast error.
    BoundaryLayerState init;
    init.w = Vec2(in.injection_amplitude, 0.0);
    const double c = 0.5 * in.initial_fast_error;
    init.e = Vec2(c, c);
    init.i_tilde = Vec2(c, c);
    const BoundaryLayerParams params{in.kappa_e, in.kappa_p, in.kappa_z, in.i_q};
    const double horizon = in.window * (in.windows - 1) + r.window;
    const auto traj = boundary_layer_sim(params, init, horizon, in.quadrature_step);
    const UcoBounds perturbed = uco_bounds(trajectory_regressor(traj, in.i_q), r.window, in.window);
    r.alpha1 = perturbed.alpha1;
    r.alpha2 = perturbed.alpha2;
    r.trace_max = perturbed.trace_max;
    r.uniformly_observable = perturbed.uniformly_observable;
    r.windows = perturbed.windows;

    if (r.uniformly_observable) {
        const double kappa_min = in.kappa_z.minCoeff();
        const double kappa_max = in.kappa_z.maxCoeff();
        r.alpha = output_injection_alpha(r.alpha1, r.trace_max, kappa_max);
        const DecayCertificate cert = decay_certificate(r.alpha, r.window, kappa_min, kappa_max);
        r.contraction_factor = cert.factor;
        r.decay_rate = cert.rate;
        r.overshoot = cert.overshoot;
    }
    return r;
}

std::string to_key_value(const GramianReport& r) {
    std::string out;
    auto line = [&out](const char* key, double v) { out += fmt::format("{}: {:.12g}\n", key, v); };
    line("window", r.window);
    line("alpha1", r.alpha1);
    line("alpha2", r.alpha2);
    line("beta1", r.beta1);
    line("trace_max", r.trace_max);
    line("i_star", r.i_star);
    line("rho", r.rho);
    line("w_star", r.w_star);
    line("injection_amplitude", r.injection_amplitude);
    line("a1f", r.a1f);
    line("a2f", r.a2f);
    line("local_pe_radius", r.local_pe_radius);
    line("recovery_time", r.recovery_time);
    line("alpha", r.alpha);
    line("contraction_factor", r.contraction_factor);
    line("decay_rate", r.decay_rate);
    line("overshoot", r.overshoot);
    out += fmt::format("uniformly_observable: {}\n", r.uniformly_observable ? "true" : "false");
    out += fmt::format("injection_certified: {}\n", r.injection_amplitude >= r.w_star ? "true" : "false");
    return out;
}

}  // namespace pmsm
