#include <doctest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <random>

#include <Eigen/Eigenvalues>

#include "pmsm/controller_observer.hpp"
#include "pmsm/integrator.hpp"

using namespace pmsm;

namespace {

const PlantParams kPlant = benchmark_plant();
const KnownConstants kMotor = KnownConstants::from(kPlant);

double chi_3500() { return kPlant.phi * kPlant.pole_pairs * rpm_to_rad_s(3500.0); }

ObserverState random_observer(std::mt19937_64& rng) {
    std::normal_distribution<double> n;
    ObserverState s;
    s.zeta_chi_hat = from_angle(3.0 * n(rng));
    s.xi_hat = 760.0 + 30.0 * n(rng);
    s.i_hat = Vec2(n(rng), 5.0 * n(rng));
    s.theta_hat = Vec3(0.1 * n(rng), n(rng), 5.0 * n(rng));
    s.w = 2.0 * from_angle(3.0 * n(rng)).vec();
    return s;
}

// Slow subsystem from the module's attitude observer with h_hat replaced by the true h.
struct SlowRates {
    double theta_rate;
    double xi_tilde_rate;
};

SlowRates slow_field(double theta_err, double xi_tilde, double chi, const ControllerGains& g) {
    const UnitVec eta = from_angle(theta_err);
    const Vec2 h = -chi * apply_j(eta.vec());
    const double xi = 1.0 / kPlant.phi;
    const AttitudeRates a = attitude_observer_derivative(h, xi - xi_tilde, g);
    return {chi * xi - a.omega_chi_hat, -a.xi_hat_rate};
}

}  // namespace

TEST_CASE("regressor and beta") {
    const Mat32 o = regressor(Vec2(2.0, -1.0));
    CHECK(o(0, 0) == -2.0);
    CHECK(o(0, 1) == 1.0);
    CHECK(o(1, 0) == 1.0);
    CHECK(o(2, 1) == 1.0);
    const Vec3 th(0.1, 2.0, 3.0);
    const Vec2 i(4.0, 5.0);
    CHECK((regressor(i).transpose() * th - (-0.1 * i + Vec2(2.0, 3.0))).norm() < 1e-15);

    CHECK(beta(Vec2::Zero(), Vec3::Ones()).norm() == 0.0);
    const Vec3 b = beta(Vec2(3.0, 4.0), Vec3::Ones());
    CHECK(b[0] == -12.5);
    CHECK(b[1] == 3.0);
    CHECK(b[2] == 4.0);
}

TEST_CASE("beta jacobian matches central differences") {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n;
    const Vec3 kz(0.005, 0.75, 0.75);
    for (int k = 0; k < 200; ++k) {
        const Vec2 i(10.0 * n(rng), 10.0 * n(rng));
        const Mat32 jac = beta_jacobian(i, kz);
        Mat32 fd;
        const double h = 1e-5;
        for (int c = 0; c < 2; ++c) {
            Vec2 d = Vec2::Zero();
            d[c] = h;
            fd.col(c) = (beta(i + d, kz) - beta(i - d, kz)) / (2.0 * h);
        }
        CHECK((jac - fd).norm() <= 1e-8 * std::max(1.0, jac.norm()));
        CHECK((jac - kz.asDiagonal() * regressor(i)).norm() == 0.0);
    }
}

TEST_CASE("attitude observer rates") {
    const ControllerGains g = benchmark_gains();
    const AttitudeRates zero = attitude_observer_derivative(Vec2::Zero(), 800.0, g);
    CHECK(zero.omega_chi_hat == 0.0);
    CHECK(zero.xi_hat_rate == 0.0);
    const double chi = 5.0;
    const AttitudeRates sync = attitude_observer_derivative(Vec2(0.0, -chi), 770.0, g);
    CHECK(sync.omega_chi_hat == doctest::Approx(chi * 770.0));
    CHECK(sync.xi_hat_rate == 0.0);
    const AttitudeRates off = attitude_observer_derivative(Vec2(0.3, -chi), 770.0, g);
    CHECK(off.omega_chi_hat == doctest::Approx(std::hypot(0.3, chi) * 770.0 + g.k_eta * 0.3));
    CHECK(off.xi_hat_rate == doctest::Approx(g.gamma * 0.3));
}

TEST_CASE("certainty-equivalence attitude loop reproduces the slow system") {
    const ControllerGains g = benchmark_gains();
    const double omega = kPlant.pole_pairs * rpm_to_rad_s(4000.0);
    const double chi = std::abs(omega) * kPlant.phi;
    const double xi = 1.0 / kPlant.phi;
    const double dt = 1e-6;

    // Module path: circles zeta_chi, zeta_chi_hat; x = xi_hat.
    StateBundle<1, 2> m;
    m.circles[0] = from_angle(0.5);
    m.circles[1] = from_angle(-0.6);
    m.x[0] = 800.0;
    auto f_module = [&](double, const StateBundle<1, 2>& b) {
        const UnitVec eta = mul(b.circles[1].inverse(), b.circles[0]);
        const Vec2 h = -chi * apply_j(eta.vec());
        const AttitudeRates a = attitude_observer_derivative(h, b.x[0], g);
        BundleRate<1, 2> r;
        r.rates[0] = omega;
        r.rates[1] = a.omega_chi_hat;
        r.dx[0] = a.xi_hat_rate;
        return r;
    };
    // Oracle: theta' = chi xi_tilde - k_eta chi sin(theta), xi_tilde' = -gamma chi sin(theta).
    StateBundle<2, 0> o;
    o.x << 1.1, xi - 800.0;
    auto f_oracle = [&](double, const StateBundle<2, 0>& b) {
        BundleRate<2, 0> r;
        r.dx << chi * b.x[1] - g.k_eta * chi * std::sin(b.x[0]), -g.gamma * chi * std::sin(b.x[0]);
        return r;
    };
    double worst = 0.0;
    for (int k = 0; k < 50000; ++k) {
        m = rk4_step(m, k * dt, dt, f_module);
        o = rk4_step(o, k * dt, dt, f_oracle);
        const double th = angle_of(mul(m.circles[1].inverse(), m.circles[0]));
        worst = std::max({worst, std::abs(wrap_angle(th - o.x[0])), std::abs((xi - m.x[0]) - o.x[1]) / xi});
    }
    CHECK(worst < 1e-6);
}

TEST_CASE("slow system: attractor equilibrium and pole placement eigen oracle") {
    const ControllerGains g = benchmark_gains();
    const double chi = chi_3500();
    const SlowRates at = slow_field(0.0, 0.0, chi, g);
    CHECK(std::abs(at.theta_rate) < 1e-9);
    CHECK(std::abs(at.xi_tilde_rate) < 1e-12);

    // Richardson-extrapolated central differences of the module's vector field.
    auto column = [&](int var, double h) {
        const double d0 = var == 0 ? h : 0.0;
        const double d1 = var == 1 ? h : 0.0;
        const SlowRates p = slow_field(d0, d1, chi, g);
        const SlowRates q = slow_field(-d0, -d1, chi, g);
        return Vec2((p.theta_rate - q.theta_rate) / (2 * h), (p.xi_tilde_rate - q.xi_tilde_rate) / (2 * h));
    };
    Mat2 jac;
    for (int v = 0; v < 2; ++v) {
        const double h = 1e-3;
        jac.col(v) = (4.0 * column(v, h / 2) - column(v, h)) / 3.0;
    }
    CHECK(jac.trace() == doctest::Approx(-g.k_eta * chi).epsilon(1e-10));
    CHECK(jac.determinant() == doctest::Approx(g.gamma * chi * chi).epsilon(1e-9));
    Eigen::EigenSolver<Mat2> es(jac);
    std::vector<std::complex<double>> ev{es.eigenvalues()[0], es.eigenvalues()[1]};
    std::sort(ev.begin(), ev.end(), [](auto a, auto b) { return a.imag() < b.imag(); });
    CHECK(std::abs(ev[0] - std::complex<double>(-100.0, -100.0 / 3)) < 1e-9 * 105.4);
    CHECK(std::abs(ev[1] - std::complex<double>(-100.0, 100.0 / 3)) < 1e-9 * 105.4);
}

TEST_CASE("slow system: the antipodal point is a saddle") {
    const ControllerGains g = benchmark_gains();
    const double chi = chi_3500();
    const SlowRates at = slow_field(std::numbers::pi, 0.0, chi, g);
    CHECK(std::abs(at.theta_rate) < 1e-9);
    // Linearization at theta = pi: [[k_eta chi, chi], [gamma chi, 0]], det < 0.
    Mat2 jac;
    jac << g.k_eta * chi, chi, g.gamma * chi, 0.0;
    const double disc = std::sqrt(jac.trace() * jac.trace() - 4 * jac.determinant());
    CHECK(jac.determinant() < 0.0);
    CHECK((jac.trace() + disc) / 2 == doctest::Approx(245.0).epsilon(0.01));
}

TEST_CASE("gains_from_poles") {
    const std::complex<double> pole(-100.0, 100.0 / 3);
    const SlowGains s = gains_from_poles(pole, std::conj(pole), chi_3500());
    CHECK(chi_3500() == doctest::Approx(5.757).epsilon(1e-3));
    CHECK(s.k_eta == doctest::Approx(34.75).epsilon(0.005));
    CHECK(s.gamma == doctest::Approx(335.34).epsilon(0.005));

    const SlowGains r = gains_from_poles({-50.0, 0.0}, {-50.0, 0.0}, 4.0);
    CHECK(r.k_eta == doctest::Approx(2 * 50.0 / 4.0));
    CHECK(r.gamma == doctest::Approx(50.0 * 50.0 / 16.0));

    CHECK_THROWS_AS(gains_from_poles({1.0, 2.0}, {1.0, -2.0}, 4.0), std::invalid_argument);
    CHECK_THROWS_AS(gains_from_poles({-1.0, 2.0}, {-1.0, 3.0}, 4.0), std::invalid_argument);
    CHECK_THROWS_AS(gains_from_poles({-1.0, 2.0}, {-1.0, -2.0}, 0.0), std::invalid_argument);
}

TEST_CASE("benchmark gains") {
    const ControllerGains g = benchmark_gains();
    CHECK(g.k_p == 3.93e3);
    CHECK(g.k_e == 1.964e3);
    CHECK(g.k_z == Vec3(0.005, 0.75, 0.75));
    CHECK(g.lambda / (2 * std::numbers::pi) == doctest::Approx(2000.0));
    CHECK_NOTHROW(g.validate());
    ControllerGains bad = g;
    bad.k_z[1] = 0.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("epsilon scaling round trip") {
    const ControllerGains g = benchmark_gains();
    const FastScaling s = g.scaling(kPlant.L);
    CHECK(s.epsilon == doctest::Approx(1.0 / g.lambda));
    const ControllerGains back = ControllerGains::from_scaling(s, kPlant.L, g.k_eta, g.gamma);
    CHECK(back.k_p == doctest::Approx(g.k_p));
    CHECK(back.k_e == doctest::Approx(g.k_e));
    CHECK((back.k_z - g.k_z).norm() < 1e-12);
    CHECK(back.lambda == doctest::Approx(g.lambda));
    FastScaling half = s;
    half.epsilon /= 2;
    const ControllerGains h = ControllerGains::from_scaling(half, kPlant.L, g.k_eta, g.gamma);
    CHECK(h.k_p == doctest::Approx(2 * g.k_p));
    CHECK(h.lambda == doctest::Approx(2 * g.lambda));
    CHECK(h.k_z[1] == doctest::Approx(2 * g.k_z[1]));
}

TEST_CASE("extract_estimates inverts the parameter map") {
    const Vec3 kz(0.005, 0.75, 0.75);
    const Vec2 i(1.5, 8.0);
    const double R = 0.108;
    const Vec2 h(0.4, -5.0);
    ObserverState s;
    s.xi_hat = 763.9;
    s.theta_hat = Vec3(R + 0.5 * kz[0] * i.squaredNorm(), h.x() - kz[1] * i.x(), h.y() - kz[2] * i.y());
    const Estimates e = extract_estimates(s, i, kz, 12);
    CHECK(e.R_hat == doctest::Approx(R).epsilon(1e-14));
    CHECK((e.h_hat - h).norm() < 1e-14);
    CHECK(e.omega_hat == doctest::Approx(h.norm() * 763.9));
    CHECK(*e.phi_hat == doctest::Approx(1.0 / 763.9));
    CHECK(*e.torque_hat == doctest::Approx(1.5 * 12 * 8.0 / 763.9));

    s.xi_hat = -700.0;
    s.zeta_chi_hat = from_angle(0.3);
    const Estimates neg = extract_estimates(s, i, kz, 12);
    CHECK(std::abs(wrap_angle(angle_of(neg.zeta_hat) - (0.3 - std::numbers::pi))) < 1e-12);

    s.xi_hat = 0.0;
    const Estimates zero = extract_estimates(s, i, kz, 12);
    CHECK_FALSE(zero.phi_hat.has_value());
    CHECK_FALSE(zero.torque_hat.has_value());

    s.xi_hat = 1e-9;
    const Estimates tiny = extract_estimates(s, i, kz, 12);
    CHECK(*tiny.phi_hat == doctest::Approx(1e6));
}

TEST_CASE("reference signals") {
    const CurrentReference zero = reference_signals(800.0, 10.0, 0.0, 2.0, 12);
    CHECK(zero.i_q == 0.0);
    CHECK(zero.p_q == doctest::Approx(2.0 / 36.0 * 800.0 * 2.0));
    const CurrentReference r = reference_signals(1.0 / 1.309e-3, 0.0, 0.23562, 0.0, 12);
    CHECK(r.i_q == doctest::Approx(10.0).epsilon(1e-5));
    const CurrentReference full = reference_signals(800.0, 5.0, 0.2, 3.0, 12);
    CHECK(full.p_q == doctest::Approx(2.0 / 36.0 * (5.0 * 0.2 + 800.0 * 3.0)));
    CHECK(ObserverState::initial(802.29, 2.0).xi_hat == 802.29);
}

TEST_CASE("exosystem") {
    const double lambda = 2 * std::numbers::pi * 2000.0;
    const Vec2 w0(2.0, 0.0);
    for (double t : {1e-5, 3.3e-4, 0.01}) {
        const Vec2 w = exosystem_step(w0, lambda, t);
        CHECK(w.x() == doctest::Approx(2.0 * std::cos(lambda * t)));
        CHECK(w.y() == doctest::Approx(-2.0 * std::sin(lambda * t)));
    }
    const Vec2 d = exosystem_derivative(Vec2(1.0, 2.0), 3.0);
    CHECK(d == Vec2(6.0, -3.0));
    Vec2 w = w0;
    for (int k = 0; k < 1000000; ++k) w = exosystem_step(w, lambda, 1e-6);
    CHECK(std::abs(w.norm() - 2.0) < 1e-12);
}

TEST_CASE("control law gives e' = -k_e e + k_p i_tilde") {
    const ControllerGains g = benchmark_gains();
    std::mt19937_64 rng(9);
    std::normal_distribution<double> n;
    for (int k = 0; k < 200; ++k) {
        const ObserverState s = random_observer(rng);
        const Vec2 i_s(3.0 * n(rng), 8.0 * n(rng));
        const double T = 0.2 * n(rng);
        const double dT = 50.0 * n(rng);
        const ControllerOutput out = evaluate_controller(s, i_s, T, dT, kMotor, g);
        const Vec2 i_chi = to_frame(s.zeta_chi_hat, i_s);
        const Vec2 e = tracking_error(s, out.reference.i_q);
        const Vec2 e_rate = out.observer.i_hat_rate - Vec2(g.lambda * s.w.y(), out.reference.p_q);
        const Vec2 expected = -g.k_e * e + g.k_p * (i_chi - s.i_hat);
        CHECK((e_rate - expected).norm() <= 1e-8 * std::max(1.0, expected.norm()));
        CHECK((out.w_rate - Vec2(g.lambda * s.w.y(), -g.lambda * s.w.x())).norm() < 1e-9);
        CHECK((from_frame(s.zeta_chi_hat, out.u_chi) - out.u_s).norm() < 1e-12);
    }
}

TEST_CASE("tracking equilibrium: e = 0 and i_tilde = 0 give e' = 0") {
    const ControllerGains g = benchmark_gains();
    ObserverState s = ObserverState::initial(770.0, 2.0);
    s.zeta_chi_hat = from_angle(0.4);
    const double T = 0.1;
    const double i_q = reference_signals(s.xi_hat, 0.0, T, 0.0, 12).i_q;
    const Vec2 i_chi(s.w.x(), i_q);
    s.i_hat = i_chi;
    s.theta_hat = Vec3(0.1, 0.0, -5.0) - beta(i_chi, g.k_z);  // h_hat_1 = 0, so xi_hat' = 0
    const ControllerOutput out = evaluate_controller(s, from_frame(s.zeta_chi_hat, i_chi), T, 0.0, kMotor, g);
    CHECK(tracking_error(s, out.reference.i_q).norm() < 1e-12);
    const Vec2 e_rate = out.observer.i_hat_rate - Vec2(g.lambda * s.w.y(), out.reference.p_q);
    CHECK(e_rate.norm() < 1e-7);
}

TEST_CASE("perfect estimates: observer tracks the plant derivative") {
    const ControllerGains g = benchmark_gains();
    const double omega = 5000.0;
    PlantState x;
    x.zeta = from_angle(0.9);
    x.omega_m = omega / kPlant.pole_pairs;
    x.i_s = Vec2(1.0, 4.0);
    ObserverState s = ObserverState::initial(1.0 / kPlant.phi, 2.0);
    s.zeta_chi_hat = x.zeta;
    const Vec2 i = to_frame(s.zeta_chi_hat, x.i_s);
    s.i_hat = i;
    const double chi = omega * kPlant.phi;
    s.theta_hat = Vec3(kPlant.R, 0.0, -chi) - beta(i, g.k_z);
    const ControllerOutput out = evaluate_controller(s, x.i_s, 0.1, 0.0, kMotor, g);
    const PlantDerivative pd = plant_derivative(x, out.u_s, kPlant, SpeedMode::Exogenous);
    // Observer frame rotates at omega_chi_hat = omega here, so d/dt (C^T i_s) = C^T i_s' - omega J i.
    const Vec2 i_rate = to_frame(s.zeta_chi_hat, pd.di_s) - out.attitude.omega_chi_hat * apply_j(i);
    CHECK(out.attitude.omega_chi_hat == doctest::Approx(omega));
    CHECK((out.observer.i_hat_rate - i_rate).norm() < 1e-6 * i_rate.norm());
}

TEST_CASE("frozen chi and eta: z follows the gradient flow") {
    const ControllerGains g = benchmark_gains();
    const double omega = 4000.0;
    const double chi = omega * kPlant.phi;
    const UnitVec eta = from_angle(0.3);  // frozen offset between true and estimated frames
    const Vec2 h = -chi * apply_j(eta.vec());
    const Vec3 theta(kPlant.R, h.x(), h.y());
    const double dt = 1e-7;

    // x = (i_s, i_hat, theta_hat, z_oracle); circles = (zeta, zeta_chi_hat)
    StateBundle<10, 2> b;
    b.circles[0] = from_angle(0.2);
    b.circles[1] = mul(eta.inverse(), b.circles[0]);
    b.x.segment<2>(0) = Vec2(2.0, -1.0);
    b.x.segment<3>(4) = Vec3(0.05, 1.0, -3.0);
    ObserverState s0 = ObserverState::initial(1.0 / kPlant.phi, 2.0);
    s0.zeta_chi_hat = b.circles[1];
    s0.theta_hat = b.x.segment<3>(4);
    const Vec2 i0 = to_frame(b.circles[1], b.x.segment<2>(0));
    b.x.segment<3>(7) = s0.theta_hat + beta(i0, g.k_z) - theta;

    auto f = [&](double t, const StateBundle<10, 2>& st) {
        PlantState x;
        x.i_s = st.x.segment<2>(0);
        x.zeta = st.circles[0];
        x.omega_m = omega / kPlant.pole_pairs;
        ObserverState s;
        s.zeta_chi_hat = st.circles[1];
        s.xi_hat = 1.0 / kPlant.phi;
        s.i_hat = st.x.segment<2>(2);
        s.theta_hat = st.x.segment<3>(4);
        s.w = exosystem_step(Vec2(2.0, 0.0), g.lambda, t);
        const Vec2 i = to_frame(s.zeta_chi_hat, x.i_s);
        const Vec2 u = Vec2(3.0, 6.0) + 2.0 * s.w;  // any bounded input
        const CurrentObserverRates r = current_observer_derivative(s, i, u, omega, kMotor, g);
        const PlantDerivative pd = plant_derivative(x, from_frame(s.zeta_chi_hat, u), kPlant, SpeedMode::Exogenous);
        const Mat32 o = regressor(i);
        const Vec3 z = st.x.segment<3>(7);
        BundleRate<10, 2> out;
        out.dx.segment<2>(0) = pd.di_s;
        out.dx.segment<2>(2) = r.i_hat_rate;
        out.dx.segment<3>(4) = r.theta_hat_rate;
        out.dx.segment<3>(7) = -(g.k_z.asDiagonal() * o * o.transpose() * z) / kPlant.L;
        out.rates[0] = omega;
        out.rates[1] = omega;
        return out;
    };
    double worst = 0.0;
    double z_start = b.x.segment<3>(7).norm();
    for (int k = 0; k < 20000; ++k) {
        b = rk4_step(b, k * dt, dt, f);
        const Vec2 i = to_frame(b.circles[1], b.x.segment<2>(0));
        const Vec3 z_sim = b.x.segment<3>(4) + beta(i, g.k_z) - theta;
        worst = std::max(worst, (z_sim - b.x.segment<3>(7)).norm());
    }
    CHECK(worst < 1e-8);
    CHECK(b.x.segment<3>(7).norm() < z_start);
}

TEST_CASE("diagnostics") {
    const ControllerGains g = benchmark_gains();
    PlantState x;
    x.zeta = from_angle(1.2);
    x.omega_m = 300.0;
    x.i_s = Vec2(0.5, 3.0);
    ObserverState s = ObserverState::initial(763.0, 2.0);
    s.zeta_chi_hat = x.zeta;
    const double omega = x.omega(kPlant);
    const Diagnostics d = compute_diagnostics(x, omega, s, 1.0, kPlant, g);
    CHECK(std::abs(d.theta_err) < 1e-15);
    CHECK(d.eta.c() == doctest::Approx(1.0));
    CHECK(d.chi == doctest::Approx(omega * kPlant.phi));
    CHECK(d.xi == doctest::Approx(1.0 / kPlant.phi));

    std::mt19937_64 rng(2);
    std::normal_distribution<double> n;
    for (int k = 0; k < 100; ++k) {
        s.zeta_chi_hat = from_angle(3.0 * n(rng));
        const Diagnostics r = compute_diagnostics(x, omega, s, 1.0, kPlant, g);
        CHECK(r.h.norm() == doctest::Approx(r.chi));
    }
    // Negative speed flips the chi-frame.
    s.zeta_chi_hat = -x.zeta;
    const Diagnostics neg = compute_diagnostics(x, -omega, s, 1.0, kPlant, g);
    CHECK(std::abs(neg.theta_err) < 1e-15);
    CHECK(neg.xi < 0.0);
}

TEST_CASE("torque identity and d-axis decoupling at synchronization") {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> n;
    for (int k = 0; k < 100; ++k) {
        PlantState x;
        x.zeta = from_angle(3.0 * n(rng));
        x.omega_m = 300.0 * (k % 2 ? 1.0 : -1.0);
        const double omega = x.omega(kPlant);
        const UnitVec zc = signed_by(x.zeta, sgn(omega));
        const Vec2 i_chi(5.0 * n(rng), 5.0 * n(rng));
        x.i_s = from_frame(zc, i_chi);
        const double xi = sgn(omega) / kPlant.phi;
        const double T = torque(x, kPlant);
        CHECK(i_chi.y() == doctest::Approx(2.0 / (3.0 * kPlant.pole_pairs) * xi * T));
        PlantState y = x;
        y.i_s = from_frame(zc, i_chi + Vec2(1.0, 0.0));
        CHECK(std::abs(torque(y, kPlant) - T) < 1e-12);
    }
}
