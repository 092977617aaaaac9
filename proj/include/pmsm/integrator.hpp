#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

#include "pmsm/so2.hpp"

namespace pmsm {

/// Raised when a simulation leaves the finite / bounded regime.
class DivergenceError : public std::runtime_error {
public:
    DivergenceError(const std::string& what, double t) : std::runtime_error(what), time_(t) {}
    double time() const { return time_; }

private:
    double time_;
};

/// Euclidean components plus a fixed number of S^1 components.
template <int N, int M>
struct StateBundle {
    Eigen::Matrix<double, N, 1> x = Eigen::Matrix<double, N, 1>::Zero();
    std::array<UnitVec, M> circles{};
};

/// Time derivative of a StateBundle: dx/dt and the angular rate of each circle.
template <int N, int M>
struct BundleRate {
    Eigen::Matrix<double, N, 1> dx = Eigen::Matrix<double, N, 1>::Zero();
    std::array<double, M> rates{};

    bool all_finite() const {
        if (!dx.allFinite()) return false;
        for (double r : rates) {
            if (!std::isfinite(r)) return false;
        }
        return true;
    }
};

/**
 * Classical RK4 step. Euclidean components use the usual stage combination; each
 * circle is advanced by exact rotation, at intermediate stages with that stage's rate
 * and at the end with the RK4-weighted average rate. On S^1 this is RK4 on the angle
 * without ever leaving the circle.
 *
 * `f(t, bundle)` returns a BundleRate. A non-finite rate throws DivergenceError.
 */
template <int N, int M, class F>
StateBundle<N, M> rk4_step(const StateBundle<N, M>& s, double t, double dt, F&& f) {
    auto check = [t](const BundleRate<N, M>& k) {
        if (!k.all_finite()) {
            throw DivergenceError("rk4_step: non-finite derivative at t = " + std::to_string(t), t);
        }
    };
    auto advance = [&s](const BundleRate<N, M>& k, double h) {
        StateBundle<N, M> out;
        out.x = s.x + h * k.dx;
        for (int j = 0; j < M; ++j) {
            out.circles[j] = step(s.circles[j], k.rates[j], h);
        }
        return out;
    };

    const BundleRate<N, M> k1 = f(t, s);
    check(k1);
    const BundleRate<N, M> k2 = f(t + 0.5 * dt, advance(k1, 0.5 * dt));
    check(k2);
    const BundleRate<N, M> k3 = f(t + 0.5 * dt, advance(k2, 0.5 * dt));
    check(k3);
    const BundleRate<N, M> k4 = f(t + dt, advance(k3, dt));
    check(k4);

    BundleRate<N, M> avg;
    avg.dx = (k1.dx + 2.0 * k2.dx + 2.0 * k3.dx + k4.dx) / 6.0;
    for (int j = 0; j < M; ++j) {
        avg.rates[j] = (k1.rates[j] + 2.0 * k2.rates[j] + 2.0 * k3.rates[j] + k4.rates[j]) / 6.0;
    }
    return advance(avg, dt);
}

}  // namespace pmsm
