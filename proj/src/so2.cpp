#include "pmsm/so2.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace pmsm {

UnitVec UnitVec::normalized(double c, double s) {
    const double n = std::hypot(c, s);
    if (!std::isfinite(n) || n == 0.0) {
        throw std::invalid_argument("UnitVec: cannot normalize a zero or non-finite vector");
    }
    return UnitVec(c / n, s / n);
}

UnitVec UnitVec::from_angle(double theta) {
    if (!std::isfinite(theta)) {
        throw std::invalid_argument("UnitVec: non-finite angle");
    }
    return normalized(std::cos(theta), std::sin(theta));
}

double UnitVec::angle() const {
    const double a = std::atan2(s_, c_);
    // atan2 returns -pi for (-1, -0.0); the range is (-pi, pi].
    return a == -std::numbers::pi ? std::numbers::pi : a;
}

Mat2 rot_matrix(const UnitVec& z) {
    Mat2 m;
    m << z.c(), -z.s(), z.s(), z.c();
    return m;
}

UnitVec mul(const UnitVec& a, const UnitVec& b) {
    return UnitVec::normalized(a.c() * b.c() - a.s() * b.s(), a.s() * b.c() + a.c() * b.s());
}

UnitVec step(const UnitVec& z, double rate, double dt) {
    if (rate == 0.0 || dt == 0.0) {
        return z;
    }
    return mul(UnitVec::from_angle(rate * dt), z);
}

double wrap_angle(double theta) {
    double a = std::remainder(theta, 2.0 * std::numbers::pi);
    if (a <= -std::numbers::pi) {
        a += 2.0 * std::numbers::pi;
    }
    return a;
}

}  // namespace pmsm
