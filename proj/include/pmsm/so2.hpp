#pragma once

#include <Eigen/Dense>

namespace pmsm {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat32 = Eigen::Matrix<double, 3, 2>;

/// Quarter-turn matrix [[0, -1], [1, 0]].
inline Mat2 skew_j() {
    Mat2 j;
    j << 0.0, -1.0, 1.0, 0.0;
    return j;
}

/// J * v without building the matrix.
inline Vec2 apply_j(const Vec2& v) { return Vec2(-v.y(), v.x()); }

/**
 * Element of the unit circle S^1, stored as (cos, sin).
 *
 * Every constructor and every composition renormalizes, so c^2 + s^2 = 1 holds to
 * rounding after arbitrarily long chains of updates.
 */
class UnitVec {
public:
    UnitVec() = default;

    /// Projects (c, s) onto the circle. Throws std::invalid_argument for a zero or non-finite vector.
    static UnitVec normalized(double c, double s);
    static UnitVec normalized(const Vec2& v) { return normalized(v.x(), v.y()); }
    static UnitVec from_angle(double theta);
    static UnitVec identity() { return UnitVec{}; }

    double c() const { return c_; }
    double s() const { return s_; }
    Vec2 vec() const { return Vec2(c_, s_); }

    /// Angle in (-pi, pi].
    double angle() const;

    /// Group inverse (the conjugate).
    UnitVec inverse() const { return UnitVec(c_, -s_); }

    /// Sign flip, i.e. rotation by pi.
    UnitVec operator-() const { return UnitVec(-c_, -s_); }

    double norm_error() const { return c_ * c_ + s_ * s_ - 1.0; }

    bool operator==(const UnitVec&) const = default;

private:
    UnitVec(double c, double s) : c_(c), s_(s) {}

    double c_ = 1.0;
    double s_ = 0.0;
};

/// Rotation matrix C[z] = [[c, -s], [s, c]].
Mat2 rot_matrix(const UnitVec& z);

/// Group product C[a] b. Commutative.
UnitVec mul(const UnitVec& a, const UnitVec& b);

inline UnitVec operator*(const UnitVec& a, const UnitVec& b) { return mul(a, b); }

/// Exact solution of z' = u J z over dt: rotation of z by u * dt.
UnitVec step(const UnitVec& z, double rate, double dt);

inline UnitVec from_angle(double theta) { return UnitVec::from_angle(theta); }
inline double angle_of(const UnitVec& z) { return z.angle(); }

/// Wraps an angle into (-pi, pi].
double wrap_angle(double theta);

/// Returns z if sign >= 0, -z otherwise.
inline UnitVec signed_by(const UnitVec& z, double sign) { return sign < 0.0 ? -z : z; }

inline double sgn(double x) { return x < 0.0 ? -1.0 : 1.0; }

}  // namespace pmsm
