#pragma once

#include <stdexcept>
#include <variant>
#include <vector>

namespace pmsm {

/// Raised when a profile violates the speed regularity requirements: zero crossing,
/// sign change, discontinuity, or a value/derivative outside the declared bounds.
class ProfileError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

namespace segment {
struct Hold {
    double value;
    double duration;
};
struct Ramp {
    double start;
    double end;
    double duration;
};
/// offset + amplitude * sin(2 pi frequency t), t measured from the segment start.
struct Sinusoid {
    double offset;
    double amplitude;
    double frequency;
    double duration;
};
}  // namespace segment

using Segment = std::variant<segment::Hold, segment::Ramp, segment::Sinusoid>;

struct SpeedSample {
    double omega;   // rad/s
    double domega;  // rad/s^2, right derivative
};

/**
 * Piecewise C1 speed signal with a constant sign and |omega| kept inside
 * [omega_min, omega_max]. All checks run at construction, analytically per segment,
 * so a constructed profile is valid everywhere on [0, horizon].
 */
class SpeedProfile {
public:
    SpeedProfile(std::vector<Segment> segments, double omega_min, double omega_max, double max_rate);

    /// Value and right derivative at t. Throws std::out_of_range outside [0, horizon].
    SpeedSample at(double t) const;

    double horizon() const { return horizon_; }
    double omega_min() const { return omega_min_; }
    double omega_max() const { return omega_max_; }
    double max_rate() const { return max_rate_; }
    double sign() const { return sign_; }
    const std::vector<Segment>& segments() const { return segments_; }

    /// Same shape with every speed value multiplied by k (k != 0); bounds scale with |k|.
    SpeedProfile scaled(double k) const;

private:
    std::vector<Segment> segments_;
    std::vector<double> starts_;
    double horizon_ = 0.0;
    double omega_min_;
    double omega_max_;
    double max_rate_;
    double sign_ = 1.0;
};

inline SpeedSample speed_at(const SpeedProfile& profile, double t) { return profile.at(t); }

}  // namespace pmsm
