#include "pmsm/speed_profile.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace pmsm {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

template <class... Ts>
struct Overloaded : Ts... {
    using Ts::operator()...;
};

double duration_of(const Segment& seg) {
    return std::visit([](const auto& s) { return s.duration; }, seg);
}

SpeedSample evaluate(const Segment& seg, double tau) {
    return std::visit(Overloaded{
                          [](const segment::Hold& s) { return SpeedSample{s.value, 0.0}; },
                          [tau](const segment::Ramp& s) {
                              const double slope = (s.end - s.start) / s.duration;
                              return SpeedSample{s.start + slope * tau, slope};
                          },
                          [tau](const segment::Sinusoid& s) {
                              const double arg = kTwoPi * s.frequency * tau;
                              return SpeedSample{s.offset + s.amplitude * std::sin(arg),
                                                 kTwoPi * s.frequency * s.amplitude * std::cos(arg)};
                          },
                      },
                      seg);
}

double start_value(const Segment& seg) { return evaluate(seg, 0.0).omega; }
double end_value(const Segment& seg) { return evaluate(seg, duration_of(seg)).omega; }

// Extreme values of omega over the segment: endpoints plus interior critical points.
std::pair<double, double> value_range(const Segment& seg) {
    double lo = std::min(start_value(seg), end_value(seg));
    double hi = std::max(start_value(seg), end_value(seg));
    if (const auto* s = std::get_if<segment::Sinusoid>(&seg)) {
        if (s->frequency > 0.0) {
            // sin peaks at 2 pi f t = pi/2 + k pi
            const double quarter = 0.25 / s->frequency;
            for (double t = quarter; t < s->duration; t += 2.0 * quarter) {
                const double v = evaluate(seg, t).omega;
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
        }
    }
    return {lo, hi};
}

double max_abs_rate(const Segment& seg) {
    return std::visit(Overloaded{
                          [](const segment::Hold&) { return 0.0; },
                          [](const segment::Ramp& s) { return std::abs(s.end - s.start) / s.duration; },
                          [](const segment::Sinusoid& s) { return kTwoPi * s.frequency * std::abs(s.amplitude); },
                      },
                      seg);
}

void fail(std::size_t index, const std::string& what) {
    throw ProfileError("speed profile segment " + std::to_string(index) + ": " + what);
}

}  // namespace

SpeedProfile::SpeedProfile(std::vector<Segment> segments, double omega_min, double omega_max, double max_rate)
    : segments_(std::move(segments)), omega_min_(omega_min), omega_max_(omega_max), max_rate_(max_rate) {
    if (segments_.empty()) {
        throw ProfileError("speed profile has no segments");
    }
    if (!(omega_min > 0.0) || !(omega_max >= omega_min) || !(max_rate >= 0.0) || !std::isfinite(omega_max) ||
        !std::isfinite(max_rate)) {
        throw ProfileError("speed profile bounds must satisfy 0 < omega_min <= omega_max and max_rate >= 0");
    }
    sign_ = start_value(segments_.front()) < 0.0 ? -1.0 : 1.0;
    const double tol = 1e-9 * omega_max_;

    for (std::size_t k = 0; k < segments_.size(); ++k) {
        const Segment& seg = segments_[k];
        const double d = duration_of(seg);
        if (!(d > 0.0) || !std::isfinite(d)) {
            fail(k, "duration must be positive");
        }
        if (const auto* s = std::get_if<segment::Sinusoid>(&seg); s && !(s->frequency >= 0.0)) {
            fail(k, "sinusoid frequency must be non-negative");
        }
        if (k > 0 && std::abs(start_value(seg) - end_value(segments_[k - 1])) > tol) {
            fail(k, "discontinuous with the previous segment");
        }
        const auto [lo, hi] = value_range(seg);
        if (lo <= 0.0 && hi >= 0.0) {
            fail(k, "speed crosses zero");
        }
        if ((lo < 0.0 ? -1.0 : 1.0) != sign_) {
            fail(k, "speed changes sign");
        }
        const double abs_lo = std::min(std::abs(lo), std::abs(hi));
        const double abs_hi = std::max(std::abs(lo), std::abs(hi));
        if (abs_lo < omega_min_ - tol || abs_hi > omega_max_ + tol) {
            fail(k, "|omega| leaves [omega_min, omega_max]");
        }
        if (max_abs_rate(seg) > max_rate_ * (1.0 + 1e-12)) {
            fail(k, "|domega/dt| exceeds the declared bound");
        }
        starts_.push_back(horizon_);
        horizon_ += d;
    }
}

SpeedSample SpeedProfile::at(double t) const {
    const double slack = 1e-12 * std::max(1.0, horizon_);
    if (!(t >= -slack) || !(t <= horizon_ + slack)) {
        throw std::out_of_range("speed profile evaluated outside [0, horizon]");
    }
    // Last segment whose start is <= t; right derivative at breakpoints.
    auto it = std::upper_bound(starts_.begin(), starts_.end(), t);
    const std::size_t k = it == starts_.begin() ? 0 : static_cast<std::size_t>(it - starts_.begin()) - 1;
    const double tau = std::clamp(t - starts_[k], 0.0, duration_of(segments_[k]));
    const SpeedSample s = evaluate(segments_[k], tau);

    const double tol = 1e-9 * omega_max_;
    if (std::abs(s.omega) < omega_min_ - tol || std::abs(s.omega) > omega_max_ + tol || s.omega * sign_ <= 0.0) {
        throw ProfileError("speed profile sample outside its declared bounds");
    }
    return s;
}

SpeedProfile SpeedProfile::scaled(double k) const {
    if (k == 0.0 || !std::isfinite(k)) {
        throw ProfileError("speed profile scale must be finite and non-zero");
    }
    std::vector<Segment> out;
    out.reserve(segments_.size());
    for (const Segment& seg : segments_) {
        out.push_back(std::visit(Overloaded{
                                     [k](segment::Hold s) -> Segment { return segment::Hold{s.value * k, s.duration}; },
                                     [k](segment::Ramp s) -> Segment {
                                         return segment::Ramp{s.start * k, s.end * k, s.duration};
                                     },
                                     [k](segment::Sinusoid s) -> Segment {
                                         return segment::Sinusoid{s.offset * k, s.amplitude * k, s.frequency,
                                                                  s.duration};
                                     },
                                 },
                                 seg));
    }
    const double a = std::abs(k);
    return SpeedProfile(std::move(out), omega_min_ * a, omega_max_ * a, max_rate_ * a);
}

}  // namespace pmsm
