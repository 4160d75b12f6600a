#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <utility>

#include <boost/math/distributions/normal.hpp>

namespace drcurve {

inline double std_normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }

inline double std_normal_cdf(double z) { return boost::math::cdf(boost::math::normal_distribution<double>(), z); }

inline double std_normal_quantile(double p) {
    return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

/// Mills ratio Q(x) / phi(x) for x >= 0, with Q the upper normal tail.
inline double mills_ratio(double x) {
    if (x < 5.0) return 0.5 * std::erfc(x / std::numbers::sqrt2) / std_normal_pdf(x);
    // continued fraction 1 / (x + 1 / (x + 2 / (x + 3 / ...)))
    double acc = x;
    for (int k = 60; k >= 1; --k) acc = x + k / acc;
    return 1.0 / acc;
}

/// Normal(mean, sd) restricted to [lo, hi]. Stable when the mean lies far
/// outside the interval.
struct TruncatedNormal {
    double mean = 0.0;
    double sd = 1.0;
    double lo = -1.0;
    double hi = 1.0;

    /// log P(lo <= N(mean, sd^2) <= hi).
    [[nodiscard]] double log_mass() const {
        double zl = (lo - mean) / sd;
        double zh = (hi - mean) / sd;
        if (zh <= 0.0) {
            // mirror the lower tail onto the upper one
            std::swap(zl, zh);
            zl = -zl;
            zh = -zh;
        }
        if (zl < 0.0) return std::log(std_normal_cdf(zh) - std_normal_cdf(zl));
        // Q(zl) - Q(zh) = phi(zl) [M(zl) - exp(-(zh^2 - zl^2) / 2) M(zh)]
        const double ratio = std::isinf(zh) ? 0.0 : std::exp(-0.5 * (zh - zl) * (zh + zl)) * mills_ratio(zh);
        return -0.5 * zl * zl - 0.5 * std::log(2.0 * std::numbers::pi) + std::log(mills_ratio(zl) - ratio);
    }

    [[nodiscard]] double mass() const { return std::exp(log_mass()); }

    /// Density at a given a precomputed log_mass().
    [[nodiscard]] double pdf_with(double a, double log_mass_value) const {
        if (a < lo || a > hi) return 0.0;
        const double z = (a - mean) / sd;
        return std::exp(-0.5 * z * z - 0.5 * std::log(2.0 * std::numbers::pi) - std::log(sd) - log_mass_value);
    }

    [[nodiscard]] double pdf(double a) const { return pdf_with(a, log_mass()); }

    /// Inverse-CDF draw from a uniform variate u in (0, 1).
    [[nodiscard]] double from_uniform(double u) const {
        const boost::math::normal_distribution<double> n01;
        const double zl = (lo - mean) / sd;
        const double zh = (hi - mean) / sd;
        double z = 0.0;
        if (zl > 0.0) {
            // upper tail: work with survival probabilities
            const double sl = boost::math::cdf(boost::math::complement(n01, zl));
            const double sh = boost::math::cdf(boost::math::complement(n01, zh));
            const double p = std::max(sl - u * (sl - sh), 1e-300);
            z = boost::math::quantile(boost::math::complement(n01, p));
        } else {
            const double flo = std_normal_cdf(zl);
            const double fhi = std_normal_cdf(zh);
            const double p = std::clamp(flo + u * (fhi - flo), 1e-300, 1.0 - 1e-16);
            z = boost::math::quantile(n01, p);
        }
        return std::clamp(mean + sd * z, lo, hi);
    }
};

}  // namespace drcurve
