#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "drcurve/error.hpp"

namespace drcurve {

/// Smoothness inputs: alpha for a -> mu and the dose-response, beta for
/// a -> pi (infinite when not given), s for the covariates, d = dim(X).
struct RateInputs {
    double alpha = 2.0;
    double beta = std::numeric_limits<double>::infinity();
    double s = 1.0;
    double d = 1.0;

    void validate() const {
        require(alpha > 0.0 && beta > 0.0 && s > 0.0 && d > 0.0, ErrorKind::InvalidArgument,
                "rate inputs must all be positive");
    }
};

/// MSE exponents r with MSE ~ n^{-r}.
struct RateExponents {
    double s = 0.0;
    double oracle = 0.0;
    double plugin = 0.0;
    double dr = 0.0;
    double hoif2 = 0.0;
    double ate_minimax = 0.0;
    /// DR rate with an isotropic (alpha = s) plug-in in the covariates and the
    /// treatment: min(oracle, 4s/(2s + d + 1)).
    double dr_isotropic = 0.0;
    /// Below s = d/4 the density-estimation terms of the quadratic estimator
    /// may dominate; no closed form is available for them.
    bool density_term_may_dominate = false;
};

inline RateExponents rate_exponents(const RateInputs& in) {
    in.validate();
    RateExponents r;
    r.s = in.s;
    const double a = in.alpha;
    const double s = in.s;
    const double d = in.d;
    r.oracle = 2.0 * a / (2.0 * a + 1.0);
    r.plugin = 2.0 * s / (2.0 * s + s / a + d);
    r.dr = std::min(r.oracle, 2.0 * r.plugin);
    r.hoif2 = std::min(r.oracle, 2.0 / (1.0 + d / (4.0 * s) + 1.0 / a));
    r.ate_minimax = std::min(1.0, 2.0 / (1.0 + d / (4.0 * s)));
    r.dr_isotropic = std::min(r.oracle, 4.0 * s / (2.0 * s + d + 1.0));
    r.density_term_may_dominate = s < d / 4.0;
    return r;
}

/// s at which the DR rate with isotropic plug-in reaches the oracle.
inline double dr_oracle_threshold(double alpha, double d) { return (d + 1.0) / (2.0 * (1.0 + 1.0 / alpha)); }

/// s at which the quadratic estimator reaches the oracle when alpha <= beta.
inline double hoif2_oracle_threshold(double d) { return d / 4.0; }

struct SGrid {
    double lo = 0.5;
    double hi = 40.0;
    double step = 0.5;

    [[nodiscard]] std::vector<double> values() const {
        require(lo > 0.0 && hi >= lo && step > 0.0, ErrorKind::InvalidArgument,
                "s grid needs 0 < lo <= hi and step > 0");
        std::vector<double> out;
        const auto count = static_cast<long>(std::floor((hi - lo) / step + 1e-9));
        for (long i = 0; i <= count; ++i) out.push_back(lo + static_cast<double>(i) * step);
        return out;
    }
};

/// Parses "lo:hi:step".
inline SGrid parse_s_grid(const std::string& text) {
    const auto c1 = text.find(':');
    const auto c2 = c1 == std::string::npos ? std::string::npos : text.find(':', c1 + 1);
    require(c2 != std::string::npos, ErrorKind::InvalidArgument, "s grid must be lo:hi:step, got '" + text + "'");
    SGrid g;
    try {
        std::size_t used = 0;
        const std::string parts[3] = {text.substr(0, c1), text.substr(c1 + 1, c2 - c1 - 1), text.substr(c2 + 1)};
        double* dst[3] = {&g.lo, &g.hi, &g.step};
        for (int i = 0; i < 3; ++i) {
            *dst[i] = std::stod(parts[i], &used);
            require(used == parts[i].size(), ErrorKind::InvalidArgument, "trailing characters in s grid");
        }
    } catch (const std::logic_error&) {
        throw Error(ErrorKind::InvalidArgument, "s grid must be lo:hi:step, got '" + text + "'");
    }
    (void)g.values();
    return g;
}

inline std::vector<RateExponents> rate_table(double alpha, double d, const SGrid& grid,
                                             double beta = std::numeric_limits<double>::infinity()) {
    std::vector<RateExponents> rows;
    for (double s : grid.values()) rows.push_back(rate_exponents({alpha, beta, s, d}));
    return rows;
}

inline void write_rate_csv(std::ostream& os, const std::vector<RateExponents>& rows) {
    os << "s,oracle,plugin,dr,hoif2,ate_minimax\n";
    os.precision(17);
    for (const auto& r : rows)
        os << r.s << ',' << r.oracle << ',' << r.plugin << ',' << r.dr << ',' << r.hoif2 << ',' << r.ate_minimax << '\n';
}

}  // namespace drcurve
