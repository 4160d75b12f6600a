#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "drcurve/error.hpp"

namespace drcurve {

/// Fills out[0..k) with sqrt(2j+1) P_j(x), the Legendre polynomials normalized
/// to unit second moment under Uniform(-1, 1).
inline void normalized_legendre(double x, std::span<double> out) {
    const std::size_t k = out.size();
    if (k == 0) return;
    double p0 = 1.0;
    out[0] = 1.0;
    if (k == 1) return;
    double p1 = x;
    out[1] = std::sqrt(3.0) * x;
    for (std::size_t j = 2; j < k; ++j) {
        const auto jd = static_cast<double>(j);
        const double p2 = ((2.0 * jd - 1.0) * x * p1 - (jd - 1.0) * p0) / jd;
        out[j] = std::sqrt(2.0 * jd + 1.0) * p2;
        p0 = p1;
        p1 = p2;
    }
}

inline Eigen::VectorXd normalized_legendre(double x, std::size_t k) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(k));
    normalized_legendre(x, std::span<double>(out.data(), k));
    return out;
}

enum class DomainPolicy { Error, Clip };

/// Tensor-product Legendre basis on a box. Each coordinate is affinely mapped
/// to [-1, 1]; the resulting functions are orthonormal under the uniform
/// distribution on the box and the first one is the constant 1.
struct BasisSpec {
    struct Axis {
        std::size_t terms = 1;
        double lo = -1.0;
        double hi = 1.0;
    };

    std::vector<Axis> axes;
    DomainPolicy policy = DomainPolicy::Error;
    double tolerance = 1e-12;

    static BasisSpec uniform(std::size_t dims, std::size_t terms_per_axis, double lo = -1.0, double hi = 1.0) {
        BasisSpec spec;
        spec.axes.assign(dims, Axis{terms_per_axis, lo, hi});
        return spec;
    }

    [[nodiscard]] std::size_t dims() const noexcept { return axes.size(); }

    [[nodiscard]] std::size_t size() const noexcept {
        if (axes.empty()) return 0;
        std::size_t k = 1;
        for (const auto& axis : axes) k *= axis.terms;
        return k;
    }

    void validate() const {
        for (const auto& axis : axes)
            require(axis.hi > axis.lo, ErrorKind::InvalidArgument, "basis axis must have hi > lo");
    }
};

/// b(x) for a point inside the declared box.
inline void legendre_basis(const BasisSpec& spec, std::span<const double> x, Eigen::Ref<Eigen::VectorXd> out) {
    const std::size_t k = spec.size();
    require(x.size() == spec.dims(), ErrorKind::InvalidArgument,
            "point has " + std::to_string(x.size()) + " coordinates, basis expects " + std::to_string(spec.dims()));
    require(static_cast<std::size_t>(out.size()) == k, ErrorKind::InvalidArgument, "output has wrong length");
    if (k == 0) return;

    thread_local std::vector<double> scratch;
    std::size_t total_terms = 0;
    for (const auto& axis : spec.axes) total_terms += axis.terms;
    scratch.resize(total_terms);

    std::size_t offset = 0;
    for (std::size_t d = 0; d < spec.dims(); ++d) {
        const auto& axis = spec.axes[d];
        double u = (2.0 * x[d] - axis.lo - axis.hi) / (axis.hi - axis.lo);
        if (std::abs(u) > 1.0 + spec.tolerance) {
            if (spec.policy == DomainPolicy::Error)
                throw Error(ErrorKind::OutOfDomain, "coordinate " + std::to_string(d) + " = " + std::to_string(x[d]) +
                                                        " outside [" + std::to_string(axis.lo) + ", " +
                                                        std::to_string(axis.hi) + "]");
        }
        u = std::clamp(u, -1.0, 1.0);
        normalized_legendre(u, std::span<double>(scratch.data() + offset, axis.terms));
        offset += axis.terms;
    }

    // Lexicographic layout, last axis fastest.
    for (std::size_t flat = 0; flat < k; ++flat) {
        std::size_t rem = flat;
        double value = 1.0;
        std::size_t axis_offset = total_terms;
        for (std::size_t d = spec.dims(); d-- > 0;) {
            const std::size_t terms = spec.axes[d].terms;
            axis_offset -= terms;
            value *= scratch[axis_offset + rem % terms];
            rem /= terms;
        }
        out(static_cast<Eigen::Index>(flat)) = value;
    }
}

inline Eigen::VectorXd legendre_basis(const BasisSpec& spec, std::span<const double> x) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(spec.size()));
    legendre_basis(spec, x, out);
    return out;
}

inline Eigen::VectorXd legendre_basis(const BasisSpec& spec, double x) {
    return legendre_basis(spec, std::span<const double>(&x, 1));
}

}  // namespace drcurve
