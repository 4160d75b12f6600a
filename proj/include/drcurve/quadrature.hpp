#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <vector>

#include "drcurve/error.hpp"

namespace drcurve::quad {

/// Nodes and weights of a one-dimensional quadrature rule.
struct Rule {
    std::vector<double> nodes;
    std::vector<double> weights;

    [[nodiscard]] std::size_t size() const noexcept { return nodes.size(); }

    template <class F>
    [[nodiscard]] double integrate(F&& f) const {
        double acc = 0.0;
        for (std::size_t i = 0; i < nodes.size(); ++i) acc += weights[i] * f(nodes[i]);
        return acc;
    }
};

/// Gauss–Legendre rule with `order` points on [-1, 1]. Roots are found by
/// Newton iteration on the three-term recurrence, started from the
/// Tricomi approximation.
inline Rule gauss_legendre(std::size_t order) {
    require(order >= 1, ErrorKind::InvalidArgument, "quadrature order must be positive");
    if (order == 1) return Rule{{0.0}, {2.0}};
    Rule rule;
    rule.nodes.resize(order);
    rule.weights.resize(order);
    const auto n = static_cast<double>(order);
    for (std::size_t i = 0; i < (order + 1) / 2; ++i) {
        double x = std::cos(std::numbers::pi * (static_cast<double>(i) + 0.75) / (n + 0.5));
        double dp = 1.0;
        for (int iter = 0; iter < 100; ++iter) {
            double p0 = 1.0;
            double p1 = x;
            for (std::size_t k = 2; k <= order; ++k) {
                const auto kd = static_cast<double>(k);
                const double p2 = ((2.0 * kd - 1.0) * x * p1 - (kd - 1.0) * p0) / kd;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) break;
        }
        const double w = 2.0 / ((1.0 - x * x) * dp * dp);
        rule.nodes[i] = -x;
        rule.nodes[order - 1 - i] = x;
        rule.weights[i] = w;
        rule.weights[order - 1 - i] = w;
    }
    return rule;
}

/// Composite Gauss–Legendre rule on [lo, hi] split into equal panels.
inline Rule composite(double lo, double hi, std::size_t panels, std::size_t order) {
    require(hi > lo, ErrorKind::InvalidArgument, "quadrature interval must have positive length");
    require(panels >= 1, ErrorKind::InvalidArgument, "need at least one panel");
    const Rule base = gauss_legendre(order);
    Rule rule;
    rule.nodes.reserve(panels * order);
    rule.weights.reserve(panels * order);
    const double width = (hi - lo) / static_cast<double>(panels);
    for (std::size_t p = 0; p < panels; ++p) {
        const double left = lo + width * static_cast<double>(p);
        const double mid = left + 0.5 * width;
        for (std::size_t i = 0; i < order; ++i) {
            rule.nodes.push_back(mid + 0.5 * width * base.nodes[i]);
            rule.weights.push_back(0.5 * width * base.weights[i]);
        }
    }
    return rule;
}

template <class F>
double integrate(F&& f, double lo, double hi, std::size_t panels = 16, std::size_t order = 20) {
    return composite(lo, hi, panels, order).integrate(std::forward<F>(f));
}

}  // namespace drcurve::quad
