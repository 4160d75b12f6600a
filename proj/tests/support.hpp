#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "drcurve/log.hpp"
#include "drcurve/sample.hpp"

namespace testing_support {

/// Collects library warnings for the lifetime of the object.
class LogCapture {
public:
    LogCapture() {
        drcurve::set_log_sink([this](const std::string& m) { messages.push_back(m); });
    }
    ~LogCapture() { drcurve::set_log_sink({}); }
    LogCapture(const LogCapture&) = delete;
    LogCapture& operator=(const LogCapture&) = delete;

    [[nodiscard]] bool contains(const std::string& needle) const {
        for (const auto& m : messages)
            if (m.find(needle) != std::string::npos) return true;
        return false;
    }

    std::vector<std::string> messages;
};

/// Ordinary least-squares slope of log(y) on log(x).
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    double mx = 0, my = 0;
    const auto n = static_cast<double>(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += std::log(x[i]) / n;
        my += std::log(y[i]) / n;
    }
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (std::log(x[i]) - mx) * (std::log(y[i]) - my);
        sxx += (std::log(x[i]) - mx) * (std::log(x[i]) - mx);
    }
    return sxy / sxx;
}

/// Sample with A and X independent uniforms on [-1, 1] and Y = f(A, X).
template <class F>
drcurve::Sample uniform_sample(std::size_t n, std::uint64_t seed, F f) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const auto m = static_cast<Eigen::Index>(n);
    Eigen::VectorXd y(m), a(m);
    drcurve::RowMatrix x(m, 1);
    for (Eigen::Index i = 0; i < m; ++i) {
        a(i) = u(rng);
        x(i, 0) = u(rng);
        y(i) = f(a(i), x(i, 0));
    }
    return {y, a, x};
}

}  // namespace testing_support
