#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "drcurve/error.hpp"

namespace drcurve {

enum class KernelFamily { Gaussian, Epanechnikov, LegendreHigherOrder };

inline KernelFamily parse_kernel_family(std::string_view name) {
    if (name == "gaussian") return KernelFamily::Gaussian;
    if (name == "epanechnikov") return KernelFamily::Epanechnikov;
    if (name == "legendre" || name == "legendre-higher-order") return KernelFamily::LegendreHigherOrder;
    throw Error(ErrorKind::InvalidArgument, "unknown kernel family '" + std::string(name) + "'");
}

/// A symmetric smoothing kernel of order l: integrates to one and its
/// moments 1..l-1 vanish.
///
/// Orders above two are obtained by multiplying the base density K0 by the
/// polynomial c(u) = sum_j c_j u^j of degree l-1 whose coefficients solve the
/// moment system M c = e_1, M_ij = int u^{i+j} K0(u) du. Equivalently
/// K(u) = K0(u) sum_{m<l} q_m(0) q_m(u) with q_m orthonormal under K0; for the
/// Legendre family K0 is the uniform density on [-1, 1] and the q_m are the
/// normalized Legendre polynomials. Such kernels take negative values.
struct KernelSpec {
    KernelFamily family = KernelFamily::Gaussian;
    int order = 2;
    std::vector<double> coefficients{1.0};

    static KernelSpec make(KernelFamily family, int order = 2) {
        require(order >= 1, ErrorKind::InvalidArgument, "kernel order must be a positive integer");
        KernelSpec spec;
        spec.family = family;
        spec.order = order;
        const int dim = order;
        Eigen::MatrixXd moments(dim, dim);
        for (int i = 0; i < dim; ++i)
            for (int j = 0; j < dim; ++j) moments(i, j) = base_moment(family, i + j);
        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(dim);
        rhs(0) = 1.0;
        const Eigen::VectorXd c = moments.ldlt().solve(rhs);
        spec.coefficients.assign(c.data(), c.data() + c.size());
        return spec;
    }

    static KernelSpec gaussian() { return make(KernelFamily::Gaussian, 2); }
    static KernelSpec epanechnikov() { return make(KernelFamily::Epanechnikov, 2); }
    static KernelSpec legendre(int order) { return make(KernelFamily::LegendreHigherOrder, order); }

    [[nodiscard]] bool compact() const noexcept { return family != KernelFamily::Gaussian; }

    /// int u^r K0(u) du for the base density of each family.
    static double base_moment(KernelFamily family, int r) {
        if (r % 2 == 1) return 0.0;
        const double rr = r;
        switch (family) {
        case KernelFamily::Gaussian: {
            double m = 1.0;
            for (int k = r - 1; k > 0; k -= 2) m *= k;
            return m;
        }
        case KernelFamily::Epanechnikov: return 3.0 / ((rr + 1.0) * (rr + 3.0));
        case KernelFamily::LegendreHigherOrder: return 1.0 / (rr + 1.0);
        }
        return 0.0;
    }
};

/// Order used for the HOIF kernel when a <-> mu and a <-> pi have smoothness
/// alpha and beta: floor(min(alpha, beta)), at least 1.
inline int default_kernel_order(double alpha, double beta) {
    return std::max(1, static_cast<int>(std::floor(std::min(alpha, beta))));
}

inline double base_kernel(KernelFamily family, double u) {
    switch (family) {
    case KernelFamily::Gaussian: return std::exp(-0.5 * u * u) / std::sqrt(2.0 * std::numbers::pi);
    case KernelFamily::Epanechnikov: return std::abs(u) <= 1.0 ? 0.75 * (1.0 - u * u) : 0.0;
    case KernelFamily::LegendreHigherOrder: return std::abs(u) <= 1.0 ? 0.5 : 0.0;
    }
    return 0.0;
}

inline double kernel_eval(const KernelSpec& spec, double u) {
    const double base = base_kernel(spec.family, u);
    if (base == 0.0) return 0.0;
    double poly = 0.0;
    for (auto it = spec.coefficients.rbegin(); it != spec.coefficients.rend(); ++it) poly = poly * u + *it;
    return base * poly;
}

/// K_ht(a) = K((a - t) / h) / h.
inline double localized_kernel(const KernelSpec& spec, double h, double t, double a) {
    if (!(h > 0.0)) throw Error(ErrorKind::InvalidBandwidth, "bandwidth must be positive, got " + std::to_string(h));
    return kernel_eval(spec, (a - t) / h) / h;
}

/// Kernel localized at t with bandwidth h, validated once at construction.
class LocalKernel {
public:
    LocalKernel(KernelSpec spec, double h, double t) : spec_(std::move(spec)), h_(h), t_(t) {
        if (!(h > 0.0)) throw Error(ErrorKind::InvalidBandwidth, "bandwidth must be positive, got " + std::to_string(h));
    }

    double operator()(double a) const { return kernel_eval(spec_, (a - t_) / h_) / h_; }

    [[nodiscard]] const KernelSpec& spec() const noexcept { return spec_; }
    [[nodiscard]] double bandwidth() const noexcept { return h_; }
    [[nodiscard]] double center() const noexcept { return t_; }

private:
    KernelSpec spec_;
    double h_;
    double t_;
};

}  // namespace drcurve
