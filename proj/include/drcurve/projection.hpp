#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <sstream>
#include <vector>

#include <Eigen/Dense>

#include "drcurve/basis.hpp"
#include "drcurve/error.hpp"
#include "drcurve/kernels.hpp"
#include "drcurve/quadrature.hpp"
#include "drcurve/sample.hpp"

namespace drcurve {

enum class GramMode { Empirical, Quadrature, Given };

/// Joint density p(a, x) used by quadrature-mode Gram matrices.
using JointDensity = std::function<double(double, std::span<const double>)>;

struct QuadratureOptions {
    double a_lo = -1.0;
    double a_hi = 1.0;
    std::size_t a_panels = 32;
    std::size_t x_panels = 8;
    std::size_t order = 16;
};

/// Orthogonal projection kernel Pi(x, y) = b(x)' Omega^{-1} b(y) onto the span
/// of a k-term basis in L2(g), g(x) = int K_ht(a) p(a, x) da. Immutable once
/// built; Omega is stored together with its inverse and its symmetric inverse
/// square root, so Pi(x, y) is also the inner product of whitened basis vectors.
class ProjectionKernel {
public:
    static constexpr double kDefaultFloor = 1e-10;

    ProjectionKernel(BasisSpec basis, Eigen::MatrixXd omega, GramMode mode, double floor = kDefaultFloor,
                     const std::string& context = {})
        : basis_(std::move(basis)), omega_(std::move(omega)), mode_(mode) {
        const auto k = static_cast<Eigen::Index>(basis_.size());
        require(omega_.rows() == k && omega_.cols() == k, ErrorKind::InvalidArgument, "Gram matrix has wrong size");
        if (k == 0) return;
        omega_ = 0.5 * (omega_ + omega_.transpose()).eval();
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(omega_);
        min_eigenvalue_ = eig.eigenvalues().minCoeff();
        if (!(min_eigenvalue_ > floor)) {
            std::ostringstream msg;
            msg << "Gram matrix min eigenvalue " << min_eigenvalue_ << " below floor " << floor << " (k=" << k
                << (context.empty() ? "" : ", ") << context << ")";
            throw Error(ErrorKind::IllConditionedGram, msg.str());
        }
        const Eigen::VectorXd inv_sqrt = eig.eigenvalues().cwiseSqrt().cwiseInverse();
        whitener_ = eig.eigenvectors() * inv_sqrt.asDiagonal() * eig.eigenvectors().transpose();
        omega_inv_ = whitener_ * whitener_;
    }

    [[nodiscard]] const BasisSpec& basis() const noexcept { return basis_; }
    [[nodiscard]] const Eigen::MatrixXd& omega() const noexcept { return omega_; }
    [[nodiscard]] const Eigen::MatrixXd& omega_inverse() const noexcept { return omega_inv_; }
    [[nodiscard]] const Eigen::MatrixXd& whitener() const noexcept { return whitener_; }
    [[nodiscard]] GramMode mode() const noexcept { return mode_; }
    [[nodiscard]] std::size_t size() const noexcept { return basis_.size(); }
    [[nodiscard]] double min_eigenvalue() const noexcept { return min_eigenvalue_; }

    [[nodiscard]] Eigen::VectorXd b(std::span<const double> x) const { return legendre_basis(basis_, x); }

    /// Omega^{-1/2} b(x).
    [[nodiscard]] Eigen::VectorXd whiten(std::span<const double> x) const {
        if (size() == 0) return {};
        return whitener_ * b(x);
    }

    [[nodiscard]] double operator()(std::span<const double> xi, std::span<const double> xj) const {
        if (size() == 0) return 0.0;
        const Eigen::VectorXd bi = b(xi);
        const Eigen::VectorXd bj = b(xj);
        return bi.dot(omega_inv_ * bj);
    }

    [[nodiscard]] double operator()(double xi, double xj) const {
        return (*this)(std::span<const double>(&xi, 1), std::span<const double>(&xj, 1));
    }

    /// Rows are Omega^{-1/2} b(x_i) for each row of `x`.
    [[nodiscard]] Eigen::MatrixXd whitened_rows(const RowMatrix& x) const {
        const auto n = x.rows();
        const auto k = static_cast<Eigen::Index>(size());
        Eigen::MatrixXd raw(n, k);
        Eigen::VectorXd tmp(k);
        for (Eigen::Index i = 0; i < n; ++i) {
            legendre_basis(basis_, std::span<const double>(x.data() + i * x.cols(), static_cast<std::size_t>(x.cols())), tmp);
            raw.row(i) = tmp.transpose();
        }
        if (k == 0) return raw;
        return raw * whitener_;  // whitener is symmetric
    }

private:
    BasisSpec basis_;
    Eigen::MatrixXd omega_;
    Eigen::MatrixXd omega_inv_;
    Eigen::MatrixXd whitener_;
    GramMode mode_;
    double min_eigenvalue_ = 0.0;
};

inline ProjectionKernel projection_with_gram(BasisSpec basis, Eigen::MatrixXd omega,
                                             double floor = ProjectionKernel::kDefaultFloor) {
    return {std::move(basis), std::move(omega), GramMode::Given, floor};
}

/// Omega-hat = n^{-1} sum_i b(X_i) b(X_i)' K_ht(A_i).
inline ProjectionKernel build_projection_empirical(const Sample& sample, const BasisSpec& basis,
                                                   const KernelSpec& kernel, double h, double t,
                                                   double floor = ProjectionKernel::kDefaultFloor) {
    basis.validate();
    const LocalKernel kht(kernel, h, t);
    const auto n = static_cast<Eigen::Index>(sample.size());
    const auto k = static_cast<Eigen::Index>(basis.size());
    std::ostringstream context;
    context << "n=" << n << ", h=" << h;
    if (k > n) {
        throw Error(ErrorKind::IllConditionedGram, "basis size k=" + std::to_string(k) + " exceeds n=" +
                                                       std::to_string(n) + " (h=" + std::to_string(h) + ")");
    }
    Eigen::MatrixXd weighted(n, k);
    Eigen::MatrixXd raw(n, k);
    Eigen::VectorXd tmp(k);
    for (Eigen::Index i = 0; i < n; ++i) {
        legendre_basis(basis, sample.x_row(static_cast<std::size_t>(i)), tmp);
        raw.row(i) = tmp.transpose();
        weighted.row(i) = kht(sample.a(i)) * tmp.transpose();
    }
    Eigen::MatrixXd omega = raw.transpose() * weighted / static_cast<double>(n);
    return {basis, std::move(omega), GramMode::Empirical, floor, context.str()};
}

/// Tensor Gauss–Legendre rule over the basis box (one axis per coordinate).
struct BoxRule {
    std::vector<std::vector<double>> points;
    std::vector<double> weights;
};

inline BoxRule box_rule(const BasisSpec& basis, std::size_t panels, std::size_t order) {
    BoxRule rule;
    rule.points.emplace_back();
    rule.weights.push_back(1.0);
    for (const auto& axis : basis.axes) {
        const quad::Rule r = quad::composite(axis.lo, axis.hi, panels, order);
        BoxRule next;
        for (std::size_t p = 0; p < rule.points.size(); ++p) {
            for (std::size_t i = 0; i < r.size(); ++i) {
                auto pt = rule.points[p];
                pt.push_back(r.nodes[i]);
                next.points.push_back(std::move(pt));
                next.weights.push_back(rule.weights[p] * r.weights[i]);
            }
        }
        rule = std::move(next);
    }
    return rule;
}

/// g(x) = int K_ht(a) p(a, x) da by composite Gauss–Legendre over [a_lo, a_hi].
inline double kernel_weight_g(const JointDensity& density, const LocalKernel& kht, std::span<const double> x,
                              const QuadratureOptions& opts) {
    double lo = opts.a_lo;
    double hi = opts.a_hi;
    // compact kernels have kinks at t +- h; integrating over the support keeps them on panel edges
    if (kht.spec().compact()) {
        lo = std::max(lo, kht.center() - kht.bandwidth());
        hi = std::min(hi, kht.center() + kht.bandwidth());
        if (!(hi > lo)) return 0.0;
    }
    const quad::Rule ra = quad::composite(lo, hi, opts.a_panels, opts.order);
    return ra.integrate([&](double a) { return kht(a) * density(a, x); });
}

/// Omega = int b(x) b(x)' g(x) dx with g(x) = int K_ht(a) p(a, x) da for a
/// supplied joint density p(a, x).
inline ProjectionKernel build_projection_quadrature(const BasisSpec& basis, const KernelSpec& kernel, double h,
                                                    double t, const JointDensity& density,
                                                    const QuadratureOptions& opts = {},
                                                    double floor = ProjectionKernel::kDefaultFloor) {
    basis.validate();
    const LocalKernel kht(kernel, h, t);
    const auto k = static_cast<Eigen::Index>(basis.size());
    Eigen::MatrixXd omega = Eigen::MatrixXd::Zero(k, k);
    if (k > 0) {
        const BoxRule rule = box_rule(basis, opts.x_panels, opts.order);
        Eigen::VectorXd bx(k);
        for (std::size_t p = 0; p < rule.points.size(); ++p) {
            const std::span<const double> x(rule.points[p]);
            legendre_basis(basis, x, bx);
            omega.noalias() += rule.weights[p] * kernel_weight_g(density, kht, x, opts) * bx * bx.transpose();
        }
    }
    std::ostringstream context;
    context << "quadrature, h=" << h;
    return {basis, std::move(omega), GramMode::Quadrature, floor, context.str()};
}

/// max over probe points of Pi(x, x) / k; bounded bases keep this O(1).
inline double max_diagonal_ratio(const ProjectionKernel& proj, const std::vector<std::vector<double>>& probes) {
    if (proj.size() == 0) return 0.0;
    double worst = 0.0;
    for (const auto& x : probes) worst = std::max(worst, proj(x, x) / static_cast<double>(proj.size()));
    return worst;
}

}  // namespace drcurve
