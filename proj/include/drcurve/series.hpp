#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "drcurve/basis.hpp"
#include "drcurve/error.hpp"
#include "drcurve/log.hpp"
#include "drcurve/sample.hpp"

namespace drcurve {

/// Rows b(p_i)' for each row p_i of `points`.
inline Eigen::MatrixXd basis_design(const BasisSpec& basis, const RowMatrix& points) {
    const auto n = points.rows();
    const auto k = static_cast<Eigen::Index>(basis.size());
    Eigen::MatrixXd design(n, k);
    Eigen::VectorXd tmp(k);
    for (Eigen::Index i = 0; i < n; ++i) {
        legendre_basis(basis, std::span<const double>(points.data() + i * points.cols(), static_cast<std::size_t>(points.cols())), tmp);
        design.row(i) = tmp.transpose();
    }
    return design;
}

/// (A_i, X_i) stacked as rows [a, x_1, ..., x_d].
inline RowMatrix joint_points(const Sample& s) {
    RowMatrix pts(static_cast<Eigen::Index>(s.size()), static_cast<Eigen::Index>(s.dims() + 1));
    pts.col(0) = s.a;
    if (s.dims() > 0) pts.rightCols(static_cast<Eigen::Index>(s.dims())) = s.x;
    return pts;
}

struct RidgeOptions {
    double ridge = 0.0;
    /// Ridge used when the unpenalized design is singular, relative to the
    /// mean diagonal of B'B / n.
    double fallback_ridge = 1e-6;
    double singular_floor = 1e-10;
};

/// Linear series fit f(p) = b(p)' coef.
struct SeriesFit {
    BasisSpec basis;
    Eigen::VectorXd coef;
    double ridge_used = 0.0;
    bool fallback = false;

    [[nodiscard]] double operator()(std::span<const double> point) const {
        if (basis.size() == 0) return 0.0;
        return legendre_basis(basis, point).dot(coef);
    }
};

/// Hat operator (B'B/n + lambda I)^{-1} B'/n for a design matrix, with the
/// singular-design fallback applied. Shared by every series regression on the
/// same design so that fits of different targets are the same linear map.
struct RidgeSolver {
    Eigen::LDLT<Eigen::MatrixXd> factor;
    Eigen::MatrixXd design;
    double ridge_used = 0.0;
    bool fallback = false;

    RidgeSolver(Eigen::MatrixXd design_, const RidgeOptions& opts, const std::string& what = "series regression")
        : design(std::move(design_)) {
        const auto n = static_cast<double>(design.rows());
        const auto k = design.cols();
        require(design.rows() > 0, ErrorKind::TooFewObservations, what + ": empty fold");
        Eigen::MatrixXd gram = design.transpose() * design / n;
        ridge_used = opts.ridge;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
        const double scale = std::max(gram.diagonal().mean(), 1e-300);
        if (eig.eigenvalues().minCoeff() + ridge_used < opts.singular_floor * scale) {
            fallback = true;
            ridge_used = std::max(opts.ridge, opts.fallback_ridge * scale);
            log_warning(what + ": singular design (n=" + std::to_string(design.rows()) + ", k=" + std::to_string(k) +
                        "), falling back to ridge " + std::to_string(ridge_used));
        }
        gram.diagonal().array() += ridge_used;
        factor.compute(gram);
    }

    [[nodiscard]] Eigen::VectorXd solve(const Eigen::VectorXd& target) const {
        return factor.solve(design.transpose() * target / static_cast<double>(design.rows()));
    }
};

inline SeriesFit fit_series(const BasisSpec& basis, const RowMatrix& points, const Eigen::VectorXd& target,
                            const RidgeOptions& opts = {}, const std::string& what = "series regression") {
    require(points.rows() == target.size(), ErrorKind::InvalidArgument, what + ": points and target differ in length");
    SeriesFit fit;
    fit.basis = basis;
    if (basis.size() == 0) return fit;
    const RidgeSolver solver(basis_design(basis, points), opts, what);
    fit.coef = solver.solve(target);
    fit.ridge_used = solver.ridge_used;
    fit.fallback = solver.fallback;
    return fit;
}

/// Axis-aligned box containing the treatment and covariates.
struct SampleBox {
    double a_lo = -1.0;
    double a_hi = 1.0;
    std::vector<double> x_lo;
    std::vector<double> x_hi;

    /// Smallest box containing the sample, widened by `pad` of each range.
    static SampleBox from_sample(const Sample& s, double pad = 0.0) {
        require(s.size() > 0, ErrorKind::TooFewObservations, "cannot derive a box from an empty sample");
        SampleBox box;
        auto widen = [pad](double lo, double hi) {
            double span = hi - lo;
            if (span <= 0.0) span = std::max(1.0, std::abs(lo));
            return std::pair{lo - pad * span, hi + pad * span};
        };
        std::tie(box.a_lo, box.a_hi) = widen(s.a.minCoeff(), s.a.maxCoeff());
        for (Eigen::Index j = 0; j < s.x.cols(); ++j) {
            auto [lo, hi] = widen(s.x.col(j).minCoeff(), s.x.col(j).maxCoeff());
            box.x_lo.push_back(lo);
            box.x_hi.push_back(hi);
        }
        return box;
    }

    static SampleBox unit(std::size_t dims) {
        SampleBox box;
        box.x_lo.assign(dims, -1.0);
        box.x_hi.assign(dims, 1.0);
        return box;
    }

    [[nodiscard]] BasisSpec covariate_basis(std::size_t terms) const {
        BasisSpec spec;
        for (std::size_t j = 0; j < x_lo.size(); ++j) spec.axes.push_back({terms, x_lo[j], x_hi[j]});
        return spec;
    }

    [[nodiscard]] BasisSpec joint_basis(std::size_t a_terms, std::size_t x_terms) const {
        BasisSpec spec;
        spec.axes.push_back({a_terms, a_lo, a_hi});
        for (std::size_t j = 0; j < x_lo.size(); ++j) spec.axes.push_back({x_terms, x_lo[j], x_hi[j]});
        return spec;
    }

    [[nodiscard]] BasisSpec treatment_basis(std::size_t terms) const {
        BasisSpec spec;
        spec.axes.push_back({terms, a_lo, a_hi});
        return spec;
    }
};

}  // namespace drcurve
