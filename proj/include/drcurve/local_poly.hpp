#pragma once

#include <cmath>
#include <cstddef>
#include <string>

#include <Eigen/Dense>

#include "drcurve/error.hpp"
#include "drcurve/kernels.hpp"

namespace drcurve {

inline constexpr double kDesignFloor = 1e-10;

/// Local polynomial smoother weights W_i(t; A^n) = s(t)' Q^{-1} K_ht(A_i) s(A_i)
/// with s(a) = [1, (a-t)/h, ..., ((a-t)/h)^p] and Q = P_n{K_ht(A) s(A) s(A)'}.
/// The estimate at t is n^{-1} sum_i W_i phi_i, and the weights reproduce
/// polynomials of degree <= p: n^{-1} sum_i W_i ((A_i - t)/h)^q = 1{q = 0}.
inline Eigen::VectorXd local_poly_weights(double t, const Eigen::VectorXd& treatments, double h, int p,
                                          const KernelSpec& kernel) {
    require(p >= 0, ErrorKind::InvalidArgument, "polynomial order must be non-negative");
    const LocalKernel kht(kernel, h, t);
    const Eigen::Index n = treatments.size();
    const Eigen::Index dim = p + 1;

    Eigen::VectorXd kvals(n);
    Eigen::MatrixXd design(n, dim);
    Eigen::Index support = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        kvals(i) = kht(treatments(i));
        if (kvals(i) > 0.0) ++support;
        const double u = (treatments(i) - t) / h;
        double power = 1.0;
        for (Eigen::Index q = 0; q < dim; ++q) {
            design(i, q) = power;
            power *= u;
        }
    }
    if (support < dim)
        throw Error(ErrorKind::DegenerateDesign, std::to_string(support) + " points with positive kernel weight at t=" +
                                                     std::to_string(t) + ", need at least " + std::to_string(dim));

    const Eigen::MatrixXd gram = design.transpose() * kvals.asDiagonal() * design / static_cast<double>(n);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
    if (eig.eigenvalues().minCoeff() < kDesignFloor)
        throw Error(ErrorKind::DegenerateDesign, "local polynomial design singular at t=" + std::to_string(t) +
                                                     " (min eigenvalue " + std::to_string(eig.eigenvalues().minCoeff()) +
                                                     ")");
    // s(t) = e_1, so only the first row of Q^{-1} is needed.
    Eigen::VectorXd e1 = Eigen::VectorXd::Zero(dim);
    e1(0) = 1.0;
    const Eigen::VectorXd row = gram.ldlt().solve(e1);
    return (design * row).cwiseProduct(kvals);
}

/// n^{-1} sum_i W_i(t) values_i.
inline double local_poly_smooth(double t, const Eigen::VectorXd& treatments, const Eigen::VectorXd& values, double h,
                                int p, const KernelSpec& kernel) {
    require(treatments.size() == values.size(), ErrorKind::InvalidArgument, "treatments and values differ in length");
    const Eigen::VectorXd w = local_poly_weights(t, treatments, h, p, kernel);
    return w.dot(values) / static_cast<double>(values.size());
}

}  // namespace drcurve
