#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "drcurve/error.hpp"

namespace drcurve {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// n observations of (Y, A, X) with X stored row-major so that each
/// covariate vector is a contiguous span.
struct Sample {
    Eigen::VectorXd y;
    Eigen::VectorXd a;
    RowMatrix x;

    Sample() = default;
    Sample(Eigen::VectorXd y_, Eigen::VectorXd a_, RowMatrix x_) : y(std::move(y_)), a(std::move(a_)), x(std::move(x_)) {
        require(y.size() == a.size() && a.size() == x.rows(), ErrorKind::InvalidArgument,
                "sample columns have different lengths");
    }

    [[nodiscard]] std::size_t size() const noexcept { return static_cast<std::size_t>(y.size()); }
    [[nodiscard]] std::size_t dims() const noexcept { return static_cast<std::size_t>(x.cols()); }

    [[nodiscard]] std::span<const double> x_row(std::size_t i) const {
        return {x.data() + static_cast<Eigen::Index>(i) * x.cols(), static_cast<std::size_t>(x.cols())};
    }

    [[nodiscard]] Sample subset(std::span<const std::size_t> rows) const {
        Sample out;
        const auto m = static_cast<Eigen::Index>(rows.size());
        out.y.resize(m);
        out.a.resize(m);
        out.x.resize(m, x.cols());
        for (Eigen::Index r = 0; r < m; ++r) {
            const auto src = static_cast<Eigen::Index>(rows[static_cast<std::size_t>(r)]);
            require(src < y.size(), ErrorKind::InvalidArgument, "subset index out of range");
            out.y(r) = y(src);
            out.a(r) = a(src);
            out.x.row(r) = x.row(src);
        }
        return out;
    }
};

}  // namespace drcurve
