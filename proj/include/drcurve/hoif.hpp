#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "drcurve/basis.hpp"
#include "drcurve/error.hpp"
#include "drcurve/kernels.hpp"
#include "drcurve/nuisance.hpp"
#include "drcurve/projection.hpp"
#include "drcurve/sample.hpp"
#include "drcurve/u_statistic.hpp"

namespace drcurve {

struct HoifConfig {
    double t = 0.0;
    double h = 0.2;
    std::size_t k = 11;  ///< basis terms per covariate axis
    int order = 2;
    KernelSpec kernel = KernelSpec::gaussian();
    UMode mode = UMode::MatrixChain;
    double gram_floor = ProjectionKernel::kDefaultFloor;

    void validate() const {
        require(order >= 1 && order <= 4, ErrorKind::InvalidArgument,
                "HOIF order must be in 1..4, got " + std::to_string(order));
        require(h > 0.0, ErrorKind::InvalidBandwidth, "bandwidth must be positive");
    }
};

/// Per-observation building blocks of the estimator at a point t.
struct HoifParts {
    Eigen::VectorXd f0;  ///< K(A){Y - mu(t,X)}/pi(t|X) + mu(t,X)
    Eigen::VectorXd f1;  ///< K(A){Y - mu(A,X)}
    Eigen::VectorXd f2;  ///< K(A)/pi(A|X) - 1
    Eigen::VectorXd kernel;
    RowMatrix x;

    [[nodiscard]] std::size_t size() const noexcept { return static_cast<std::size_t>(f0.size()); }
};

inline HoifParts compute_parts(const Sample& fold, const NuisanceFit& nuis, const HoifConfig& cfg) {
    cfg.validate();
    const LocalKernel kht(cfg.kernel, cfg.h, cfg.t);
    const auto n = static_cast<Eigen::Index>(fold.size());
    HoifParts p;
    p.f0.resize(n);
    p.f1.resize(n);
    p.f2.resize(n);
    p.kernel.resize(n);
    p.x = fold.x;
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto x = fold.x_row(static_cast<std::size_t>(i));
        const double a = fold.a(i);
        const double k = kht(a);
        const double mu_t = nuis.mu(cfg.t, x);
        p.kernel(i) = k;
        p.f0(i) = k * (fold.y(i) - mu_t) / nuis.pi_checked(cfg.t, x) + mu_t;
        p.f1(i) = k * (fold.y(i) - nuis.mu(a, x));
        p.f2(i) = k / nuis.pi_checked(a, x) - 1.0;
        require(std::isfinite(p.f0(i)) && std::isfinite(p.f1(i)) && std::isfinite(p.f2(i)),
                ErrorKind::InvalidArgument, "non-finite influence-function part");
    }
    return p;
}

inline ChainData chain_data(const HoifParts& parts, const ProjectionKernel& proj) {
    return {parts.f1, parts.kernel, parts.f2, proj.whitened_rows(parts.x)};
}

/// Direct evaluators of the correction kernels on an ordered tuple of distinct
/// indices, with Pi taken from the projection kernel.
class CorrectionKernels {
public:
    CorrectionKernels(const HoifParts& parts, const ProjectionKernel& proj) : parts_(parts) {
        const auto n = static_cast<Eigen::Index>(parts.size());
        const auto k = static_cast<Eigen::Index>(proj.size());
        pi_ = Eigen::MatrixXd::Zero(n, n);
        if (k == 0) return;
        Eigen::MatrixXd raw(n, k);
        for (Eigen::Index i = 0; i < n; ++i)
            raw.row(i) = proj.b({parts.x.data() + i * parts.x.cols(), static_cast<std::size_t>(parts.x.cols())}).transpose();
        pi_ = raw * proj.omega_inverse() * raw.transpose();
    }

    [[nodiscard]] double pi(std::size_t i, std::size_t j) const {
        return pi_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }

    [[nodiscard]] double operator()(std::span<const std::size_t> idx) const {
        for (std::size_t a = 0; a < idx.size(); ++a)
            for (std::size_t b = a + 1; b < idx.size(); ++b)
                require(idx[a] != idx[b], ErrorKind::InvalidTuple, "correction kernel needs distinct indices");
        const auto f1 = [&](std::size_t i) { return parts_.f1(static_cast<Eigen::Index>(i)); };
        const auto f2 = [&](std::size_t i) { return parts_.f2(static_cast<Eigen::Index>(i)); };
        const auto kk = [&](std::size_t i) { return parts_.kernel(static_cast<Eigen::Index>(i)); };
        switch (idx.size()) {
            case 2: return -f1(idx[0]) * pi(idx[0], idx[1]) * f2(idx[1]);
            case 3: {
                const auto [i1, i2, i3] = std::array{idx[0], idx[1], idx[2]};
                return f1(i1) * pi(i1, i2) * kk(i2) * pi(i2, i3) * f2(i3) - f1(i1) * pi(i1, i3) * f2(i3);
            }
            case 4: {
                const auto [i1, i2, i3, i4] = std::array{idx[0], idx[1], idx[2], idx[3]};
                const double c4 = f1(i1) * pi(i1, i2) * kk(i2) * pi(i2, i3) * kk(i3) * pi(i3, i4) * f2(i4);
                return -c4 + f1(i1) * pi(i1, i2) * kk(i2) * pi(i2, i4) * f2(i4) +
                       f1(i1) * pi(i1, i3) * kk(i3) * pi(i3, i4) * f2(i4) - f1(i1) * pi(i1, i4) * f2(i4);
            }
            default: throw Error(ErrorKind::InvalidArgument, "correction kernels exist for orders 2..4 only");
        }
    }

private:
    const HoifParts& parts_;
    Eigen::MatrixXd pi_;
};

inline double correction_term(const HoifParts& parts, const ProjectionKernel& proj, int j, UMode mode) {
    if (mode == UMode::Naive) {
        const CorrectionKernels kern(parts, proj);
        return u_statistic_naive([&](std::span<const std::size_t> idx) { return kern(idx); },
                                 static_cast<std::size_t>(j), parts.size());
    }
    return correction_u_statistic(chain_data(parts, proj), j);
}

struct HoifResult {
    double estimate = 0.0;
    double first_order = 0.0;
    std::vector<double> corrections;  ///< U_n phi_j for j = 2..m
};

/// Covariate basis used for Pi: `terms` per axis over the covariate box.
inline BasisSpec hoif_basis(const SampleBox& box, std::size_t terms) {
    BasisSpec b = box.covariate_basis(terms);
    b.policy = DomainPolicy::Clip;
    return b;
}

/// theta-hat(t) = P_n f0 + sum_{j=2}^m U_n phi_j on an estimation fold, with
/// Omega-hat = P_n{b(X) b(X)' K_ht(A)} from the same fold unless a projection
/// kernel is supplied.
inline HoifResult hoif_estimate(const Sample& fold, const NuisanceFit& nuis, const HoifConfig& cfg,
                                const BasisSpec& basis, const std::optional<ProjectionKernel>& given = std::nullopt) {
    const HoifParts parts = compute_parts(fold, nuis, cfg);
    HoifResult r;
    r.first_order = parts.f0.mean();
    r.estimate = r.first_order;
    if (cfg.order < 2) return r;
    const ProjectionKernel proj =
        given ? *given : build_projection_empirical(fold, basis, cfg.kernel, cfg.h, cfg.t, cfg.gram_floor);
    for (int j = 2; j <= cfg.order; ++j) {
        r.corrections.push_back(correction_term(parts, proj, j, cfg.mode));
        r.estimate += r.corrections.back();
    }
    return r;
}

inline HoifResult hoif_estimate(const Sample& fold, const NuisanceFit& nuis, const HoifConfig& cfg) {
    return hoif_estimate(fold, nuis, cfg, hoif_basis(SampleBox::from_sample(fold), cfg.k));
}

}  // namespace drcurve
