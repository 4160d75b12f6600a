#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "drcurve/basis.hpp"
#include "drcurve/dgp.hpp"
#include "drcurve/error.hpp"
#include "drcurve/kernels.hpp"
#include "drcurve/local_poly.hpp"
#include "drcurve/nuisance.hpp"
#include "drcurve/quadrature.hpp"
#include "drcurve/sample.hpp"
#include "drcurve/series.hpp"

namespace drcurve {

struct ThreeWaySplit {
    std::array<std::vector<std::size_t>, 3> folds;
    std::uint64_t seed = 0;

    /// Folds assigned to the (nuisance, m-hat, estimation) roles in rotation r.
    [[nodiscard]] std::array<const std::vector<std::size_t>*, 3> roles(int rotation) const {
        return {&folds[static_cast<std::size_t>(rotation % 3)], &folds[static_cast<std::size_t>((rotation + 1) % 3)],
                &folds[static_cast<std::size_t>((rotation + 2) % 3)]};
    }
};

/// Uniformly random partition of 0..N-1 into three folds whose sizes differ by
/// at most one, the first folds taking the remainder.
inline ThreeWaySplit split(std::size_t n, std::uint64_t seed) {
    require(n >= 3, ErrorKind::TooFewObservations, "three-way split needs N >= 3, got " + std::to_string(n));
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    ThreeWaySplit s;
    s.seed = seed;
    std::size_t pos = 0;
    for (std::size_t f = 0; f < 3; ++f) {
        const std::size_t size = n / 3 + (f < n % 3 ? 1 : 0);
        s.folds[f].assign(idx.begin() + static_cast<std::ptrdiff_t>(pos),
                          idx.begin() + static_cast<std::ptrdiff_t>(pos + size));
        std::sort(s.folds[f].begin(), s.folds[f].end());
        pos += size;
    }
    return s;
}

struct PseudoOutcomeSet {
    Eigen::VectorXd a;
    Eigen::VectorXd phi;

    [[nodiscard]] std::size_t size() const noexcept { return static_cast<std::size_t>(a.size()); }
};

/// phi-hat(Z) = w-hat(A, X){Y - mu-hat(A, X)} + m-hat(A) over an estimation fold.
inline PseudoOutcomeSet build_pseudo(const Sample& fold, const NuisanceFit& nuis) {
    PseudoOutcomeSet out;
    const auto n = static_cast<Eigen::Index>(fold.size());
    out.a = fold.a;
    out.phi.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto x = fold.x_row(static_cast<std::size_t>(i));
        const double a = fold.a(i);
        out.phi(i) = nuis.w(a, x) * (fold.y(i) - nuis.mu(a, x)) + nuis.m(a);
        require(std::isfinite(out.phi(i)), ErrorKind::InvalidArgument, "non-finite pseudo-outcome");
    }
    return out;
}

inline PseudoOutcomeSet build_pseudo(const Sample& sample, const ThreeWaySplit& s, const NuisanceFit& nuis,
                                     int rotation = 0) {
    return build_pseudo(sample.subset(*s.roles(rotation)[2]), nuis);
}

struct ErmOptions {
    /// Project the coefficients onto the unit ball when true.
    bool ball_projection = false;
};

/// Least-squares fit of phi-hat on the first k treatment basis terms.
inline Eigen::VectorXd erm_series_fit(const PseudoOutcomeSet& p, const BasisSpec& treatment_basis,
                                      const ErmOptions& opts = {}) {
    const auto k = static_cast<Eigen::Index>(treatment_basis.size());
    const auto n = static_cast<Eigen::Index>(p.size());
    require(n >= k, ErrorKind::DegenerateDesign,
            "ERM needs at least k=" + std::to_string(k) + " points, got " + std::to_string(n));
    if (k == 0) return {};
    RowMatrix pts(n, 1);
    pts.col(0) = p.a;
    const Eigen::MatrixXd design = basis_design(treatment_basis, pts);
    const Eigen::MatrixXd gram = design.transpose() * design / static_cast<double>(n);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
    if (eig.eigenvalues().minCoeff() < kDesignFloor)
        throw Error(ErrorKind::DegenerateDesign,
                    "ERM Gram matrix singular (k=" + std::to_string(k) + ", n=" + std::to_string(n) + ")");
    Eigen::VectorXd coef = gram.ldlt().solve(design.transpose() * p.phi / static_cast<double>(n));
    if (opts.ball_projection && coef.norm() > 1.0) coef /= coef.norm();
    return coef;
}

inline Eigen::VectorXd erm_series_fit(const PseudoOutcomeSet& p, std::size_t k, const ErmOptions& opts = {}) {
    return erm_series_fit(p, BasisSpec::uniform(1, k), opts);
}

inline double erm_evaluate(const Eigen::VectorXd& coef, double t, double lo = -1.0, double hi = 1.0) {
    if (coef.size() == 0) return 0.0;
    return legendre_basis(BasisSpec::uniform(1, static_cast<std::size_t>(coef.size()), lo, hi), t).dot(coef);
}

/// theta-hat(t) = n^{-1} sum_i W_i(t) phi-hat_i with local polynomial weights.
inline double dr_learner_estimate(const PseudoOutcomeSet& p, double t, double h, int degree,
                                  const KernelSpec& kernel = KernelSpec::gaussian()) {
    return local_poly_smooth(t, p.a, p.phi, h, degree, kernel);
}

/// Fits nuisances on a training fold; the second fold supplies m-hat.
using NuisanceTrainer = std::function<NuisanceFit(const Sample& train, const Sample& m_fold)>;
/// Maps one rotation's pseudo-outcomes to estimates, one per eval point.
using SecondStage = std::function<Eigen::VectorXd(const PseudoOutcomeSet&)>;

/// Average of the second-stage output over the three cyclic role rotations.
inline Eigen::VectorXd cross_fit(const Sample& sample, std::uint64_t seed, const NuisanceTrainer& trainer,
                                 const SecondStage& stage) {
    const ThreeWaySplit s = split(sample.size(), seed);
    Eigen::VectorXd total;
    for (int r = 0; r < 3; ++r) {
        try {
            const auto roles = s.roles(r);
            const NuisanceFit nuis = trainer(sample.subset(*roles[0]), sample.subset(*roles[1]));
            const Eigen::VectorXd est = stage(build_pseudo(sample.subset(*roles[2]), nuis));
            if (r == 0)
                total = est;
            else
                total += est;
        } catch (const Error& e) {
            throw Error(e.kind(), "rotation " + std::to_string(r) + ": " + e.message());
        }
    }
    return total / 3.0;
}

/// Single-split estimate using rotation 0 only.
inline Eigen::VectorXd single_split(const Sample& sample, std::uint64_t seed, const NuisanceTrainer& trainer,
                                    const SecondStage& stage) {
    const ThreeWaySplit s = split(sample.size(), seed);
    const auto roles = s.roles(0);
    const NuisanceFit nuis = trainer(sample.subset(*roles[0]), sample.subset(*roles[1]));
    return stage(build_pseudo(sample.subset(*roles[2]), nuis));
}

struct BiasOracleOptions {
    std::size_t panels = 16;
    std::size_t order = 16;
    double tolerance = 1e-9;
};

/// r-hat(t) = E{phi-hat(Z) | A = t} - theta(t), computed by quadrature over x:
/// int w-hat(t, x){mu(t, x) - mu-hat(t, x)} dP(x | t) + m-hat(t) - theta(t).
/// The integral is evaluated at two resolutions; disagreement beyond the
/// tolerance is reported as a quadrature failure.
inline double bias_oracle_rhat(const NuisanceFit& nuis, const AnalyticTruth& truth, double t,
                               const BiasOracleOptions& opts = {}) {
    const double pt = truth.p_a(t);
    require(pt > 0.0, ErrorKind::OutOfDomain, "treatment density vanishes at t=" + std::to_string(t));
    auto integrand = [&](double x) {
        return nuis.w(t, x) * (truth.mu(t, x) - nuis.mu(t, x)) * truth.pi(t, x) * truth.px(x) / pt;
    };
    const double coarse = quad::composite(truth.x_lo, truth.x_hi, opts.panels, opts.order).integrate(integrand);
    const double fine = quad::composite(truth.x_lo, truth.x_hi, 2 * opts.panels, opts.order).integrate(integrand);
    if (std::abs(fine - coarse) > opts.tolerance * std::max(1.0, std::abs(fine)))
        throw Error(ErrorKind::Quadrature, "bias integral unresolved at t=" + std::to_string(t) + ": " +
                                               std::to_string(opts.panels) + " panels give " + std::to_string(coarse) +
                                               ", " + std::to_string(2 * opts.panels) + " give " + std::to_string(fine));
    return fine + nuis.m(t) - truth.theta(t);
}

/// m(t) = int mu-hat(t, x) dP(x) by quadrature, for oracles needing the exact
/// m-hat of a given mu-hat.
inline TreatmentFn exact_m(const NuisanceFit& nuis, const AnalyticTruth& truth, std::size_t panels = 16,
                           std::size_t order = 16) {
    const quad::Rule rule = quad::composite(truth.x_lo, truth.x_hi, panels, order);
    auto mu = nuis.mu_fn;
    auto px = truth.px;
    return [rule, mu, px](double a) {
        return rule.integrate([&](double x) { return mu(a, std::span<const double>(&x, 1)) * px(x); });
    };
}

}  // namespace drcurve
