#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numbers>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "drcurve/dgp.hpp"
#include "drcurve/error.hpp"
#include "drcurve/kernels.hpp"
#include "drcurve/local_poly.hpp"
#include "drcurve/log.hpp"
#include "drcurve/nuisance.hpp"
#include "drcurve/pseudo_dr.hpp"
#include "drcurve/quadrature.hpp"
#include "drcurve/sample.hpp"
#include "drcurve/series.hpp"
#include "drcurve/truncnorm.hpp"

namespace drcurve {

enum class Side { Lower, Upper };

struct SensitivityConfig {
    double gamma = 1.0;

    void validate() const {
        require(std::isfinite(gamma) && gamma >= 1.0, ErrorKind::InvalidArgument,
                "sensitivity parameter gamma must be >= 1, got " + std::to_string(gamma));
    }
    [[nodiscard]] double tau_l() const { return 1.0 / (1.0 + gamma); }
    [[nodiscard]] double tau_u() const { return gamma / (1.0 + gamma); }
    [[nodiscard]] double tau(Side s) const { return s == Side::Lower ? tau_l() : tau_u(); }
};

inline int sign(double v) { return (v > 0.0) - (v < 0.0); }

/// s_l = q + (Y - q) gamma^{sgn(q - Y)}, s_u = q + (Y - q) gamma^{sgn(Y - q)}.
/// Returns Y itself whenever the factor is 1.
inline double s_transform(double y, double q, double gamma, Side side) {
    const int s = side == Side::Lower ? sign(q - y) : sign(y - q);
    if (s == 0 || gamma == 1.0) return y;
    const double factor = s > 0 ? gamma : 1.0 / gamma;
    return q + (y - q) * factor;
}

struct QuantileFit {
    JointFn q_l;
    JointFn q_u;
    bool analytic = false;

    [[nodiscard]] double q(Side s, double a, std::span<const double> x) const {
        return s == Side::Lower ? q_l(a, x) : q_u(a, x);
    }
};

struct QuantileOptions {
    std::size_t a_terms = 4;
    std::size_t x_terms = 4;
    int max_iterations = 5000;
    double tolerance = 1e-8;
    /// Smoothing of |r| in the majorizer, relative to the sd of Y.
    double epsilon = 1e-6;
    double ridge = 1e-10;
};

namespace detail {

/// Pinball-loss series regression by majorize-minimize:
/// c <- (B'WB)^{-1} B'(W y + (2 tau - 1) 1) with W = 1/(eps + |r|). Stops when
/// either the coefficients or the pinball loss stop moving.
inline Eigen::VectorXd pinball_fit(const Eigen::MatrixXd& design, const Eigen::VectorXd& y, double tau,
                                   const QuantileOptions& opts) {
    const auto n = design.rows();
    const auto k = design.cols();
    const double mean = y.mean();
    const double sd = std::sqrt((y.array() - mean).square().sum() / std::max<double>(1.0, static_cast<double>(n - 1)));
    const double eps = opts.epsilon * std::max(sd, 1e-8);
    Eigen::VectorXd coef = Eigen::VectorXd::Zero(k);
    {
        Eigen::MatrixXd gram = design.transpose() * design;
        gram.diagonal().array() += opts.ridge * std::max(1.0, gram.diagonal().mean());
        coef = gram.ldlt().solve(design.transpose() * y);
    }
    auto loss = [&](const Eigen::VectorXd& c) {
        const Eigen::ArrayXd r = (y - design * c).array();
        return (r * (tau - (r < 0.0).cast<double>())).sum();
    };
    double change = 0.0;
    double objective = loss(coef);
    for (int it = 0; it < opts.max_iterations; ++it) {
        const Eigen::VectorXd resid = y - design * coef;
        const Eigen::VectorXd w = (eps + resid.array().abs()).inverse().matrix();
        Eigen::MatrixXd gram = design.transpose() * w.asDiagonal() * design;
        gram.diagonal().array() += opts.ridge * std::max(1.0, gram.diagonal().mean());
        const Eigen::VectorXd rhs =
            design.transpose() * (w.cwiseProduct(y) + Eigen::VectorXd::Constant(n, 2.0 * tau - 1.0));
        const Eigen::VectorXd next = gram.ldlt().solve(rhs);
        change = (next - coef).cwiseAbs().maxCoeff() / (1.0 + coef.cwiseAbs().maxCoeff());
        coef = next;
        if (!std::isfinite(change))
            throw Error(ErrorKind::NonConvergence, "quantile fit diverged at iteration " + std::to_string(it));
        const double next_objective = loss(coef);
        const double gain = (objective - next_objective) / std::max(objective, 1e-300);
        objective = next_objective;
        if (change < opts.tolerance || std::abs(gain) < opts.tolerance) return coef;
    }
    throw Error(ErrorKind::NonConvergence, "quantile fit at tau=" + std::to_string(tau) + " did not converge in " +
                                               std::to_string(opts.max_iterations) + " iterations (last relative change " +
                                               std::to_string(change) + ")");
}

}  // namespace detail

/// Series quantile regressions at tau_l and tau_u, rearranged so q_l <= q_u.
inline QuantileFit fit_quantiles(const Sample& fold, const SampleBox& box, const SensitivityConfig& cfg,
                                 const QuantileOptions& opts = {}) {
    cfg.validate();
    require(fold.size() > 0, ErrorKind::TooFewObservations, "quantile fit needs a nonempty fold");
    BasisSpec basis = box.joint_basis(opts.a_terms, opts.x_terms);
    basis.policy = DomainPolicy::Clip;
    const Eigen::MatrixXd design = basis_design(basis, joint_points(fold));
    const Eigen::VectorXd cl = detail::pinball_fit(design, fold.y, cfg.tau_l(), opts);
    const Eigen::VectorXd cu = cfg.gamma == 1.0 ? cl : detail::pinball_fit(design, fold.y, cfg.tau_u(), opts);
    auto shared = std::make_shared<const std::tuple<BasisSpec, Eigen::VectorXd, Eigen::VectorXd>>(basis, cl, cu);
    auto eval = [shared](double a, std::span<const double> x) {
        thread_local std::vector<double> point;
        point.assign(1, a);
        point.insert(point.end(), x.begin(), x.end());
        const Eigen::VectorXd b = legendre_basis(std::get<0>(*shared), point);
        return std::pair{b.dot(std::get<1>(*shared)), b.dot(std::get<2>(*shared))};
    };
    QuantileFit q;
    q.q_l = [eval](double a, std::span<const double> x) {
        const auto [l, u] = eval(a, x);
        return std::min(l, u);
    };
    q.q_u = [eval](double a, std::span<const double> x) {
        const auto [l, u] = eval(a, x);
        return std::max(l, u);
    };
    return q;
}

/// q = xi(a, x) + sd Phi^{-1}(tau) under the simulation design.
inline QuantileFit analytic_quantiles(const DoseResponseDGP& dgp, const SensitivityConfig& cfg) {
    cfg.validate();
    auto truth = std::make_shared<const DoseResponseDGP>(dgp);
    const double zl = std_normal_quantile(cfg.tau_l()) * DoseResponseDGP::outcome_sd();
    const double zu = std_normal_quantile(cfg.tau_u()) * DoseResponseDGP::outcome_sd();
    QuantileFit q;
    q.analytic = true;
    q.q_l = [truth, zl](double a, std::span<const double> x) { return truth->xi(a, x[0]) + zl; };
    q.q_u = [truth, zu](double a, std::span<const double> x) { return truth->xi(a, x[0]) + zu; };
    return q;
}

/// E{s(Z; q) | A, X} when Y | A, X ~ Normal(mean, sd^2).
inline double gaussian_s_mean(double mean, double sd, double q, double gamma, Side side) {
    const double z = (q - mean) / sd;
    const double above = (mean - q) * (1.0 - std_normal_cdf(z)) + sd * std_normal_pdf(z);  // E(Y - q)+
    const double below = (q - mean) * std_normal_cdf(z) + sd * std_normal_pdf(z);          // E(q - Y)+
    if (side == Side::Upper) return q + gamma * above - below / gamma;
    return q + above / gamma - gamma * below;
}

/// kappa_j(A, X) fitted by the outcome-regression smoother applied to s_j.
inline JointFn fit_kappa(const Sample& fold, const QuantileFit& q, const SensitivityConfig& cfg, Side side,
                         const SampleBox& box, const OutcomeRegressionOptions& opts = {}) {
    Sample s = fold;
    for (Eigen::Index i = 0; i < s.y.size(); ++i)
        s.y(i) = s_transform(fold.y(i), q.q(side, fold.a(i), fold.x_row(static_cast<std::size_t>(i))), cfg.gamma, side);
    return fit_outcome_regression(s, box, opts);
}

/// Everything the bound pseudo-outcomes need from the nuisance and m folds.
struct SensitivityFit {
    NuisanceFit nuis;  ///< supplies w-hat
    QuantileFit q;
    JointFn kappa_l;
    JointFn kappa_u;
    TreatmentFn kbar_l;  ///< int kappa_l(a, x) dP(x), averaged over the m fold
    TreatmentFn kbar_u;
};

inline TreatmentFn average_over(const JointFn& f, const RowMatrix& covariates) {
    require(covariates.rows() > 0, ErrorKind::TooFewObservations, "average needs a nonempty fold");
    auto x = std::make_shared<const RowMatrix>(covariates);
    return [x, f](double a) {
        double acc = 0.0;
        for (Eigen::Index i = 0; i < x->rows(); ++i)
            acc += f(a, {x->data() + i * x->cols(), static_cast<std::size_t>(x->cols())});
        return acc / static_cast<double>(x->rows());
    };
}

struct SensitivityOptions {
    FittedNuisanceOptions nuisance{};
    QuantileOptions quantile{};
};

/// Fits w-hat, the quantiles and both kappa regressions on `train`; the
/// kappa averages use the covariates of `m_fold`.
inline SensitivityFit fit_sensitivity(const Sample& train, const Sample& m_fold, const SampleBox& box,
                                      const SensitivityConfig& cfg, const SensitivityOptions& opts = {}) {
    SensitivityFit fit;
    fit.nuis = fit_nuisances(train, m_fold, box, opts.nuisance);
    fit.q = fit_quantiles(train, box, cfg, opts.quantile);
    fit.kappa_l = fit_kappa(train, fit.q, cfg, Side::Lower, box, opts.nuisance.outcome);
    fit.kappa_u = fit_kappa(train, fit.q, cfg, Side::Upper, box, opts.nuisance.outcome);
    fit.kbar_l = average_over(fit.kappa_l, m_fold.x);
    fit.kbar_u = average_over(fit.kappa_u, m_fold.x);
    return fit;
}

/// phi_j = w-hat(A, X){s_j - kappa_j(A, X)} + kbar_j(A) over an estimation fold.
inline std::pair<PseudoOutcomeSet, PseudoOutcomeSet> build_bound_pseudo(const Sample& fold, const SensitivityFit& fit,
                                                                        const SensitivityConfig& cfg) {
    cfg.validate();
    PseudoOutcomeSet lo, up;
    lo.a = up.a = fold.a;
    lo.phi.resize(fold.a.size());
    up.phi.resize(fold.a.size());
    for (Eigen::Index i = 0; i < fold.a.size(); ++i) {
        const auto x = fold.x_row(static_cast<std::size_t>(i));
        const double a = fold.a(i);
        const double w = fit.nuis.w(a, x);
        const double sl = s_transform(fold.y(i), fit.q.q_l(a, x), cfg.gamma, Side::Lower);
        const double su = s_transform(fold.y(i), fit.q.q_u(a, x), cfg.gamma, Side::Upper);
        lo.phi(i) = w * (sl - fit.kappa_l(a, x)) + fit.kbar_l(a);
        up.phi(i) = w * (su - fit.kappa_u(a, x)) + fit.kbar_u(a);
    }
    return {std::move(lo), std::move(up)};
}

struct BoundEstimates {
    Eigen::VectorXd lower;
    Eigen::VectorXd upper;
};

using SensitivityTrainer = std::function<SensitivityFit(const Sample& train, const Sample& m_fold)>;

/// DR-learner bounds at each eval point, averaged over the three rotations of
/// a three-way split. Degree 0 (Nadaraya–Watson) keeps the second-stage weights
/// nonnegative; higher degrees are allowed but may break the ordering.
inline BoundEstimates bounds_estimate(const Sample& sample, std::uint64_t seed, const SensitivityConfig& cfg,
                                      const std::vector<double>& ts, double h, int degree,
                                      const SensitivityTrainer& trainer,
                                      const KernelSpec& kernel = KernelSpec::gaussian()) {
    cfg.validate();
    if (degree > 0) log_warning("bounds with a degree > 0 second stage may not be ordered");
    const ThreeWaySplit s = split(sample.size(), seed);
    const auto m = static_cast<Eigen::Index>(ts.size());
    BoundEstimates out{Eigen::VectorXd::Zero(m), Eigen::VectorXd::Zero(m)};
    for (int r = 0; r < 3; ++r) {
        try {
            const auto roles = s.roles(r);
            const SensitivityFit fit = trainer(sample.subset(*roles[0]), sample.subset(*roles[1]));
            const auto [lo, up] = build_bound_pseudo(sample.subset(*roles[2]), fit, cfg);
            for (Eigen::Index j = 0; j < m; ++j) {
                const double t = ts[static_cast<std::size_t>(j)];
                const Eigen::VectorXd w = local_poly_weights(t, lo.a, h, degree, kernel);
                out.lower(j) += w.dot(lo.phi) / static_cast<double>(lo.phi.size());
                out.upper(j) += w.dot(up.phi) / static_cast<double>(up.phi.size());
            }
        } catch (const Error& e) {
            throw Error(e.kind(), "rotation " + std::to_string(r) + ": " + e.message());
        }
    }
    out.lower /= 3.0;
    out.upper /= 3.0;
    return out;
}

/// Conditional bias E{s(Z; q + eps cos(2 pi x)) - s(Z; q) | A = t, X = x}
/// integrated against P(x | A = t), with Y | A, X Gaussian as in the truth.
inline double sens_bias_oracle(const AnalyticTruth& truth, const SensitivityConfig& cfg, double eps, double t,
                               Side side = Side::Upper, std::size_t panels = 16) {
    cfg.validate();
    const double z = std_normal_quantile(cfg.tau(side)) * truth.outcome_sd;
    const quad::Rule rule = quad::composite(truth.x_lo, truth.x_hi, panels, 16);
    return rule.integrate([&](double x) {
        const double mean = truth.mu(t, x);
        const double q = mean + z;
        const double qhat = q + eps * std::cos(2.0 * std::numbers::pi * x);
        const double diff = gaussian_s_mean(mean, truth.outcome_sd, qhat, cfg.gamma, side) -
                            gaussian_s_mean(mean, truth.outcome_sd, q, cfg.gamma, side);
        return diff * truth.px_given_a(x, t);
    });
}

/// theta_j(t; gamma) = int kappa_j(t, x; q_j) dP(x) with the true quantiles.
inline double sensitivity_bound_truth(const AnalyticTruth& truth, const SensitivityConfig& cfg, double t, Side side,
                                      std::size_t panels = 16) {
    cfg.validate();
    const double z = std_normal_quantile(cfg.tau(side)) * truth.outcome_sd;
    const quad::Rule rule = quad::composite(truth.x_lo, truth.x_hi, panels, 16);
    return rule.integrate([&](double x) {
        const double mean = truth.mu(t, x);
        return gaussian_s_mean(mean, truth.outcome_sd, mean + z, cfg.gamma, side) * truth.px(x);
    });
}

}  // namespace drcurve
