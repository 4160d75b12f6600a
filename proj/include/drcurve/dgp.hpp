#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "drcurve/basis.hpp"
#include "drcurve/error.hpp"
#include "drcurve/quadrature.hpp"
#include "drcurve/sample.hpp"
#include "drcurve/truncnorm.hpp"

namespace drcurve {

/// Analytic description of a data-generating process, enough to evaluate
/// every population quantity the bias oracles need. Covariates live in a box
/// and are one-dimensional for all oracles in this library.
struct AnalyticTruth {
    std::function<double(double, double)> mu;         ///< E(Y | A=a, X=x)
    std::function<double(double, double)> pi;         ///< density of A given X=x
    std::function<double(double)> px;                 ///< density of X
    std::function<double(double)> p_a;                ///< marginal density of A
    std::function<double(double)> theta;              ///< int mu(a, x) dP(x)
    double outcome_sd = 1.0;                          ///< Y | A, X ~ Normal(mu, outcome_sd^2)
    double x_lo = -1.0;
    double x_hi = 1.0;
    double a_lo = -1.0;
    double a_hi = 1.0;

    [[nodiscard]] double w(double a, double x) const { return p_a(a) / pi(a, x); }

    /// Density of X given A = t.
    [[nodiscard]] double px_given_a(double x, double t) const { return pi(t, x) * px(x) / p_a(t); }
};

/// Simulation design: X ~ U(-1, 1), A | X ~ TruncNorm(-1, 1, kappa(x), 1),
/// Y | A, X ~ Normal(xi(a, x), 0.25) with 0.25 read as the variance.
/// kappa(x) = b(x)'beta / 3 and xi(a, x) = b(a)'beta + b(x)'beta, where b holds
/// the first six normalized Legendre polynomials, constant included.
class DoseResponseDGP {
public:
    static constexpr std::array<double, 6> kBeta{1.0, 0.8, 0.4, 0.2, 0.1, 0.05};
    static constexpr double kOutcomeVariance = 0.25;
    static constexpr double kTreatmentSd = 1.0;

    DoseResponseDGP() : basis_(BasisSpec::uniform(1, kBeta.size())) {
        beta_ = Eigen::Map<const Eigen::VectorXd>(kBeta.data(), static_cast<Eigen::Index>(kBeta.size()));
        marginal_rule_ = quad::composite(-1.0, 1.0, 8, 16);
    }

    [[nodiscard]] const BasisSpec& basis() const noexcept { return basis_; }
    [[nodiscard]] const Eigen::VectorXd& beta() const noexcept { return beta_; }
    [[nodiscard]] static double outcome_sd() { return std::sqrt(kOutcomeVariance); }

    [[nodiscard]] double b_beta(double u) const { return legendre_basis(basis_, u).dot(beta_); }
    [[nodiscard]] double kappa(double x) const { return b_beta(x) / 3.0; }
    [[nodiscard]] double xi(double a, double x) const { return b_beta(a) + b_beta(x); }

    [[nodiscard]] TruncatedNormal treatment_law(double x) const { return {kappa(x), kTreatmentSd, -1.0, 1.0}; }
    [[nodiscard]] double pi(double a, double x) const { return treatment_law(x).pdf(a); }
    [[nodiscard]] static double px(double x) { return (x >= -1.0 && x <= 1.0) ? 0.5 : 0.0; }

    /// p(a) = int pi(a | x) p(x) dx.
    [[nodiscard]] double p_a(double a) const {
        return 0.5 * marginal_rule_.integrate([&](double x) { return pi(a, x); });
    }

    /// theta(a) = b(a)'beta + (1/2) int_{-1}^{1} b(x)'beta dx. Only the constant
    /// basis term integrates to something non-zero, leaving beta_1.
    [[nodiscard]] double theta(double a) const { return b_beta(a) + beta_(0); }

    [[nodiscard]] AnalyticTruth truth() const {
        auto self = std::make_shared<const DoseResponseDGP>(*this);
        AnalyticTruth t;
        t.mu = [self](double a, double x) { return self->xi(a, x); };
        t.pi = [self](double a, double x) { return self->pi(a, x); };
        t.px = [](double x) { return px(x); };
        t.p_a = [self](double a) { return self->p_a(a); };
        t.theta = [self](double a) { return self->theta(a); };
        t.outcome_sd = outcome_sd();
        return t;
    }

    template <class Rng>
    [[nodiscard]] Sample draw(std::size_t n, Rng& rng) const {
        require(n >= 1, ErrorKind::InvalidArgument, "sample size must be positive");
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        std::normal_distribution<double> noise(0.0, outcome_sd());
        const auto m = static_cast<Eigen::Index>(n);
        Eigen::VectorXd y(m), a(m);
        RowMatrix x(m, 1);
        for (Eigen::Index i = 0; i < m; ++i) {
            const double xv = -1.0 + 2.0 * unif(rng);
            const double ai = treatment_law(xv).from_uniform(unif(rng));
            x(i, 0) = xv;
            a(i) = ai;
            y(i) = xi(ai, xv) + noise(rng);
        }
        return {std::move(y), std::move(a), std::move(x)};
    }

private:
    BasisSpec basis_;
    Eigen::VectorXd beta_;
    quad::Rule marginal_rule_;
};

}  // namespace drcurve
