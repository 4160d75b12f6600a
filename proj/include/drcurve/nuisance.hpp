#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "drcurve/basis.hpp"
#include "drcurve/dgp.hpp"
#include "drcurve/error.hpp"
#include "drcurve/kernels.hpp"
#include "drcurve/log.hpp"
#include "drcurve/quadrature.hpp"
#include "drcurve/sample.hpp"
#include "drcurve/series.hpp"
#include "drcurve/truncnorm.hpp"

namespace drcurve {

enum class Provenance { Fitted, SimulatedOracle, ExactOracle };

inline const char* to_string(Provenance p) {
    switch (p) {
        case Provenance::Fitted: return "fitted";
        case Provenance::SimulatedOracle: return "simulated-oracle";
        case Provenance::ExactOracle: return "exact-oracle";
    }
    return "unknown";
}

/// f(a, x) for a treatment value and a covariate vector.
using JointFn = std::function<double(double, std::span<const double>)>;
using TreatmentFn = std::function<double(double)>;

inline constexpr double kPositivityFloor = 1e-3;

/// Nuisance functions used by the pseudo-outcome and the HOIF estimators.
/// Immutable after construction.
struct NuisanceFit {
    JointFn mu_fn;
    JointFn pi_fn;  ///< raw conditional density, before the floor
    TreatmentFn p_fn;
    TreatmentFn m_fn;
    double positivity_floor = kPositivityFloor;
    double mu_bound = std::numeric_limits<double>::infinity();
    Provenance provenance = Provenance::Fitted;

    [[nodiscard]] double mu(double a, std::span<const double> x) const {
        return std::clamp(mu_fn(a, x), -mu_bound, mu_bound);
    }
    [[nodiscard]] double pi(double a, std::span<const double> x) const {
        return std::max(pi_fn(a, x), positivity_floor);
    }
    /// Like pi() but refuses to clip.
    [[nodiscard]] double pi_checked(double a, std::span<const double> x) const {
        const double v = pi_fn(a, x);
        if (!(v >= positivity_floor))
            throw Error(ErrorKind::PositivityViolation, "conditional density " + std::to_string(v) + " below floor " +
                                                            std::to_string(positivity_floor) + " at a=" + std::to_string(a));
        return v;
    }
    [[nodiscard]] double p_marginal(double a) const { return std::max(p_fn(a), 0.0); }
    [[nodiscard]] double m(double a) const { return m_fn ? m_fn(a) : 0.0; }
    [[nodiscard]] double w(double a, std::span<const double> x) const { return p_marginal(a) / pi(a, x); }

    // 1-d covariate conveniences
    [[nodiscard]] double mu(double a, double x) const { return mu(a, std::span<const double>(&x, 1)); }
    [[nodiscard]] double pi(double a, double x) const { return pi(a, std::span<const double>(&x, 1)); }
    [[nodiscard]] double w(double a, double x) const { return w(a, std::span<const double>(&x, 1)); }
};

/// p(a) = n^{-1} sum_i pi(a | X_i), clipped densities included.
inline TreatmentFn marginal_density(const NuisanceFit& nuis, const RowMatrix& covariates) {
    require(covariates.rows() > 0, ErrorKind::TooFewObservations, "marginal density needs a nonempty fold");
    auto x = std::make_shared<const RowMatrix>(covariates);
    auto pi = nuis.pi_fn;
    const double floor = nuis.positivity_floor;
    return [x, pi, floor](double a) {
        double acc = 0.0;
        for (Eigen::Index i = 0; i < x->rows(); ++i)
            acc += std::max(pi(a, {x->data() + i * x->cols(), static_cast<std::size_t>(x->cols())}), floor);
        return acc / static_cast<double>(x->rows());
    };
}

/// m(a) = n^{-1} sum_i mu(a, X_i) over the covariates of a fold.
inline TreatmentFn fit_m(const NuisanceFit& nuis, const RowMatrix& covariates) {
    require(covariates.rows() > 0, ErrorKind::TooFewObservations, "m-hat needs a nonempty fold");
    auto x = std::make_shared<const RowMatrix>(covariates);
    auto mu = nuis.mu_fn;
    const double bound = nuis.mu_bound;
    return [x, mu, bound](double a) {
        double acc = 0.0;
        for (Eigen::Index i = 0; i < x->rows(); ++i)
            acc += std::clamp(mu(a, {x->data() + i * x->cols(), static_cast<std::size_t>(x->cols())}), -bound, bound);
        return acc / static_cast<double>(x->rows());
    };
}

struct OutcomeRegressionOptions {
    std::size_t a_terms = 4;
    std::size_t x_terms = 4;
    RidgeOptions ridge{};
};

/// Tensor-product series regression of Y on (A, X). Points outside the box
/// are clipped to its faces.
inline JointFn fit_outcome_regression(const Sample& fold, const SampleBox& box,
                                      const OutcomeRegressionOptions& opts = {}) {
    require(fold.size() > 0, ErrorKind::TooFewObservations, "outcome regression needs a nonempty fold");
    BasisSpec basis = box.joint_basis(opts.a_terms, opts.x_terms);
    basis.policy = DomainPolicy::Clip;
    auto fit = std::make_shared<const SeriesFit>(
        fit_series(basis, joint_points(fold), fold.y, opts.ridge, "outcome regression"));
    return [fit](double a, std::span<const double> x) {
        thread_local std::vector<double> point;
        point.assign(1, a);
        point.insert(point.end(), x.begin(), x.end());
        return (*fit)(point);
    };
}

/// 1.06 sd n^{-1/5}.
inline double silverman_bandwidth(const Eigen::VectorXd& a) {
    require(a.size() > 1, ErrorKind::TooFewObservations, "bandwidth rule needs at least two points");
    const double mean = a.mean();
    const double sd = std::sqrt((a.array() - mean).square().sum() / static_cast<double>(a.size() - 1));
    return 1.06 * std::max(sd, 1e-8) * std::pow(static_cast<double>(a.size()), -0.2);
}

struct DensityOptions {
    double h1 = 0.2;
    std::size_t x_terms = 4;
    std::size_t grid = 101;
    double floor = kPositivityFloor;
    bool renormalize = false;
    KernelSpec kernel = KernelSpec::gaussian();
    RidgeOptions ridge{};
};

/// pi(t | x) estimated by regressing G_{h1 t}(A) on a covariate series basis for
/// each t on a uniform grid over the treatment range, linearly interpolated in t.
class ConditionalDensityFit {
public:
    ConditionalDensityFit(const Sample& fold, const SampleBox& box, const DensityOptions& opts) : opts_(opts) {
        require(fold.size() > 0, ErrorKind::TooFewObservations, "density fit needs a nonempty fold");
        require(opts.h1 > 0.0 && std::isfinite(opts.h1), ErrorKind::InvalidBandwidth, "density bandwidth must be > 0");
        require(opts.grid >= 2, ErrorKind::InvalidArgument, "density grid needs at least two points");
        a_lo_ = box.a_lo;
        a_hi_ = box.a_hi;
        basis_ = box.covariate_basis(opts.x_terms);
        basis_.policy = DomainPolicy::Clip;
        const auto n = static_cast<Eigen::Index>(fold.size());
        const auto g = static_cast<Eigen::Index>(opts.grid);
        grid_.resize(g);
        for (Eigen::Index j = 0; j < g; ++j) grid_(j) = a_lo_ + (a_hi_ - a_lo_) * static_cast<double>(j) / static_cast<double>(g - 1);

        Eigen::MatrixXd targets(n, g);
        for (Eigen::Index j = 0; j < g; ++j) {
            const LocalKernel kht(opts.kernel, opts.h1, grid_(j));
            for (Eigen::Index i = 0; i < n; ++i) targets(i, j) = kht(fold.a(i));
        }
        if (basis_.size() == 0) {
            // no covariates: the density does not depend on x
            coef_ = targets.colwise().mean();
        } else {
            const RidgeSolver solver(basis_design(basis_, fold.x), opts.ridge, "conditional density");
            coef_.resize(static_cast<Eigen::Index>(basis_.size()), g);
            for (Eigen::Index j = 0; j < g; ++j) coef_.col(j) = solver.solve(targets.col(j));
        }

        std::size_t clipped = 0;
        std::size_t total = 0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const Eigen::VectorXd vals = grid_values(fold.x_row(static_cast<std::size_t>(i)));
            clipped += static_cast<std::size_t>((vals.array() <= opts.floor).count());
            total += static_cast<std::size_t>(vals.size());
        }
        degenerate_ = clipped == total;
        if (degenerate_) log_warning("conditional density: every fitted value fell below the positivity floor");
    }

    [[nodiscard]] bool degenerate() const noexcept { return degenerate_; }

    /// Raw fitted value, not clipped and not renormalized.
    [[nodiscard]] double raw(double t, std::span<const double> x) const {
        const Eigen::VectorXd c = coef_at(t);
        if (basis_.size() == 0) return c(0);
        return legendre_basis(basis_, x).dot(c);
    }

    [[nodiscard]] double operator()(double t, std::span<const double> x) const {
        if (t < a_lo_ || t > a_hi_) return opts_.floor;
        const double v = std::max(raw(t, x), opts_.floor);
        if (!opts_.renormalize) return v;
        return std::max(v / grid_integral(x), opts_.floor);
    }

    /// Trapezoid integral over the grid of the clipped density at x.
    [[nodiscard]] double grid_integral(std::span<const double> x) const {
        const Eigen::VectorXd vals = grid_values(x).cwiseMax(opts_.floor);
        const double step = (a_hi_ - a_lo_) / static_cast<double>(grid_.size() - 1);
        return step * (vals.sum() - 0.5 * (vals(0) + vals(vals.size() - 1)));
    }

private:
    [[nodiscard]] Eigen::VectorXd grid_values(std::span<const double> x) const {
        if (basis_.size() == 0) return coef_.row(0).transpose();
        return coef_.transpose() * legendre_basis(basis_, x);
    }

    [[nodiscard]] Eigen::VectorXd coef_at(double t) const {
        const auto g = grid_.size();
        const double pos = std::clamp((t - a_lo_) / (a_hi_ - a_lo_), 0.0, 1.0) * static_cast<double>(g - 1);
        const auto j = std::min(static_cast<Eigen::Index>(pos), g - 2);
        const double frac = pos - static_cast<double>(j);
        return (1.0 - frac) * coef_.col(j) + frac * coef_.col(j + 1);
    }

    DensityOptions opts_;
    BasisSpec basis_;
    Eigen::VectorXd grid_;
    Eigen::MatrixXd coef_;
    double a_lo_ = -1.0;
    double a_hi_ = 1.0;
    bool degenerate_ = false;
};

inline JointFn fit_conditional_density(const Sample& fold, const SampleBox& box, const DensityOptions& opts = {}) {
    auto fit = std::make_shared<const ConditionalDensityFit>(fold, box, opts);
    return [fit](double t, std::span<const double> x) { return (*fit)(t, x); };
}

struct FittedNuisanceOptions {
    OutcomeRegressionOptions outcome{};
    DensityOptions density{};
    /// |mu-hat| is clipped at this multiple of max |Y| in the training fold.
    double mu_bound_factor = 10.0;
};

/// mu-hat and pi-hat fitted on `train`, p-hat averaged over the covariates of
/// `train`, m-hat averaged over the covariates of `m_fold`.
inline NuisanceFit fit_nuisances(const Sample& train, const Sample& m_fold, const SampleBox& box,
                                 const FittedNuisanceOptions& opts = {}) {
    NuisanceFit nuis;
    nuis.provenance = Provenance::Fitted;
    nuis.positivity_floor = opts.density.floor;
    nuis.mu_fn = fit_outcome_regression(train, box, opts.outcome);
    nuis.pi_fn = fit_conditional_density(train, box, opts.density);
    nuis.mu_bound = opts.mu_bound_factor * std::max(train.y.cwiseAbs().maxCoeff(), 1.0);
    nuis.p_fn = marginal_density(nuis, train.x);
    nuis.m_fn = fit_m(nuis, m_fold.x);
    return nuis;
}

struct SimulatedNuisanceConfig {
    double alpha = 2.0;
    std::size_t n = 500;
    std::uint64_t seed = 0;
};

/// Fluctuation scale n^{-1/alpha}; zero for alpha = infinity.
inline double fluctuation_scale(double alpha, std::size_t n) {
    require(alpha > 0.0, ErrorKind::InvalidArgument, "alpha must be positive");
    if (std::isinf(alpha)) return 0.0;
    return std::pow(static_cast<double>(n), -1.0 / alpha);
}

/// The random draws behind one set of simulated nuisances.
struct Fluctuation {
    double zeta_x = 0.0;    ///< multiplies cos(2 pi x) in mu-hat
    double zeta_a = 0.0;    ///< multiplies cos(2 pi a) in mu-hat
    double zeta_pi = 0.0;   ///< shifts the treatment mean by zeta cos(2 pi x)

    template <class Rng>
    static Fluctuation draw(double alpha, std::size_t n, Rng& rng) {
        const double s = fluctuation_scale(alpha, n);
        Fluctuation f;
        if (s == 0.0) return f;
        std::normal_distribution<double> mu_noise(5.0 * s, s);
        std::normal_distribution<double> pi_noise(s, 0.5 * s);
        f.zeta_x = mu_noise(rng);
        f.zeta_a = mu_noise(rng);
        f.zeta_pi = pi_noise(rng);
        return f;
    }
};

/// Nuisances built as fluctuations of the truth:
/// mu-hat = xi + z1 cos(2 pi x) + z2 cos(2 pi a) and pi-hat a truncated normal
/// density with mean kappa(x) + z3 cos(2 pi x). p-hat and m-hat average over
/// the rows of `covariates`.
inline NuisanceFit simulated_nuisances(const Fluctuation& f, const DoseResponseDGP& dgp, const RowMatrix& covariates) {
    require(covariates.rows() > 0 && covariates.cols() == 1, ErrorKind::InvalidArgument,
            "simulated nuisances need a nonempty one-dimensional covariate fold");
    auto truth = std::make_shared<const DoseResponseDGP>(dgp);
    constexpr double two_pi = 2.0 * std::numbers::pi;
    NuisanceFit nuis;
    nuis.provenance = Provenance::SimulatedOracle;
    nuis.mu_fn = [truth, f](double a, std::span<const double> x) {
        return truth->xi(a, x[0]) + f.zeta_x * std::cos(two_pi * x[0]) + f.zeta_a * std::cos(two_pi * a);
    };
    auto law = [truth, f](double x) {
        TruncatedNormal t = truth->treatment_law(x);
        t.mean += f.zeta_pi * std::cos(two_pi * x);
        return t;
    };
    nuis.pi_fn = [law](double a, std::span<const double> x) { return law(x[0]).pdf(a); };

    // p-hat with the per-row log truncation masses computed once
    auto laws = std::make_shared<std::vector<TruncatedNormal>>();
    laws->reserve(static_cast<std::size_t>(covariates.rows()));
    for (Eigen::Index i = 0; i < covariates.rows(); ++i) laws->push_back(law(covariates(i, 0)));
    auto masses = std::make_shared<std::vector<double>>();
    for (const auto& l : *laws) masses->push_back(l.log_mass());
    const double floor = nuis.positivity_floor;
    nuis.p_fn = [laws, masses, floor](double a) {
        if (a < -1.0 || a > 1.0) return 0.0;
        double acc = 0.0;
        for (std::size_t i = 0; i < laws->size(); ++i) {
            const auto& l = (*laws)[i];
            acc += std::max(l.pdf_with(a, (*masses)[i]), floor);
        }
        return acc / static_cast<double>(laws->size());
    };
    // m-hat(a) = xi-part averaged + zeta_x * mean cos(2 pi X) + zeta_a cos(2 pi a)
    double mean_bx = 0.0;
    double mean_cos = 0.0;
    for (Eigen::Index i = 0; i < covariates.rows(); ++i) {
        mean_bx += truth->b_beta(covariates(i, 0));
        mean_cos += std::cos(two_pi * covariates(i, 0));
    }
    mean_bx /= static_cast<double>(covariates.rows());
    mean_cos /= static_cast<double>(covariates.rows());
    nuis.m_fn = [truth, f, mean_bx, mean_cos](double a) {
        return truth->b_beta(a) + mean_bx + f.zeta_x * mean_cos + f.zeta_a * std::cos(two_pi * a);
    };
    return nuis;
}

inline NuisanceFit simulated_nuisances(const SimulatedNuisanceConfig& cfg, const DoseResponseDGP& dgp,
                                       const RowMatrix& covariates) {
    std::mt19937_64 rng(cfg.seed);
    return simulated_nuisances(Fluctuation::draw(cfg.alpha, cfg.n, rng), dgp, covariates);
}

/// True mu, pi and p; m is the exact integral theta(a).
inline NuisanceFit exact_nuisances(const DoseResponseDGP& dgp) {
    auto truth = std::make_shared<const DoseResponseDGP>(dgp);
    NuisanceFit nuis;
    nuis.provenance = Provenance::ExactOracle;
    nuis.mu_fn = [truth](double a, std::span<const double> x) { return truth->xi(a, x[0]); };
    nuis.pi_fn = [truth](double a, std::span<const double> x) { return truth->pi(a, x[0]); };
    nuis.p_fn = [truth](double a) { return truth->p_a(a); };
    nuis.m_fn = [truth](double a) { return truth->theta(a); };
    return nuis;
}

}  // namespace drcurve
