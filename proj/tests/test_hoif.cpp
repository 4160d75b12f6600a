#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "drcurve/dgp.hpp"
#include "drcurve/hoif.hpp"
#include "drcurve/nuisance.hpp"
#include "drcurve/u_statistic.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace drcurve;

namespace {

HoifParts random_parts(std::size_t n, std::mt19937_64& rng) {
    std::normal_distribution<double> z;
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    HoifParts p;
    const auto m = static_cast<Eigen::Index>(n);
    p.f0.resize(m);
    p.f1.resize(m);
    p.f2.resize(m);
    p.kernel.resize(m);
    p.x.resize(m, 1);
    for (Eigen::Index i = 0; i < m; ++i) {
        p.f0(i) = z(rng);
        p.f1(i) = z(rng);
        p.f2(i) = z(rng);
        p.kernel(i) = std::abs(z(rng));
        p.x(i, 0) = u(rng);
    }
    return p;
}

ProjectionKernel random_projection(std::size_t k, std::mt19937_64& rng) {
    std::normal_distribution<double> z;
    Eigen::MatrixXd g(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
    for (auto& v : g.reshaped()) v = z(rng);
    Eigen::MatrixXd omega = g * g.transpose() / static_cast<double>(k) + Eigen::MatrixXd::Identity(g.rows(), g.rows());
    return projection_with_gram(BasisSpec::uniform(1, k), omega);
}

double relative_gap(double a, double b) { return std::abs(a - b) / std::max(1.0, std::max(std::abs(a), std::abs(b))); }

}  // namespace

TEST(UStatistic, PairDefinition) {
    const auto kern = [](std::span<const std::size_t> idx) { return idx[0] == 0 ? 3.0 : 5.0; };
    EXPECT_DOUBLE_EQ(u_statistic_naive(kern, 2, 2), 4.0);
}

TEST(UStatistic, EnumeratesDistinctOrderedTuples) {
    std::size_t calls = 0;
    const auto kern = [&](std::span<const std::size_t> idx) {
        ++calls;
        EXPECT_NE(idx[0], idx[1]);
        EXPECT_NE(idx[1], idx[2]);
        EXPECT_NE(idx[0], idx[2]);
        return 1.0;
    };
    EXPECT_DOUBLE_EQ(u_statistic_naive(kern, 3, 6), 1.0);
    EXPECT_EQ(calls, 6u * 5u * 4u);
}

TEST(UStatistic, TooFewObservations) {
    try {
        (void)u_statistic_naive([](std::span<const std::size_t>) { return 0.0; }, 3, 2);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::TooFewObservations);
    }
    std::mt19937_64 rng(1);
    const HoifParts p = random_parts(2, rng);
    EXPECT_THROW((void)correction_term(p, random_projection(3, rng), 3, UMode::MatrixChain), Error);
}

TEST(UStatistic, SetPartitionCounts) {
    EXPECT_EQ(set_partitions(2).size(), 2u);
    EXPECT_EQ(set_partitions(3).size(), 5u);
    EXPECT_EQ(set_partitions(4).size(), 15u);
}

TEST(UStatistic, DegenerateKernelAveragesToZero) {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> z;
    const int reps = 500;
    std::vector<double> vals;
    for (int r = 0; r < reps; ++r) {
        std::vector<double> g(20);
        for (auto& v : g) v = z(rng);
        vals.push_back(u_statistic_naive([&](std::span<const std::size_t> i) { return g[i[0]] * g[i[1]]; }, 2, 20));
    }
    const double mean = std::accumulate(vals.begin(), vals.end(), 0.0) / reps;
    double var = 0.0;
    for (double v : vals) var += (v - mean) * (v - mean) / (reps - 1);
    EXPECT_LT(std::abs(mean), 3.0 * std::sqrt(var / reps));
}

class ChainVsNaive : public ::testing::TestWithParam<int> {};

TEST_P(ChainVsNaive, AgreeOverSeeds) {
    const int j = GetParam();
    const std::size_t n = j == 4 ? 14 : 25;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        std::mt19937_64 rng(seed);
        const HoifParts p = random_parts(n, rng);
        const ProjectionKernel proj = random_projection(1 + seed % 6, rng);
        const double chain = correction_term(p, proj, j, UMode::MatrixChain);
        const double naive = correction_term(p, proj, j, UMode::Naive);
        EXPECT_LT(relative_gap(chain, naive), 1e-9) << "seed " << seed << ": " << chain << " vs " << naive;
    }
}

INSTANTIATE_TEST_SUITE_P(Orders, ChainVsNaive, ::testing::Values(2, 3, 4));

TEST(ChainVsNaive, LargerFoldOrderFour) {
    std::mt19937_64 rng(99);
    const HoifParts p = random_parts(30, rng);
    const ProjectionKernel proj = random_projection(4, rng);
    EXPECT_LT(relative_gap(correction_term(p, proj, 4, UMode::MatrixChain), correction_term(p, proj, 4, UMode::Naive)),
              1e-9);
}

TEST(ChainVsNaive, SingleChainsMatchBruteForce) {
    std::mt19937_64 rng(5);
    const HoifParts p = random_parts(12, rng);
    const ProjectionKernel proj = random_projection(3, rng);
    const ChainData d = chain_data(p, proj);
    const CorrectionKernels kern(p, proj);
    for (int r = 2; r <= 4; ++r) {
        const double brute = u_statistic_naive(
            [&](std::span<const std::size_t> idx) {
                double v = p.f1(static_cast<Eigen::Index>(idx[0]));
                for (std::size_t q = 0; q + 1 < idx.size(); ++q) {
                    v *= kern.pi(idx[q], idx[q + 1]);
                    if (q + 2 < idx.size()) v *= p.kernel(static_cast<Eigen::Index>(idx[q + 1]));
                }
                return v * p.f2(static_cast<Eigen::Index>(idx.back()));
            },
            static_cast<std::size_t>(r), 12);
        EXPECT_LT(relative_gap(chain_u_statistic(d, r), brute), 1e-10) << "r=" << r;
    }
}

TEST(CorrectionKernels, RepeatedIndexRejected) {
    std::mt19937_64 rng(3);
    const HoifParts p = random_parts(5, rng);
    const CorrectionKernels kern(p, random_projection(2, rng));
    const std::vector<std::size_t> bad{1, 3, 1};
    try {
        (void)kern(bad);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::InvalidTuple);
    }
}

TEST(CorrectionKernels, VanishWithoutResidual) {
    std::mt19937_64 rng(4);
    HoifParts p = random_parts(9, rng);
    p.f1.setZero();
    const ProjectionKernel proj = random_projection(3, rng);
    for (int j = 2; j <= 4; ++j) {
        EXPECT_EQ(correction_term(p, proj, j, UMode::MatrixChain), 0.0);
        EXPECT_EQ(correction_term(p, proj, j, UMode::Naive), 0.0);
    }
}

TEST(CorrectionKernels, VanishForEmptyBasis) {
    std::mt19937_64 rng(6);
    const HoifParts p = random_parts(9, rng);
    const ProjectionKernel proj = projection_with_gram(hoif_basis(SampleBox::unit(1), 0), Eigen::MatrixXd(0, 0));
    for (int j = 2; j <= 4; ++j) {
        EXPECT_EQ(correction_term(p, proj, j, UMode::MatrixChain), 0.0);
        EXPECT_EQ(correction_term(p, proj, j, UMode::Naive), 0.0);
    }
}

namespace {

// Discrete law on eight atoms (x, a, y): x in {-1/2, 1/2}, a in {t, off},
// y in {lo, hi}. K is c * 1{a = t}, pi(t | x) = c P(A = t | x) so that
// E{K(A) / pi(A | X) | X} = 1, mu is the exact conditional mean, and Pi is the
// exact L2(g) projection onto span{1, x}.
struct DiscreteLaw {
    static constexpr double c = 2.0;
    std::vector<double> prob, x, kernel, f1, f2;
    Eigen::MatrixXd pi;  // atom-by-atom projection kernel

    DiscreteLaw() {
        const double px[2] = {0.4, 0.6};
        const double pt[2] = {0.3, 0.7};  // P(A = t | x)
        const double xs[2] = {-0.5, 0.5};
        const double ylo[2][2] = {{-1.0, 0.5}, {2.0, -0.3}};  // [x][treated]
        const double yhi[2][2] = {{1.5, 2.0}, {3.0, 1.1}};
        const double phi[2][2] = {{0.25, 0.6}, {0.8, 0.5}};  // P(y = hi | x, treated)
        for (int ix = 0; ix < 2; ++ix)
            for (int treated = 0; treated < 2; ++treated)
                for (int hi = 0; hi < 2; ++hi) {
                    const double pa = treated ? pt[ix] : 1.0 - pt[ix];
                    const double py = hi ? phi[ix][treated] : 1.0 - phi[ix][treated];
                    const double y = hi ? yhi[ix][treated] : ylo[ix][treated];
                    const double mu = phi[ix][treated] * yhi[ix][treated] + (1 - phi[ix][treated]) * ylo[ix][treated];
                    const double k = treated ? c : 0.0;
                    // pi-hat at the observed treatment; its value off t never enters since K = 0 there
                    const double pi_a = treated ? c * pt[ix] : 1.0;
                    prob.push_back(px[ix] * pa * py);
                    x.push_back(xs[ix]);
                    kernel.push_back(k);
                    f1.push_back(k * (y - mu));
                    f2.push_back(k / pi_a - 1.0);
                }
        const Eigen::Matrix2d inv = omega().inverse();
        pi.resize(8, 8);
        for (int i = 0; i < 8; ++i)
            for (int j = 0; j < 8; ++j) pi(i, j) = basis(x[static_cast<std::size_t>(i)]).dot(inv * basis(x[static_cast<std::size_t>(j)]));
    }

    static Eigen::Vector2d basis(double x) { return {1.0, std::sqrt(3.0) * x}; }

    [[nodiscard]] Eigen::Matrix2d omega() const {
        Eigen::Matrix2d o = Eigen::Matrix2d::Zero();
        for (std::size_t i = 0; i < prob.size(); ++i) o += prob[i] * kernel[i] * basis(x[i]) * basis(x[i]).transpose();
        return o;
    }

    // Raw chain f1 Pi K Pi ... Pi f2 on atoms.
    [[nodiscard]] double chain(const std::vector<int>& at) const {
        double v = f1[static_cast<std::size_t>(at[0])];
        for (std::size_t q = 0; q + 1 < at.size(); ++q) {
            v *= pi(at[q], at[q + 1]);
            if (q + 2 < at.size()) v *= kernel[static_cast<std::size_t>(at[q + 1])];
        }
        return v * f2[static_cast<std::size_t>(at.back())];
    }

    // Parts over `copies` copies of the atoms: observation c * 8 + m is atom m.
    [[nodiscard]] HoifParts parts(int copies) const {
        HoifParts p;
        const Eigen::Index n = 8 * copies;
        p.f0 = Eigen::VectorXd::Zero(n);
        p.f1.resize(n);
        p.f2.resize(n);
        p.kernel.resize(n);
        p.x.resize(n, 1);
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto m = static_cast<std::size_t>(i % 8);
            p.f1(i) = f1[m];
            p.f2(i) = f2[m];
            p.kernel(i) = kernel[m];
            p.x(i, 0) = x[m];
        }
        return p;
    }
};

}  // namespace

TEST(Degeneracy, EachArgumentIntegratesToZero) {
    const DiscreteLaw law;
    const ProjectionKernel proj = projection_with_gram(BasisSpec::uniform(1, 2), law.omega());
    for (int j = 2; j <= 4; ++j) {
        const HoifParts parts = law.parts(j);
        const CorrectionKernels kern(parts, proj);
        // every assignment of atoms to the other positions
        const int others = j - 1;
        int combos = 1;
        for (int q = 0; q < others; ++q) combos *= 8;
        for (int pos = 0; pos < j; ++pos) {
            double worst = 0.0;
            for (int code = 0; code < combos; ++code) {
                std::vector<std::size_t> idx(static_cast<std::size_t>(j));
                int rest = code;
                for (int q = 0, slot = 0; q < j; ++q) {
                    if (q == pos) continue;
                    idx[static_cast<std::size_t>(q)] = static_cast<std::size_t>(slot * 8 + rest % 8);
                    rest /= 8;
                    ++slot;
                }
                double integral = 0.0;
                for (int m = 0; m < 8; ++m) {
                    idx[static_cast<std::size_t>(pos)] = static_cast<std::size_t>((j - 1) * 8 + m);
                    integral += law.prob[static_cast<std::size_t>(m)] * kern(idx);
                }
                worst = std::max(worst, std::abs(integral));
            }
            EXPECT_LT(worst, 1e-12) << "order " << j << " position " << pos;
        }
    }
}

TEST(Degeneracy, PrintedKernelsAreTheDegenerateChains) {
    // phi_j = (-1)^{j-1} sum_{A subset positions} (-1)^{j-|A|} E{chain_j | Z_A}
    const DiscreteLaw law;
    const ProjectionKernel proj = projection_with_gram(BasisSpec::uniform(1, 2), law.omega());
    std::mt19937_64 rng(8);
    std::uniform_int_distribution<int> atom(0, 7);
    for (int j = 2; j <= 4; ++j) {
        const HoifParts parts = law.parts(j);
        const CorrectionKernels kern(parts, proj);
        for (int trial = 0; trial < 30; ++trial) {
            std::vector<int> at(static_cast<std::size_t>(j));
            for (auto& a : at) a = atom(rng);
            double expansion = 0.0;
            for (int mask = 0; mask < (1 << j); ++mask) {
                // E{chain | Z_A}: sum over atoms at the positions outside A
                std::vector<int> free;
                for (int q = 0; q < j; ++q)
                    if (!(mask & (1 << q))) free.push_back(q);
                int combos = 1;
                for (std::size_t q = 0; q < free.size(); ++q) combos *= 8;
                double cond = 0.0;
                for (int code = 0; code < combos; ++code) {
                    std::vector<int> z = at;
                    double w = 1.0;
                    int rest = code;
                    for (int q : free) {
                        z[static_cast<std::size_t>(q)] = rest % 8;
                        w *= law.prob[static_cast<std::size_t>(rest % 8)];
                        rest /= 8;
                    }
                    cond += w * law.chain(z);
                }
                const int size = __builtin_popcount(static_cast<unsigned>(mask));
                expansion += ((j - size) % 2 == 0 ? 1.0 : -1.0) * cond;
            }
            expansion *= (j - 1) % 2 == 0 ? 1.0 : -1.0;
            std::vector<std::size_t> idx(static_cast<std::size_t>(j));
            for (int q = 0; q < j; ++q) idx[static_cast<std::size_t>(q)] = static_cast<std::size_t>(q * 8 + at[static_cast<std::size_t>(q)]);
            EXPECT_NEAR(kern(idx), expansion, 1e-11) << "order " << j;
        }
    }
}

TEST(Degeneracy, ProjectionMatchesLibrary) {
    const DiscreteLaw law;
    const ProjectionKernel proj = projection_with_gram(BasisSpec::uniform(1, 2), law.omega());
    for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j)
            EXPECT_NEAR(proj(law.x[static_cast<std::size_t>(i)], law.x[static_cast<std::size_t>(j)]), law.pi(i, j), 1e-12);
}

TEST(ComputeParts, DefinitionsOnHandData) {
    NuisanceFit nuis;
    nuis.mu_fn = [](double a, std::span<const double> x) { return a + 2 * x[0]; };
    nuis.pi_fn = [](double a, std::span<const double> x) { return 0.4 + 0.1 * a + 0.2 * x[0] * x[0]; };
    nuis.p_fn = [](double) { return 0.5; };
    const Sample s = testing_support::uniform_sample(20, 9, [](double a, double x) { return a * x + 1; });
    HoifConfig cfg;
    cfg.t = 0.1;
    cfg.h = 0.3;
    const HoifParts p = compute_parts(s, nuis, cfg);
    for (Eigen::Index i = 0; i < 20; ++i) {
        const double a = s.a(i), x = s.x(i, 0), y = s.y(i);
        const double k = oracle::normal_pdf((a - 0.1) / 0.3) / 0.3;
        const double mu_t = 0.1 + 2 * x;
        EXPECT_NEAR(p.f0(i), k * (y - mu_t) / (0.4 + 0.01 + 0.2 * x * x) + mu_t, 1e-12);
        EXPECT_NEAR(p.f1(i), k * (y - a - 2 * x), 1e-12);
        EXPECT_NEAR(p.f2(i), k / (0.4 + 0.1 * a + 0.2 * x * x) - 1.0, 1e-12);
        EXPECT_NEAR(p.kernel(i), k, 1e-12);
    }
}

TEST(ComputeParts, OutsideKernelSupportGivesRegression) {
    NuisanceFit nuis;
    nuis.mu_fn = [](double a, std::span<const double> x) { return a - x[0]; };
    nuis.pi_fn = [](double, std::span<const double>) { return 0.5; };
    const Sample s = testing_support::uniform_sample(10, 10, [](double, double) { return 7.0; });
    HoifConfig cfg;
    cfg.t = 5.0;  // far from every treatment
    cfg.kernel = KernelSpec::epanechnikov();
    const HoifParts p = compute_parts(s, nuis, cfg);
    for (Eigen::Index i = 0; i < 10; ++i) {
        EXPECT_DOUBLE_EQ(p.f0(i), 5.0 - s.x(i, 0));
        EXPECT_DOUBLE_EQ(p.f1(i), 0.0);
        EXPECT_DOUBLE_EQ(p.f2(i), -1.0);
    }
}

TEST(ComputeParts, PositivityViolation) {
    NuisanceFit nuis;
    nuis.mu_fn = [](double, std::span<const double>) { return 0.0; };
    nuis.pi_fn = [](double, std::span<const double>) { return 1e-6; };
    const Sample s = testing_support::uniform_sample(5, 11, [](double, double) { return 0.0; });
    try {
        (void)compute_parts(s, nuis, HoifConfig{});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::PositivityViolation);
    }
}

TEST(ComputeParts, ResidualMeanZeroUnderTruePropensity) {
    // E f2 = int int {K(a) / pi(a | x) - 1} pi(a | x) p(x) da dx = 0, by
    // quadrature with the nodes fed through compute_parts as a sample.
    const DoseResponseDGP dgp;
    const NuisanceFit nuis = exact_nuisances(dgp);
    HoifConfig cfg;
    cfg.t = 0.1;
    cfg.h = 0.15;
    cfg.kernel = KernelSpec::epanechnikov();
    const quad::Rule ra = quad::composite(-0.05, 0.25, 4, 20);  // kernel support
    const quad::Rule rx = quad::composite(-1.0, 1.0, 8, 20);
    const auto n = static_cast<Eigen::Index>(ra.size() * rx.size());
    Sample s(Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n), RowMatrix(n, 1));
    Eigen::VectorXd w(n);
    Eigen::Index i = 0;
    for (std::size_t p = 0; p < ra.size(); ++p)
        for (std::size_t q = 0; q < rx.size(); ++q, ++i) {
            s.a(i) = ra.nodes[p];
            s.x(i, 0) = rx.nodes[q];
            w(i) = ra.weights[p] * rx.weights[q] * dgp.pi(ra.nodes[p], rx.nodes[q]) * 0.5;
        }
    const HoifParts parts = compute_parts(s, nuis, cfg);
    // f2 = -1 off the kernel support, which carries the remaining mass 1 - P(A in window)
    double window_mass = 0.0;
    for (Eigen::Index r = 0; r < n; ++r) window_mass += w(r);
    const double mean_f2 = parts.f2.dot(w) + (-1.0) * (1.0 - window_mass);
    EXPECT_NEAR(mean_f2, 0.0, 1e-10);
}

TEST(ComputeParts, DiscreteIndicatorReproducesAipw) {
    // Four atoms: x in {-1/2, 1/2}, a in {t, far}; the Epanechnikov kernel at a
    // tiny bandwidth is K(0) / h on a = t and zero at a = far. Feeding
    // pi-hat(t | x) = K(0) / h * P(A = t | x) turns f0 into the AIPW summand.
    const double t = 0.2, h = 1e-3, far = 0.9;
    const double k0 = 0.75 / h;
    const double pt[2] = {0.3, 0.65};
    auto idx = [](double x) { return x < 0 ? 0 : 1; };
    NuisanceFit nuis;
    nuis.mu_fn = [](double a, std::span<const double> x) { return 1.0 + a * x[0]; };
    nuis.pi_fn = [&](double a, std::span<const double> x) { return a == t ? k0 * pt[idx(x[0])] : 1.0; };
    RowMatrix x(4, 1);
    x << -0.5, -0.5, 0.5, 0.5;
    Eigen::VectorXd a(4), y(4);
    a << t, far, t, far;
    y << 2.0, -1.0, 0.5, 3.0;
    const Sample s(y, a, x);
    HoifConfig cfg;
    cfg.t = t;
    cfg.h = h;
    cfg.kernel = KernelSpec::epanechnikov();
    const HoifParts p = compute_parts(s, nuis, cfg);
    for (Eigen::Index i = 0; i < 4; ++i) {
        const double mu_t = 1.0 + t * x(i, 0);
        const double treated = a(i) == t ? 1.0 : 0.0;
        const double aipw = treated * (y(i) - mu_t) / pt[idx(x(i, 0))] + mu_t;
        EXPECT_NEAR(p.f0(i), aipw, 1e-9);
    }
}

namespace {
Sample design_sample(std::size_t n, std::uint64_t seed) {
    const DoseResponseDGP dgp;
    std::mt19937_64 rng(seed);
    return dgp.draw(n, rng);
}

// P_n f0 written out directly from its definition.
double first_order_direct(const Sample& s, const NuisanceFit& nuis, double t, double h) {
    double acc = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const auto e = static_cast<Eigen::Index>(i);
        const double x = s.x(e, 0);
        const double k = std::exp(-0.5 * std::pow((s.a(e) - t) / h, 2)) / (h * std::sqrt(2 * std::numbers::pi));
        const double mu_t = nuis.mu(t, x);
        acc += k * (s.y(e) - mu_t) / nuis.pi(t, x) + mu_t;
    }
    return acc / static_cast<double>(s.size());
}
}  // namespace

TEST(HoifEstimate, FirstOrderMatchesDirectFormula) {
    const DoseResponseDGP dgp;
    const Sample s = design_sample(300, 12);
    std::mt19937_64 rng(13);
    const NuisanceFit nuis = simulated_nuisances(Fluctuation::draw(4.0, 300, rng), dgp, s.x);
    HoifConfig cfg;
    cfg.order = 1;
    for (double t : {-0.5, 0.0, 0.5}) {
        cfg.t = t;
        const HoifResult r = hoif_estimate(s, nuis, cfg);
        EXPECT_NEAR(r.estimate, first_order_direct(s, nuis, t, cfg.h), 1e-12);
        EXPECT_TRUE(r.corrections.empty());
    }
}

TEST(HoifEstimate, EmptyBasisEqualsFirstOrder) {
    const DoseResponseDGP dgp;
    const Sample s = design_sample(200, 14);
    std::mt19937_64 rng(15);
    const NuisanceFit nuis = simulated_nuisances(Fluctuation::draw(2.0, 200, rng), dgp, s.x);
    HoifConfig cfg;
    cfg.t = 0.2;
    cfg.order = 1;
    const double first = hoif_estimate(s, nuis, cfg).estimate;
    for (int m = 2; m <= 4; ++m) {
        cfg.order = m;
        cfg.k = 0;
        EXPECT_DOUBLE_EQ(hoif_estimate(s, nuis, cfg).estimate, first) << "m=" << m;
    }
}

TEST(HoifEstimate, OrdersNest) {
    const DoseResponseDGP dgp;
    const Sample s = design_sample(150, 16);
    std::mt19937_64 rng(17);
    const NuisanceFit nuis = simulated_nuisances(Fluctuation::draw(6.0, 150, rng), dgp, s.x);
    HoifConfig cfg;
    cfg.t = -0.1;
    cfg.k = 5;
    std::vector<HoifResult> res;
    for (int m = 1; m <= 4; ++m) {
        cfg.order = m;
        res.push_back(hoif_estimate(s, nuis, cfg));
    }
    for (int m = 2; m <= 4; ++m) {
        const auto& lo = res[static_cast<std::size_t>(m - 2)];
        const auto& hi = res[static_cast<std::size_t>(m - 1)];
        EXPECT_EQ(hi.estimate, lo.estimate + hi.corrections.back()) << "m=" << m;
        EXPECT_EQ(hi.first_order, lo.first_order);
    }
    // naive enumeration gives the same corrections
    cfg.order = 3;
    cfg.mode = UMode::Naive;
    const HoifResult naive = hoif_estimate(s, nuis, cfg);
    EXPECT_LT(relative_gap(naive.estimate, res[2].estimate), 1e-9);
}

TEST(HoifEstimate, InvalidOrder) {
    const Sample s = design_sample(20, 18);
    HoifConfig cfg;
    cfg.order = 5;
    EXPECT_THROW((void)hoif_estimate(s, exact_nuisances(DoseResponseDGP{}), cfg), Error);
    cfg.order = 0;
    EXPECT_THROW((void)hoif_estimate(s, exact_nuisances(DoseResponseDGP{}), cfg), Error);
}

TEST(HoifEstimate, RankDeficientGramReported) {
    const Sample s = design_sample(6, 19);
    HoifConfig cfg;
    cfg.k = 8;
    try {
        (void)hoif_estimate(s, exact_nuisances(DoseResponseDGP{}), cfg);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::IllConditionedGram);
    }
}

TEST(HoifEstimate, CorrectionsCenteredUnderExactNuisances) {
    const DoseResponseDGP dgp;
    const NuisanceFit nuis = exact_nuisances(dgp);
    HoifConfig cfg;
    cfg.t = 0.0;
    cfg.h = 0.25;
    cfg.k = 5;
    cfg.order = 3;
    std::mt19937_64 rng(20);
    const int reps = 500;
    std::vector<std::vector<double>> corr(2);
    for (int r = 0; r < reps; ++r) {
        const Sample s = dgp.draw(150, rng);
        const HoifResult res = hoif_estimate(s, nuis, cfg, hoif_basis(SampleBox::unit(1), cfg.k));
        corr[0].push_back(res.corrections[0]);
        corr[1].push_back(res.corrections[1]);
    }
    for (std::size_t j = 0; j < 2; ++j) {
        double mean = 0, var = 0;
        for (double v : corr[j]) mean += v / reps;
        for (double v : corr[j]) var += (v - mean) * (v - mean) / (reps - 1);
        EXPECT_LT(std::abs(mean), 3.0 * std::sqrt(var / reps)) << "order " << j + 2;
    }
}

TEST(HoifEstimate, CorrectionVarianceScaling) {
    // var of U_n phi_j ~ k^{j-1} (n h)^{-j}
    const DoseResponseDGP dgp;
    const NuisanceFit nuis = exact_nuisances(dgp);
    const std::size_t k = 5;
    for (int j : {2, 3}) {
        std::vector<double> ratio;
        for (std::size_t n : {200u, 400u})
            for (double h : {0.15, 0.3}) {
                HoifConfig cfg;
                cfg.t = 0.0;
                cfg.h = h;
                cfg.k = k;
                cfg.order = j;
                std::mt19937_64 rng(21 + n);
                const int reps = 200;
                std::vector<double> v;
                for (int r = 0; r < reps; ++r) {
                    const Sample s = dgp.draw(n, rng);
                    v.push_back(hoif_estimate(s, nuis, cfg, hoif_basis(SampleBox::unit(1), k)).corrections.back());
                }
                double mean = 0, var = 0;
                for (double x : v) mean += x / reps;
                for (double x : v) var += (x - mean) * (x - mean) / (reps - 1);
                const double rate = std::pow(static_cast<double>(k), j - 1) * std::pow(static_cast<double>(n) * h, -j);
                ratio.push_back(var / rate);
            }
        const double spread = *std::max_element(ratio.begin(), ratio.end()) / *std::min_element(ratio.begin(), ratio.end());
        EXPECT_LE(spread, 5.0) << "order " << j;
    }
}
