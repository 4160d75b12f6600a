#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "drcurve/error.hpp"

namespace drcurve {

enum class UMode { MatrixChain, Naive };

/// n (n-1) ... (n-j+1).
inline double falling_factorial(std::size_t n, std::size_t j) {
    double out = 1.0;
    for (std::size_t i = 0; i < j; ++i) out *= static_cast<double>(n - i);
    return out;
}

/// U_n of an arbitrary order-j kernel by enumerating every ordered tuple of
/// distinct indices. O(n^j); the correctness oracle for the fast path.
inline double u_statistic_naive(const std::function<double(std::span<const std::size_t>)>& kernel, std::size_t j,
                                std::size_t n) {
    require(j >= 1, ErrorKind::InvalidArgument, "U-statistic order must be positive");
    require(n >= j, ErrorKind::TooFewObservations,
            "U-statistic of order " + std::to_string(j) + " needs n >= j, got n=" + std::to_string(n));
    std::vector<std::size_t> idx(j, 0);
    double total = 0.0;
    // odometer over all j-tuples; tuples with repeats are skipped
    while (true) {
        bool distinct = true;
        for (std::size_t a = 0; a < j && distinct; ++a)
            for (std::size_t b = a + 1; b < j; ++b)
                if (idx[a] == idx[b]) {
                    distinct = false;
                    break;
                }
        if (distinct) total += kernel(idx);
        std::size_t pos = j;
        while (pos > 0) {
            --pos;
            if (++idx[pos] < n) break;
            idx[pos] = 0;
            if (pos == 0) return total / falling_factorial(n, j);
        }
    }
}

/// Set partitions of {0, ..., r-1} as restricted growth strings: label[p] is
/// the block of position p and blocks are numbered in order of first use.
inline std::vector<std::vector<int>> set_partitions(int r) {
    std::vector<std::vector<int>> out;
    std::vector<int> label(static_cast<std::size_t>(r), 0);
    std::function<void(int, int)> rec = [&](int pos, int blocks) {
        if (pos == r) {
            out.push_back(label);
            return;
        }
        for (int b = 0; b <= blocks; ++b) {
            label[static_cast<std::size_t>(pos)] = b;
            rec(pos + 1, std::max(blocks, b + 1));
        }
    };
    if (r > 0) rec(0, 0);
    return out;
}

/// Data of a chain statistic
///   sum over distinct i_1..i_r of u_{i1} P_{i1 i2} c_{i2} P_{i2 i3} ... c_{i_{r-1}} P_{i_{r-1} i_r} v_{ir}
/// with P_ij = wb_i . wb_j the inner product of whitened basis rows.
struct ChainData {
    Eigen::VectorXd u;
    Eigen::VectorXd mid;
    Eigen::VectorXd v;
    Eigen::MatrixXd wb;  ///< n x k whitened basis rows

    [[nodiscard]] std::size_t size() const noexcept { return static_cast<std::size_t>(u.size()); }
};

namespace detail {

/// sum_j (wb_i . wb_j)^m w_j for every i.
inline Eigen::VectorXd chain_message(const Eigen::MatrixXd& wb, const Eigen::VectorXd& w, int multiplicity) {
    if (multiplicity == 1) return wb * (wb.transpose() * w);
    const Eigen::Index n = wb.rows();
    Eigen::VectorXd out(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::VectorXd pi = wb * wb.row(i).transpose();
        double acc = 0.0;
        for (Eigen::Index j = 0; j < n; ++j) acc += std::pow(pi(j), multiplicity) * w(j);
        out(i) = acc;
    }
    return out;
}

/// Sum over unrestricted index assignments of the quotient graph obtained by
/// forcing positions in the same block of `label` to share an index.
inline double partition_sum(const ChainData& d, const std::vector<int>& label) {
    const int r = static_cast<int>(label.size());
    int blocks = 0;
    for (int b : label) blocks = std::max(blocks, b + 1);
    const Eigen::Index n = d.u.size();
    const Eigen::VectorXd self = d.wb.rowwise().squaredNorm();

    std::vector<Eigen::VectorXd> w(static_cast<std::size_t>(blocks), Eigen::VectorXd::Ones(n));
    for (int p = 0; p < r; ++p) {
        const Eigen::VectorXd& f = p == 0 ? d.u : (p == r - 1 ? d.v : d.mid);
        w[static_cast<std::size_t>(label[static_cast<std::size_t>(p)])].array() *= f.array();
    }
    std::map<std::pair<int, int>, int> edges;
    for (int p = 0; p + 1 < r; ++p) {
        int a = label[static_cast<std::size_t>(p)];
        int b = label[static_cast<std::size_t>(p + 1)];
        if (a == b) {
            w[static_cast<std::size_t>(a)].array() *= self.array();
        } else {
            if (a > b) std::swap(a, b);
            ++edges[{a, b}];
        }
    }

    std::vector<bool> alive(static_cast<std::size_t>(blocks), true);
    int remaining = blocks;
    while (remaining > 1) {
        bool eliminated = false;
        for (int leaf = 0; leaf < blocks && !eliminated; ++leaf) {
            if (!alive[static_cast<std::size_t>(leaf)]) continue;
            int neighbours = 0;
            std::pair<int, int> key{};
            for (const auto& [e, m] : edges)
                if (e.first == leaf || e.second == leaf) {
                    ++neighbours;
                    key = e;
                }
            if (neighbours != 1) continue;
            const int other = key.first == leaf ? key.second : key.first;
            w[static_cast<std::size_t>(other)].array() *=
                chain_message(d.wb, w[static_cast<std::size_t>(leaf)], edges[key]).array();
            edges.erase(key);
            alive[static_cast<std::size_t>(leaf)] = false;
            --remaining;
            eliminated = true;
        }
        if (eliminated) continue;
        // no leaf left: a triangle of single edges, tr(M_a M_b M_c)
        require(remaining == 3 && edges.size() == 3, ErrorKind::InvalidArgument, "unsupported chain pattern");
        std::vector<Eigen::MatrixXd> ms;
        for (int b = 0; b < blocks; ++b)
            if (alive[static_cast<std::size_t>(b)])
                ms.push_back(d.wb.transpose() * w[static_cast<std::size_t>(b)].asDiagonal() * d.wb);
        return (ms[0] * ms[1] * ms[2]).trace();
    }
    for (int b = 0; b < blocks; ++b)
        if (alive[static_cast<std::size_t>(b)]) return w[static_cast<std::size_t>(b)].sum();
    return 0.0;
}

}  // namespace detail

/// Distinct-index chain sum of length r (r <= 4) via Moebius inversion over
/// set partitions of the positions.
inline double chain_distinct_sum(const ChainData& d, int r) {
    require(r >= 2 && r <= 4, ErrorKind::InvalidArgument, "chain length must be in 2..4");
    require(d.mid.size() == d.u.size() && d.v.size() == d.u.size() && d.wb.rows() == d.u.size(),
            ErrorKind::InvalidArgument, "chain data have inconsistent lengths");
    if (d.wb.cols() == 0) return 0.0;
    double total = 0.0;
    for (const auto& label : set_partitions(r)) {
        std::vector<int> sizes;
        for (int b : label) {
            if (static_cast<std::size_t>(b) >= sizes.size()) sizes.resize(static_cast<std::size_t>(b) + 1, 0);
            ++sizes[static_cast<std::size_t>(b)];
        }
        double coef = 1.0;
        for (int s : sizes) {
            // (-1)^{s-1} (s-1)!
            double f = 1.0;
            for (int q = 2; q < s; ++q) f *= q;
            coef *= ((s - 1) % 2 == 0 ? 1.0 : -1.0) * f;
        }
        total += coef * detail::partition_sum(d, label);
    }
    return total;
}

/// U_n of the chain of length r.
inline double chain_u_statistic(const ChainData& d, int r) {
    const std::size_t n = d.size();
    require(n >= static_cast<std::size_t>(r), ErrorKind::TooFewObservations,
            "U-statistic of order " + std::to_string(r) + " needs n >= " + std::to_string(r) + ", got " +
                std::to_string(n));
    return chain_distinct_sum(d, r) / falling_factorial(n, static_cast<std::size_t>(r));
}

/// U_n of the j-th correction kernel, j in 2..4, written as a signed
/// combination of chains: sum_{r=2}^{j} (-1)^{r-1} C(j-2, r-2) U_n(chain_r).
inline double correction_u_statistic(const ChainData& d, int j) {
    require(j >= 2 && j <= 4, ErrorKind::InvalidArgument, "correction order must be in 2..4");
    require(d.size() >= static_cast<std::size_t>(j), ErrorKind::TooFewObservations,
            "U-statistic of order " + std::to_string(j) + " needs n >= " + std::to_string(j));
    static constexpr int binom[3][3] = {{1, 0, 0}, {1, 1, 0}, {1, 2, 1}};
    double total = 0.0;
    for (int r = 2; r <= j; ++r) {
        const double sign = (r - 1) % 2 == 0 ? 1.0 : -1.0;
        total += sign * binom[j - 2][r - 2] * chain_u_statistic(d, r);
    }
    return total;
}

}  // namespace drcurve
