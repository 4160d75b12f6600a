#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <istream>
#include <limits>
#include <map>
#include <mutex>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include <Eigen/Dense>

#include "drcurve/dgp.hpp"
#include "drcurve/error.hpp"
#include "drcurve/hoif.hpp"
#include "drcurve/kernels.hpp"
#include "drcurve/local_poly.hpp"
#include "drcurve/nuisance.hpp"
#include "drcurve/pseudo_dr.hpp"

namespace drcurve {

struct StudyConfig {
    std::size_t n = 500;
    std::size_t replications = 500;
    std::vector<double> alphas{2, 4, 6, 8, 10, 15};
    std::vector<double> eval_points{-0.5, -0.25, 0.0, 0.25, 0.5};
    std::vector<double> bandwidths{0.1, 0.2, 0.3, 0.4, 0.5};
    std::vector<std::size_t> erm_k{2, 3, 4, 5, 6, 7, 8};
    std::size_t hoif_k = 11;
    std::vector<int> hoif_orders{1, 2};
    int dr_degree = 1;
    std::uint64_t seed = 20240601;
    /// 0 means every hardware thread.
    unsigned threads = 0;
    /// A run fails when any cell loses at least this fraction of replications.
    double max_failure_fraction = 0.01;

    void validate() const {
        require(n >= 2, ErrorKind::InvalidArgument, "n must be at least 2");
        require(replications >= 1, ErrorKind::InvalidArgument, "replications must be positive");
        require(!alphas.empty() && !eval_points.empty(), ErrorKind::InvalidArgument, "alphas and eval points are required");
        for (double a : alphas) require(a > 0.0, ErrorKind::InvalidArgument, "alpha must be positive");
        for (double t : eval_points)
            require(t >= -1.0 && t <= 1.0, ErrorKind::OutOfDomain, "eval points must lie in [-1, 1]");
        for (double h : bandwidths) require(h > 0.0, ErrorKind::InvalidBandwidth, "bandwidths must be positive");
        for (std::size_t k : erm_k) require(k >= 1 && k <= n, ErrorKind::InvalidArgument, "ERM k must be in 1..n");
        for (int m : hoif_orders) require(m >= 1 && m <= 4, ErrorKind::InvalidArgument, "HOIF orders must be in 1..4");
        require(dr_degree >= 0, ErrorKind::InvalidArgument, "DR degree must be non-negative");
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline double parse_real(const std::string& text, const std::string& key) {
    const std::string t = trim(text);
    if (t == "inf" || t == "infinity") return std::numeric_limits<double>::infinity();
    try {
        std::size_t used = 0;
        const double v = std::stod(t, &used);
        if (used == t.size()) return v;
    } catch (const std::logic_error&) {
    }
    throw Error(ErrorKind::InvalidArgument, "key '" + key + "': cannot parse '" + t + "' as a number");
}

inline std::uint64_t parse_unsigned(const std::string& text, const std::string& key) {
    const std::string t = trim(text);
    try {
        std::size_t used = 0;
        if (!t.empty() && t[0] != '-') {
            const unsigned long long v = std::stoull(t, &used);
            if (used == t.size()) return v;
        }
    } catch (const std::logic_error&) {
    }
    throw Error(ErrorKind::InvalidArgument, "key '" + key + "': cannot parse '" + t + "' as a non-negative integer");
}

inline std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(trim(item));
    return out;
}

}  // namespace detail

/// Reads key=value lines ('#' starts a comment). Every key must be a
/// StudyConfig field; lists are comma separated.
inline StudyConfig parse_study_config(std::istream& in) {
    StudyConfig cfg;
    std::string line;
    std::size_t lineno = 0;
    std::set<std::string> seen;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        require(eq != std::string::npos, ErrorKind::InvalidArgument,
                "config line " + std::to_string(lineno) + ": expected key=value");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        require(seen.insert(key).second, ErrorKind::InvalidArgument,
                "config line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
        if (key == "n") {
            cfg.n = detail::parse_unsigned(value, key);
        } else if (key == "replications") {
            cfg.replications = detail::parse_unsigned(value, key);
        } else if (key == "alphas") {
            cfg.alphas.clear();
            for (const auto& v : detail::split_list(value)) cfg.alphas.push_back(detail::parse_real(v, key));
        } else if (key == "eval_points") {
            cfg.eval_points.clear();
            for (const auto& v : detail::split_list(value)) cfg.eval_points.push_back(detail::parse_real(v, key));
        } else if (key == "bandwidths") {
            cfg.bandwidths.clear();
            for (const auto& v : detail::split_list(value)) cfg.bandwidths.push_back(detail::parse_real(v, key));
        } else if (key == "erm_k") {
            cfg.erm_k.clear();
            for (const auto& v : detail::split_list(value)) cfg.erm_k.push_back(detail::parse_unsigned(v, key));
        } else if (key == "hoif_k") {
            cfg.hoif_k = detail::parse_unsigned(value, key);
        } else if (key == "hoif_orders") {
            cfg.hoif_orders.clear();
            for (const auto& v : detail::split_list(value))
                cfg.hoif_orders.push_back(static_cast<int>(detail::parse_unsigned(v, key)));
        } else if (key == "dr_degree") {
            cfg.dr_degree = static_cast<int>(detail::parse_unsigned(value, key));
        } else if (key == "seed") {
            cfg.seed = detail::parse_unsigned(value, key);
        } else if (key == "threads") {
            cfg.threads = static_cast<unsigned>(detail::parse_unsigned(value, key));
        } else {
            throw Error(ErrorKind::InvalidArgument,
                        "config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
        }
    }
    cfg.validate();
    return cfg;
}

/// One (method, alpha, tuning, t) cell of the study.
struct MseCell {
    std::string method;
    double alpha = 0.0;
    std::string tuning;
    double t = 0.0;
    double mse = 0.0;
    double mc_se = 0.0;
    double weight = 0.0;
    std::size_t used = 0;
    std::size_t failed = 0;
};

struct MseAggregate {
    std::string method;
    double alpha = 0.0;
    double weighted_mse = 0.0;
    double mc_se = 0.0;  ///< sqrt(sum w_t^2 se_t^2) over the selected tunings
};

struct MseTable {
    std::vector<MseCell> cells;
    std::vector<MseAggregate> aggregate;
    std::size_t replications = 0;
    std::size_t failed_cells = 0;  ///< cell-replications excluded

    [[nodiscard]] const MseAggregate* find(const std::string& method, double alpha) const {
        for (const auto& a : aggregate)
            if (a.method == method && a.alpha == alpha) return &a;
        return nullptr;
    }
};

namespace detail {

inline std::string format_tuning(const std::string& name, double v) {
    std::ostringstream os;
    os << name << '=' << v;
    return os.str();
}

/// Layout of the per-replication record: one slot per (alpha, method, tuning, t).
struct StudyLayout {
    struct Slot {
        std::string method;
        std::size_t alpha_index;
        std::string tuning;
        std::size_t t_index;
    };
    std::vector<Slot> slots;
    std::map<std::tuple<std::size_t, std::string, std::string, std::size_t>, std::size_t> index;

    void add(std::size_t ai, const std::string& method, const std::string& tuning, std::size_t ti) {
        index[{ai, method, tuning, ti}] = slots.size();
        slots.push_back({method, ai, tuning, ti});
    }
    [[nodiscard]] std::size_t at(std::size_t ai, const std::string& method, const std::string& tuning,
                                 std::size_t ti) const {
        return index.at({ai, method, tuning, ti});
    }
};

inline std::vector<std::string> study_methods(const StudyConfig& cfg) {
    std::vector<std::string> m{"erm", "dr"};
    for (int o : cfg.hoif_orders) m.push_back("hoif" + std::to_string(o));
    m.push_back("oracle_dr");
    m.push_back("plugin");
    return m;
}

inline std::vector<std::string> tunings_for(const StudyConfig& cfg, const std::string& method) {
    std::vector<std::string> out;
    if (method == "erm") {
        for (auto k : cfg.erm_k) out.push_back(format_tuning("k", static_cast<double>(k)));
    } else if (method == "plugin") {
        out.push_back("none");
    } else {
        for (double h : cfg.bandwidths) out.push_back(format_tuning("h", h));
    }
    return out;
}

inline StudyLayout make_layout(const StudyConfig& cfg) {
    StudyLayout layout;
    for (std::size_t ai = 0; ai < cfg.alphas.size(); ++ai)
        for (const auto& method : study_methods(cfg))
            for (const auto& tuning : tunings_for(cfg, method))
                for (std::size_t ti = 0; ti < cfg.eval_points.size(); ++ti) layout.add(ai, method, tuning, ti);
    return layout;
}

}  // namespace detail

/// Squared errors of every cell for one replication; NaN marks a failure.
inline std::vector<double> run_replication(const StudyConfig& cfg, const DoseResponseDGP& dgp,
                                           const detail::StudyLayout& layout, std::size_t rep) {
    constexpr double nan = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> out(layout.slots.size(), nan);
    std::mt19937_64 rng(cfg.seed ^ static_cast<std::uint64_t>(rep));
    const Sample sample = dgp.draw(cfg.n, rng);
    const KernelSpec kernel = KernelSpec::gaussian();
    const BasisSpec hoif_b = BasisSpec::uniform(1, cfg.hoif_k);
    const auto& ts = cfg.eval_points;
    std::vector<double> truth(ts.size());
    for (std::size_t ti = 0; ti < ts.size(); ++ti) truth[ti] = dgp.theta(ts[ti]);

    auto record = [&](std::size_t ai, const std::string& method, const std::string& tuning, std::size_t ti, auto&& f) {
        try {
            const double est = f();
            if (std::isfinite(est)) out[layout.at(ai, method, tuning, ti)] = (est - truth[ti]) * (est - truth[ti]);
        } catch (const Error&) {
        }
    };

    auto second_stages = [&](std::size_t ai, const std::string& dr_name, const PseudoOutcomeSet& pseudo, bool erm) {
        for (double h : cfg.bandwidths)
            for (std::size_t ti = 0; ti < ts.size(); ++ti)
                record(ai, dr_name, detail::format_tuning("h", h), ti,
                       [&] { return dr_learner_estimate(pseudo, ts[ti], h, cfg.dr_degree, kernel); });
        if (!erm) return;
        for (std::size_t k : cfg.erm_k) {
            Eigen::VectorXd coef;
            try {
                coef = erm_series_fit(pseudo, k);
            } catch (const Error&) {
                continue;
            }
            for (std::size_t ti = 0; ti < ts.size(); ++ti)
                record(ai, "erm", detail::format_tuning("k", static_cast<double>(k)), ti,
                       [&] { return erm_evaluate(coef, ts[ti]); });
        }
    };

    // oracle DR-learner: the same for every alpha
    const NuisanceFit exact = exact_nuisances(dgp);
    const PseudoOutcomeSet oracle_pseudo = build_pseudo(sample, exact);
    second_stages(0, "oracle_dr", oracle_pseudo, false);
    for (std::size_t ai = 1; ai < cfg.alphas.size(); ++ai)
        for (const auto& tuning : detail::tunings_for(cfg, "oracle_dr"))
            for (std::size_t ti = 0; ti < ts.size(); ++ti)
                out[layout.at(ai, "oracle_dr", tuning, ti)] = out[layout.at(0, "oracle_dr", tuning, ti)];

    for (std::size_t ai = 0; ai < cfg.alphas.size(); ++ai) {
        const Fluctuation f = Fluctuation::draw(cfg.alphas[ai], cfg.n, rng);
        const NuisanceFit nuis = simulated_nuisances(f, dgp, sample.x);
        PseudoOutcomeSet pseudo;
        try {
            pseudo = build_pseudo(sample, nuis);
        } catch (const Error&) {
            continue;
        }
        second_stages(ai, "dr", pseudo, true);
        for (std::size_t ti = 0; ti < ts.size(); ++ti)
            record(ai, "plugin", "none", ti, [&] {
                double acc = 0.0;
                for (std::size_t i = 0; i < sample.size(); ++i) acc += nuis.mu(ts[ti], sample.x_row(i));
                return acc / static_cast<double>(sample.size());
            });
        for (double h : cfg.bandwidths)
            for (std::size_t ti = 0; ti < ts.size(); ++ti) {
                HoifConfig hc;
                hc.t = ts[ti];
                hc.h = h;
                hc.k = cfg.hoif_k;
                hc.kernel = kernel;
                const int max_order = *std::max_element(cfg.hoif_orders.begin(), cfg.hoif_orders.end());
                hc.order = max_order;
                std::vector<double> by_order(5, nan);
                try {
                    const HoifResult r = hoif_estimate(sample, nuis, hc, hoif_b);
                    double acc = r.first_order;
                    by_order[1] = acc;
                    for (std::size_t j = 0; j < r.corrections.size(); ++j) {
                        acc += r.corrections[j];
                        by_order[j + 2] = acc;
                    }
                } catch (const Error&) {
                    // the first-order term does not need the Gram matrix
                    try {
                        hc.order = 1;
                        by_order[1] = hoif_estimate(sample, nuis, hc, hoif_b).first_order;
                    } catch (const Error&) {
                    }
                }
                for (int m : cfg.hoif_orders)
                    record(ai, "hoif" + std::to_string(m), detail::format_tuning("h", h), ti,
                           [&] { return by_order[static_cast<std::size_t>(m)]; });
            }
    }
    return out;
}

/// Runs the full Monte-Carlo study. Replications run in parallel; the
/// reduction walks them in index order so results do not depend on threads.
inline MseTable run_study(const StudyConfig& cfg, const DoseResponseDGP& dgp = {}) {
    cfg.validate();
    const detail::StudyLayout layout = detail::make_layout(cfg);
    std::vector<std::vector<double>> records(cfg.replications);
    unsigned threads = cfg.threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : cfg.threads;
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, cfg.replications));
    std::atomic<std::size_t> next{0};
    std::mutex err_mutex;
    std::exception_ptr first_error;
    auto worker = [&] {
        while (true) {
            const std::size_t rep = next.fetch_add(1);
            if (rep >= cfg.replications) return;
            try {
                records[rep] = run_replication(cfg, dgp, layout, rep);
            } catch (...) {
                std::lock_guard lock(err_mutex);
                if (!first_error) first_error = std::current_exception();
                records[rep].assign(layout.slots.size(), std::numeric_limits<double>::quiet_NaN());
            }
        }
    };
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned i = 0; i < threads; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    std::vector<double> density(cfg.eval_points.size());
    double total = 0.0;
    for (std::size_t ti = 0; ti < density.size(); ++ti) total += density[ti] = dgp.p_a(cfg.eval_points[ti]);
    for (double& d : density) d /= total;

    MseTable table;
    table.replications = cfg.replications;
    for (std::size_t s = 0; s < layout.slots.size(); ++s) {
        const auto& slot = layout.slots[s];
        double sum = 0.0;
        double sumsq = 0.0;
        std::size_t used = 0;
        for (std::size_t rep = 0; rep < cfg.replications; ++rep) {
            const double v = records[rep][s];
            if (std::isnan(v)) continue;
            sum += v;
            sumsq += v * v;
            ++used;
        }
        MseCell cell;
        cell.method = slot.method;
        cell.alpha = cfg.alphas[slot.alpha_index];
        cell.tuning = slot.tuning;
        cell.t = cfg.eval_points[slot.t_index];
        cell.weight = density[slot.t_index];
        cell.used = used;
        cell.failed = cfg.replications - used;
        table.failed_cells += cell.failed;
        if (used > 0) {
            const double mean = sum / static_cast<double>(used);
            cell.mse = mean;
            const double var = used > 1 ? std::max(0.0, (sumsq - static_cast<double>(used) * mean * mean) /
                                                            static_cast<double>(used - 1))
                                        : 0.0;
            cell.mc_se = std::sqrt(var / static_cast<double>(used));
        } else {
            cell.mse = std::numeric_limits<double>::quiet_NaN();
            cell.mc_se = std::numeric_limits<double>::quiet_NaN();
        }
        if (static_cast<double>(cell.failed) >= cfg.max_failure_fraction * static_cast<double>(cfg.replications) &&
            cell.failed > 0) {
            if (first_error) std::rethrow_exception(first_error);
            throw Error(ErrorKind::NonConvergence, "cell " + cell.method + " alpha=" + std::to_string(cell.alpha) +
                                                       " " + cell.tuning + " t=" + std::to_string(cell.t) + " failed in " +
                                                       std::to_string(cell.failed) + " of " +
                                                       std::to_string(cfg.replications) + " replications");
        }
        table.cells.push_back(std::move(cell));
    }

    // best tuning per (method, alpha, t), then the density-weighted mean over t
    std::map<std::pair<std::string, std::size_t>, std::vector<const MseCell*>> best;
    for (std::size_t ai = 0; ai < cfg.alphas.size(); ++ai)
        for (const auto& method : detail::study_methods(cfg))
            best[{method, ai}].assign(cfg.eval_points.size(), nullptr);
    for (std::size_t s = 0; s < layout.slots.size(); ++s) {
        const auto& slot = layout.slots[s];
        const MseCell& cell = table.cells[s];
        auto& b = best[{slot.method, slot.alpha_index}][slot.t_index];
        if (!std::isnan(cell.mse) && (b == nullptr || cell.mse < b->mse)) b = &cell;
    }
    for (std::size_t ai = 0; ai < cfg.alphas.size(); ++ai)
        for (const auto& method : detail::study_methods(cfg)) {
            MseAggregate agg;
            agg.method = method;
            agg.alpha = cfg.alphas[ai];
            double var = 0.0;
            for (std::size_t ti = 0; ti < cfg.eval_points.size(); ++ti) {
                const MseCell* c = best[{method, ai}][ti];
                if (c == nullptr) {
                    agg.weighted_mse = std::numeric_limits<double>::quiet_NaN();
                    break;
                }
                agg.weighted_mse += c->weight * c->mse;
                var += c->weight * c->weight * c->mc_se * c->mc_se;
            }
            agg.mc_se = std::sqrt(var);
            table.aggregate.push_back(agg);
        }
    return table;
}

inline void write_cells_csv(std::ostream& os, const MseTable& table) {
    os.precision(17);
    os << "method,alpha,tuning,t,mse,mc_se,weight\n";
    for (const auto& c : table.cells)
        os << c.method << ',' << c.alpha << ',' << c.tuning << ',' << c.t << ',' << c.mse << ',' << c.mc_se << ','
           << c.weight << '\n';
}

inline void write_aggregate_csv(std::ostream& os, const MseTable& table) {
    os.precision(17);
    os << "method,alpha,weighted_mse\n";
    for (const auto& a : table.aggregate) os << a.method << ',' << a.alpha << ',' << a.weighted_mse << '\n';
}

}  // namespace drcurve
