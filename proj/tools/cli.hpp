#pragma once

// Command implementations for the drcurve tool, kept in a header so the tests
// can drive them in-process.

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "drcurve/csv.hpp"
#include "drcurve/drcurve.hpp"

namespace drcurve::cli {

enum Exit : int { kOk = 0, kUsage = 2, kNumeric = 3 };

/// Thrown for bad flags or unreadable input; maps to exit code 2.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct EstimateOptions {
    std::string input;
    std::string output;
    std::string method = "dr";
    std::optional<double> bandwidth;
    std::optional<std::size_t> basis_k;
    std::optional<int> degree;
    std::optional<int> order;
    std::optional<double> gamma;
    std::vector<double> eval;
    std::optional<std::uint64_t> seed;
};

inline std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag) {
    if (flag) return *flag;
    if (const char* env = std::getenv("DRCURVE_SEED"); env != nullptr && *env != '\0') {
        try {
            std::size_t used = 0;
            const std::string s(env);
            const auto v = std::stoull(s, &used);
            if (used == s.size() && s[0] != '-') return v;
        } catch (const std::logic_error&) {
        }
        throw UsageError("DRCURVE_SEED must be a non-negative integer");
    }
    return 0;
}

/// Five points spread evenly between the 10% and 90% quantiles of A.
inline std::vector<double> default_eval_points(const Eigen::VectorXd& a) {
    std::vector<double> sorted(a.data(), a.data() + a.size());
    std::sort(sorted.begin(), sorted.end());
    auto quantile = [&](double p) { return sorted[static_cast<std::size_t>(p * static_cast<double>(sorted.size() - 1))]; };
    const double lo = quantile(0.1);
    const double hi = quantile(0.9);
    std::vector<double> out;
    for (int i = 0; i < 5; ++i) out.push_back(lo + (hi - lo) * i / 4.0);
    return out;
}

struct EstimateRow {
    double t;
    double estimate;
    double lower;
    double upper;
};

inline FittedNuisanceOptions nuisance_options(double bandwidth) {
    FittedNuisanceOptions o;
    o.density.h1 = bandwidth;
    return o;
}

inline std::vector<EstimateRow> estimate(const Sample& sample, const EstimateOptions& opt) {
    const std::uint64_t seed = resolve_seed(opt.seed);
    const std::vector<double> ts = opt.eval.empty() ? default_eval_points(sample.a) : opt.eval;
    const double h = opt.bandwidth ? *opt.bandwidth : silverman_bandwidth(sample.a);
    const SampleBox box = SampleBox::from_sample(sample, 0.05);
    const KernelSpec kernel = KernelSpec::gaussian();
    const FittedNuisanceOptions nopts = nuisance_options(h);
    const NuisanceTrainer trainer = [&](const Sample& train, const Sample& m_fold) {
        return fit_nuisances(train, m_fold, box, nopts);
    };
    std::vector<EstimateRow> rows(ts.size(), EstimateRow{0, 0, 0, 0});
    for (std::size_t j = 0; j < ts.size(); ++j) rows[j].t = ts[j];

    if (opt.method == "dr") {
        // bounds default to a local-constant second stage; the point estimate follows so gamma = 1 matches it
        const int degree = opt.degree.value_or(opt.gamma ? 0 : 1);
        const Eigen::VectorXd est = cross_fit(sample, seed, trainer, [&](const PseudoOutcomeSet& p) {
            Eigen::VectorXd out(static_cast<Eigen::Index>(ts.size()));
            for (std::size_t j = 0; j < ts.size(); ++j)
                out(static_cast<Eigen::Index>(j)) = dr_learner_estimate(p, ts[j], h, degree, kernel);
            return out;
        });
        for (std::size_t j = 0; j < ts.size(); ++j) rows[j].estimate = est(static_cast<Eigen::Index>(j));
        if (opt.gamma) {
            const SensitivityConfig sc{*opt.gamma};
            SensitivityOptions so;
            so.nuisance = nopts;
            const BoundEstimates b = bounds_estimate(
                sample, seed, sc, ts, h, degree,
                [&](const Sample& train, const Sample& m_fold) { return fit_sensitivity(train, m_fold, box, sc, so); },
                kernel);
            for (std::size_t j = 0; j < ts.size(); ++j) {
                rows[j].lower = b.lower(static_cast<Eigen::Index>(j));
                rows[j].upper = b.upper(static_cast<Eigen::Index>(j));
            }
        }
    } else if (opt.method == "erm") {
        const std::size_t k = opt.basis_k.value_or(5);
        const BasisSpec tb = box.treatment_basis(k);
        const Eigen::VectorXd est = cross_fit(sample, seed, trainer, [&](const PseudoOutcomeSet& p) {
            const Eigen::VectorXd coef = erm_series_fit(p, tb);
            Eigen::VectorXd out(static_cast<Eigen::Index>(ts.size()));
            for (std::size_t j = 0; j < ts.size(); ++j)
                out(static_cast<Eigen::Index>(j)) = k == 0 ? 0.0 : legendre_basis(tb, ts[j]).dot(coef);
            return out;
        });
        for (std::size_t j = 0; j < ts.size(); ++j) rows[j].estimate = est(static_cast<Eigen::Index>(j));
    } else {  // hoif: nuisances on one half, estimation on the other, then swap
        const std::size_t n = sample.size();
        if (n < 4) throw Error(ErrorKind::TooFewObservations, "hoif needs at least 4 observations");
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), 0);
        std::mt19937_64 rng(seed);
        std::shuffle(idx.begin(), idx.end(), rng);
        std::vector<std::size_t> first(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n / 2));
        std::vector<std::size_t> second(idx.begin() + static_cast<std::ptrdiff_t>(n / 2), idx.end());
        std::sort(first.begin(), first.end());
        std::sort(second.begin(), second.end());
        const BasisSpec basis = hoif_basis(box, opt.basis_k.value_or(6));
        HoifConfig hc;
        hc.h = h;
        hc.order = opt.order.value_or(2);
        hc.kernel = kernel;
        for (int swap = 0; swap < 2; ++swap) {
            const Sample train = sample.subset(swap == 0 ? first : second);
            const Sample est = sample.subset(swap == 0 ? second : first);
            const NuisanceFit nuis = fit_nuisances(train, train, box, nopts);
            for (std::size_t j = 0; j < ts.size(); ++j) {
                hc.t = ts[j];
                rows[j].estimate += 0.5 * hoif_estimate(est, nuis, hc, basis).estimate;
            }
        }
    }
    return rows;
}

inline void write_estimates(std::ostream& os, const std::vector<EstimateRow>& rows, const std::string& method,
                            bool bounds) {
    os.precision(17);
    os << "t,method,estimate" << (bounds ? ",lower,upper" : "") << '\n';
    for (const auto& r : rows) {
        os << r.t << ',' << method << ',' << r.estimate;
        if (bounds) os << ',' << r.lower << ',' << r.upper;
        os << '\n';
    }
}

inline void validate(const EstimateOptions& opt) {
    if (opt.method != "dr" && opt.method != "erm" && opt.method != "hoif")
        throw UsageError("--method must be dr, erm or hoif");
    if (opt.order && opt.method != "hoif") throw UsageError("--order applies to --method hoif only");
    if (opt.order && (*opt.order < 1 || *opt.order > 4)) throw UsageError("--order must be in 1..4");
    if (opt.gamma && opt.method != "dr") throw UsageError("--gamma applies to --method dr only");
    if (opt.gamma && !(*opt.gamma >= 1.0)) throw UsageError("--gamma must be >= 1");
    if (opt.bandwidth && !(*opt.bandwidth > 0.0)) throw UsageError("--bandwidth must be positive");
    if (opt.degree && *opt.degree < 0) throw UsageError("--degree must be non-negative");
}

inline std::ofstream open_output(const std::string& path) {
    std::ofstream os(path);
    if (!os) throw UsageError("cannot open '" + path + "' for writing");
    return os;
}

/// Runs the tool; returns the exit code.
inline int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Doubly robust dose-response estimation"};
    app.require_subcommand(1);

    EstimateOptions est;
    auto* estimate_cmd = app.add_subcommand("estimate", "Estimate the dose-response curve from a CSV sample");
    estimate_cmd->add_option("--input", est.input, "CSV with header y,a,x1,...,xd")->required();
    estimate_cmd->add_option("--out", est.output, "Output CSV (default stdout)");
    estimate_cmd->add_option("--method", est.method, "dr, erm or hoif")->capture_default_str();
    estimate_cmd->add_option("--bandwidth", est.bandwidth, "Kernel bandwidth (default: rule of thumb)");
    estimate_cmd->add_option("--basis-k", est.basis_k, "ERM basis size, or HOIF terms per covariate");
    estimate_cmd->add_option("--degree", est.degree, "Local polynomial degree of the second stage (default 1, or 0 with --gamma)");
    estimate_cmd->add_option("--order", est.order, "HOIF order (1..4)");
    estimate_cmd->add_option("--gamma", est.gamma, "Sensitivity parameter; adds lower,upper columns");
    estimate_cmd->add_option("--eval", est.eval, "Evaluation points")->delimiter(',');
    estimate_cmd->add_option("--seed", est.seed, "Split seed (default: DRCURVE_SEED or 0)");
    unsigned est_threads = 0;
    estimate_cmd->add_option("--threads", est_threads, "Worker threads (estimation is single threaded)");

    std::string config_path;
    std::optional<std::size_t> reps;
    std::string sim_out;
    std::optional<unsigned> sim_threads;
    std::optional<std::uint64_t> sim_seed;
    auto* simulate_cmd = app.add_subcommand("simulate", "Run the Monte-Carlo study");
    simulate_cmd->add_option("--config", config_path, "key=value study configuration")->required();
    simulate_cmd->add_option("--reps", reps, "Override the number of replications");
    simulate_cmd->add_option("--out", sim_out, "Output directory for cells.csv and aggregate.csv")->required();
    simulate_cmd->add_option("--threads", sim_threads, "Worker threads (default: all cores)");
    simulate_cmd->add_option("--seed", sim_seed, "Override the master seed");

    double alpha = 2.0;
    double dim = 20.0;
    std::string grid = "0.5:40:0.5";
    std::string rates_out;
    auto* rates_cmd = app.add_subcommand("rates", "Tabulate MSE rate exponents");
    rates_cmd->add_option("--alpha", alpha, "Smoothness in the treatment")->capture_default_str();
    rates_cmd->add_option("--dim", dim, "Covariate dimension")->capture_default_str();
    rates_cmd->add_option("--s-grid", grid, "lo:hi:step grid of covariate smoothness")->capture_default_str();
    rates_cmd->add_option("--out", rates_out, "Output CSV (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return kUsage;
    }

    try {
        if (*estimate_cmd) {
            validate(est);
            std::ifstream in(est.input);
            if (!in) throw UsageError("cannot read '" + est.input + "'");
            Sample sample;
            try {
                sample = read_sample_csv(in);
            } catch (const CsvError& e) {
                throw UsageError(est.input + ": " + e.what());
            }
            const auto rows = estimate(sample, est);
            if (est.output.empty()) {
                write_estimates(out, rows, est.method, est.gamma.has_value());
            } else {
                auto os = open_output(est.output);
                write_estimates(os, rows, est.method, est.gamma.has_value());
            }
        } else if (*simulate_cmd) {
            std::ifstream in(config_path);
            if (!in) throw UsageError("cannot read config '" + config_path + "'");
            StudyConfig cfg;
            try {
                cfg = parse_study_config(in);
                if (reps) cfg.replications = *reps;
                if (sim_threads) cfg.threads = *sim_threads;
                if (sim_seed) cfg.seed = *sim_seed;
                cfg.validate();
            } catch (const Error& e) {
                throw UsageError(config_path + ": " + e.message());
            }
            const MseTable table = run_study(cfg);
            std::error_code ec;
            std::filesystem::create_directories(sim_out, ec);
            if (ec) throw UsageError("cannot create '" + sim_out + "': " + ec.message());
            auto cells = open_output((std::filesystem::path(sim_out) / "cells.csv").string());
            write_cells_csv(cells, table);
            auto agg = open_output((std::filesystem::path(sim_out) / "aggregate.csv").string());
            write_aggregate_csv(agg, table);
            if (table.failed_cells > 0)
                err << "note: " << table.failed_cells << " cell-replications failed and were excluded\n";
        } else if (*rates_cmd) {
            std::vector<RateExponents> rows;
            try {
                if (!(alpha > 0.0) || !(dim > 0.0)) throw UsageError("--alpha and --dim must be positive");
                rows = rate_table(alpha, dim, parse_s_grid(grid));
            } catch (const Error& e) {
                throw UsageError(e.message());
            }
            if (rates_out.empty()) {
                write_rate_csv(out, rows);
            } else {
                auto os = open_output(rates_out);
                write_rate_csv(os, rows);
            }
        }
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return kNumeric;
    }
    return kOk;
}

}  // namespace drcurve::cli
