#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "em.hpp"
#include "eval.hpp"
#include "gibbs.hpp"
#include "graph.hpp"
#include "mixture.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace spatmix {

// Two clusters over ten categories: 0.12 on the first five / 0.08 on the last five, and the mirror image.
inline RowMatrix two_block_lambda() {
    RowMatrix l(2, 10);
    for (Eigen::Index j = 0; j < 10; ++j) {
        l(0, j) = j < 5 ? 0.12 : 0.08;
        l(1, j) = j < 5 ? 0.08 : 0.12;
    }
    return l;
}

struct SimConfig {
    std::size_t side = 10;
    LatticeScheme scheme = LatticeScheme::rook;
    std::int64_t m = 100;
    RowMatrix lambda = two_block_lambda(); // K x J
    Eigen::VectorXd alpha = Eigen::VectorXd::Zero(2);
    Eigen::VectorXd beta = (Eigen::VectorXd(2) << 0.0, 0.1).finished();
    std::size_t burn_in = 500;
    std::size_t replicates = 100;
    std::uint64_t seed = 1;

    std::size_t K() const noexcept { return static_cast<std::size_t>(lambda.rows()); }
    std::size_t J() const noexcept { return static_cast<std::size_t>(lambda.cols()); }

    void validate() const {
        if (side < 2) throw std::invalid_argument("lattice side must be at least 2");
        if (m < 1) throw std::invalid_argument("per-region total must be at least 1");
        if (lambda.rows() < 1 || lambda.cols() < 2) throw std::invalid_argument("lambda must be K x J with J >= 2");
        ComponentParams check(lambda);
        (void)check;
        if (static_cast<std::size_t>(alpha.size()) != K() || static_cast<std::size_t>(beta.size()) != K()) {
            throw dimension_error("alpha and beta must have one entry per component");
        }
        GibbsParams{alpha, beta}.validate();
        if (replicates < 1) throw std::invalid_argument("replicates must be at least 1");
    }
};

struct SimulatedData {
    CountMatrix counts;
    LabelField truth;
    AdjacencyGraph graph;
};

// Multinomial(m, p) by m categorical draws through the cumulative distribution.
inline std::vector<std::int64_t> draw_multinomial(std::int64_t m, std::span<const double> p, Rng& rng) {
    std::vector<double> cdf(p.size());
    std::partial_sum(p.begin(), p.end(), cdf.begin());
    std::vector<std::int64_t> y(p.size(), 0);
    for (std::int64_t r = 0; r < m; ++r) {
        const double u = uniform01(rng) * cdf.back();
        const auto j = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
        ++y[std::min(j, y.size() - 1)];
    }
    return y;
}

/// Lattice, Gibbs-sampled true labels (burn_in sweeps from a uniform random field under
/// the prior) and multinomial emissions. Deterministic in `replicate_seed`.
inline SimulatedData simulate_dataset(const SimConfig& cfg, std::uint64_t replicate_seed) {
    cfg.validate();
    SimulatedData out;
    out.graph = build_lattice(cfg.side, cfg.scheme);
    const GibbsParams prior{cfg.alpha, cfg.beta};
    Rng field_rng = make_rng(replicate_seed, 0);
    out.truth = uniform_field(out.graph.size(), cfg.K(), field_rng);
    for (std::size_t s = 0; s < cfg.burn_in; ++s) gibbs_sweep(out.truth, out.graph, prior, field_rng);

    Rng emit_rng = make_rng(replicate_seed, 1);
    CountArray y(static_cast<Eigen::Index>(out.graph.size()), static_cast<Eigen::Index>(cfg.J()));
    for (std::size_t i = 0; i < out.graph.size(); ++i) {
        const auto row = draw_multinomial(cfg.m, row_span(cfg.lambda, out.truth[i]), emit_rng);
        for (std::size_t j = 0; j < row.size(); ++j) y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = row[j];
    }
    out.counts = CountMatrix(std::move(y));
    return out;
}

struct QuantileSummary {
    double min = 0.0, q1 = 0.0, median = 0.0, q3 = 0.0, max = 0.0;
    double iqr() const noexcept { return q3 - q1; }
};

// Linear-interpolation quantile on sorted data (R type 7).
inline double quantile_sorted(std::span<const double> v, double p) {
    if (v.empty()) throw std::invalid_argument("quantile of an empty sample");
    const double h = (static_cast<double>(v.size()) - 1.0) * std::clamp(p, 0.0, 1.0);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline QuantileSummary summarize(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return {v.front(), quantile_sorted(v, 0.25), quantile_sorted(v, 0.5), quantile_sorted(v, 0.75), v.back()};
}

struct SimCell {
    std::size_t side = 0;
    Eigen::VectorXd beta;
    std::vector<double> ari; // successful replicates, in replicate order
    std::vector<std::size_t> failed_replicates;
    std::vector<std::string> failures;
    QuantileSummary summary;
};

struct SimReport {
    std::vector<SimCell> cells;
};

/// For each config and replicate r: simulate with seed derive_seed(cfg.seed, r), fit the
/// spatial model with the generator's K (fit seed derived from the replicate seed) and score
/// the estimated labels against the truth by ARI. Replicates are independent jobs.
inline SimReport run_study(const std::vector<SimConfig>& cfgs, const FitConfig& fit_cfg, std::size_t threads = 1) {
    if (cfgs.empty()) throw std::invalid_argument("study needs at least one configuration");
    for (const auto& c : cfgs) c.validate();
    struct Job {
        std::size_t cell, rep;
    };
    std::vector<Job> jobs;
    for (std::size_t c = 0; c < cfgs.size(); ++c) {
        for (std::size_t r = 0; r < cfgs[c].replicates; ++r) jobs.push_back({c, r});
    }
    struct Outcome {
        bool ok = false;
        double ari = 0.0;
        std::string error;
    };
    std::vector<Outcome> outcomes(jobs.size());
    parallel_for(jobs.size(), threads, [&](std::size_t jdx) {
        const auto& cfg = cfgs[jobs[jdx].cell];
        const std::uint64_t rep_seed = derive_seed(cfg.seed, jobs[jdx].rep);
        try {
            const SimulatedData data = simulate_dataset(cfg, rep_seed);
            FitConfig fc = fit_cfg;
            fc.K = cfg.K();
            fc.seed = derive_seed(rep_seed, 2);
            fc.threads = 1;
            const FitResult r = fit(data.counts, data.graph, fc);
            outcomes[jdx] = {true, ari(r.labels, data.truth), {}};
        } catch (const std::exception& e) {
            outcomes[jdx] = {false, 0.0, e.what()};
        }
    });
    SimReport report;
    report.cells.resize(cfgs.size());
    for (std::size_t c = 0; c < cfgs.size(); ++c) {
        report.cells[c].side = cfgs[c].side;
        report.cells[c].beta = cfgs[c].beta;
    }
    for (std::size_t jdx = 0; jdx < jobs.size(); ++jdx) {
        auto& cell = report.cells[jobs[jdx].cell];
        if (outcomes[jdx].ok) {
            cell.ari.push_back(outcomes[jdx].ari);
        } else {
            cell.failed_replicates.push_back(jobs[jdx].rep);
            cell.failures.push_back(outcomes[jdx].error);
        }
    }
    for (auto& cell : report.cells) {
        if (!cell.ari.empty()) cell.summary = summarize(cell.ari);
    }
    return report;
}

} // namespace spatmix
