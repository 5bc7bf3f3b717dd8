#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

#include "criteria.hpp"
#include "em.hpp"

namespace spatmix {

/// Upper tail P(X >= x) of a chi-square variate with `df` degrees of freedom.
inline double chi_square_sf(double x, double df) {
    if (!(df > 0.0)) throw std::invalid_argument("chi-square degrees of freedom must be positive");
    if (!(x > 0.0)) return 1.0;
    return boost::math::gamma_q(0.5 * df, 0.5 * x);
}

struct LrtResult {
    double statistic = 0.0;
    std::size_t df = 0;
    double p_value = 1.0;
    bool suspicious = false; // spatial fit scored below the nested standard fit
};

/// Likelihood-ratio test of the spatial model against its beta = 0 restriction.
/// df = K - 1 (one interaction strength per non-reference component). The null sits on
/// no boundary for beta, but the reference asymptotics are still approximate because
/// the spatial log-likelihood is a pseudo-likelihood approximation.
inline LrtResult lrt(double loglik_spatial, double loglik_standard, std::size_t K, double tolerance = 1e-6) {
    if (K < 2) throw std::invalid_argument("LRT needs K >= 2");
    LrtResult r;
    r.statistic = 2.0 * (loglik_spatial - loglik_standard);
    r.df = K - 1;
    r.suspicious = r.statistic < -tolerance;
    r.p_value = chi_square_sf(r.statistic, static_cast<double>(r.df));
    return r;
}

struct SweepRecord {
    std::size_t K = 0;
    bool ok = false;
    std::string error;
    double loglik = 0.0;
    std::size_t d = 0;
    double bic = 0.0;
    std::optional<FitResult> fit;
};

struct SweepResult {
    std::vector<SweepRecord> records;
    std::size_t selected_K = 0; // 0 when every fit failed

    const SweepRecord* selected() const {
        for (const auto& r : records) {
            if (r.ok && r.K == selected_K) return &r;
        }
        return nullptr;
    }
};

struct SweepOptions {
    bool warm_start = true; // K >= 3 initialised from the K-1 solution
};

/// Fits every K in `ks` (ascending) and selects the BIC maximiser. A failing K becomes an
/// error record; the sweep continues. Each K uses cfg.seed offset by K.
inline SweepResult sweep(const CountMatrix& data, const AdjacencyGraph& graph, const std::vector<std::size_t>& ks,
                         const FitConfig& cfg, const SweepOptions& opt = {}) {
    if (ks.empty()) throw std::invalid_argument("K range is empty");
    for (std::size_t i = 0; i < ks.size(); ++i) {
        if (ks[i] < 1 || (i > 0 && ks[i] <= ks[i - 1])) throw std::invalid_argument("K range must be ascending and >= 1");
    }
    SweepResult out;
    const FitResult* previous = nullptr;
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t K : ks) {
        SweepRecord rec;
        rec.K = K;
        FitConfig c = cfg;
        c.K = K;
        c.seed = derive_seed(cfg.seed, K);
        try {
            FitResult r = (opt.warm_start && K >= 3 && previous && previous->params.K() + 1 == K)
                              ? fit_with_warm_start(data, graph, c, *previous)
                              : fit(data, graph, c);
            rec.ok = true;
            rec.loglik = r.best_loglik;
            rec.d = r.d;
            rec.bic = r.bic;
            rec.fit = std::move(r);
        } catch (const std::exception& e) {
            rec.error = e.what();
        }
        out.records.push_back(std::move(rec));
        const auto& last = out.records.back();
        previous = last.ok ? &*last.fit : nullptr;
        if (last.ok && last.bic > best) {
            best = last.bic;
            out.selected_K = K;
        }
    }
    return out;
}

} // namespace spatmix
