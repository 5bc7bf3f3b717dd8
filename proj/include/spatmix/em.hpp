#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "criteria.hpp"
#include "errors.hpp"
#include "gibbs.hpp"
#include "graph.hpp"
#include "mixture.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace spatmix {

// n x K posterior membership probabilities.
using Responsibilities = RowMatrix;

// Law the per-iteration field draw is taken from.
//   posterior: P(z_i | y_i, z_{N_i}) proportional to t_ik f(y_i | lambda_k)
//   prior:     P_G(z_i | z_{N_i}) = t_ik
enum class FieldMode { posterior, prior };

struct FitConfig {
    std::size_t K = 2;
    std::size_t max_iter = 1000;
    std::size_t patience = 50;
    std::size_t n_starts = 20;
    std::size_t short_run_iter = 10;
    std::uint64_t seed = 0;
    std::size_t field_sweeps = 1;
    GibbsMethod gibbs_method = GibbsMethod::newton;
    bool spatial = true;
    bool pin_beta = false;           // spatial loop with beta clamped at 0
    bool hard_gibbs_weights = false; // fit (alpha, beta) on C-step labels instead of soft w
    FieldMode field_mode = FieldMode::posterior;
    double improve_tol = 1e-9; // a log-likelihood gain must exceed this to count as improvement
    std::size_t threads = 1;
    AnnealSchedule anneal;

    void validate() const {
        if (K < 1) throw std::invalid_argument("K must be at least 1");
        if (patience < 1) throw std::invalid_argument("patience must be at least 1");
        if (max_iter < patience) throw std::invalid_argument("max_iter must be at least patience");
        if (n_starts < 1) throw std::invalid_argument("n_starts must be at least 1");
        if (field_sweeps < 1) throw std::invalid_argument("field_sweeps must be at least 1");
        if (!(improve_tol >= 0.0)) throw std::invalid_argument("improve_tol must be non-negative");
    }

    bool estimates_beta() const noexcept { return spatial && !pin_beta; }
};

struct ModelParams {
    ComponentParams components;
    GibbsParams gibbs;

    std::size_t K() const noexcept { return components.K(); }
};

struct FitResult {
    ModelParams params;
    LabelField labels;  // row argmax of w
    Responsibilities w; // posterior at the best iteration, under its simulated field
    LabelField field;   // simulated field at the best iteration
    std::vector<double> loglik_trace;
    double best_loglik = -std::numeric_limits<double>::infinity();
    std::size_t best_iteration = 0;
    std::size_t d = 0;
    double bic = -std::numeric_limits<double>::infinity();
    std::size_t iterations = 0;
    std::uint64_t seed = 0;
    bool converged = false;
    std::size_t selected_start = 0;
    std::vector<std::string> warnings;

    std::vector<std::size_t> occupancy() const {
        std::vector<std::size_t> n(params.K(), 0);
        for (int z : labels) ++n[static_cast<std::size_t>(z)];
        return n;
    }
};

namespace detail {

struct Evaluation {
    double loglik = 0.0; // full pmf, coefficient included
    Responsibilities w;
};

// Posterior and approximated observed log-likelihood from log t and component kernels.
inline Evaluation evaluate(const CountMatrix& data, const RowMatrix& log_prior, const RowMatrix& kernels) {
    Evaluation ev;
    ev.w.resize(log_prior.rows(), log_prior.cols());
    std::vector<double> joint(static_cast<std::size_t>(log_prior.cols()));
    for (Eigen::Index i = 0; i < log_prior.rows(); ++i) {
        for (Eigen::Index k = 0; k < log_prior.cols(); ++k) joint[static_cast<std::size_t>(k)] = log_prior(i, k) + kernels(i, k);
        const double z = log_sum_exp(joint);
        if (!std::isfinite(z)) {
            throw numeric_error("every component has zero density at region " + std::to_string(i));
        }
        for (Eigen::Index k = 0; k < log_prior.cols(); ++k) ev.w(i, k) = std::exp(joint[static_cast<std::size_t>(k)] - z);
        ev.loglik += z + data.log_coefficient(static_cast<std::size_t>(i));
    }
    return ev;
}

inline void check_shapes(const CountMatrix& data, std::span<const int> field, const AdjacencyGraph& graph,
                         const ModelParams& params) {
    if (data.n() != graph.size()) throw dimension_error("data has " + std::to_string(data.n()) + " regions but graph has " + std::to_string(graph.size()) + " nodes");
    if (data.J() != params.components.J()) throw dimension_error("data and components disagree on J");
    if (params.components.K() != params.gibbs.K()) throw dimension_error("components and Gibbs parameters disagree on K");
    check_labels(field, graph.size(), params.K());
}

} // namespace detail

/// w_ik proportional to t_ik(field) f(y_i | lambda_k).
inline Responsibilities e_step(const CountMatrix& data, std::span<const int> field, const AdjacencyGraph& graph,
                               const ModelParams& params) {
    detail::check_shapes(data, field, graph, params);
    return detail::evaluate(data, conditional_log_prior_matrix(field, graph, params.gibbs),
                            component_log_kernels(data, params.components))
        .w;
}

/// Row argmax; ties go to the lowest component index.
inline LabelField c_step(const Responsibilities& w) {
    LabelField z(static_cast<std::size_t>(w.rows()));
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
        Eigen::Index best = 0;
        for (Eigen::Index k = 1; k < w.cols(); ++k) {
            if (w(i, k) > w(i, best)) best = k;
        }
        z[static_cast<std::size_t>(i)] = static_cast<int>(best);
    }
    return z;
}

inline RowMatrix pooled_proportions(const CountMatrix& data) {
    RowMatrix p = data.counts().colwise().sum().cast<double>();
    p /= p.sum();
    return p;
}

/// lambda_kj = sum_i w_ik y_ij / sum_i w_ik m_i, floored and renormalised.
///
/// A component whose total weight is below 1e-8 is re-seeded at the pooled proportions,
/// each entry scaled by a factor in [0.95, 1.05] drawn from `rng` when one is given; its
/// index is appended to `reseeded`.
inline ComponentParams m_step_lambda(const CountMatrix& data, const Responsibilities& w, Rng* rng = nullptr,
                                     std::vector<std::size_t>* reseeded = nullptr) {
    if (static_cast<std::size_t>(w.rows()) != data.n()) throw dimension_error("responsibilities and data disagree on n");
    const Eigen::Index K = w.cols();
    const Eigen::Index J = static_cast<Eigen::Index>(data.J());
    RowMatrix lambda = RowMatrix::Zero(K, J);
    Eigen::VectorXd mass = Eigen::VectorXd::Zero(K);
    Eigen::VectorXd exposure = Eigen::VectorXd::Zero(K);
    for (std::size_t i = 0; i < data.n(); ++i) {
        const auto y = data.row(i);
        const double m = static_cast<double>(data.total(i));
        for (Eigen::Index k = 0; k < K; ++k) {
            const double wik = w(static_cast<Eigen::Index>(i), k);
            if (wik == 0.0) continue;
            mass[k] += wik;
            exposure[k] += wik * m;
            for (Eigen::Index j = 0; j < J; ++j) lambda(k, j) += wik * static_cast<double>(y[static_cast<std::size_t>(j)]);
        }
    }
    RowMatrix pooled;
    for (Eigen::Index k = 0; k < K; ++k) {
        if (mass[k] < 1e-8) {
            if (pooled.size() == 0) pooled = pooled_proportions(data);
            lambda.row(k) = pooled;
            if (rng) {
                for (Eigen::Index j = 0; j < J; ++j) lambda(k, j) *= 0.95 + 0.1 * uniform01(*rng);
            }
            lambda.row(k) /= lambda.row(k).sum();
            if (reseeded) reseeded->push_back(static_cast<std::size_t>(k));
        } else {
            lambda.row(k) /= exposure[k];
        }
    }
    ComponentParams out(std::move(lambda));
    out.floor_and_normalize();
    return out;
}

/// Expected complete pseudo-log-likelihood sum_i sum_k w_ik [log t_ik + sum_j y_ij log lambda_kj]
/// (multinomial coefficient omitted).
inline double q_value(const CountMatrix& data, const Responsibilities& w, std::span<const int> field,
                      const AdjacencyGraph& graph, const ModelParams& params) {
    detail::check_shapes(data, field, graph, params);
    const RowMatrix log_t = conditional_log_prior_matrix(field, graph, params.gibbs);
    const RowMatrix kernels = component_log_kernels(data, params.components);
    double q = 0.0;
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
        for (Eigen::Index k = 0; k < w.cols(); ++k) {
            if (w(i, k) != 0.0) q += w(i, k) * (log_t(i, k) + kernels(i, k));
        }
    }
    return q;
}

/// sum_i log sum_k t_ik(field) f(y_i | lambda_k), full multinomial pmf.
inline double observed_loglik_approx(const CountMatrix& data, std::span<const int> field,
                                     const AdjacencyGraph& graph, const ModelParams& params) {
    detail::check_shapes(data, field, graph, params);
    return detail::evaluate(data, conditional_log_prior_matrix(field, graph, params.gibbs),
                            component_log_kernels(data, params.components))
        .loglik;
}

inline RowMatrix random_simplex_rows(std::size_t rows, std::size_t J, Rng& rng) {
    RowMatrix out(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(J));
    for (Eigen::Index k = 0; k < out.rows(); ++k) {
        for (Eigen::Index j = 0; j < out.cols(); ++j) out(k, j) = uniform01(rng);
        out.row(k) /= out.row(k).sum();
    }
    return out;
}

namespace detail {

inline RowMatrix one_hot(const LabelField& z, std::size_t K) {
    RowMatrix w = RowMatrix::Zero(static_cast<Eigen::Index>(z.size()), static_cast<Eigen::Index>(K));
    for (std::size_t i = 0; i < z.size(); ++i) w(static_cast<Eigen::Index>(i), z[i]) = 1.0;
    return w;
}

// One simulated-field CEM chain with best-snapshot tracking.
class Chain {
public:
    Chain(const CountMatrix& data, const AdjacencyGraph& graph, const FitConfig& cfg, ModelParams init,
          LabelField field, Rng field_rng, Rng aux_rng)
        : data_(&data), graph_(&graph), cfg_(&cfg), params_(std::move(init)), field_(std::move(field)),
          field_rng_(std::move(field_rng)), aux_rng_(std::move(aux_rng)) {
        params_.components.floor_and_normalize();
        check_shapes(data, field_, graph, params_);
        kernels_ = component_log_kernels(data, params_.components);
        record(detail::evaluate(data, conditional_log_prior_matrix(field_, graph, params_.gibbs), kernels_), 0);
    }

    // Runs up to `max_steps` iterations; stops once `patience` successive iterations fail to improve.
    void run(std::size_t max_steps, std::size_t patience) {
        for (std::size_t s = 0; s < max_steps; ++s) {
            step();
            if (since_improvement_ >= patience) {
                converged_ = true;
                return;
            }
        }
    }

    void restart_from_best() {
        params_ = best_.params;
        field_ = best_.field;
        kernels_ = component_log_kernels(*data_, params_.components);
        since_improvement_ = 0;
        converged_ = false;
    }

    double best_loglik() const noexcept { return best_.best_loglik; }
    bool converged() const noexcept { return converged_; }

    FitResult result() const {
        FitResult r = best_;
        r.loglik_trace = trace_;
        r.iterations = iterations_;
        r.converged = converged_;
        r.seed = cfg_->seed;
        r.d = free_params(params_.K(), data_->J(), cfg_->estimates_beta());
        r.bic = bic(r.best_loglik, r.d, data_->n());
        if (reseed_events_ > 0) {
            r.warnings.push_back(std::to_string(reseed_events_) + " empty-component re-seeding event(s)");
        }
        return r;
    }

private:
    void step() {
        const FitConfig& cfg = *cfg_;
        const std::size_t K = params_.K();
        if (cfg.spatial) {
            const RowMatrix* emission = cfg.field_mode == FieldMode::posterior ? &kernels_ : nullptr;
            for (std::size_t s = 0; s < cfg.field_sweeps; ++s) gibbs_sweep(field_, *graph_, params_.gibbs, field_rng_, emission);
        }
        const Responsibilities w =
            detail::evaluate(*data_, conditional_log_prior_matrix(field_, *graph_, params_.gibbs), kernels_).w;
        const LabelField hard = c_step(w);

        std::vector<std::size_t> reseeded;
        ModelParams next;
        next.components = m_step_lambda(*data_, w, &aux_rng_, &reseeded);
        reseed_events_ += reseeded.size();

        GibbsFitOptions gopt;
        gopt.method = cfg.gibbs_method;
        gopt.pin_beta = !cfg.estimates_beta();
        gopt.anneal = cfg.anneal;
        if (cfg.hard_gibbs_weights) {
            next.gibbs = fit_gibbs_params(one_hot(hard, K), field_, *graph_, params_.gibbs, gopt, &aux_rng_);
        } else {
            next.gibbs = fit_gibbs_params(w, field_, *graph_, params_.gibbs, gopt, &aux_rng_);
        }
        params_ = std::move(next);
        kernels_ = component_log_kernels(*data_, params_.components);
        ++iterations_;
        record(detail::evaluate(*data_, conditional_log_prior_matrix(field_, *graph_, params_.gibbs), kernels_),
               iterations_);
    }

    void record(Evaluation ev, std::size_t iteration) {
        trace_.push_back(ev.loglik);
        const bool first = trace_.size() == 1;
        // Patience counts only gains above the tolerance; the snapshot follows any strict increase.
        if (first || ev.loglik > best_.best_loglik + cfg_->improve_tol) {
            since_improvement_ = 0;
        } else {
            ++since_improvement_;
        }
        if (first || ev.loglik > best_.best_loglik) {
            best_.params = params_;
            best_.field = field_;
            best_.labels = c_step(ev.w);
            best_.w = std::move(ev.w);
            best_.best_loglik = ev.loglik;
            best_.best_iteration = iteration;
        }
    }

    const CountMatrix* data_;
    const AdjacencyGraph* graph_;
    const FitConfig* cfg_;
    ModelParams params_;
    LabelField field_;
    Rng field_rng_;
    Rng aux_rng_;
    RowMatrix kernels_;
    FitResult best_;
    std::vector<double> trace_;
    std::size_t iterations_ = 0;
    std::size_t since_improvement_ = 0;
    std::size_t reseed_events_ = 0;
    bool converged_ = false;
};

// Stream layout under the master seed: start s uses 3s (init), 3s+1 (field), 3s+2 (aux).
inline std::uint64_t stream_id(std::size_t start, std::size_t role) { return 3 * static_cast<std::uint64_t>(start) + role; }

inline void check_fit_inputs(const CountMatrix& data, const AdjacencyGraph& graph, const FitConfig& cfg) {
    cfg.validate();
    if (data.n() != graph.size()) {
        throw dimension_error("data has " + std::to_string(data.n()) + " regions but graph has " +
                              std::to_string(graph.size()) + " nodes");
    }
}

inline FitResult finish(Chain& chain, const CountMatrix& data, const FitConfig& cfg, std::size_t start) {
    FitResult r = chain.result();
    r.selected_start = start;
    const auto ident = check_identifiability(data, cfg.K);
    if (!ident.ok) r.warnings.insert(r.warnings.begin(), ident.message);
    return r;
}

} // namespace detail

/// Simulated-field CEM fit with multi-start initialisation.
///
/// n_starts chains are started from random category probabilities (uniform draws, normalised),
/// alpha = beta = 0 and a uniform random field, and each is run for short_run_iter iterations.
/// The chain with the highest approximated observed log-likelihood then continues for up to
/// max_iter further iterations, stopping after `patience` iterations without improvement.
/// The best snapshot seen is returned.
inline FitResult fit(const CountMatrix& data, const AdjacencyGraph& graph, const FitConfig& cfg) {
    detail::check_fit_inputs(data, graph, cfg);
    std::vector<std::optional<detail::Chain>> chains(cfg.n_starts);
    parallel_for(cfg.n_starts, cfg.threads, [&](std::size_t s) {
        Rng init_rng = make_rng(cfg.seed, detail::stream_id(s, 0));
        Rng field_rng = make_rng(cfg.seed, detail::stream_id(s, 1));
        ModelParams init{ComponentParams(random_simplex_rows(cfg.K, data.J(), init_rng)), GibbsParams::zeros(cfg.K)};
        LabelField field = uniform_field(data.n(), cfg.K, field_rng);
        auto& chain = chains[s].emplace(data, graph, cfg, std::move(init), std::move(field), std::move(field_rng),
                                        make_rng(cfg.seed, detail::stream_id(s, 2)));
        chain.run(cfg.short_run_iter, cfg.patience);
    });
    std::size_t chosen = 0;
    for (std::size_t s = 1; s < chains.size(); ++s) {
        if (chains[s]->best_loglik() > chains[chosen]->best_loglik()) chosen = s;
    }
    detail::Chain& chain = *chains[chosen];
    chain.restart_from_best();
    chain.run(cfg.max_iter, cfg.patience);
    return detail::finish(chain, data, cfg, chosen);
}

/// Fit with cfg.K = previous.K + 1, initialised from `previous`: its category probabilities plus
/// one random row, its Gibbs parameters extended by a zero entry, and its labels as the field.
inline FitResult fit_with_warm_start(const CountMatrix& data, const AdjacencyGraph& graph, const FitConfig& cfg,
                                     const FitResult& previous) {
    detail::check_fit_inputs(data, graph, cfg);
    if (previous.params.K() + 1 != cfg.K) {
        throw dimension_error("warm start needs a previous fit with K-1 = " + std::to_string(cfg.K - 1) +
                              " components, got " + std::to_string(previous.params.K()));
    }
    if (previous.params.components.J() != data.J() || previous.labels.size() != data.n()) {
        throw dimension_error("previous fit does not match the data");
    }
    Rng init_rng = make_rng(cfg.seed, detail::stream_id(0, 0));
    RowMatrix lambda(static_cast<Eigen::Index>(cfg.K), static_cast<Eigen::Index>(data.J()));
    lambda.topRows(static_cast<Eigen::Index>(cfg.K - 1)) = previous.params.components.lambda();
    lambda.bottomRows(1) = random_simplex_rows(1, data.J(), init_rng);
    ModelParams init{ComponentParams(std::move(lambda)), previous.params.gibbs.extended()};
    if (!cfg.estimates_beta()) init.gibbs.beta.setZero();
    detail::Chain chain(data, graph, cfg, std::move(init), previous.labels, make_rng(cfg.seed, detail::stream_id(0, 1)),
                        make_rng(cfg.seed, detail::stream_id(0, 2)));
    chain.run(cfg.max_iter, cfg.patience);
    return detail::finish(chain, data, cfg, 0);
}

} // namespace spatmix
