#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "errors.hpp"
#include "graph.hpp"
#include "mixture.hpp"
#include "rng.hpp"

namespace spatmix {

/// Intercepts and interaction strengths of the Strauss automodel prior
///   t_ik  proportional to  exp(alpha_k + beta_k (n_ik - n_ik^c)).
/// Component 0 is the reference: alpha_0 = beta_0 = 0.
struct GibbsParams {
    Eigen::VectorXd alpha;
    Eigen::VectorXd beta;

    static GibbsParams zeros(std::size_t K) {
        return {Eigen::VectorXd::Zero(static_cast<Eigen::Index>(K)), Eigen::VectorXd::Zero(static_cast<Eigen::Index>(K))};
    }

    std::size_t K() const noexcept { return static_cast<std::size_t>(alpha.size()); }

    void validate() const {
        if (alpha.size() != beta.size()) throw dimension_error("alpha and beta lengths differ");
        if (alpha.size() < 1) throw std::invalid_argument("Gibbs parameters need at least one component");
        if (alpha[0] != 0.0 || beta[0] != 0.0) {
            throw std::invalid_argument("reference component must have alpha = beta = 0");
        }
        if (!alpha.allFinite() || !beta.allFinite()) throw numeric_error("non-finite Gibbs parameter");
    }

    // Same parameters with one extra component appended at alpha = beta = 0.
    GibbsParams extended() const {
        GibbsParams g = zeros(K() + 1);
        g.alpha.head(alpha.size()) = alpha;
        g.beta.head(beta.size()) = beta;
        return g;
    }
};

/// Pairwise potential on component indicators: -1 when both sites sit in the component, +1 otherwise.
constexpr int potential(int z_ik, int z_jk) noexcept { return (z_ik * z_jk == 1) ? -1 : 1; }

namespace detail {

// eta_k = alpha_k + beta_k (2 n_ik - deg_i) for node i; `tally` is scratch of size K.
inline void prior_logits(std::size_t i, std::span<const int> labels, const AdjacencyGraph& graph,
                         const GibbsParams& params, std::span<int> tally, std::span<double> eta) {
    std::fill(tally.begin(), tally.end(), 0);
    for (auto j : graph.neighbors(i)) ++tally[static_cast<std::size_t>(labels[j])];
    const int deg = static_cast<int>(graph.degree(i));
    for (std::size_t k = 0; k < eta.size(); ++k) {
        eta[k] = params.alpha[static_cast<Eigen::Index>(k)] +
                 params.beta[static_cast<Eigen::Index>(k)] * static_cast<double>(2 * tally[k] - deg);
    }
}

inline void normalize_log(std::span<double> v) {
    const double z = log_sum_exp(v);
    for (double& x : v) x -= z;
}

} // namespace detail

/// log t_i. for one node given the current labelling of its neighbours.
inline std::vector<double> conditional_log_prior(std::size_t i, std::span<const int> labels,
                                                 const AdjacencyGraph& graph, const GibbsParams& params) {
    const std::size_t K = params.K();
    std::vector<int> tally(K);
    std::vector<double> eta(K);
    detail::prior_logits(i, labels, graph, params, tally, eta);
    detail::normalize_log(eta);
    return eta;
}

inline std::vector<double> conditional_prior(std::size_t i, std::span<const int> labels,
                                             const AdjacencyGraph& graph, const GibbsParams& params) {
    auto t = conditional_log_prior(i, labels, graph, params);
    for (double& x : t) x = std::exp(x);
    return t;
}

/// n x K matrix of log t_ik for every node under a fixed field.
inline RowMatrix conditional_log_prior_matrix(std::span<const int> labels, const AdjacencyGraph& graph,
                                              const GibbsParams& params) {
    const std::size_t K = params.K();
    check_labels(labels, graph.size(), K);
    RowMatrix out(static_cast<Eigen::Index>(graph.size()), static_cast<Eigen::Index>(K));
    std::vector<int> tally(K);
    for (std::size_t i = 0; i < graph.size(); ++i) {
        auto eta = row_span(out, static_cast<Eigen::Index>(i));
        detail::prior_logits(i, labels, graph, params, tally, eta);
        detail::normalize_log(eta);
    }
    return out;
}

namespace detail {

// Draws an index from unnormalised log weights by inversion.
inline int sample_log_weights(std::span<double> logw, Rng& rng) {
    const double hi = *std::max_element(logw.begin(), logw.end());
    double total = 0.0;
    for (double& x : logw) {
        x = std::exp(x - hi);
        total += x;
    }
    double u = uniform01(rng) * total;
    for (std::size_t k = 0; k + 1 < logw.size(); ++k) {
        if (u < logw[k]) return static_cast<int>(k);
        u -= logw[k];
    }
    return static_cast<int>(logw.size() - 1);
}

} // namespace detail

/// One systematic-scan Gibbs sweep over nodes 0..n-1, updating `labels` in place.
///
/// Each node is redrawn from its conditional prior given the partially updated field.
/// When `log_emission` (n x K) is supplied the draw is from the conditional posterior
///   P(z_i = k | y_i, z_{N_i})  proportional to  t_ik f(y_i | lambda_k).
inline void gibbs_sweep(LabelField& labels, const AdjacencyGraph& graph, const GibbsParams& params, Rng& rng,
                        const RowMatrix* log_emission = nullptr) {
    const std::size_t K = params.K();
    check_labels(labels, graph.size(), K);
    if (log_emission && (static_cast<std::size_t>(log_emission->rows()) != graph.size() ||
                         static_cast<std::size_t>(log_emission->cols()) != K)) {
        throw dimension_error("emission matrix shape does not match graph and K");
    }
    std::vector<int> tally(K);
    std::vector<double> eta(K);
    for (std::size_t i = 0; i < graph.size(); ++i) {
        detail::prior_logits(i, labels, graph, params, tally, eta);
        if (log_emission) {
            for (std::size_t k = 0; k < K; ++k) {
                eta[k] += (*log_emission)(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
            }
        }
        labels[i] = detail::sample_log_weights(eta, rng);
    }
}

inline LabelField uniform_field(std::size_t n, std::size_t K, Rng& rng) {
    LabelField z(n);
    for (auto& v : z) v = static_cast<int>(std::min<std::size_t>(K - 1, static_cast<std::size_t>(uniform01(rng) * static_cast<double>(K))));
    return z;
}

// ---------------------------------------------------------------------------------------------
// Maximisation of sum_i sum_k w_ik log t_ik over (alpha_k, beta_k), k >= 1.

enum class GibbsMethod { newton, anneal };

struct AnnealSchedule {
    double initial_temperature = 1.0;
    double cooling = 0.95;
    std::size_t epochs = 200;
    std::size_t moves_per_epoch = 20;
    double proposal_sd = 0.25;
};

struct GibbsFitOptions {
    GibbsMethod method = GibbsMethod::newton;
    bool pin_beta = false; // beta held at 0: non-spatial mixing weights through alpha only
    double bound = 15.0;   // box on every free alpha_k, beta_k
    std::size_t max_newton_iter = 200;
    double gradient_tol = 1e-10;
    AnnealSchedule anneal;
};

/// The pseudo-likelihood prior term G(alpha, beta) = sum_i sum_k w_ik log t_ik for a fixed field.
class GibbsObjective {
public:
    GibbsObjective(const RowMatrix& w, const NeighborCounts& counts) : w_(w) {
        if (static_cast<std::size_t>(w.rows()) != counts.n || static_cast<std::size_t>(w.cols()) != counts.K) {
            throw dimension_error("responsibilities and neighbour counts disagree");
        }
        balance_.resize(w.rows(), w.cols());
        row_mass_.resize(w.rows());
        for (Eigen::Index i = 0; i < w.rows(); ++i) {
            row_mass_[i] = w.row(i).sum();
            for (Eigen::Index k = 0; k < w.cols(); ++k) {
                balance_(i, k) = counts.balance(static_cast<std::size_t>(i), static_cast<std::size_t>(k));
            }
        }
    }

    GibbsObjective(const RowMatrix& w, std::span<const int> field, const AdjacencyGraph& graph)
        : GibbsObjective(w, neighbor_counts(graph, field, static_cast<std::size_t>(w.cols()))) {}

    std::size_t K() const noexcept { return static_cast<std::size_t>(w_.cols()); }
    const RowMatrix& balance() const noexcept { return balance_; }

    double value(const GibbsParams& p) const {
        const auto K = w_.cols();
        std::vector<double> eta(static_cast<std::size_t>(K));
        double g = 0.0;
        for (Eigen::Index i = 0; i < w_.rows(); ++i) {
            double dot = 0.0;
            for (Eigen::Index k = 0; k < K; ++k) {
                eta[static_cast<std::size_t>(k)] = p.alpha[k] + p.beta[k] * balance_(i, k);
                if (w_(i, k) != 0.0) dot += w_(i, k) * eta[static_cast<std::size_t>(k)];
            }
            g += dot - row_mass_[i] * log_sum_exp(eta);
        }
        return g;
    }

    // Gradient and Hessian over the packed free parameters
    // (alpha_1..alpha_{K-1}[, beta_1..beta_{K-1}]).
    void derivatives(const GibbsParams& p, bool with_beta, Eigen::VectorXd& grad, Eigen::MatrixXd& hess) const {
        const Eigen::Index K = w_.cols();
        const Eigen::Index F = K - 1;
        const Eigen::Index dim = with_beta ? 2 * F : F;
        grad.setZero(dim);
        hess.setZero(dim, dim);
        std::vector<double> t(static_cast<std::size_t>(K));
        for (Eigen::Index i = 0; i < w_.rows(); ++i) {
            for (Eigen::Index k = 0; k < K; ++k) t[static_cast<std::size_t>(k)] = p.alpha[k] + p.beta[k] * balance_(i, k);
            detail::normalize_log(t);
            for (double& x : t) x = std::exp(x);
            const double s = row_mass_[i];
            for (Eigen::Index a = 1; a < K; ++a) {
                const double r = w_(i, a) - s * t[static_cast<std::size_t>(a)];
                const double da = balance_(i, a);
                grad[a - 1] += r;
                if (with_beta) grad[F + a - 1] += r * da;
                for (Eigen::Index b = 1; b < K; ++b) {
                    const double cov = s * t[static_cast<std::size_t>(a)] * ((a == b ? 1.0 : 0.0) - t[static_cast<std::size_t>(b)]);
                    const double db = balance_(i, b);
                    hess(a - 1, b - 1) -= cov;
                    if (with_beta) {
                        hess(a - 1, F + b - 1) -= cov * db;
                        hess(F + a - 1, b - 1) -= cov * da;
                        hess(F + a - 1, F + b - 1) -= cov * da * db;
                    }
                }
            }
        }
    }

    Eigen::VectorXd gradient(const GibbsParams& p, bool with_beta = true) const {
        Eigen::VectorXd g;
        Eigen::MatrixXd h;
        derivatives(p, with_beta, g, h);
        return g;
    }

    double column_mass(std::size_t k) const { return w_.col(static_cast<Eigen::Index>(k)).sum(); }

private:
    RowMatrix w_;
    RowMatrix balance_;
    Eigen::VectorXd row_mass_;
};

namespace detail {

inline Eigen::VectorXd pack(const GibbsParams& p, bool with_beta) {
    const Eigen::Index F = static_cast<Eigen::Index>(p.K()) - 1;
    Eigen::VectorXd x(with_beta ? 2 * F : F);
    x.head(F) = p.alpha.tail(F);
    if (with_beta) x.tail(F) = p.beta.tail(F);
    return x;
}

inline GibbsParams unpack(const Eigen::VectorXd& x, std::size_t K, bool with_beta) {
    GibbsParams p = GibbsParams::zeros(K);
    const Eigen::Index F = static_cast<Eigen::Index>(K) - 1;
    p.alpha.tail(F) = x.head(F);
    if (with_beta) p.beta.tail(F) = x.tail(F);
    return p;
}

inline GibbsParams clamp(GibbsParams p, double bound, bool pin_beta) {
    p.alpha = p.alpha.cwiseMax(-bound).cwiseMin(bound);
    p.beta = pin_beta ? Eigen::VectorXd::Zero(p.beta.size()) : Eigen::VectorXd(p.beta.cwiseMax(-bound).cwiseMin(bound));
    p.alpha[0] = 0.0;
    p.beta[0] = 0.0;
    return p;
}

// Box-constrained Newton ascent with step halving. Coordinates sitting on the box with the
// gradient pointing outward are held fixed for the step.
inline GibbsParams newton_ascent(const GibbsObjective& obj, GibbsParams start, const GibbsFitOptions& opt) {
    const bool with_beta = !opt.pin_beta;
    const std::size_t K = obj.K();
    Eigen::VectorXd x = pack(clamp(std::move(start), opt.bound, opt.pin_beta), with_beta);
    double fx = obj.value(unpack(x, K, with_beta));
    Eigen::VectorXd g;
    Eigen::MatrixXd h;
    for (std::size_t it = 0; it < opt.max_newton_iter; ++it) {
        obj.derivatives(unpack(x, K, with_beta), with_beta, g, h);
        std::vector<Eigen::Index> free;
        for (Eigen::Index c = 0; c < x.size(); ++c) {
            const bool stuck = (x[c] >= opt.bound && g[c] > 0.0) || (x[c] <= -opt.bound && g[c] < 0.0);
            if (!stuck) free.push_back(c);
        }
        if (free.empty()) break;
        const auto m = static_cast<Eigen::Index>(free.size());
        Eigen::VectorXd gf(m);
        Eigen::MatrixXd hf(m, m);
        for (Eigen::Index a = 0; a < m; ++a) {
            gf[a] = g[free[static_cast<std::size_t>(a)]];
            for (Eigen::Index b = 0; b < m; ++b) hf(a, b) = -h(free[static_cast<std::size_t>(a)], free[static_cast<std::size_t>(b)]);
        }
        if (gf.lpNorm<Eigen::Infinity>() < opt.gradient_tol) break;
        const double ridge = 1e-10 * (1.0 + hf.diagonal().cwiseAbs().maxCoeff());
        hf.diagonal().array() += ridge;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(hf);
        Eigen::VectorXd df = ldlt.solve(gf);
        if (ldlt.info() != Eigen::Success || !df.allFinite() || gf.dot(df) <= 0.0) df = gf;
        Eigen::VectorXd dir = Eigen::VectorXd::Zero(x.size());
        for (Eigen::Index a = 0; a < m; ++a) dir[free[static_cast<std::size_t>(a)]] = df[a];

        double step = 1.0;
        bool accepted = false;
        Eigen::VectorXd xn;
        double fn = fx;
        for (int halving = 0; halving < 60; ++halving, step *= 0.5) {
            xn = (x + step * dir).cwiseMax(-opt.bound).cwiseMin(opt.bound);
            fn = obj.value(unpack(xn, K, with_beta));
            if (std::isfinite(fn) && fn >= fx) {
                accepted = true;
                break;
            }
        }
        if (!accepted) break;
        const double moved = (xn - x).lpNorm<Eigen::Infinity>();
        x = xn;
        fx = fn;
        if (moved < 1e-13) break;
    }
    return unpack(x, K, with_beta);
}

// With beta pinned the optimum is the log-ratio of column masses against the reference.
inline GibbsParams weights_only(const GibbsObjective& obj, const GibbsFitOptions& opt) {
    const std::size_t K = obj.K();
    GibbsParams p = GibbsParams::zeros(K);
    const double ref = obj.column_mass(0);
    for (std::size_t k = 1; k < K; ++k) {
        const double mass = obj.column_mass(k);
        double a;
        if (mass <= 0.0) a = -opt.bound;
        else if (ref <= 0.0) a = opt.bound;
        else a = std::log(mass) - std::log(ref);
        p.alpha[static_cast<Eigen::Index>(k)] = std::clamp(a, -opt.bound, opt.bound);
    }
    return p;
}

inline GibbsParams anneal(const GibbsObjective& obj, GibbsParams start, const GibbsFitOptions& opt, Rng& rng) {
    const bool with_beta = !opt.pin_beta;
    const std::size_t K = obj.K();
    std::normal_distribution<double> step(0.0, opt.anneal.proposal_sd);
    Eigen::VectorXd x = pack(clamp(std::move(start), opt.bound, opt.pin_beta), with_beta);
    double fx = obj.value(unpack(x, K, with_beta));
    Eigen::VectorXd best = x;
    double fbest = fx;
    double temperature = opt.anneal.initial_temperature;
    for (std::size_t e = 0; e < opt.anneal.epochs; ++e) {
        for (std::size_t mv = 0; mv < opt.anneal.moves_per_epoch; ++mv) {
            Eigen::VectorXd y = x;
            for (Eigen::Index c = 0; c < y.size(); ++c) y[c] = std::clamp(y[c] + step(rng), -opt.bound, opt.bound);
            const double fy = obj.value(unpack(y, K, with_beta));
            if (!std::isfinite(fy)) continue;
            if (fy >= fx || uniform01(rng) < std::exp((fy - fx) / temperature)) {
                x = std::move(y);
                fx = fy;
                if (fx > fbest) {
                    best = x;
                    fbest = fx;
                }
            }
        }
        temperature *= opt.anneal.cooling;
    }
    return newton_ascent(obj, unpack(best, K, with_beta), opt);
}

} // namespace detail

/// Maximises the prior term of the expected complete pseudo-log-likelihood over the free
/// Gibbs parameters, for a fixed simulated field. Never returns a point worse than `init`.
inline GibbsParams fit_gibbs_params(const RowMatrix& w, std::span<const int> field, const AdjacencyGraph& graph,
                                    const GibbsParams& init, const GibbsFitOptions& opt, Rng* rng = nullptr) {
    init.validate();
    if (init.K() != static_cast<std::size_t>(w.cols())) throw dimension_error("init and responsibilities disagree on K");
    if (static_cast<std::size_t>(w.rows()) != graph.size()) throw dimension_error("responsibilities and graph disagree on n");
    const GibbsObjective obj(w, field, graph);
    const GibbsParams start = detail::clamp(init, opt.bound, opt.pin_beta);
    const double f0 = obj.value(start);
    if (!std::isfinite(f0)) throw numeric_error("Gibbs objective is not finite at the initial parameters");
    if (init.K() == 1) return start;

    GibbsParams out;
    if (opt.pin_beta) {
        out = detail::weights_only(obj, opt);
    } else if (opt.method == GibbsMethod::anneal) {
        if (!rng) throw std::invalid_argument("annealing needs a random stream");
        out = detail::anneal(obj, start, opt, *rng);
    } else {
        out = detail::newton_ascent(obj, start, opt);
    }
    return obj.value(out) >= f0 ? out : start;
}

} // namespace spatmix
