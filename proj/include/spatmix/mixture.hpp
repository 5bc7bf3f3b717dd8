#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "errors.hpp"

namespace spatmix {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CountArray = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Lower bound applied to every category probability after an M-step.
inline constexpr double kLambdaFloor = 1e-10;

inline double log_sum_exp(std::span<const double> v) {
    double hi = -std::numeric_limits<double>::infinity();
    for (double x : v) hi = std::max(hi, x);
    if (!std::isfinite(hi)) return hi;
    double s = 0.0;
    for (double x : v) s += std::exp(x - hi);
    return hi + std::log(s);
}

inline std::span<const double> row_span(const RowMatrix& m, Eigen::Index i) {
    return {m.data() + i * m.cols(), static_cast<std::size_t>(m.cols())};
}

inline std::span<double> row_span(RowMatrix& m, Eigen::Index i) {
    return {m.data() + i * m.cols(), static_cast<std::size_t>(m.cols())};
}

/// n regions x J categories of non-negative counts with cached row totals and
/// log multinomial coefficients.
class CountMatrix {
public:
    CountMatrix() = default;

    explicit CountMatrix(CountArray y) : y_(std::move(y)) {
        if (y_.cols() < 2) throw std::invalid_argument("count matrix needs at least 2 categories");
        if (y_.rows() < 1) throw std::invalid_argument("count matrix needs at least 1 region");
        totals_.resize(y_.rows());
        log_coef_.resize(y_.rows());
        for (Eigen::Index i = 0; i < y_.rows(); ++i) {
            std::int64_t m = 0;
            double lc = 0.0;
            for (Eigen::Index j = 0; j < y_.cols(); ++j) {
                const auto c = y_(i, j);
                if (c < 0) {
                    throw std::invalid_argument("negative count at region " + std::to_string(i) + ", category " +
                                                std::to_string(j));
                }
                m += c;
                lc -= std::lgamma(static_cast<double>(c) + 1.0);
            }
            if (m < 1) throw std::invalid_argument("region " + std::to_string(i) + " has zero total count");
            totals_[static_cast<std::size_t>(i)] = m;
            log_coef_[static_cast<std::size_t>(i)] = lc + std::lgamma(static_cast<double>(m) + 1.0);
        }
    }

    static CountMatrix from_rows(const std::vector<std::vector<std::int64_t>>& rows) {
        if (rows.empty()) throw std::invalid_argument("count matrix needs at least 1 region");
        CountArray y(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (rows[i].size() != rows.front().size()) throw dimension_error("ragged count rows");
            for (std::size_t j = 0; j < rows[i].size(); ++j) {
                y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
            }
        }
        return CountMatrix(std::move(y));
    }

    std::size_t n() const noexcept { return static_cast<std::size_t>(y_.rows()); }
    std::size_t J() const noexcept { return static_cast<std::size_t>(y_.cols()); }
    const CountArray& counts() const noexcept { return y_; }
    std::int64_t total(std::size_t i) const { return totals_[i]; }
    std::span<const std::int64_t> totals() const noexcept { return totals_; }
    // log m_i! - sum_j log y_ij!
    double log_coefficient(std::size_t i) const { return log_coef_[i]; }

    std::span<const std::int64_t> row(std::size_t i) const {
        return {y_.data() + static_cast<Eigen::Index>(i) * y_.cols(), J()};
    }

    friend bool operator==(const CountMatrix& a, const CountMatrix& b) { return a.y_ == b.y_; }

private:
    CountArray y_;
    std::vector<std::int64_t> totals_;
    std::vector<double> log_coef_;
};

/// K multinomial probability vectors over J categories (one per row).
class ComponentParams {
public:
    ComponentParams() = default;

    explicit ComponentParams(RowMatrix lambda) : lambda_(std::move(lambda)) {
        for (Eigen::Index k = 0; k < lambda_.rows(); ++k) {
            const double s = lambda_.row(k).sum();
            if (!(std::abs(s - 1.0) < 1e-8) || (lambda_.row(k).array() < 0.0).any()) {
                throw std::invalid_argument("component " + std::to_string(k) + " is not a probability vector");
            }
        }
    }

    std::size_t K() const noexcept { return static_cast<std::size_t>(lambda_.rows()); }
    std::size_t J() const noexcept { return static_cast<std::size_t>(lambda_.cols()); }
    const RowMatrix& lambda() const noexcept { return lambda_; }
    std::span<const double> row(std::size_t k) const { return row_span(lambda_, static_cast<Eigen::Index>(k)); }

    // Clamps every entry below at `floor` and renormalises each row.
    void floor_and_normalize(double floor = kLambdaFloor) {
        for (Eigen::Index k = 0; k < lambda_.rows(); ++k) {
            auto r = lambda_.row(k);
            r = r.cwiseMax(floor);
            r /= r.sum();
        }
    }

    RowMatrix log_lambda() const { return lambda_.array().log().matrix(); }

private:
    RowMatrix lambda_;
};

/// Multinomial log pmf. With include_coefficient unset only sum_j y_j log lambda_j is returned.
inline double log_multinomial_pmf(std::span<const std::int64_t> y, std::span<const double> lambda,
                                  bool include_coefficient) {
    if (y.size() != lambda.size()) throw dimension_error("count vector and probability vector lengths differ");
    double s = 0.0;
    std::int64_t m = 0;
    double log_fact = 0.0;
    for (std::size_t j = 0; j < y.size(); ++j) {
        if (y[j] < 0) throw std::invalid_argument("negative count");
        m += y[j];
        if (y[j] == 0) continue;
        if (!(lambda[j] > 0.0)) {
            throw numeric_error("zero probability for category " + std::to_string(j) + " with positive count");
        }
        s += static_cast<double>(y[j]) * std::log(lambda[j]);
        if (include_coefficient) log_fact += std::lgamma(static_cast<double>(y[j]) + 1.0);
    }
    if (include_coefficient) s += std::lgamma(static_cast<double>(m) + 1.0) - log_fact;
    return s;
}

/// n x K matrix of sum_j y_ij log lambda_kj (no coefficient).
inline RowMatrix component_log_kernels(const CountMatrix& data, const ComponentParams& params) {
    if (data.J() != params.J()) throw dimension_error("data and components disagree on J");
    const RowMatrix log_lambda = params.log_lambda();
    RowMatrix out(static_cast<Eigen::Index>(data.n()), static_cast<Eigen::Index>(params.K()));
    for (std::size_t i = 0; i < data.n(); ++i) {
        const auto y = data.row(i);
        for (std::size_t k = 0; k < params.K(); ++k) {
            double s = 0.0;
            for (std::size_t j = 0; j < y.size(); ++j) {
                if (y[j] != 0) s += static_cast<double>(y[j]) * log_lambda(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j));
            }
            out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = s;
        }
    }
    return out;
}

inline void check_weights(std::span<const double> p) {
    double s = 0.0;
    for (double x : p) {
        if (!(x >= 0.0)) throw std::invalid_argument("mixing weights must be non-negative");
        s += x;
    }
    if (std::abs(s - 1.0) > 1e-10) throw std::invalid_argument("mixing weights must sum to 1");
}

/// Log-likelihood of the non-spatial mixture sum_i log sum_k p_k f(y_i | lambda_k), full pmf.
inline double standard_mixture_loglik(const CountMatrix& data, const ComponentParams& params,
                                      std::span<const double> weights) {
    if (weights.size() != params.K()) throw dimension_error("weights and components disagree on K");
    check_weights(weights);
    const RowMatrix kernels = component_log_kernels(data, params);
    std::vector<double> terms(params.K());
    double ll = 0.0;
    for (std::size_t i = 0; i < data.n(); ++i) {
        for (std::size_t k = 0; k < params.K(); ++k) {
            terms[k] = std::log(weights[k]) + kernels(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
        }
        ll += log_sum_exp(terms) + data.log_coefficient(i);
    }
    return ll;
}

struct IdentifiabilityCheck {
    bool ok = true;
    std::int64_t min_total = 0;
    std::int64_t required = 0; // 2K - 1
    std::string message;
};

// Generic identifiability of a K-component multinomial mixture needs m >= 2K - 1.
// Only warns; fitting proceeds regardless.
inline IdentifiabilityCheck check_identifiability(const CountMatrix& data, std::size_t K) {
    if (K < 1) throw std::invalid_argument("K must be at least 1");
    IdentifiabilityCheck c;
    c.required = 2 * static_cast<std::int64_t>(K) - 1;
    c.min_total = *std::min_element(data.totals().begin(), data.totals().end());
    c.ok = c.min_total >= c.required;
    if (!c.ok) {
        c.message = "smallest row total " + std::to_string(c.min_total) + " is below 2K-1 = " +
                    std::to_string(c.required) + "; the mixture may not be identifiable";
    }
    return c;
}

} // namespace spatmix
