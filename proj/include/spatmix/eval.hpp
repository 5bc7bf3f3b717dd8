#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "errors.hpp"
#include "graph.hpp"
#include "rng.hpp"

namespace spatmix {

namespace detail {

inline double choose2(double x) { return 0.5 * x * (x - 1.0); }

// Relabels to 0..c-1 in order of first appearance.
inline std::vector<std::size_t> compact_labels(std::span<const int> a, std::size_t& classes) {
    std::map<int, std::size_t> ids;
    std::vector<std::size_t> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        auto [it, inserted] = ids.try_emplace(a[i], ids.size());
        out[i] = it->second;
    }
    classes = ids.size();
    return out;
}

} // namespace detail

/// Adjusted Rand index (Hubert and Arabie) from the contingency table of two partitions.
/// Labels are arbitrary integers. When both partitions are all-singletons or both a single
/// block the index is 0/0 and 1 is returned.
inline double ari(std::span<const int> a, std::span<const int> b) {
    if (a.size() != b.size()) throw dimension_error("partitions have different lengths");
    if (a.size() < 2) throw std::invalid_argument("partitions need at least 2 elements");
    std::size_t ra = 0, rb = 0;
    const auto ca = detail::compact_labels(a, ra);
    const auto cb = detail::compact_labels(b, rb);
    std::vector<double> table(ra * rb, 0.0), rows(ra, 0.0), cols(rb, 0.0);
    for (std::size_t i = 0; i < a.size(); ++i) {
        table[ca[i] * rb + cb[i]] += 1.0;
        rows[ca[i]] += 1.0;
        cols[cb[i]] += 1.0;
    }
    double index = 0.0, sa = 0.0, sb = 0.0;
    for (double x : table) index += detail::choose2(x);
    for (double x : rows) sa += detail::choose2(x);
    for (double x : cols) sb += detail::choose2(x);
    const double expected = sa * sb / detail::choose2(static_cast<double>(a.size()));
    const double max_index = 0.5 * (sa + sb);
    if (max_index == expected) return 1.0;
    return (index - expected) / (max_index - expected);
}

/// Five-year age-group midpoints 2.5, 7.5, ...; the last (open-ended) group gets the next
/// midpoint in sequence, e.g. 87.5 for 85+ when J = 18.
inline std::vector<double> default_age_midpoints(std::size_t J) {
    std::vector<double> m(J);
    for (std::size_t j = 0; j < J; ++j) m[j] = 2.5 + 5.0 * static_cast<double>(j);
    return m;
}

inline double mean_age(std::span<const std::int64_t> y, std::span<const double> midpoints) {
    if (y.size() != midpoints.size()) throw dimension_error("counts and midpoints differ in length");
    double total = 0.0, weighted = 0.0;
    for (std::size_t j = 0; j < y.size(); ++j) {
        if (y[j] < 0) throw std::invalid_argument("negative count");
        total += static_cast<double>(y[j]);
        weighted += static_cast<double>(y[j]) * midpoints[j];
    }
    if (total <= 0.0) throw std::invalid_argument("mean age of an empty region is undefined");
    return weighted / total;
}

namespace detail {

// Row-standardised weights are 1/|N_i| per neighbour.
inline double moran_cross(std::span<const double> dev, const AdjacencyGraph& graph, bool row_standardize,
                          double& s0) {
    double cross = 0.0;
    s0 = 0.0;
    for (std::size_t i = 0; i < graph.size(); ++i) {
        const auto nb = graph.neighbors(i);
        if (nb.empty()) continue;
        const double wgt = row_standardize ? 1.0 / static_cast<double>(nb.size()) : 1.0;
        double acc = 0.0;
        for (auto j : nb) acc += dev[j];
        cross += wgt * dev[i] * acc;
        s0 += wgt * static_cast<double>(nb.size());
    }
    return cross;
}

} // namespace detail

/// Moran's I with adjacency weights (binary by default).
inline double morans_i(std::span<const double> x, const AdjacencyGraph& graph, bool row_standardize = false) {
    if (x.size() != graph.size()) throw dimension_error("variable length does not match graph size");
    if (graph.edge_count() == 0) throw std::invalid_argument("Moran's I needs a graph with at least one edge");
    const double n = static_cast<double>(x.size());
    const double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
    std::vector<double> dev(x.size());
    double ss = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        dev[i] = x[i] - mean;
        ss += dev[i] * dev[i];
    }
    const double scale = std::max(1.0, std::abs(mean));
    if (!(ss > 1e-24 * scale * scale * n)) throw numeric_error("variable is constant; Moran's I is undefined");
    double s0 = 0.0;
    const double cross = detail::moran_cross(dev, graph, row_standardize, s0);
    return (n / s0) * cross / ss;
}

struct MoranResult {
    double I = 0.0;
    double p_value = 1.0;
    std::size_t n_permutations = 0;
};

/// One-sided (positive autocorrelation) permutation test:
/// p = (1 + #{permuted I >= observed I}) / (1 + n_permutations).
inline MoranResult moran_permutation_test(std::span<const double> x, const AdjacencyGraph& graph,
                                          std::size_t n_permutations, std::uint64_t seed,
                                          bool row_standardize = false) {
    if (n_permutations < 99) throw std::invalid_argument("permutation test needs at least 99 permutations");
    MoranResult r;
    r.I = morans_i(x, graph, row_standardize);
    r.n_permutations = n_permutations;
    // Mean and variance are permutation invariant, so only the cross term is recomputed.
    const double n = static_cast<double>(x.size());
    const double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
    std::vector<double> dev(x.size());
    double ss = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        dev[i] = x[i] - mean;
        ss += dev[i] * dev[i];
    }
    double s0 = 0.0;
    const double observed_cross = detail::moran_cross(dev, graph, row_standardize, s0);
    // Guard against ties lost to summation-order rounding.
    const double tie_slack = 1e-12 * std::max(1.0, std::abs(observed_cross));
    Rng rng(seed);
    std::size_t exceed = 0;
    for (std::size_t p = 0; p < n_permutations; ++p) {
        std::shuffle(dev.begin(), dev.end(), rng);
        if (detail::moran_cross(dev, graph, row_standardize, s0) >= observed_cross - tie_slack) ++exceed;
    }
    r.p_value = static_cast<double>(1 + exceed) / static_cast<double>(1 + n_permutations);
    return r;
}

} // namespace spatmix
