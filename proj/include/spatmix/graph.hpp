#pragma once

#include <algorithm>
#include <cstddef>
#include <istream>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"

namespace spatmix {

// Hard assignment of each node to a component in [0, K).
using LabelField = std::vector<int>;

using Edge = std::pair<std::size_t, std::size_t>;

enum class LatticeScheme { rook, queen };

/// Symmetric neighbourhood system over nodes 0..n-1, stored in compressed rows.
///
/// Invariants: no self loops, j in N(i) iff i in N(j), every neighbour list sorted
/// and free of duplicates. Immutable once built.
class AdjacencyGraph {
public:
    AdjacencyGraph() = default;

    static AdjacencyGraph from_edges(std::size_t n, std::span<const Edge> edges) {
        std::vector<std::vector<std::size_t>> lists(n);
        for (const auto& [i, j] : edges) {
            if (i >= n || j >= n) {
                throw std::invalid_argument("edge (" + std::to_string(i) + "," + std::to_string(j) +
                                            ") has an index outside [0," + std::to_string(n) + ")");
            }
            if (i == j) {
                throw std::invalid_argument("self-loop on node " + std::to_string(i));
            }
            lists[i].push_back(j);
            lists[j].push_back(i);
        }
        AdjacencyGraph g;
        g.offsets_.reserve(n + 1);
        g.offsets_.push_back(0);
        for (auto& l : lists) {
            std::sort(l.begin(), l.end());
            l.erase(std::unique(l.begin(), l.end()), l.end());
            g.targets_.insert(g.targets_.end(), l.begin(), l.end());
            g.offsets_.push_back(g.targets_.size());
        }
        return g;
    }

    std::size_t size() const noexcept { return offsets_.empty() ? 0 : offsets_.size() - 1; }

    std::span<const std::size_t> neighbors(std::size_t i) const {
        return {targets_.data() + offsets_[i], offsets_[i + 1] - offsets_[i]};
    }

    std::size_t degree(std::size_t i) const { return offsets_[i + 1] - offsets_[i]; }

    // Undirected edge count.
    std::size_t edge_count() const noexcept { return targets_.size() / 2; }

    // Each undirected edge once, as (i, j) with i < j, in lexicographic order.
    std::vector<Edge> edges() const {
        std::vector<Edge> out;
        out.reserve(edge_count());
        for (std::size_t i = 0; i < size(); ++i) {
            for (auto j : neighbors(i)) {
                if (i < j) out.emplace_back(i, j);
            }
        }
        return out;
    }

    bool adjacent(std::size_t i, std::size_t j) const {
        auto nb = neighbors(i);
        return std::binary_search(nb.begin(), nb.end(), j);
    }

    friend bool operator==(const AdjacencyGraph&, const AdjacencyGraph&) = default;

private:
    std::vector<std::size_t> offsets_;
    std::vector<std::size_t> targets_;
};

inline AdjacencyGraph build_from_edges(std::size_t n, std::span<const Edge> edges) {
    return AdjacencyGraph::from_edges(n, edges);
}

/// Square lattice of side x side nodes, row-major numbering, truncated at the border
/// (no toroidal wrap). Rook links the 4 orthogonal neighbours, queen adds diagonals.
inline AdjacencyGraph build_lattice(std::size_t side, LatticeScheme scheme = LatticeScheme::rook) {
    if (side < 2) throw std::invalid_argument("lattice side must be at least 2");
    std::vector<Edge> edges;
    auto id = [side](std::size_t r, std::size_t c) { return r * side + c; };
    for (std::size_t r = 0; r < side; ++r) {
        for (std::size_t c = 0; c < side; ++c) {
            if (c + 1 < side) edges.emplace_back(id(r, c), id(r, c + 1));
            if (r + 1 < side) edges.emplace_back(id(r, c), id(r + 1, c));
            if (scheme == LatticeScheme::queen && r + 1 < side) {
                if (c + 1 < side) edges.emplace_back(id(r, c), id(r + 1, c + 1));
                if (c > 0) edges.emplace_back(id(r, c), id(r + 1, c - 1));
            }
        }
    }
    return AdjacencyGraph::from_edges(side * side, edges);
}

/// Per-(node, component) neighbour tallies for a labelling.
struct NeighborCounts {
    std::size_t n = 0;
    std::size_t K = 0;
    std::vector<int> same;   // n x K row-major: neighbours of i labelled k
    std::vector<int> degree; // |N_i|

    int in(std::size_t i, std::size_t k) const { return same[i * K + k]; }
    int out(std::size_t i, std::size_t k) const { return degree[i] - same[i * K + k]; }
    // n_ik - n_ik^c
    int balance(std::size_t i, std::size_t k) const { return 2 * same[i * K + k] - degree[i]; }
};

inline void check_labels(std::span<const int> labels, std::size_t n, std::size_t K) {
    if (labels.size() != n) {
        throw dimension_error("label field has " + std::to_string(labels.size()) + " entries, expected " +
                              std::to_string(n));
    }
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= K) {
            throw std::invalid_argument("label " + std::to_string(labels[i]) + " at node " + std::to_string(i) +
                                        " is outside [0," + std::to_string(K) + ")");
        }
    }
}

inline NeighborCounts neighbor_counts(const AdjacencyGraph& graph, std::span<const int> labels, std::size_t K) {
    check_labels(labels, graph.size(), K);
    NeighborCounts nc;
    nc.n = graph.size();
    nc.K = K;
    nc.same.assign(nc.n * K, 0);
    nc.degree.resize(nc.n);
    for (std::size_t i = 0; i < nc.n; ++i) {
        nc.degree[i] = static_cast<int>(graph.degree(i));
        for (auto j : graph.neighbors(i)) ++nc.same[i * K + static_cast<std::size_t>(labels[j])];
    }
    return nc;
}

// Edge-list text: one "i j" pair per line, 0-based; '#' comment lines and blank lines skipped.
// Node count is max index + 1 unless `n` is given.
inline AdjacencyGraph read_edge_list(std::istream& in, std::size_t n = 0) {
    std::vector<Edge> edges;
    std::string line;
    std::size_t lineno = 0;
    std::size_t max_index = 0;
    bool any = false;
    std::size_t declared_nodes = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        if (line[first] == '#') {
            // "# nodes N" records isolated trailing nodes; other comments are ignored.
            std::istringstream ss(line.substr(first + 1));
            std::string key;
            long long declared = -1;
            if (n == 0 && ss >> key && key == "nodes" && ss >> declared && declared > 0) {
                declared_nodes = static_cast<std::size_t>(declared);
            }
            continue;
        }
        std::istringstream ss(line);
        long long a = -1, b = -1;
        std::string rest;
        if (!(ss >> a >> b) || (ss >> rest) || a < 0 || b < 0) {
            throw parse_error("edge list line " + std::to_string(lineno) + ": expected two non-negative indices");
        }
        edges.emplace_back(static_cast<std::size_t>(a), static_cast<std::size_t>(b));
        max_index = std::max({max_index, edges.back().first, edges.back().second});
        any = true;
    }
    if (n == 0) n = std::max(declared_nodes, any ? max_index + 1 : 0);
    return AdjacencyGraph::from_edges(n, edges);
}

inline void write_edge_list(std::ostream& out, const AdjacencyGraph& graph) {
    out << "# nodes " << graph.size() << "\n";
    for (const auto& [i, j] : graph.edges()) out << i << ' ' << j << '\n';
}

} // namespace spatmix
