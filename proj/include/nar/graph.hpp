#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nar/rng.hpp"
#include "nar/tensor.hpp"

namespace nar {

class ConfigError : public Error {
public:
    using Error::Error;
};

struct Edge {
    std::uint32_t src = 0;
    std::uint32_t dst = 0;
    friend auto operator<=>(const Edge&, const Edge&) = default;
};

// Directed graph with one positive weight per edge. Edges are kept sorted by
// (src, dst) without duplicates or self-loops.
struct Graph {
    std::size_t n = 0;
    std::vector<Edge> edges;
    std::vector<double> weights;

    std::size_t edge_count() const noexcept { return edges.size(); }
    std::optional<std::size_t> find_edge(std::uint32_t src, std::uint32_t dst) const;
    std::vector<std::uint32_t> in_degrees() const;
    double max_weight() const;

    // Throws DimensionError describing the first broken invariant.
    void validate() const;

    friend bool operator==(const Graph&, const Graph&) = default;
};

// Builds a graph from unsorted edges; sorts and rejects duplicates and self-loops.
Graph make_graph(std::size_t n, std::vector<Edge> edges, std::vector<double> weights);

enum class FamilyKind { erdos_renyi, ladder, complete };

std::string to_string(FamilyKind kind);
FamilyKind family_from_string(const std::string& name);

struct GraphFamily {
    FamilyKind kind = FamilyKind::erdos_renyi;
    std::size_t n_min = 8;
    std::size_t n_max = 16;
    // Edge probability; unset means min(1, 2 ln(n) / n) for the drawn n.
    std::optional<double> p;
    double weight_lo = 0.2;
    double weight_hi = 1.0;

    void validate() const;
    double edge_probability(std::size_t n) const;
};

Graph generate(const GraphFamily& family, Rng& rng);

// Nodes reachable from `source` (including it) by following edge directions.
std::vector<std::uint8_t> reachable_from(const Graph& g, std::size_t source);

// Adds the fewest edges needed so that every node is reachable from `source`:
// one edge into each unreachable strongly connected component that has no
// other unreachable predecessor, chained in a random order starting at the source.
Graph ensure_source_reaches(const Graph& g, std::size_t source, Rng& rng, double weight_lo = 0.2,
                            double weight_hi = 1.0);

// Relabels node i as perm[i]. Throws unless perm is a bijection on [0, n).
Graph permute(const Graph& g, std::span<const std::uint32_t> perm);
std::vector<std::uint32_t> invert_permutation(std::span<const std::uint32_t> perm);
std::vector<std::uint32_t> random_permutation(std::size_t n, Rng& rng);

}  // namespace nar
