#include "nar/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace nar {

std::optional<std::size_t> Graph::find_edge(std::uint32_t src, std::uint32_t dst) const {
    const Edge key{src, dst};
    auto it = std::lower_bound(edges.begin(), edges.end(), key);
    if (it == edges.end() || *it != key) return std::nullopt;
    return static_cast<std::size_t>(it - edges.begin());
}

std::vector<std::uint32_t> Graph::in_degrees() const {
    std::vector<std::uint32_t> deg(n, 0);
    for (const auto& e : edges) deg[e.dst] += 1;
    return deg;
}

double Graph::max_weight() const {
    double m = 0.0;
    for (double w : weights) m = std::max(m, w);
    return m;
}

void Graph::validate() const {
    if (weights.size() != edges.size()) {
        throw DimensionError("graph has " + std::to_string(edges.size()) + " edges but " +
                             std::to_string(weights.size()) + " weights");
    }
    for (std::size_t i = 0; i < edges.size(); ++i) {
        const Edge& e = edges[i];
        if (e.src >= n || e.dst >= n) {
            throw DimensionError("edge " + std::to_string(i) + " (" + std::to_string(e.src) + "->" +
                                 std::to_string(e.dst) + ") out of range for n=" + std::to_string(n));
        }
        if (e.src == e.dst) throw DimensionError("self-loop at node " + std::to_string(e.src));
        if (i > 0 && !(edges[i - 1] < e)) {
            throw DimensionError("edge list not strictly sorted at index " + std::to_string(i));
        }
        if (!(weights[i] > 0.0) || !std::isfinite(weights[i])) {
            throw DimensionError("edge " + std::to_string(e.src) + "->" + std::to_string(e.dst) +
                                 " has non-positive weight");
        }
    }
}

Graph make_graph(std::size_t n, std::vector<Edge> edges, std::vector<double> weights) {
    if (edges.size() != weights.size()) throw DimensionError("make_graph: one weight per edge required");
    std::vector<std::size_t> order(edges.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return edges[a] < edges[b]; });
    Graph g;
    g.n = n;
    for (std::size_t i : order) {
        g.edges.push_back(edges[i]);
        g.weights.push_back(weights[i]);
    }
    g.validate();
    return g;
}

std::string to_string(FamilyKind kind) {
    switch (kind) {
        case FamilyKind::erdos_renyi: return "erdos_renyi";
        case FamilyKind::ladder: return "ladder";
        case FamilyKind::complete: return "complete";
    }
    return "unknown";
}

FamilyKind family_from_string(const std::string& name) {
    if (name == "erdos_renyi") return FamilyKind::erdos_renyi;
    if (name == "ladder") return FamilyKind::ladder;
    if (name == "complete") return FamilyKind::complete;
    throw ConfigError("unknown graph family '" + name + "'");
}

void GraphFamily::validate() const {
    if (n_min < 1 || n_max < n_min) throw ConfigError("graph family needs 1 <= n_min <= n_max");
    if (p && !(*p >= 0.0 && *p <= 1.0)) throw ConfigError("edge probability must lie in [0, 1]");
    if (!(weight_lo > 0.0) || !(weight_hi >= weight_lo)) throw ConfigError("weights need 0 < lo <= hi");
}

double GraphFamily::edge_probability(std::size_t n) const {
    if (p) return *p;
    if (n < 2) return 0.0;
    const double nn = static_cast<double>(n);
    return std::min(1.0, 2.0 * std::log(nn) / nn);
}

namespace {

void add_bidirectional(std::vector<Edge>& edges, std::uint32_t a, std::uint32_t b) {
    edges.push_back({a, b});
    edges.push_back({b, a});
}

}  // namespace

Graph generate(const GraphFamily& family, Rng& rng) {
    family.validate();
    const std::size_t n = uniform_index(rng, family.n_min, family.n_max);
    std::vector<Edge> edges;
    switch (family.kind) {
        case FamilyKind::erdos_renyi: {
            const double p = family.edge_probability(n);
            std::bernoulli_distribution coin(p);
            for (std::uint32_t s = 0; s < n; ++s) {
                for (std::uint32_t d = 0; d < n; ++d) {
                    if (s != d && coin(rng)) edges.push_back({s, d});
                }
            }
            break;
        }
        case FamilyKind::complete:
            for (std::uint32_t s = 0; s < n; ++s) {
                for (std::uint32_t d = 0; d < n; ++d) {
                    if (s != d) edges.push_back({s, d});
                }
            }
            break;
        case FamilyKind::ladder: {
            // Two rails of length n/2 joined by rungs; an odd node hangs off the end.
            const std::uint32_t half = static_cast<std::uint32_t>(n / 2);
            for (std::uint32_t i = 0; i < half; ++i) {
                if (i + 1 < half) {
                    add_bidirectional(edges, i, i + 1);
                    add_bidirectional(edges, half + i, half + i + 1);
                }
                add_bidirectional(edges, i, half + i);
            }
            if (n % 2 == 1 && n > 1) add_bidirectional(edges, static_cast<std::uint32_t>(n - 2),
                                                       static_cast<std::uint32_t>(n - 1));
            break;
        }
    }
    std::sort(edges.begin(), edges.end());
    std::vector<double> weights(edges.size());
    for (double& w : weights) w = uniform(rng, family.weight_lo, family.weight_hi);
    return make_graph(n, std::move(edges), std::move(weights));
}

std::vector<std::uint8_t> reachable_from(const Graph& g, std::size_t source) {
    std::vector<std::vector<std::uint32_t>> out(g.n);
    for (const auto& e : g.edges) out[e.src].push_back(e.dst);
    std::vector<std::uint8_t> seen(g.n, 0);
    std::vector<std::size_t> stack{source};
    seen[source] = 1;
    while (!stack.empty()) {
        const std::size_t u = stack.back();
        stack.pop_back();
        for (auto v : out[u]) {
            if (!seen[v]) {
                seen[v] = 1;
                stack.push_back(v);
            }
        }
    }
    return seen;
}

Graph ensure_source_reaches(const Graph& g, std::size_t source, Rng& rng, double weight_lo, double weight_hi) {
    if (source >= g.n) throw DimensionError("source " + std::to_string(source) + " out of range");
    const auto reached = reachable_from(g, source);
    std::vector<std::uint32_t> unreached;
    for (std::uint32_t v = 0; v < g.n; ++v) {
        if (!reached[v]) unreached.push_back(v);
    }
    if (unreached.empty()) return g;

    // reach[a][b]: b reachable from a (within the whole graph).
    std::vector<std::vector<std::uint8_t>> reach;
    reach.reserve(g.n);
    for (std::size_t v = 0; v < g.n; ++v) reach.push_back(reachable_from(g, v));

    auto order = unreached;
    std::shuffle(order.begin(), order.end(), rng);

    // A node heads a source component when every unreached node reaching it is
    // also reached by it. Keep the first such node (in shuffled order) per component.
    std::vector<std::uint32_t> heads;
    std::vector<std::uint8_t> covered(g.n, 0);
    for (auto u : order) {
        if (covered[u]) continue;
        bool is_head = true;
        for (auto w : unreached) {
            if (reach[w][u] && !reach[u][w]) {
                is_head = false;
                break;
            }
        }
        if (!is_head) continue;
        heads.push_back(u);
        for (auto w : unreached) {
            if (reach[u][w] && reach[w][u]) covered[w] = 1;
        }
    }

    std::vector<Edge> edges = g.edges;
    std::vector<double> weights = g.weights;
    std::uint32_t prev = static_cast<std::uint32_t>(source);
    for (auto h : heads) {
        edges.push_back({prev, h});
        weights.push_back(uniform(rng, weight_lo, weight_hi));
        prev = h;
    }
    return make_graph(g.n, std::move(edges), std::move(weights));
}

std::vector<std::uint32_t> invert_permutation(std::span<const std::uint32_t> perm) {
    std::vector<std::uint32_t> inv(perm.size(), 0);
    std::vector<std::uint8_t> hit(perm.size(), 0);
    for (std::uint32_t i = 0; i < perm.size(); ++i) {
        if (perm[i] >= perm.size() || hit[perm[i]]) throw DimensionError("permutation is not a bijection");
        hit[perm[i]] = 1;
        inv[perm[i]] = i;
    }
    return inv;
}

Graph permute(const Graph& g, std::span<const std::uint32_t> perm) {
    if (perm.size() != g.n) throw DimensionError("permutation length differs from node count");
    invert_permutation(perm);
    std::vector<Edge> edges;
    edges.reserve(g.edges.size());
    for (const auto& e : g.edges) edges.push_back({perm[e.src], perm[e.dst]});
    return make_graph(g.n, std::move(edges), g.weights);
}

std::vector<std::uint32_t> random_permutation(std::size_t n, Rng& rng) {
    std::vector<std::uint32_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    return perm;
}

}  // namespace nar
