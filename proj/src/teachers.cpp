#include "nar/teachers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace nar {

std::string to_string(Teacher teacher) { return teacher == Teacher::bfs ? "bfs" : "bellman_ford"; }

Teacher teacher_from_string(const std::string& name) {
    if (name == "bfs") return Teacher::bfs;
    if (name == "bellman_ford") return Teacher::bellman_ford;
    throw ConfigError("unknown teacher '" + name + "'");
}

HintStep initial_hint(const AbstractInput& input) {
    const std::size_t n = input.n();
    HintStep h;
    h.dist.assign(n, 0.0);
    h.reached.assign(n, 0);
    h.reach.assign(n, 0);
    h.pred.resize(n);
    for (std::uint32_t i = 0; i < n; ++i) h.pred[i] = i;
    h.reached[input.source] = 1;
    h.reach[input.source] = 1;
    return h;
}

namespace {

std::string edge_name(const Edge& e) { return std::to_string(e.src) + "->" + std::to_string(e.dst); }

void require_precondition(Teacher teacher, const AbstractInput& input) {
    if (auto v = check_precondition(teacher, input)) {
        throw PreconditionError(to_string(teacher) + " precondition violated: " + v->description);
    }
}

HintStep bellman_ford_step(const AbstractInput& input, const HintStep& prev) {
    const Graph& g = input.graph;
    HintStep next = prev;
    std::vector<double> best(g.n, std::numeric_limits<double>::infinity());
    std::vector<std::uint32_t> arg(g.n, 0);
    // Edges are sorted by source, so strict < keeps the lowest-index parent on ties.
    for (std::size_t e = 0; e < g.edges.size(); ++e) {
        const auto [u, v] = g.edges[e];
        if (!prev.reached[u]) continue;
        const double c = prev.dist[u] + g.weights[e];
        if (c < best[v]) {
            best[v] = c;
            arg[v] = u;
        }
    }
    for (std::uint32_t v = 0; v < g.n; ++v) {
        if (v == input.source || !std::isfinite(best[v])) continue;
        // Distances never increase, so best[v] <= prev.dist[v] for reached v.
        next.dist[v] = best[v];
        next.pred[v] = arg[v];
        next.reached[v] = 1;
        next.reach[v] = 1;
    }
    return next;
}

HintStep bfs_step(const AbstractInput& input, const HintStep& prev) {
    const Graph& g = input.graph;
    HintStep next = prev;
    std::vector<double> lightest(g.n, std::numeric_limits<double>::infinity());
    for (std::size_t e = 0; e < g.edges.size(); ++e) {
        const auto [u, v] = g.edges[e];
        if (!prev.reach[u] || prev.reach[v]) continue;
        if (g.weights[e] < lightest[v]) {
            lightest[v] = g.weights[e];
            next.pred[v] = u;
            next.dist[v] = prev.dist[u] + 1.0;
            next.reach[v] = 1;
            next.reached[v] = 1;
        }
    }
    return next;
}

template <typename StepFn>
Trace run(Teacher teacher, const AbstractInput& input, StepFn step) {
    Trace trace;
    trace.teacher = teacher;
    trace.input = input;
    trace.steps.push_back(initial_hint(input));
    while (trace.steps.size() < input.n()) {
        HintStep next = step(input, trace.steps.back());
        if (next == trace.steps.back()) break;
        trace.steps.push_back(std::move(next));
    }
    return trace;
}

}  // namespace

Trace bellman_ford_trace(const AbstractInput& input) {
    require_precondition(Teacher::bellman_ford, input);
    return run(Teacher::bellman_ford, input, bellman_ford_step);
}

Trace bfs_trace(const AbstractInput& input) {
    require_precondition(Teacher::bfs, input);
    return run(Teacher::bfs, input, bfs_step);
}

Trace run_teacher(Teacher teacher, const AbstractInput& input) {
    return teacher == Teacher::bfs ? bfs_trace(input) : bellman_ford_trace(input);
}

HintStep teacher_step(Teacher teacher, const AbstractInput& input, const HintStep& state) {
    return teacher == Teacher::bfs ? bfs_step(input, state) : bellman_ford_step(input, state);
}

ContractResult check_precondition(Teacher teacher, const AbstractInput& input) {
    const Graph& g = input.graph;
    if (g.n == 0) return Violation{"graph has no nodes"};
    if (input.source >= g.n) {
        return Violation{"source " + std::to_string(input.source) + " out of range for n=" + std::to_string(g.n)};
    }
    if (g.weights.size() != g.edges.size()) return Violation{"edge and weight counts differ"};
    for (std::size_t i = 0; i < g.edges.size(); ++i) {
        const Edge& e = g.edges[i];
        if (e.src >= g.n || e.dst >= g.n) return Violation{"edge " + edge_name(e) + " out of range"};
        if (e.src == e.dst) return Violation{"self-loop " + edge_name(e)};
        if (i > 0 && !(g.edges[i - 1] < e)) return Violation{"edge list unsorted or duplicated at " + edge_name(e)};
        if (!std::isfinite(g.weights[i])) return Violation{"edge " + edge_name(e) + " has non-finite weight"};
        if (teacher == Teacher::bellman_ford && !(g.weights[i] > 0.0)) {
            return Violation{"edge " + edge_name(e) + " has non-positive weight " + std::to_string(g.weights[i])};
        }
    }
    return std::nullopt;
}

namespace {

bool close(double a, double b, double tol) {
    return std::abs(a - b) <= tol * std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace

ContractResult check_postcondition(Teacher teacher, const AbstractInput& input, const HintStep& out,
                                   double tolerance) {
    const Graph& g = input.graph;
    const std::size_t n = g.n;
    if (out.dist.size() != n || out.reached.size() != n || out.pred.size() != n || out.reach.size() != n) {
        return Violation{"output arrays do not have length n=" + std::to_string(n)};
    }
    const auto s = input.source;
    if (!out.reached[s]) return Violation{"source is not reached"};
    if (out.pred[s] != s) return Violation{"source parent is not the source"};
    if (!close(out.dist[s], 0.0, tolerance)) return Violation{"source distance is not zero"};
    auto length = [&](std::size_t e) { return teacher == Teacher::bfs ? 1.0 : g.weights[e]; };
    for (std::uint32_t v = 0; v < n; ++v) {
        if (!std::isfinite(out.dist[v])) return Violation{"non-finite distance at node " + std::to_string(v)};
        if (out.reach[v] != out.reached[v]) return Violation{"reach and reached disagree at node " + std::to_string(v)};
        if (v == s) continue;
        const auto p = out.pred[v];
        if (!out.reached[v]) {
            if (p != v) return Violation{"unreached node " + std::to_string(v) + " has a parent"};
            continue;
        }
        if (p >= n) return Violation{"parent of node " + std::to_string(v) + " out of range"};
        const auto e = g.find_edge(p, v);
        if (!e) return Violation{"parent " + std::to_string(p) + " of node " + std::to_string(v) + " is not an in-neighbour"};
        if (!out.reached[p]) return Violation{"parent of node " + std::to_string(v) + " is unreached"};
        if (!close(out.dist[v], out.dist[p] + length(*e), tolerance)) {
            return Violation{"distance of node " + std::to_string(v) + " disagrees with its parent edge " +
                             edge_name(g.edges[*e])};
        }
    }
    for (std::size_t e = 0; e < g.edges.size(); ++e) {
        const auto [u, v] = g.edges[e];
        if (!out.reached[u]) continue;
        if (!out.reached[v]) return Violation{"edge " + edge_name(g.edges[e]) + " leaves the reached set"};
        const double bound = out.dist[u] + length(e);
        if (out.dist[v] > bound && !close(out.dist[v], bound, tolerance)) {
            return Violation{"relaxation inequality fails on edge " + edge_name(g.edges[e])};
        }
    }
    return std::nullopt;
}

HintStep tree_distances(Teacher teacher, const AbstractInput& input, const HintStep& candidate) {
    const Graph& g = input.graph;
    const std::size_t n = g.n;
    HintStep out = initial_hint(input);
    out.pred = candidate.pred;
    // 0 = unvisited, 1 = on the current chain, 2 = resolved.
    std::vector<std::uint8_t> state(n, 0);
    state[input.source] = 2;
    out.pred[input.source] = input.source;
    for (std::uint32_t start = 0; start < n; ++start) {
        std::vector<std::uint32_t> chain;
        std::uint32_t v = start;
        while (state[v] == 0) {
            state[v] = 1;
            chain.push_back(v);
            const auto p = out.pred[v];
            if (p >= n || p == v || !g.find_edge(p, v)) break;
            v = p;
        }
        // Resolve the chain back to front.
        for (auto it = chain.rbegin(); it != chain.rend(); ++it) {
            const auto u = *it;
            const auto p = out.pred[u];
            std::optional<std::size_t> e;
            if (p < n && p != u) e = g.find_edge(p, u);
            if (e && state[p] == 2 && out.reached[p]) {
                out.reached[u] = 1;
                out.reach[u] = 1;
                out.dist[u] = out.dist[p] + (teacher == Teacher::bfs ? 1.0 : g.weights[*e]);
            } else {
                out.pred[u] = u;
            }
            state[u] = 2;
        }
    }
    return out;
}

AbstractInput permute(const AbstractInput& input, std::span<const std::uint32_t> perm) {
    return AbstractInput{permute(input.graph, perm), perm[input.source]};
}

HintStep permute(const HintStep& hint, std::span<const std::uint32_t> perm) {
    const std::size_t n = hint.n();
    if (perm.size() != n) throw DimensionError("permutation length differs from hint size");
    HintStep out = hint;
    for (std::size_t i = 0; i < n; ++i) {
        const auto j = perm[i];
        out.dist[j] = hint.dist[i];
        out.reached[j] = hint.reached[i];
        out.reach[j] = hint.reach[i];
        out.pred[j] = perm[hint.pred[i]];
    }
    return out;
}

Trace permute(const Trace& trace, std::span<const std::uint32_t> perm) {
    Trace out;
    out.teacher = trace.teacher;
    out.input = permute(trace.input, perm);
    for (const auto& s : trace.steps) out.steps.push_back(permute(s, perm));
    return out;
}

std::vector<AbstractInput> sample_inputs(const GraphFamily& family, std::size_t count, Rng& rng, bool connect) {
    std::vector<AbstractInput> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        Graph g = generate(family, rng);
        const auto source = static_cast<std::uint32_t>(uniform_index(rng, 0, g.n - 1));
        if (connect) g = ensure_source_reaches(g, source, rng, family.weight_lo, family.weight_hi);
        out.push_back({std::move(g), source});
    }
    return out;
}

}  // namespace nar
