#pragma once

// Shared oracles for the unit tests and the acceptance binary. Everything here
// is deliberately naive and independent of the library's algorithms.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "nar/autodiff.hpp"
#include "nar/graph.hpp"
#include "nar/params.hpp"
#include "nar/rng.hpp"
#include "nar/teachers.hpp"

namespace nar::testing {

inline constexpr double kFdEpsilon = 1e-5;
inline constexpr double kFdTolerance = 1e-4;

// |a - b| / max(|a|, |b|, floor). The floor keeps near-zero gradients from
// turning round-off into large relative errors.
inline double relative_error(double a, double b, double floor = 1e-6) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

struct FdReport {
    double max_relative = 0.0;
    std::size_t checked = 0;
};

using Builder = std::function<Var(Tape&, const std::vector<Var>&)>;

// Central differences for every scalar of every input of a scalar-valued builder.
inline FdReport check_gradients(const Builder& build, const std::vector<Tensor>& inputs,
                                double eps = kFdEpsilon) {
    std::vector<Tensor> analytic;
    {
        Tape tape;
        std::vector<Var> vars;
        for (const auto& t : inputs) vars.push_back(tape.variable(t));
        Var loss = build(tape, vars);
        tape.backward(loss);
        for (const auto& v : vars) analytic.push_back(tape.grad(v));
    }
    auto eval = [&](const std::vector<Tensor>& xs) {
        Tape tape(false);
        std::vector<Var> vars;
        for (const auto& t : xs) vars.push_back(tape.constant(t));
        return build(tape, vars).value().item();
    };
    FdReport report;
    std::vector<Tensor> xs = inputs;
    for (std::size_t k = 0; k < xs.size(); ++k) {
        for (std::size_t i = 0; i < xs[k].size(); ++i) {
            const double saved = xs[k][i];
            xs[k][i] = saved + eps;
            const double up = eval(xs);
            xs[k][i] = saved - eps;
            const double down = eval(xs);
            xs[k][i] = saved;
            const double numeric = (up - down) / (2 * eps);
            report.max_relative = std::max(report.max_relative, relative_error(analytic[k][i], numeric));
            ++report.checked;
        }
    }
    return report;
}

// Same check over a ParamSet with a caller-provided loss and analytic gradients.
inline FdReport check_param_gradients(const std::function<double(const ParamSet&)>& loss, ParamSet params,
                                      const Gradients& analytic, double eps = kFdEpsilon) {
    FdReport report;
    for (std::size_t k = 0; k < params.size(); ++k) {
        for (std::size_t i = 0; i < params[k].value.size(); ++i) {
            const double saved = params[k].value[i];
            params[k].value[i] = saved + eps;
            const double up = loss(params);
            params[k].value[i] = saved - eps;
            const double down = loss(params);
            params[k].value[i] = saved;
            const double numeric = (up - down) / (2 * eps);
            report.max_relative = std::max(report.max_relative, relative_error(analytic.values[k][i], numeric));
            ++report.checked;
        }
    }
    return report;
}

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (auto& v : t.values()) v = uniform(rng, lo, hi);
    return t;
}

// Shortest distances by enumerating every simple path from the source.
inline std::vector<double> exhaustive_distances(const Graph& g, std::size_t source) {
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> best(g.n, inf);
    std::vector<std::vector<std::pair<std::size_t, double>>> out(g.n);
    for (std::size_t e = 0; e < g.edge_count(); ++e) out[g.edges[e].src].push_back({g.edges[e].dst, g.weights[e]});
    std::vector<std::uint8_t> on_path(g.n, 0);
    std::function<void(std::size_t, double)> walk = [&](std::size_t u, double d) {
        best[u] = std::min(best[u], d);
        on_path[u] = 1;
        for (auto [v, w] : out[u])
            if (!on_path[v]) walk(v, d + w);
        on_path[u] = 0;
    };
    walk(source, 0.0);
    return best;
}

// Iterative DFS reachability.
inline std::vector<std::uint8_t> dfs_reachable(const Graph& g, std::size_t source) {
    std::vector<std::vector<std::size_t>> out(g.n);
    for (const auto& e : g.edges) out[e.src].push_back(e.dst);
    std::vector<std::uint8_t> seen(g.n, 0);
    std::vector<std::size_t> stack{source};
    seen[source] = 1;
    while (!stack.empty()) {
        const auto u = stack.back();
        stack.pop_back();
        for (auto v : out[u])
            if (!seen[v]) {
                seen[v] = 1;
                stack.push_back(v);
            }
    }
    return seen;
}

// Random graph with n nodes and optional integer weights, not necessarily connected.
inline AbstractInput random_input(Rng& rng, std::size_t n_min, std::size_t n_max, double p, bool integer_weights) {
    const std::size_t n = uniform_index(rng, n_min, n_max);
    std::vector<Edge> edges;
    std::vector<double> weights;
    for (std::uint32_t i = 0; i < n; ++i)
        for (std::uint32_t j = 0; j < n; ++j) {
            if (i == j || uniform(rng, 0.0, 1.0) >= p) continue;
            edges.push_back({i, j});
            weights.push_back(integer_weights ? static_cast<double>(uniform_index(rng, 1, 9)) : uniform(rng, 0.2, 1.0));
        }
    AbstractInput input;
    input.graph = make_graph(n, std::move(edges), std::move(weights));
    input.source = static_cast<std::uint32_t>(uniform_index(rng, 0, n - 1));
    return input;
}

}  // namespace nar::testing
