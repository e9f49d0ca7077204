#include "nar/reasoner.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

namespace nar {

void ReasonerConfig::validate() const {
    if (latent_dim < 1) throw ConfigError("latent_dim must be at least 1");
    if (hidden_dim < 1) throw ConfigError("hidden_dim must be at least 1");
    if (rounds < 1) throw ConfigError("rounds must be at least 1");
}

ParamSet init_encoder(const ReasonerConfig& c, Rng& rng) {
    ParamSet f;
    f.add_weight("node_w", kNodeFeatures, c.latent_dim, rng);
    f.add_zeros("node_b", {1, c.latent_dim});
    f.add_weight("edge_w", 1, c.latent_dim, rng);
    f.add_zeros("edge_b", {1, c.latent_dim});
    return f;
}

ParamSet init_processor(const ReasonerConfig& c, Rng& rng) {
    const std::size_t h = c.latent_dim, k = c.hidden_dim;
    ParamSet P;
    // Message MLP on [z_src, z_dst, e]; the first layer is split per operand.
    P.add_weight("msg_src", h, k, rng);
    P.add_weight("msg_dst", h, k, rng);
    P.add_weight("msg_edge", h, k, rng);
    P.add_zeros("msg_b1", {1, k});
    P.add_weight("msg_w2", k, h, rng);
    P.add_zeros("msg_b2", {1, h});
    // Update MLP on [z, aggregated messages].
    P.add_weight("upd_self", h, k, rng);
    P.add_weight("upd_agg", h, k, rng);
    P.add_zeros("upd_b1", {1, k});
    P.add_weight("upd_w2", k, h, rng);
    P.add_zeros("upd_b2", {1, h});
    // Aggregate seen by nodes without incoming edges.
    P.add_zeros("default", {1, h});
    return P;
}

ParamSet init_decoder(const ReasonerConfig& c, Rng& rng) {
    const std::size_t h = c.latent_dim, k = c.hidden_dim;
    ParamSet g;
    g.add_weight("dist_w", h, 1, rng);
    g.add_zeros("dist_b", {1, 1});
    g.add_weight("reached_w", h, 1, rng);
    g.add_zeros("reached_b", {1, 1});
    g.add_weight("reach_w", h, 1, rng);
    g.add_zeros("reach_b", {1, 1});
    g.add_weight("pred_src", h, k, rng);
    g.add_weight("pred_dst", h, k, rng);
    g.add_weight("pred_edge", h, k, rng);
    g.add_zeros("pred_b1", {1, k});
    g.add_weight("pred_w2", k, 1, rng);
    g.add_weight("self_w", h, 1, rng);
    g.add_zeros("self_b", {1, 1});
    return g;
}

ReasonerParams ReasonerParams::initialize(const ReasonerConfig& config, Teacher teacher, std::uint64_t seed) {
    config.validate();
    Rng rng = substream(seed, "init");
    ReasonerParams p;
    p.config = config;
    p.teacher = teacher;
    p.encoder = init_encoder(config, rng);
    p.processor = init_processor(config, rng);
    p.decoder = init_decoder(config, rng);
    return p;
}

GraphView GraphView::of(const AbstractInput& input, Teacher teacher) {
    const Graph& g = input.graph;
    GraphView v;
    v.n = g.n;
    v.m = g.edges.size();
    v.src.reserve(v.m);
    v.dst.reserve(v.m);
    for (const auto& e : g.edges) {
        v.src.push_back(e.src);
        v.dst.push_back(e.dst);
    }
    v.candidate_segment = v.dst;
    for (std::uint32_t i = 0; i < v.n; ++i) v.candidate_segment.push_back(i);
    const double wmax = g.max_weight();
    v.weight_scale = wmax > 0.0 ? 1.0 / wmax : 1.0;
    v.dist_scale = teacher == Teacher::bellman_ford ? v.weight_scale : 1.0;
    return v;
}

Tensor node_features(const GraphView& view, const AbstractInput& input, const HintStep& hint) {
    if (hint.n() != view.n || hint.reached.size() != view.n || hint.reach.size() != view.n) {
        throw DimensionError("hint has " + std::to_string(hint.n()) + " nodes, graph has " + std::to_string(view.n));
    }
    Tensor x({view.n, kNodeFeatures}, 0.0);
    for (std::size_t i = 0; i < view.n; ++i) {
        x.at(i, 0) = hint.reached[i] ? 1.0 : 0.0;
        x.at(i, 1) = hint.reached[i] ? hint.dist[i] * view.dist_scale : 0.0;
        x.at(i, 2) = i == input.source ? 1.0 : 0.0;
        x.at(i, 3) = hint.reach[i] ? 1.0 : 0.0;
    }
    return x;
}

Tensor edge_features(const GraphView& view, const AbstractInput& input) {
    Tensor x({view.m, 1}, 0.0);
    for (std::size_t e = 0; e < view.m; ++e) x[e] = input.graph.weights[e] * view.weight_scale;
    return x;
}

namespace {

Var linear(Var x, Var w, Var b) { return add_row(matmul(x, w), b); }

}  // namespace

Var encode_nodes(const BoundParams& f, Var features) { return linear(features, f["node_w"], f["node_b"]); }

Var encode_edges(const BoundParams& f, Var features) { return linear(features, f["edge_w"], f["edge_b"]); }

LatentState encode(const BoundParams& f, const GraphView& view, const AbstractInput& input, const HintStep& hint) {
    Tape& tape = f["node_w"].tape();
    return {encode_nodes(f, tape.constant(node_features(view, input, hint))),
            encode_edges(f, tape.constant(edge_features(view, input)))};
}

LatentState process(const BoundParams& P, const LatentState& state, const GraphView& view, std::size_t rounds) {
    Var z = state.nodes;
    // The edge projection does not change across rounds.
    const Var edge_term = matmul(state.edges, P["msg_edge"]);
    for (std::size_t r = 0; r < rounds; ++r) {
        const Var from_src = gather_rows(matmul(z, P["msg_src"]), view.src);
        const Var from_dst = gather_rows(matmul(z, P["msg_dst"]), view.dst);
        const Var hidden = relu(add_row(add(add(from_src, from_dst), edge_term), P["msg_b1"]));
        const Var messages = linear(hidden, P["msg_w2"], P["msg_b2"]);
        const Var aggregated = segment_max(messages, view.dst, view.n, P["default"]);
        const Var upd_hidden =
            relu(add_row(add(matmul(z, P["upd_self"]), matmul(aggregated, P["upd_agg"])), P["upd_b1"]));
        z = linear(upd_hidden, P["upd_w2"], P["upd_b2"]);
    }
    return {z, state.edges};
}

Var decode_predecessor_scores(const BoundParams& g, const LatentState& state, const GraphView& view) {
    const Var z = state.nodes;
    const Var from_src = gather_rows(matmul(z, g["pred_src"]), view.src);
    const Var from_dst = gather_rows(matmul(z, g["pred_dst"]), view.dst);
    const Var hidden =
        relu(add_row(add(add(from_src, from_dst), matmul(state.edges, g["pred_edge"])), g["pred_b1"]));
    const std::array<Var, 2> parts{matmul(hidden, g["pred_w2"]), linear(z, g["self_w"], g["self_b"])};
    return concat_rows(parts);
}

StepOutput decode(const BoundParams& g, const LatentState& state, const GraphView& view) {
    const Var z = state.nodes;
    StepOutput out;
    out.dist = linear(z, g["dist_w"], g["dist_b"]);
    out.reached_logit = linear(z, g["reached_w"], g["reached_b"]);
    out.reach_logit = linear(z, g["reach_w"], g["reach_b"]);
    out.pred_scores = decode_predecessor_scores(g, state, view);
    return out;
}

std::vector<double> candidate_softmax(std::span<const double> scores, const GraphView& view) {
    if (scores.size() != view.candidate_segment.size()) throw DimensionError("candidate score count mismatch");
    std::vector<double> mx(view.n, -std::numeric_limits<double>::infinity());
    for (std::size_t c = 0; c < scores.size(); ++c) {
        auto& m = mx[view.candidate_segment[c]];
        m = std::max(m, scores[c]);
    }
    std::vector<double> prob(scores.size());
    std::vector<std::vector<double>> terms(view.n);
    for (std::size_t c = 0; c < scores.size(); ++c) {
        const auto s = view.candidate_segment[c];
        prob[c] = std::exp(scores[c] - mx[s]);
        terms[s].push_back(prob[c]);
    }
    std::vector<double> z(view.n, 0.0);
    for (std::size_t s = 0; s < view.n; ++s) {
        std::sort(terms[s].begin(), terms[s].end());
        for (double t : terms[s]) z[s] += t;
    }
    for (std::size_t c = 0; c < scores.size(); ++c) prob[c] /= z[view.candidate_segment[c]];
    return prob;
}

namespace {

double logistic(double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

}  // namespace

SoftHint soften(const StepOutput& out, const GraphView& view) {
    SoftHint s;
    for (std::size_t i = 0; i < view.n; ++i) {
        s.dist.push_back(out.dist.value()[i] / view.dist_scale);
        s.reached_prob.push_back(logistic(out.reached_logit.value()[i]));
        s.reach_prob.push_back(logistic(out.reach_logit.value()[i]));
    }
    s.pred_prob = candidate_softmax(out.pred_scores.value().values(), view);
    return s;
}

HintStep SoftHint::harden(const GraphView& view) const {
    HintStep h;
    h.dist.assign(view.n, 0.0);
    h.reached.assign(view.n, 0);
    h.reach.assign(view.n, 0);
    h.pred.resize(view.n);
    std::vector<double> best(view.n, -1.0);
    for (std::size_t c = 0; c < pred_prob.size(); ++c) {
        const auto s = view.candidate_segment[c];
        if (pred_prob[c] > best[s]) {
            best[s] = pred_prob[c];
            h.pred[s] = c < view.m ? view.src[c] : s;
        }
    }
    for (std::size_t i = 0; i < view.n; ++i) {
        h.reached[i] = reached_prob[i] > 0.5 ? 1 : 0;
        h.reach[i] = reach_prob[i] > 0.5 ? 1 : 0;
        h.dist[i] = h.reached[i] ? dist[i] : 0.0;
    }
    return h;
}

std::vector<std::uint32_t> predecessor_targets(const GraphView& view, const AbstractInput& input,
                                               const HintStep& hint) {
    std::vector<std::uint32_t> target(view.n);
    for (std::uint32_t i = 0; i < view.n; ++i) {
        const auto p = hint.pred[i];
        if (p == i) {
            target[i] = view.self_candidate(i);
            continue;
        }
        const auto e = input.graph.find_edge(p, i);
        if (!e) throw DimensionError("parent " + std::to_string(p) + " of node " + std::to_string(i) + " is not an in-neighbour");
        target[i] = static_cast<std::uint32_t>(*e);
    }
    return target;
}

StepOutput reasoner_step(Tape& tape, const ReasonerParams& params, const GraphView& view, const AbstractInput& input,
                         const HintStep& hint, bool trainable) {
    const BoundParams f(tape, params.encoder, trainable);
    const BoundParams P(tape, params.processor, trainable);
    const BoundParams g(tape, params.decoder, trainable);
    const LatentState latent = process(P, encode(f, view, input, hint), view, params.config.rounds);
    return decode(g, latent, view);
}

std::vector<HintStep> drive_rollout(const AbstractInput& input, std::size_t budget, const StepFunction& step,
                                   double dist_tolerance) {
    if (budget < 1) throw Error("rollout step budget must be at least 1");
    std::vector<HintStep> steps;
    HintStep current = initial_hint(input);
    for (std::size_t t = 0; t < budget; ++t) {
        HintStep next = step(current, t);
        bool fixed = next.reached == current.reached && next.reach == current.reach && next.pred == current.pred;
        for (std::size_t i = 0; fixed && i < next.n(); ++i) {
            fixed = std::abs(next.dist[i] - current.dist[i]) <= dist_tolerance;
        }
        steps.push_back(next);
        current = std::move(next);
        if (fixed) break;
    }
    return steps;
}

Rollout rollout(const ReasonerParams& params, const AbstractInput& input, std::size_t budget) {
    const GraphView view = GraphView::of(input, params.teacher);
    Rollout result;
    const StepFunction model_step = [&](const HintStep& current, std::size_t t) {
        Tape tape(false);
        try {
            const StepOutput out = reasoner_step(tape, params, view, input, current, false);
            result.soft.push_back(soften(out, view));
        } catch (const NumericError& e) {
            throw NumericError("rollout step " + std::to_string(t) + ": " + e.what());
        }
        return result.soft.back().harden(view);
    };
    result.steps = drive_rollout(input, budget == 0 ? input.n() : budget, model_step,
                                 kRolloutDistTolerance / view.dist_scale);
    return result;
}

}  // namespace nar
