#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "nar/autodiff.hpp"
#include "nar/params.hpp"
#include "nar/teachers.hpp"

namespace nar {

struct ReasonerConfig {
    std::size_t latent_dim = 64;
    std::size_t hidden_dim = 64;
    std::size_t rounds = 1;  // processor rounds per algorithm step
    bool teacher_forcing = true;

    void validate() const;
    friend bool operator==(const ReasonerConfig&, const ReasonerConfig&) = default;
};

// Node inputs are [reached, dist, is_source, reach].
inline constexpr std::size_t kNodeFeatures = 4;

ParamSet init_encoder(const ReasonerConfig& config, Rng& rng);
ParamSet init_processor(const ReasonerConfig& config, Rng& rng);
ParamSet init_decoder(const ReasonerConfig& config, Rng& rng);

// Encoder f, processor P and decoder g for one teacher.
struct ReasonerParams {
    ReasonerConfig config;
    Teacher teacher = Teacher::bellman_ford;
    ParamSet encoder;
    ParamSet processor;
    ParamSet decoder;

    static ReasonerParams initialize(const ReasonerConfig& config, Teacher teacher, std::uint64_t seed);
    friend bool operator==(const ReasonerParams&, const ReasonerParams&) = default;
};

// Index arrays derived from a graph's edge list, plus the scale distances and
// weights are divided by before they enter the network.
struct GraphView {
    std::size_t n = 0;
    std::size_t m = 0;
    std::vector<std::uint32_t> src;
    std::vector<std::uint32_t> dst;
    // Predecessor candidates: edges 0..m-1 (segment = dst), then self 0..n-1.
    std::vector<std::uint32_t> candidate_segment;
    double weight_scale = 1.0;
    double dist_scale = 1.0;

    static GraphView of(const AbstractInput& input, Teacher teacher);
    std::uint32_t self_candidate(std::uint32_t node) const { return static_cast<std::uint32_t>(m + node); }
};

struct LatentState {
    Var nodes;  // [n x h]
    Var edges;  // [m x h]
};

// Raw network outputs for one algorithm step.
struct StepOutput {
    Var dist;           // [n x 1], standardised
    Var reached_logit;  // [n x 1]
    Var reach_logit;    // [n x 1]
    Var pred_scores;    // [(m + n) x 1], see GraphView::candidate_segment
};

// Decoded step values with probabilities instead of logits.
struct SoftHint {
    std::vector<double> dist;  // original units
    std::vector<double> reached_prob;
    std::vector<double> reach_prob;
    std::vector<double> pred_prob;  // per candidate, sums to 1 within each node

    HintStep harden(const GraphView& view) const;
};

Tensor node_features(const GraphView& view, const AbstractInput& input, const HintStep& hint);
Tensor edge_features(const GraphView& view, const AbstractInput& input);

Var encode_nodes(const BoundParams& f, Var features);
Var encode_edges(const BoundParams& f, Var features);
LatentState encode(const BoundParams& f, const GraphView& view, const AbstractInput& input, const HintStep& hint);
LatentState process(const BoundParams& P, const LatentState& state, const GraphView& view, std::size_t rounds);
StepOutput decode(const BoundParams& g, const LatentState& state, const GraphView& view);
// Predecessor scores only; shares weights with decode().
Var decode_predecessor_scores(const BoundParams& g, const LatentState& state, const GraphView& view);

SoftHint soften(const StepOutput& out, const GraphView& view);
// Softmax of candidate scores within each node; sums run over sorted terms so
// results do not depend on candidate order.
std::vector<double> candidate_softmax(std::span<const double> scores, const GraphView& view);
// Index of the target parent among the candidates of every node.
std::vector<std::uint32_t> predecessor_targets(const GraphView& view, const AbstractInput& input,
                                               const HintStep& hint);

// One encode -> process -> decode step on a fresh forward computation.
StepOutput reasoner_step(Tape& tape, const ReasonerParams& params, const GraphView& view, const AbstractInput& input,
                         const HintStep& hint, bool trainable = true);

struct Rollout {
    std::vector<SoftHint> soft;   // one per decoded step
    std::vector<HintStep> steps;  // hardened, one per decoded step

    const HintStep& output() const { return steps.back(); }
};

using StepFunction = std::function<HintStep(const HintStep& current, std::size_t step_index)>;

// Shared driver: applies `step` from the initial hint until `budget` steps were
// produced or a step reproduces its predecessor (that step is kept). Distances
// count as unchanged within `dist_tolerance`.
std::vector<HintStep> drive_rollout(const AbstractInput& input, std::size_t budget, const StepFunction& step,
                                   double dist_tolerance = 0.0);

// Standardised-distance change below which a model rollout is considered converged.
inline constexpr double kRolloutDistTolerance = 1e-3;

// Runs the model on its own hard predictions. budget 0 means n.
Rollout rollout(const ReasonerParams& params, const AbstractInput& input, std::size_t budget = 0);

}  // namespace nar
