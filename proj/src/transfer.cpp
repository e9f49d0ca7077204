#include "nar/transfer.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>

namespace nar {

std::string to_string(FeatureMap map) { return map == FeatureMap::smooth ? "smooth" : "linear"; }

FeatureMap feature_map_from_string(const std::string& name) {
    if (name == "smooth") return FeatureMap::smooth;
    if (name == "linear") return FeatureMap::linear;
    throw ConfigError("unknown feature map '" + name + "'");
}

void NaturalGenConfig::validate() const {
    family.validate();
    if (d_nat < 1) throw ConfigError("d_nat must be at least 1");
    if (informative < 1 || informative > d_nat) throw ConfigError("informative dims k must lie in [1, d_nat]");
    if (!(noise >= 0.0) || !std::isfinite(noise)) throw ConfigError("noise must be finite and non-negative");
    if (!(distractor_sd >= 0.0) || !std::isfinite(distractor_sd)) {
        throw ConfigError("distractor_sd must be finite and non-negative");
    }
}

namespace {

struct FeatureCoefficients {
    std::vector<double> amplitude, slope, centre, offset;
};

FeatureCoefficients feature_coefficients(const NaturalGenConfig& c) {
    Rng rng = substream(c.map_seed, "natural/feature_map");
    FeatureCoefficients f;
    for (std::size_t j = 0; j < c.informative; ++j) {
        const double sign = uniform(rng, 0.0, 1.0) < 0.5 ? -1.0 : 1.0;
        f.amplitude.push_back(sign * uniform(rng, 0.5, 1.5));
        f.slope.push_back(uniform(rng, 2.0, 6.0));
        f.centre.push_back(uniform(rng, c.family.weight_lo, c.family.weight_hi));
        f.offset.push_back(uniform(rng, -0.5, 0.5));
    }
    return f;
}

std::vector<double> features_of(const NaturalGenConfig& c, const FeatureCoefficients& f, double w) {
    std::vector<double> out(c.informative);
    for (std::size_t j = 0; j < c.informative; ++j) {
        out[j] = c.feature_map == FeatureMap::linear
                     ? f.amplitude[j] * w
                     : f.amplitude[j] * std::tanh(f.slope[j] * (w - f.centre[j])) + f.offset[j];
    }
    return out;
}

Graph unit_topology(const Graph& g) {
    Graph t = g;
    std::fill(t.weights.begin(), t.weights.end(), 1.0);
    return t;
}

}  // namespace

std::vector<double> feature_function(const NaturalGenConfig& config, double w) {
    return features_of(config, feature_coefficients(config), w);
}

std::vector<NaturalSample> generate_natural(const NaturalGenConfig& config, std::size_t count, Rng& rng,
                                            std::vector<std::vector<double>>* hidden_weights) {
    config.validate();
    const FeatureCoefficients coeff = feature_coefficients(config);
    std::vector<NaturalSample> out;
    out.reserve(count);
    for (const auto& input : sample_inputs(config.family, count, rng)) {
        const Graph& g = input.graph;
        NaturalSample s;
        s.topology = unit_topology(g);
        s.source = input.source;
        s.y = bellman_ford_trace(input).output().pred;
        s.x_edge = Tensor({g.edges.size(), config.d_nat}, 0.0);
        for (std::size_t e = 0; e < g.edges.size(); ++e) {
            const auto clean = features_of(config, coeff, g.weights[e]);
            for (std::size_t j = 0; j < config.d_nat; ++j) {
                s.x_edge.at(e, j) = j < config.informative ? clean[j] + normal(rng, 0.0, config.noise)
                                                           : normal(rng, 0.0, config.distractor_sd);
            }
        }
        if (hidden_weights) hidden_weights->push_back(g.weights);
        out.push_back(std::move(s));
    }
    return out;
}

json to_json(const NaturalSample& sample) {
    json record = to_json(sample.abstract());
    json rows = json::array();
    const std::size_t d = sample.x_edge.cols();
    for (std::size_t e = 0; e < sample.topology.edges.size(); ++e) {
        const auto v = sample.x_edge.values().subspan(e * d, d);
        rows.push_back(std::vector<double>(v.begin(), v.end()));
    }
    record["X_edge"] = rows;
    record["d_nat"] = d;
    record["y"] = sample.y;
    return record;
}

NaturalSample natural_from_json(const json& record) {
    NaturalSample s;
    const AbstractInput input = input_from_json(record);
    s.topology = input.graph;
    s.source = input.source;
    try {
        const auto d = record.at("d_nat").get<std::size_t>();
        const auto rows = record.at("X_edge").get<std::vector<std::vector<double>>>();
        s.y = record.at("y").get<std::vector<std::uint32_t>>();
        if (rows.size() != s.topology.edges.size()) throw FormatError("X_edge needs one row per edge");
        std::vector<double> flat;
        for (const auto& r : rows) {
            if (r.size() != d) throw FormatError("X_edge rows must have d_nat entries");
            flat.insert(flat.end(), r.begin(), r.end());
        }
        if (d == 0) throw FormatError("d_nat must be positive");
        s.x_edge = Tensor({rows.size(), d}, std::move(flat));
    } catch (const json::exception& e) {
        throw FormatError(std::string("natural record: ") + e.what());
    }
    if (s.y.size() != s.n()) throw FormatError("y must have one parent per node");
    return s;
}

std::string natural_jsonl(std::span<const NaturalSample> samples) {
    std::vector<json> records;
    for (const auto& s : samples) records.push_back(to_json(s));
    return to_jsonl(records, "natural");
}

void save_natural(const std::filesystem::path& path, std::span<const NaturalSample> samples) {
    write_file(path, natural_jsonl(samples));
}

std::vector<NaturalSample> load_natural(const std::filesystem::path& path) {
    std::vector<NaturalSample> out;
    const auto records = parse_jsonl(read_file(path), "natural");
    for (std::size_t i = 0; i < records.size(); ++i) {
        try {
            out.push_back(natural_from_json(records[i]));
        } catch (const FormatError& e) {
            throw FormatError(path.string() + " record " + std::to_string(i + 1) + ": " + e.what());
        }
    }
    return out;
}

std::string dataset_hash(std::span<const NaturalSample> train, std::span<const NaturalSample> val) {
    return sha256_hex(natural_jsonl(train) + "--\n" + natural_jsonl(val));
}

double natural_chance_accuracy(std::span<const NaturalSample> samples) {
    std::vector<double> terms;
    for (const auto& s : samples) {
        for (auto d : s.topology.in_degrees()) terms.push_back(1.0 / (static_cast<double>(d) + 1.0));
    }
    std::sort(terms.begin(), terms.end());
    double total = 0.0;
    for (double t : terms) total += t;
    return terms.empty() ? 0.0 : total / static_cast<double>(terms.size());
}

double predecessor_accuracy(std::span<const NaturalSample> samples,
                            const std::vector<std::vector<std::uint32_t>>& predictions) {
    if (samples.size() != predictions.size()) throw DimensionError("one prediction per sample required");
    std::size_t correct = 0, nodes = 0;
    for (std::size_t k = 0; k < samples.size(); ++k) {
        if (predictions[k].size() != samples[k].n()) throw DimensionError("prediction size differs from its sample");
        for (std::size_t i = 0; i < samples[k].n(); ++i) correct += predictions[k][i] == samples[k].y[i];
        nodes += samples[k].n();
    }
    return nodes ? static_cast<double>(correct) / static_cast<double>(nodes) : 0.0;
}

NaturalAdapters init_adapters(const ReasonerParams& pretrained, std::size_t d_nat, std::size_t edge_hidden,
                              bool edge_interface, std::uint64_t seed) {
    Rng rng = substream(seed, "transfer/init");
    const std::size_t h = pretrained.config.latent_dim;
    NaturalAdapters a;
    a.edge_encoder.add_weight("edge_w1", d_nat, edge_hidden, rng);
    a.edge_encoder.add_zeros("edge_b1", {1, edge_hidden});
    a.edge_encoder.add_weight("edge_w2", edge_hidden, h, rng);
    a.edge_encoder.add_zeros("edge_b2", {1, h});
    if (edge_interface) {
        // Scalar path into the pretrained edge encoder, plus a residual that starts at zero.
        a.edge_encoder.add_weight("edge_ws", edge_hidden, 1, rng);
        a.edge_encoder.add_zeros("edge_bs", {1, 1});
        a.edge_encoder.add("edge_w", pretrained.encoder.get("edge_w").value);
        a.edge_encoder.add("edge_b", pretrained.encoder.get("edge_b").value);
        a.edge_encoder[a.edge_encoder.index_of("edge_w2")].value = Tensor({edge_hidden, h}, 0.0);
    }
    a.node_encoder.add("node_w", pretrained.encoder.get("node_w").value);
    a.node_encoder.add("node_b", pretrained.encoder.get("node_b").value);
    a.decoder = pretrained.decoder;
    return a;
}

void TransferConfig::validate() const {
    if (batch_size < 1) throw ConfigError("transfer batch_size must be positive");
    if (!(learning_rate > 0.0)) throw ConfigError("transfer learning_rate must be positive");
    if (edge_hidden < 1) throw ConfigError("transfer edge_hidden must be positive");
}

void require_frozen(const ParamSet& processor, const std::string& digest) {
    const std::string now = params_digest(processor);
    if (now != digest) {
        throw FrozenProcessorError("frozen processor was modified (digest " + digest.substr(0, 12) + " -> " +
                                   now.substr(0, 12) + ")");
    }
}

namespace {

Var linear(Var x, Var w, Var b) { return add_row(matmul(x, w), b); }

GraphView natural_view(const NaturalSample& s) { return GraphView::of(s.abstract(), Teacher::bellman_ford); }

}  // namespace

Var natural_scores(const BoundParams& processor, std::size_t rounds, const BoundParams& edge,
                   const BoundParams& node, const BoundParams& decoder, const NaturalSample& sample,
                   std::size_t steps) {
    const GraphView view = natural_view(sample);
    Tape& tape = edge["edge_w1"].tape();
    const std::size_t n = sample.n();
    if (sample.x_edge.rows() != view.m) throw DimensionError("X_edge needs one row per edge");
    const Var x = tape.constant(sample.x_edge);
    const Var h1 = relu(linear(x, edge["edge_w1"], edge["edge_b1"]));
    Var edges = linear(h1, edge["edge_w2"], edge["edge_b2"]);
    if (edge.has("edge_ws")) {
        const Var w = linear(h1, edge["edge_ws"], edge["edge_bs"]);
        edges = add(edges, linear(w, edge["edge_w"], edge["edge_b"]));
    }

    Tensor start({n, 1}, 0.0);
    start[sample.source] = 1.0;
    const Var is_source = tape.constant(start);
    Var reached = is_source;
    Var reach = is_source;
    Var dist = tape.constant(Tensor({n, 1}, 0.0));
    Var scores;
    const std::size_t budget = steps == 0 ? n : steps;
    for (std::size_t t = 0; t < budget; ++t) {
        const std::array<Var, kNodeFeatures> cols{reached, dist, is_source, reach};
        const Var z = linear(concat_cols(cols), node["node_w"], node["node_b"]);
        const LatentState latent = process(processor, {z, edges}, view, rounds);
        const StepOutput out = decode(decoder, latent, view);
        reached = sigmoid(out.reached_logit);
        reach = sigmoid(out.reach_logit);
        dist = out.dist;
        scores = out.pred_scores;
    }
    return scores;
}

namespace {

std::vector<std::uint32_t> tree_targets(const GraphView& view, const NaturalSample& s) {
    std::vector<std::uint32_t> target(view.n);
    for (std::uint32_t i = 0; i < view.n; ++i) {
        if (s.y[i] == i) {
            target[i] = view.self_candidate(i);
            continue;
        }
        const auto e = s.topology.find_edge(s.y[i], i);
        if (!e) throw DimensionError("target parent of node " + std::to_string(i) + " is not an in-neighbour");
        target[i] = static_cast<std::uint32_t>(*e);
    }
    return target;
}

}  // namespace

double transfer_loss_and_gradients(const ParamSet& processor, const ReasonerConfig& config,
                                   const NaturalAdapters& adapters, const NaturalSample& sample, std::size_t steps,
                                   Gradients* edge_grads, Gradients* node_grads, Gradients* decoder_grads) {
    const bool want = edge_grads || node_grads || decoder_grads;
    Tape tape(want);
    // The processor is always bound as constants.
    const BoundParams P(tape, processor, false);
    const BoundParams edge(tape, adapters.edge_encoder, want);
    const BoundParams node(tape, adapters.node_encoder, want);
    const BoundParams dec(tape, adapters.decoder, decoder_grads != nullptr);
    const Var scores = natural_scores(P, config.rounds, edge, node, dec, sample, steps);
    const GraphView view = natural_view(sample);
    const std::vector<double> weight(view.n, 1.0 / static_cast<double>(view.n));
    const Var loss =
        segment_softmax_cross_entropy(scores, view.candidate_segment, view.n, tree_targets(view, sample), weight);
    if (want) {
        tape.backward(loss);
        if (edge_grads) edge_grads->add(edge.gradients());
        if (node_grads) node_grads->add(node.gradients());
        if (decoder_grads) decoder_grads->add(dec.gradients());
    }
    return loss.value().item();
}

std::vector<std::uint32_t> transfer_predict(const ParamSet& processor, const ReasonerConfig& config,
                                            const NaturalAdapters& adapters, const NaturalSample& sample,
                                            std::size_t steps) {
    Tape tape(false);
    const BoundParams P(tape, processor, false);
    const BoundParams edge(tape, adapters.edge_encoder, false);
    const BoundParams node(tape, adapters.node_encoder, false);
    const BoundParams dec(tape, adapters.decoder, false);
    const Var scores = natural_scores(P, config.rounds, edge, node, dec, sample, steps);
    const GraphView view = natural_view(sample);
    const auto prob = candidate_softmax(scores.value().values(), view);
    std::vector<std::uint32_t> pred(view.n);
    std::vector<double> best(view.n, -1.0);
    for (std::size_t c = 0; c < prob.size(); ++c) {
        const auto s = view.candidate_segment[c];
        if (prob[c] > best[s]) {
            best[s] = prob[c];
            pred[s] = c < view.m ? view.src[c] : s;
        }
    }
    return pred;
}

namespace {

TransferResult train_adapters(const ReasonerParams& pretrained, const ParamSet& processor,
                              const std::vector<NaturalSample>& train, const std::vector<NaturalSample>& val,
                              const TransferConfig& config) {
    config.validate();
    if (train.empty() || val.empty()) throw ConfigError("transfer needs non-empty training and validation sets");
    const std::size_t d = train.front().x_edge.cols();
    TransferResult result;
    result.dataset_hash = dataset_hash(train, val);
    result.processor_digest_before = params_digest(processor);
    result.adapters = init_adapters(pretrained, d, config.edge_hidden, config.edge_interface, config.seed);
    NaturalAdapters& a = result.adapters;

    const AdamConfig adam{config.learning_rate};
    AdamState edge_state = AdamState::for_params(a.edge_encoder, adam);
    AdamState node_state = AdamState::for_params(a.node_encoder, adam);
    AdamState dec_state = AdamState::for_params(a.decoder, adam);
    Rng shuffle_rng = substream(config.seed, "transfer/shuffle");

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::vector<std::size_t> order(train.size());
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            Gradients ge = Gradients::zeros_like(a.edge_encoder);
            Gradients gn = Gradients::zeros_like(a.node_encoder);
            Gradients gd = Gradients::zeros_like(a.decoder);
            double loss = 0.0;
            for (std::size_t i = start; i < end; ++i) {
                loss += transfer_loss_and_gradients(processor, pretrained.config, a, train[order[i]], config.steps,
                                                    &ge, &gn, config.train_decoder ? &gd : nullptr);
            }
            const double inv = 1.0 / static_cast<double>(end - start);
            ge.scale(inv);
            gn.scale(inv);
            gd.scale(inv);
            adam_step(a.edge_encoder, ge, edge_state);
            adam_step(a.node_encoder, gn, node_state);
            if (config.train_decoder) adam_step(a.decoder, gd, dec_state);
            result.step_losses.push_back(loss * inv);
        }
        require_frozen(processor, result.processor_digest_before);
    }
    std::vector<std::vector<std::uint32_t>> predictions;
    for (const auto& s : val) predictions.push_back(transfer_predict(processor, pretrained.config, a, s, config.steps));
    result.val_accuracy = predecessor_accuracy(val, predictions);
    result.chance_accuracy = natural_chance_accuracy(val);
    result.processor_digest_after = params_digest(processor);
    require_frozen(processor, result.processor_digest_before);
    return result;
}

}  // namespace

TransferResult transfer_train(const ReasonerParams& pretrained, const std::vector<NaturalSample>& train,
                              const std::vector<NaturalSample>& val, const TransferConfig& config) {
    return train_adapters(pretrained, pretrained.processor, train, val, config);
}

TransferResult ablation_random_processor(const ReasonerParams& pretrained, std::uint64_t init_seed,
                                         const std::vector<NaturalSample>& train,
                                         const std::vector<NaturalSample>& val, const TransferConfig& config) {
    const ParamSet random = ReasonerParams::initialize(pretrained.config, pretrained.teacher, init_seed).processor;
    return train_adapters(pretrained, random, train, val, config);
}

void BaselineConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("baseline learning_rate must be positive");
    if (!(margin >= 0.0)) throw ConfigError("baseline margin must be non-negative");
    if (!(hinge_weight >= 0.0)) throw ConfigError("baseline hinge_weight must be non-negative");
    if (!(min_weight > 0.0)) throw ConfigError("baseline min_weight must be positive");
}

std::vector<double> predict_weights(std::span<const double> coefficients, const NaturalSample& sample) {
    const std::size_t d = sample.x_edge.cols();
    if (coefficients.size() != d) throw DimensionError("coefficient count differs from feature width");
    std::vector<double> w(sample.topology.edges.size(), 0.0);
    for (std::size_t e = 0; e < w.size(); ++e) {
        for (std::size_t j = 0; j < d; ++j) w[e] += sample.x_edge.at(e, j) * coefficients[j];
    }
    return w;
}

std::vector<std::uint32_t> bottleneck_predict(const NaturalSample& sample, std::span<const double> weights,
                                              double min_weight) {
    if (weights.size() != sample.topology.edges.size()) throw DimensionError("one weight per edge required");
    AbstractInput input = sample.abstract();
    for (std::size_t e = 0; e < weights.size(); ++e) {
        input.graph.weights[e] = std::isfinite(weights[e]) ? std::max(weights[e], min_weight) : min_weight;
    }
    return bellman_ford_trace(input).output().pred;
}

namespace {

Eigen::MatrixXd stacked_features(std::span<const NaturalSample> samples) {
    std::size_t rows = 0;
    const std::size_t d = samples.front().x_edge.cols();
    for (const auto& s : samples) rows += s.x_edge.rows();
    Eigen::MatrixXd X(rows, d);
    std::size_t r = 0;
    for (const auto& s : samples) {
        for (std::size_t e = 0; e < s.x_edge.rows(); ++e, ++r) {
            for (std::size_t j = 0; j < d; ++j) X(r, j) = s.x_edge.at(e, j);
        }
    }
    return X;
}

// Fraction of nodes whose parent the teacher reproduces under per-edge weights.
double tree_consistency(std::span<const NaturalSample> samples, std::span<const double> stacked, double min_weight) {
    std::vector<std::vector<std::uint32_t>> preds;
    std::size_t offset = 0;
    for (const auto& s : samples) {
        const std::size_t m = s.topology.edges.size();
        preds.push_back(bottleneck_predict(s, stacked.subspan(offset, m), min_weight));
        offset += m;
    }
    return predecessor_accuracy(samples, preds);
}

}  // namespace

std::vector<double> reconstruction_target(std::span<const NaturalSample> samples, double mean_weight,
                                          double min_weight) {
    if (samples.empty()) throw ConfigError("reconstruction needs samples");
    const Eigen::MatrixXd X = stacked_features(samples);
    if (X.rows() == 0) throw ConfigError("reconstruction needs at least one edge");
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(X.transpose() * X);
    const Eigen::VectorXd p = X * eig.eigenvectors().col(X.cols() - 1);
    const double mean_p = p.mean();
    std::vector<double> best;
    double best_score = -1.0;
    for (const double sign : {1.0, -1.0}) {
        const double factor = std::abs(mean_p) > 0.0 ? sign * mean_weight / std::abs(mean_p) : sign;
        std::vector<double> t(p.size());
        for (Eigen::Index i = 0; i < p.size(); ++i) t[i] = factor * p(i);
        const double score = tree_consistency(samples, t, min_weight);
        if (score > best_score) {
            best_score = score;
            best = std::move(t);
        }
    }
    return best;
}

namespace {

// Tree-consistency constraints of one sample: at node v with tree edge into it,
// the tree path cost must undercut every other in-edge (u', v) by the margin.
struct HingeData {
    Tensor path;  // [n x m] incidence of tree paths
    std::vector<std::uint32_t> node, other, edge;
};

HingeData hinge_data(const NaturalSample& s) {
    const std::size_t n = s.n(), m = s.topology.edges.size();
    HingeData h{Tensor({n, std::max<std::size_t>(m, 1)}, 0.0), {}, {}, {}};
    for (std::uint32_t v = 0; v < n; ++v) {
        std::uint32_t u = v;
        for (std::size_t guard = 0; u != s.source && guard < n; ++guard) {
            const auto e = s.topology.find_edge(s.y[u], u);
            if (!e) break;
            h.path.at(v, *e) = 1.0;
            u = s.y[u];
        }
    }
    for (std::size_t e = 0; e < m; ++e) {
        const auto [u, v] = s.topology.edges[e];
        if (v == s.source || s.y[v] == u) continue;
        h.node.push_back(v);
        h.other.push_back(u);
        h.edge.push_back(static_cast<std::uint32_t>(e));
    }
    return h;
}

}  // namespace

BaselineResult baseline_bottleneck(const std::vector<NaturalSample>& train, const std::vector<NaturalSample>& val,
                                   double mean_weight, const BaselineConfig& config) {
    config.validate();
    if (train.empty() || val.empty()) throw ConfigError("baseline needs non-empty training and validation sets");
    BaselineResult result;
    result.dataset_hash = dataset_hash(train, val);
    const std::size_t d = train.front().x_edge.cols();

    const std::vector<double> target = reconstruction_target(train, mean_weight, config.min_weight);
    const Eigen::MatrixXd X = stacked_features(train);
    const Eigen::VectorXd t = Eigen::Map<const Eigen::VectorXd>(target.data(), static_cast<Eigen::Index>(target.size()));
    // Least-squares start, lightly ridged for rank-deficient features.
    Eigen::MatrixXd gram = X.transpose() * X;
    gram.diagonal().array() += 1e-10 * std::max(1.0, gram.trace());
    const Eigen::VectorXd beta0 = gram.ldlt().solve(X.transpose() * t);

    ParamSet params;
    params.add("beta", Tensor({d, 1}, std::vector<double>(beta0.data(), beta0.data() + d)));
    AdamState state = AdamState::for_params(params, AdamConfig{config.learning_rate});
    std::vector<HingeData> hinges;
    std::size_t constraints = 0;
    for (const auto& s : train) {
        hinges.push_back(hinge_data(s));
        constraints += hinges.back().node.size();
    }
    const double recon_scale = 1.0 / static_cast<double>(target.size());
    const double hinge_scale = constraints ? config.hinge_weight / static_cast<double>(constraints) : 0.0;

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        Tape tape;
        const BoundParams b(tape, params, true);
        Var total;
        std::size_t offset = 0;
        for (std::size_t k = 0; k < train.size(); ++k) {
            const NaturalSample& s = train[k];
            const std::size_t m = s.topology.edges.size();
            if (m == 0) continue;
            const Var w_hat = matmul(tape.constant(s.x_edge), b["beta"]);
            const Var tk = tape.constant(
                Tensor({m, 1}, std::vector<double>(target.begin() + offset, target.begin() + offset + m)));
            offset += m;
            const Var diff = sub(w_hat, tk);
            Var loss = scale(sum(mul(diff, diff)), recon_scale);
            const HingeData& h = hinges[k];
            if (!h.node.empty() && hinge_scale > 0.0) {
                const Var dist = matmul(tape.constant(h.path), w_hat);
                const Var slack = sub(sub(gather_rows(dist, h.node), gather_rows(dist, h.other)),
                                      gather_rows(w_hat, h.edge));
                const Var margin = tape.constant(Tensor({h.node.size(), 1}, config.margin));
                loss = add(loss, scale(sum(relu(add(slack, margin))), hinge_scale));
            }
            total = total.valid() ? add(total, loss) : loss;
        }
        if (!total.valid()) break;
        tape.backward(total);
        adam_step(params, b.gradients(), state);
    }
    const auto v = params.get("beta").value.values();
    result.coefficients.assign(v.begin(), v.end());
    std::vector<std::vector<std::uint32_t>> preds;
    for (const auto& s : val) preds.push_back(bottleneck_predict(s, predict_weights(result.coefficients, s), config.min_weight));
    result.val_accuracy = predecessor_accuracy(val, preds);
    return result;
}

void CompareConfig::validate() const {
    if (sizes.empty() || seeds.empty()) throw ConfigError("compare needs at least one size and one seed");
    for (auto s : sizes) {
        if (s < 1) throw ConfigError("training sizes must be positive");
    }
    if (val_size < 1) throw ConfigError("val_size must be positive");
    natural.validate();
    transfer.validate();
    baseline.validate();
}

std::vector<ReportRow> compare_report(const ReasonerParams& pretrained, std::uint64_t random_init_seed,
                                      const CompareConfig& config) {
    config.validate();
    using clock = std::chrono::steady_clock;
    const std::size_t pool_size = *std::max_element(config.sizes.begin(), config.sizes.end());
    const double mean_weight = 0.5 * (config.natural.family.weight_lo + config.natural.family.weight_hi);
    std::vector<ReportRow> rows;
    for (const auto seed : config.seeds) {
        Rng train_rng = substream(seed, "natural/train");
        Rng val_rng = substream(seed, "natural/val");
        const auto pool = generate_natural(config.natural, pool_size, train_rng);
        const auto val = generate_natural(config.natural, config.val_size, val_rng);
        for (const auto size : config.sizes) {
            const std::vector<NaturalSample> train(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(size));
            TransferConfig tc = config.transfer;
            tc.seed = seed;
            const auto timed = [&](auto&& fn) {
                const auto start = clock::now();
                ReportRow row = fn();
                row.train_size = size;
                row.seed = seed;
                if (config.record_time) row.wall_time_s = std::chrono::duration<double>(clock::now() - start).count();
                rows.push_back(std::move(row));
            };
            const auto from_transfer = [](const char* method, const TransferResult& r) {
                return ReportRow{method, 0, 0, r.val_accuracy, r.dataset_hash, 0.0, r.processor_digest_before,
                                 r.processor_digest_after};
            };
            if (config.run_transfer) timed([&] { return from_transfer("transfer", transfer_train(pretrained, train, val, tc)); });
            timed([&] {
                const auto r = baseline_bottleneck(train, val, mean_weight, config.baseline);
                return ReportRow{"baseline", 0, 0, r.val_accuracy, r.dataset_hash, 0.0, "", ""};
            });
            timed([&] {
                return from_transfer("ablation",
                                     ablation_random_processor(pretrained, random_init_seed, train, val, tc));
            });
        }
    }
    require_fair(rows);
    return rows;
}

void require_fair(const std::vector<ReportRow>& rows) {
    std::map<std::pair<std::size_t, std::uint64_t>, std::string> seen;
    for (const auto& r : rows) {
        const auto key = std::make_pair(r.train_size, r.seed);
        auto [it, fresh] = seen.emplace(key, r.dataset_hash);
        if (!fresh && it->second != r.dataset_hash) {
            throw FairnessError("dataset hash mismatch for train_size=" + std::to_string(r.train_size) +
                                " seed=" + std::to_string(r.seed) + " (method " + r.method + ")");
        }
        if (r.processor_digest_before != r.processor_digest_after) {
            throw FrozenProcessorError("processor changed during " + r.method + " run");
        }
    }
}

namespace {

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
    return buf;
}

}  // namespace

std::string report_csv(const std::vector<ReportRow>& rows) {
    std::string out =
        "method,train_size,seed,val_accuracy,dataset_hash,wall_time_s,processor_digest_before,processor_digest_after\n";
    for (const auto& r : rows) {
        out += r.method + "," + std::to_string(r.train_size) + "," + std::to_string(r.seed) + "," +
               fixed(r.val_accuracy, 6) + "," + r.dataset_hash + "," + fixed(r.wall_time_s, 3) + "," +
               r.processor_digest_before + "," + r.processor_digest_after + "\n";
    }
    return out;
}

json report_summary(const std::vector<ReportRow>& rows) {
    // Keyed by first appearance so the output order follows the run order.
    std::vector<std::pair<std::string, std::size_t>> keys;
    std::map<std::pair<std::string, std::size_t>, std::vector<double>> acc;
    for (const auto& r : rows) {
        const auto key = std::make_pair(r.method, r.train_size);
        if (!acc.contains(key)) keys.push_back(key);
        acc[key].push_back(r.val_accuracy);
    }
    json table = json::array();
    for (const auto& key : keys) {
        const auto& v = acc[key];
        const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
        table.push_back({{"method", key.first},
                         {"train_size", key.second},
                         {"seeds", v.size()},
                         {"mean", mean},
                         {"min", *std::min_element(v.begin(), v.end())},
                         {"max", *std::max_element(v.begin(), v.end())}});
    }
    return {{"summary", table}, {"rows", rows.size()}};
}

}  // namespace nar
