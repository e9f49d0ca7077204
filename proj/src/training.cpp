#include "nar/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace nar {

void TrainConfig::validate() const {
    family.validate();
    reasoner.validate();
    if (train_size < 1 || val_size < 1) throw ConfigError("dataset sizes must be positive");
    if (batch_size < 1) throw ConfigError("batch_size must be positive");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (!(teacher_forcing >= 0.0 && teacher_forcing <= 1.0)) {
        throw ConfigError("teacher_forcing must lie in [0, 1]");
    }
    if (weights.dist < 0.0 || weights.pred < 0.0 || weights.reach < 0.0) {
        throw ConfigError("loss weights must be non-negative");
    }
}

Var step_loss(const StepOutput& pred, const HintStep& target, const GraphView& view, const AbstractInput& input,
              const LossWeights& weights) {
    Tape& tape = pred.dist.tape();
    const std::size_t n = view.n;
    const double per_node = 1.0 / static_cast<double>(n);

    std::size_t reached = 0;
    for (auto r : target.reached) reached += r ? 1 : 0;
    Tensor dist_target({n, 1}, 0.0);
    Tensor dist_mask({n, 1}, 0.0);
    const double dist_norm = 1.0 / static_cast<double>(std::max<std::size_t>(reached, 1));
    for (std::size_t i = 0; i < n; ++i) {
        if (!target.reached[i]) continue;
        dist_target[i] = target.dist[i] * view.dist_scale;
        dist_mask[i] = dist_norm;
    }
    const Var diff = sub(pred.dist, tape.constant(std::move(dist_target)));
    const Var dist_term = sum(mul(mul(diff, diff), tape.constant(std::move(dist_mask))));

    const auto targets = predecessor_targets(view, input, target);
    const std::vector<double> node_weight(n, per_node);
    const Var pred_term =
        segment_softmax_cross_entropy(pred.pred_scores, view.candidate_segment, n, targets, node_weight);

    std::vector<double> reached_y(n), reach_y(n);
    for (std::size_t i = 0; i < n; ++i) {
        reached_y[i] = target.reached[i] ? 1.0 : 0.0;
        reach_y[i] = target.reach[i] ? 1.0 : 0.0;
    }
    const Var reach_term = add(bce_with_logits(pred.reached_logit, reached_y, node_weight),
                               bce_with_logits(pred.reach_logit, reach_y, node_weight));

    return add(add(scale(dist_term, weights.dist), scale(pred_term, weights.pred)), scale(reach_term, weights.reach));
}

std::vector<Trace> make_traces(Teacher teacher, const std::vector<AbstractInput>& inputs) {
    std::vector<Trace> traces;
    traces.reserve(inputs.size());
    for (const auto& in : inputs) traces.push_back(run_teacher(teacher, in));
    return traces;
}

std::vector<Trace> make_trace_dataset(Teacher teacher, const GraphFamily& family, std::size_t count, Rng& rng) {
    return make_traces(teacher, sample_inputs(family, count, rng));
}

double trace_loss_and_gradients(const ReasonerParams& params, const Trace& trace, const LossWeights& weights,
                                double teacher_forcing, Rng* rng, Gradients* encoder_grads, Gradients* processor_grads,
                                Gradients* decoder_grads) {
    const GraphView view = GraphView::of(trace.input, trace.teacher);
    const bool want_grads = encoder_grads || processor_grads || decoder_grads;
    Tape tape(want_grads);
    const BoundParams f(tape, params.encoder, want_grads);
    const BoundParams P(tape, params.processor, want_grads);
    const BoundParams g(tape, params.decoder, want_grads);
    std::bernoulli_distribution use_model(1.0 - teacher_forcing);

    Var total;
    HintStep model_hint;
    const auto& steps = trace.steps;
    for (std::size_t t = 0; t < steps.size(); ++t) {
        // The last pair asks the model to hold the fixed point.
        const HintStep& target = t + 1 < steps.size() ? steps[t + 1] : steps[t];
        const bool own = t > 0 && teacher_forcing < 1.0 && rng != nullptr && use_model(*rng);
        const HintStep& in = own ? model_hint : steps[t];
        const StepOutput out = decode(g, process(P, encode(f, view, trace.input, in), view, params.config.rounds), view);
        const Var l = step_loss(out, target, view, trace.input, weights);
        total = total.valid() ? add(total, l) : l;
        if (teacher_forcing < 1.0) model_hint = soften(out, view).harden(view);
    }
    const double loss = total.value().item();
    if (want_grads) {
        tape.backward(total);
        if (encoder_grads) encoder_grads->add(f.gradients());
        if (processor_grads) processor_grads->add(P.gradients());
        if (decoder_grads) decoder_grads->add(g.gradients());
    }
    return loss;
}

namespace {

double selection_score(Teacher teacher, const Metrics& m) {
    return teacher == Teacher::bfs ? m.reach_accuracy : m.pred_accuracy;
}

std::vector<std::size_t> shuffled(std::size_t count, Rng& rng) {
    std::vector<std::size_t> order(count);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    return order;
}

}  // namespace

TrainResult train(Teacher teacher, const TrainConfig& config, const EpochCallback& on_epoch) {
    config.validate();
    Rng train_rng = substream(config.seed, "dataset/train");
    Rng val_rng = substream(config.seed, "dataset/val");
    const auto train_set = make_trace_dataset(teacher, config.family, config.train_size, train_rng);
    const auto val_set = make_trace_dataset(teacher, config.family, config.val_size, val_rng);
    return train(teacher, config, train_set, val_set, on_epoch);
}

TrainResult train(Teacher teacher, const TrainConfig& config, const std::vector<Trace>& train_set,
                  const std::vector<Trace>& val_set, const EpochCallback& on_epoch) {
    config.validate();
    if (train_set.empty() || val_set.empty()) throw ConfigError("training and validation sets must be non-empty");
    for (const auto& t : train_set) {
        if (t.teacher != teacher) throw ConfigError("training trace produced by a different teacher");
    }
    ReasonerParams params = ReasonerParams::initialize(config.reasoner, teacher, config.seed);
    AdamConfig adam{config.learning_rate};
    AdamState enc_state = AdamState::for_params(params.encoder, adam);
    AdamState proc_state = AdamState::for_params(params.processor, adam);
    AdamState dec_state = AdamState::for_params(params.decoder, adam);
    Rng shuffle_rng = substream(config.seed, "shuffle");
    Rng forcing_rng = substream(config.seed, "teacher_forcing");

    TrainResult result;
    result.params = params;
    result.metrics = evaluate(params, val_set);
    double best_score = selection_score(teacher, result.metrics);
    std::vector<double> loss_curve;

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        const auto order = shuffled(train_set.size(), shuffle_rng);
        double epoch_loss = 0.0;
        try {
            for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
                const std::size_t end = std::min(order.size(), start + config.batch_size);
                Gradients ge = Gradients::zeros_like(params.encoder);
                Gradients gp = Gradients::zeros_like(params.processor);
                Gradients gd = Gradients::zeros_like(params.decoder);
                double batch_loss = 0.0;
                for (std::size_t i = start; i < end; ++i) {
                    batch_loss += trace_loss_and_gradients(params, train_set[order[i]], config.weights,
                                                           config.teacher_forcing, &forcing_rng, &ge, &gp, &gd);
                }
                const double inv = 1.0 / static_cast<double>(end - start);
                batch_loss *= inv;
                if (!std::isfinite(batch_loss)) throw NumericError("training loss is not finite");
                ge.scale(inv);
                gp.scale(inv);
                gd.scale(inv);
                adam_step(params.encoder, ge, enc_state);
                adam_step(params.processor, gp, proc_state);
                adam_step(params.decoder, gd, dec_state);
                result.step_losses.push_back(batch_loss);
                epoch_loss += batch_loss * static_cast<double>(end - start);
            }
        } catch (const NumericError& e) {
            throw DivergenceError("training diverged in epoch " + std::to_string(epoch) + ": " + e.what(),
                                  result.params);
        }
        epoch_loss /= static_cast<double>(train_set.size());
        loss_curve.push_back(epoch_loss);
        EpochRecord record{epoch, epoch_loss, evaluate(params, val_set)};
        const double score = selection_score(teacher, record.validation);
        if (score > best_score) {
            best_score = score;
            result.params = params;
            result.metrics = record.validation;
            result.best_epoch = epoch;
        }
        if (on_epoch) on_epoch(record);
        result.history.push_back(std::move(record));
    }
    result.metrics.loss_curve = loss_curve;
    return result;
}

namespace {

// Sums in sorted order so the result does not depend on node numbering.
double sorted_sum(std::vector<double> terms) {
    std::sort(terms.begin(), terms.end());
    double total = 0.0;
    for (double t : terms) total += t;
    return total;
}

}  // namespace

double chance_predecessor_accuracy(const std::vector<Trace>& dataset) {
    std::vector<double> terms;
    for (const auto& t : dataset) {
        for (auto d : t.input.graph.in_degrees()) terms.push_back(1.0 / (static_cast<double>(d) + 1.0));
    }
    return terms.empty() ? 0.0 : sorted_sum(terms) / static_cast<double>(terms.size());
}

Metrics score_predictions(Teacher teacher, const std::vector<Trace>& dataset, const std::vector<HintStep>& predictions) {
    if (dataset.empty()) throw ConfigError("evaluation dataset is empty");
    if (predictions.size() != dataset.size()) throw DimensionError("one prediction per trace required");
    Metrics m;
    std::size_t pred_ok = 0, reached_ok = 0, reach_ok = 0, exact = 0, post_ok = 0;
    std::vector<double> dist_err;
    for (std::size_t k = 0; k < dataset.size(); ++k) {
        const HintStep& truth = dataset[k].output();
        const HintStep& guess = predictions[k];
        if (guess.n() != truth.n()) throw DimensionError("prediction size differs from its trace");
        bool all = true;
        for (std::size_t i = 0; i < truth.n(); ++i) {
            const bool p = guess.pred[i] == truth.pred[i];
            const bool r1 = guess.reached[i] == truth.reached[i];
            const bool r2 = guess.reach[i] == truth.reach[i];
            pred_ok += p;
            reached_ok += r1;
            reach_ok += r2;
            all = all && p && r1 && r2;
            if (truth.reached[i]) {
                dist_err.push_back(std::abs(guess.dist[i] - truth.dist[i]));
            }
        }
        exact += all;
        const HintStep candidate = tree_distances(teacher, dataset[k].input, guess);
        post_ok += !check_postcondition(teacher, dataset[k].input, candidate).has_value();
        m.nodes += truth.n();
    }
    m.graphs = dataset.size();
    const double nodes = static_cast<double>(m.nodes);
    m.pred_accuracy = static_cast<double>(pred_ok) / nodes;
    m.reached_accuracy = static_cast<double>(reached_ok) / nodes;
    m.reach_accuracy = static_cast<double>(reach_ok) / nodes;
    m.dist_mae = dist_err.empty() ? 0.0 : sorted_sum(dist_err) / static_cast<double>(dist_err.size());
    m.exact_match = static_cast<double>(exact) / static_cast<double>(m.graphs);
    m.postcondition_rate = static_cast<double>(post_ok) / static_cast<double>(m.graphs);
    m.chance_pred_accuracy = chance_predecessor_accuracy(dataset);
    return m;
}

Metrics evaluate(const ReasonerParams& params, const std::vector<Trace>& dataset, std::size_t step_budget) {
    if (dataset.empty()) throw ConfigError("evaluation dataset is empty");
    std::vector<HintStep> predictions;
    predictions.reserve(dataset.size());
    for (const auto& t : dataset) {
        if (t.teacher != params.teacher) throw ConfigError("dataset teacher differs from the model's teacher");
        predictions.push_back(rollout(params, t.input, step_budget).output());
    }
    return score_predictions(params.teacher, dataset, predictions);
}

Metrics evaluate_oracle(const std::vector<Trace>& dataset) {
    if (dataset.empty()) throw ConfigError("evaluation dataset is empty");
    std::vector<HintStep> predictions;
    for (const auto& t : dataset) predictions.push_back(t.output());
    return score_predictions(dataset.front().teacher, dataset, predictions);
}

ReasonerParams MultiTaskParams::for_task(Teacher teacher) const {
    auto it = heads.find(teacher);
    if (it == heads.end()) throw ConfigError("no heads for teacher " + to_string(teacher));
    ReasonerParams p;
    p.config = config;
    p.teacher = teacher;
    p.encoder = it->second.first;
    p.processor = processor;
    p.decoder = it->second.second;
    return p;
}

MultiTaskResult train_multitask(const std::vector<Teacher>& teachers, const TrainConfig& config) {
    config.validate();
    std::vector<Teacher> tasks = teachers;
    std::sort(tasks.begin(), tasks.end());
    tasks.erase(std::unique(tasks.begin(), tasks.end()), tasks.end());
    if (tasks.size() < 2) throw ConfigError("multi-task training needs at least 2 distinct teachers");

    MultiTaskParams mp;
    mp.config = config.reasoner;
    Rng init_rng = substream(config.seed, "init");
    mp.processor = init_processor(config.reasoner, init_rng);
    for (Teacher t : tasks) mp.heads[t] = {init_encoder(config.reasoner, init_rng), init_decoder(config.reasoner, init_rng)};

    std::map<Teacher, std::vector<Trace>> train_sets, val_sets;
    for (Teacher t : tasks) {
        Rng tr = substream(config.seed, "dataset/train/" + to_string(t));
        Rng va = substream(config.seed, "dataset/val/" + to_string(t));
        train_sets[t] = make_trace_dataset(t, config.family, config.train_size, tr);
        val_sets[t] = make_trace_dataset(t, config.family, config.val_size, va);
    }

    AdamConfig adam{config.learning_rate};
    AdamState proc_state = AdamState::for_params(mp.processor, adam);
    std::map<Teacher, std::pair<AdamState, AdamState>> head_states;
    for (Teacher t : tasks) {
        head_states[t] = {AdamState::for_params(mp.heads[t].first, adam),
                          AdamState::for_params(mp.heads[t].second, adam)};
    }
    Rng shuffle_rng = substream(config.seed, "shuffle");
    Rng forcing_rng = substream(config.seed, "teacher_forcing");

    MultiTaskResult result;
    const std::size_t batches = (config.train_size + config.batch_size - 1) / config.batch_size;
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        std::map<Teacher, std::vector<std::size_t>> orders;
        for (Teacher t : tasks) orders[t] = shuffled(train_sets[t].size(), shuffle_rng);
        try {
            for (std::size_t b = 0; b < batches; ++b) {
                for (Teacher t : tasks) {
                    const std::size_t start = b * config.batch_size;
                    const std::size_t end = std::min(config.train_size, start + config.batch_size);
                    const ReasonerParams task = mp.for_task(t);
                    Gradients ge = Gradients::zeros_like(task.encoder);
                    Gradients gp = Gradients::zeros_like(task.processor);
                    Gradients gd = Gradients::zeros_like(task.decoder);
                    double loss = 0.0;
                    for (std::size_t i = start; i < end; ++i) {
                        loss += trace_loss_and_gradients(task, train_sets[t][orders[t][i]], config.weights,
                                                         config.teacher_forcing, &forcing_rng, &ge, &gp, &gd);
                    }
                    const double inv = 1.0 / static_cast<double>(end - start);
                    if (!std::isfinite(loss)) throw NumericError("training loss is not finite");
                    ge.scale(inv);
                    gp.scale(inv);
                    gd.scale(inv);
                    adam_step(mp.processor, gp, proc_state);
                    adam_step(mp.heads[t].first, ge, head_states[t].first);
                    adam_step(mp.heads[t].second, gd, head_states[t].second);
                    result.step_losses[t].push_back(loss * inv);
                }
            }
        } catch (const NumericError& e) {
            throw DivergenceError("multi-task training diverged in epoch " + std::to_string(epoch) + ": " + e.what(),
                                  mp.for_task(tasks.front()));
        }
    }
    result.params = mp;
    for (Teacher t : tasks) result.metrics[t] = evaluate(mp.for_task(t), val_sets[t]);
    return result;
}

std::vector<SizeRow> size_generalisation_eval(const ReasonerParams& params, const GraphFamily& family,
                                              const std::vector<std::size_t>& sizes, std::size_t count,
                                              std::uint64_t seed) {
    std::vector<SizeRow> rows;
    for (std::size_t n : sizes) {
        GraphFamily fam = family;
        fam.n_min = n;
        fam.n_max = n;
        Rng rng = substream(seed, "size/" + std::to_string(n));
        const auto dataset = make_trace_dataset(params.teacher, fam, count, rng);
        rows.push_back({n, evaluate(params, dataset)});
    }
    return rows;
}

}  // namespace nar
