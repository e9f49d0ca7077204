#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <vector>

#include "nar/reasoner.hpp"

namespace nar {

struct LossWeights {
    double dist = 1.0;
    double pred = 1.0;
    double reach = 1.0;
};

struct TrainConfig {
    GraphFamily family;
    std::size_t train_size = 1000;
    std::size_t val_size = 200;
    std::size_t epochs = 20;
    std::size_t batch_size = 32;
    double learning_rate = 1e-3;
    std::uint64_t seed = 0;
    // Probability of feeding the ground-truth hint (rather than the model's own
    // previous prediction) into each step.
    double teacher_forcing = 1.0;
    LossWeights weights;
    ReasonerConfig reasoner;

    void validate() const;
};

struct Metrics {
    std::size_t graphs = 0;
    std::size_t nodes = 0;
    double pred_accuracy = 0.0;
    double reached_accuracy = 0.0;
    double reach_accuracy = 0.0;
    double dist_mae = 0.0;
    double exact_match = 0.0;
    double postcondition_rate = 0.0;
    // Expected accuracy of a uniform guess over {in-neighbours, self}.
    double chance_pred_accuracy = 0.0;
    std::vector<double> loss_curve;

    friend bool operator==(const Metrics&, const Metrics&) = default;
};

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    Metrics validation;
};

struct TrainResult {
    ReasonerParams params;  // best validation checkpoint
    Metrics metrics;        // validation metrics of that checkpoint
    std::size_t best_epoch = 0;
    std::vector<EpochRecord> history;
    std::vector<double> step_losses;  // mean batch loss per optimizer step
};

class DivergenceError : public Error {
public:
    DivergenceError(const std::string& what, ReasonerParams last_good)
        : Error(what), last_good_(std::move(last_good)) {}
    const ReasonerParams& last_good() const noexcept { return last_good_; }

private:
    ReasonerParams last_good_;
};

// Masked MSE on standardised distances (target-reached nodes), predecessor
// cross-entropy and reached/reach BCE, each averaged over nodes.
Var step_loss(const StepOutput& pred, const HintStep& target, const GraphView& view, const AbstractInput& input,
              const LossWeights& weights);

std::vector<Trace> make_traces(Teacher teacher, const std::vector<AbstractInput>& inputs);
std::vector<Trace> make_trace_dataset(Teacher teacher, const GraphFamily& family, std::size_t count, Rng& rng);

// Teacher-forced loss of one trace summed over steps (plus the fixed-point step),
// with gradients for every parameter of `params`.
double trace_loss_and_gradients(const ReasonerParams& params, const Trace& trace, const LossWeights& weights,
                                double teacher_forcing, Rng* rng, Gradients* encoder_grads, Gradients* processor_grads,
                                Gradients* decoder_grads);

using EpochCallback = std::function<void(const EpochRecord&)>;

TrainResult train(Teacher teacher, const TrainConfig& config, const EpochCallback& on_epoch = {});
TrainResult train(Teacher teacher, const TrainConfig& config, const std::vector<Trace>& train_set,
                  const std::vector<Trace>& val_set, const EpochCallback& on_epoch = {});

// Compares hard final predictions against teacher outputs.
Metrics score_predictions(Teacher teacher, const std::vector<Trace>& dataset, const std::vector<HintStep>& predictions);
Metrics evaluate(const ReasonerParams& params, const std::vector<Trace>& dataset, std::size_t step_budget = 0);
// Replays the teacher's own outputs as predictions.
Metrics evaluate_oracle(const std::vector<Trace>& dataset);
double chance_predecessor_accuracy(const std::vector<Trace>& dataset);

// Shared processor, one encoder/decoder pair per teacher.
struct MultiTaskParams {
    ReasonerConfig config;
    ParamSet processor;
    std::map<Teacher, std::pair<ParamSet, ParamSet>> heads;

    ReasonerParams for_task(Teacher teacher) const;
};

struct MultiTaskResult {
    MultiTaskParams params;
    std::map<Teacher, Metrics> metrics;
    std::map<Teacher, std::vector<double>> step_losses;
};

MultiTaskResult train_multitask(const std::vector<Teacher>& teachers, const TrainConfig& config);

struct SizeRow {
    std::size_t n = 0;
    Metrics metrics;
};

// Fresh datasets of exactly n nodes per size, drawn from the training family otherwise.
std::vector<SizeRow> size_generalisation_eval(const ReasonerParams& params, const GraphFamily& family,
                                              const std::vector<std::size_t>& sizes, std::size_t count,
                                              std::uint64_t seed);

}  // namespace nar
