#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "nar/io.hpp"
#include "nar/training.hpp"

namespace nar {

enum class FeatureMap { smooth, linear };

std::string to_string(FeatureMap map);
FeatureMap feature_map_from_string(const std::string& name);

struct NaturalGenConfig {
    std::size_t d_nat = 16;
    std::size_t informative = 4;  // k
    double noise = 0.25;          // sigma
    FeatureMap feature_map = FeatureMap::smooth;
    double distractor_sd = 1.0;   // distractor dims are N(0, sd^2)
    GraphFamily family;
    // Seeds the fixed feature functions, kept apart from the sample seed so that
    // different datasets share one generative story.
    std::uint64_t map_seed = 7;

    void validate() const;
};

// Unweighted topology plus raw edge features; the hidden weights are not kept.
struct NaturalSample {
    Graph topology;  // unit weights
    Tensor x_edge;   // [m x d_nat]
    std::uint32_t source = 0;
    std::vector<std::uint32_t> y;  // shortest-path tree parents under hidden weights

    std::size_t n() const noexcept { return topology.n; }
    AbstractInput abstract() const { return {topology, source}; }
    friend bool operator==(const NaturalSample&, const NaturalSample&) = default;
};

// Appends the hidden weights of each sample to `hidden_weights` when given.
std::vector<NaturalSample> generate_natural(const NaturalGenConfig& config, std::size_t count, Rng& rng,
                                            std::vector<std::vector<double>>* hidden_weights = nullptr);

// Feature vector of a single weight before noise; exposed for tests.
std::vector<double> feature_function(const NaturalGenConfig& config, double w);

json to_json(const NaturalSample& sample);
NaturalSample natural_from_json(const json& record);
std::string natural_jsonl(std::span<const NaturalSample> samples);
void save_natural(const std::filesystem::path& path, std::span<const NaturalSample> samples);
std::vector<NaturalSample> load_natural(const std::filesystem::path& path);

std::string dataset_hash(std::span<const NaturalSample> train, std::span<const NaturalSample> val);

double natural_chance_accuracy(std::span<const NaturalSample> samples);
double predecessor_accuracy(std::span<const NaturalSample> samples,
                            const std::vector<std::vector<std::uint32_t>>& predictions);

// f~ (edge MLP and node encoder) and g~ around a frozen processor.
struct NaturalAdapters {
    ParamSet edge_encoder;
    ParamSet node_encoder;
    ParamSet decoder;

    friend bool operator==(const NaturalAdapters&, const NaturalAdapters&) = default;
};

// The node encoder and decoder start from the pretrained f and g; the edge MLP
// is drawn from `seed`. With `edge_interface` the MLP also emits a scalar that
// enters through a copy of the pretrained edge encoder.
NaturalAdapters init_adapters(const ReasonerParams& pretrained, std::size_t d_nat, std::size_t edge_hidden,
                              bool edge_interface, std::uint64_t seed);

struct TransferConfig {
    std::size_t epochs = 30;
    std::size_t batch_size = 8;
    double learning_rate = 3e-3;
    std::size_t edge_hidden = 64;
    std::size_t steps = 0;  // rollout steps; 0 means n
    bool edge_interface = true;
    // Off keeps g~ equal to the pretrained g.
    bool train_decoder = false;
    std::uint64_t seed = 0;

    void validate() const;
};

class FrozenProcessorError : public Error {
public:
    using Error::Error;
};

// Throws FrozenProcessorError if the processor no longer hashes to `digest`.
void require_frozen(const ParamSet& processor, const std::string& digest);

// Final-step predecessor scores after `steps` rounds of soft hint recirculation
// (0 means n). Candidates follow GraphView::candidate_segment.
Var natural_scores(const BoundParams& processor, std::size_t rounds, const BoundParams& edge,
                   const BoundParams& node, const BoundParams& decoder, const NaturalSample& sample,
                   std::size_t steps);

double transfer_loss_and_gradients(const ParamSet& processor, const ReasonerConfig& config,
                                   const NaturalAdapters& adapters, const NaturalSample& sample, std::size_t steps,
                                   Gradients* edge_grads, Gradients* node_grads, Gradients* decoder_grads);

std::vector<std::uint32_t> transfer_predict(const ParamSet& processor, const ReasonerConfig& config,
                                            const NaturalAdapters& adapters, const NaturalSample& sample,
                                            std::size_t steps);

struct TransferResult {
    NaturalAdapters adapters;
    double val_accuracy = 0.0;
    double chance_accuracy = 0.0;
    std::string processor_digest_before;
    std::string processor_digest_after;
    std::string dataset_hash;
    std::vector<double> step_losses;
};

TransferResult transfer_train(const ReasonerParams& pretrained, const std::vector<NaturalSample>& train,
                              const std::vector<NaturalSample>& val, const TransferConfig& config);

// As transfer_train, with P replaced by the random initialisation drawn from `init_seed`.
TransferResult ablation_random_processor(const ReasonerParams& pretrained, std::uint64_t init_seed,
                                         const std::vector<NaturalSample>& train,
                                         const std::vector<NaturalSample>& val, const TransferConfig& config);

struct BaselineConfig {
    std::size_t epochs = 200;
    double learning_rate = 1e-2;
    double margin = 0.01;
    double hinge_weight = 1.0;
    double min_weight = 1e-3;

    void validate() const;
};

struct BaselineResult {
    std::vector<double> coefficients;  // w_hat = x . coefficients
    double val_accuracy = 0.0;
    std::string dataset_hash;
};

// Runs the classical teacher on clamped scalar weights.
std::vector<std::uint32_t> bottleneck_predict(const NaturalSample& sample, std::span<const double> weights,
                                              double min_weight = 1e-3);
std::vector<double> predict_weights(std::span<const double> coefficients, const NaturalSample& sample);

// Reconstruction target per edge (concatenated over samples): the uncentred first
// principal component of the features scaled to `mean_weight`.
std::vector<double> reconstruction_target(std::span<const NaturalSample> samples, double mean_weight,
                                          double min_weight);

BaselineResult baseline_bottleneck(const std::vector<NaturalSample>& train, const std::vector<NaturalSample>& val,
                                   double mean_weight, const BaselineConfig& config);

class FairnessError : public Error {
public:
    using Error::Error;
};

struct ReportRow {
    std::string method;
    std::size_t train_size = 0;
    std::uint64_t seed = 0;
    double val_accuracy = 0.0;
    std::string dataset_hash;
    double wall_time_s = 0.0;
    std::string processor_digest_before;  // empty for the baseline
    std::string processor_digest_after;
};

struct CompareConfig {
    std::vector<std::size_t> sizes{32, 64, 128, 512};
    std::vector<std::uint64_t> seeds{0, 1, 2};
    std::size_t val_size = 100;
    NaturalGenConfig natural;
    TransferConfig transfer;
    BaselineConfig baseline;
    bool record_time = false;  // wall times stay 0 otherwise, keeping reports byte-stable
    bool run_transfer = true;  // false when no pretrained processor exists

    void validate() const;
};

// Nested training subsets per seed; every method sees the same bytes.
std::vector<ReportRow> compare_report(const ReasonerParams& pretrained, std::uint64_t random_init_seed,
                                      const CompareConfig& config);

// Throws FairnessError unless all methods share a dataset hash per (size, seed).
void require_fair(const std::vector<ReportRow>& rows);

std::string report_csv(const std::vector<ReportRow>& rows);
json report_summary(const std::vector<ReportRow>& rows);

}  // namespace nar
