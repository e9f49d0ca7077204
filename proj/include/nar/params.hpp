#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nar/autodiff.hpp"
#include "nar/rng.hpp"
#include "nar/tensor.hpp"

namespace nar {

struct Parameter {
    std::string name;
    Tensor value;
    friend bool operator==(const Parameter&, const Parameter&) = default;
};

// An ordered, named collection of trainable tensors.
class ParamSet {
public:
    ParamSet() = default;

    void add(std::string name, Tensor value);
    // Glorot-uniform weight [fan_in x fan_out].
    void add_weight(std::string name, std::size_t fan_in, std::size_t fan_out, Rng& rng);
    void add_zeros(std::string name, Shape shape);

    std::size_t size() const noexcept { return params_.size(); }
    const Parameter& operator[](std::size_t i) const { return params_[i]; }
    Parameter& operator[](std::size_t i) { return params_[i]; }
    const Parameter& get(const std::string& name) const;
    Parameter& get(const std::string& name);
    std::size_t index_of(const std::string& name) const;
    bool contains(const std::string& name) const;
    std::size_t scalar_count() const;

    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

    friend bool operator==(const ParamSet&, const ParamSet&) = default;

private:
    std::vector<Parameter> params_;
};

// Per-parameter gradients, aligned with a ParamSet.
struct Gradients {
    std::vector<Tensor> values;

    static Gradients zeros_like(const ParamSet& params);
    void add(const Gradients& other);
    void scale(double factor);
};

// Vars for a ParamSet placed on a tape. Frozen sets are bound as constants,
// so no gradient can reach them.
class BoundParams {
public:
    BoundParams(Tape& tape, const ParamSet& params, bool trainable);

    Var operator[](const std::string& name) const;
    Var at(std::size_t i) const { return vars_[i]; }
    bool has(const std::string& name) const { return params_->contains(name); }
    bool trainable() const noexcept { return trainable_; }

    // Gradients of the last backward pass; throws if the set was bound frozen.
    Gradients gradients() const;

private:
    Tape* tape_;
    const ParamSet* params_;
    std::vector<Var> vars_;
    bool trainable_;
};

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct AdamState {
    AdamConfig config;
    std::vector<Tensor> first_moment;
    std::vector<Tensor> second_moment;
    std::uint64_t step = 0;

    static AdamState for_params(const ParamSet& params, AdamConfig config);
};

// Bias-corrected Adam update. A non-finite gradient aborts before any parameter
// changes, naming the offending tensor.
void adam_step(ParamSet& params, const Gradients& grads, AdamState& state);

}  // namespace nar
