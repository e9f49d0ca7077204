#include "nar/params.hpp"

#include <algorithm>
#include <cmath>

namespace nar {

void ParamSet::add(std::string name, Tensor value) {
    for (const auto& p : params_) {
        if (p.name == name) throw Error("duplicate parameter name " + name);
    }
    params_.push_back({std::move(name), std::move(value)});
}

void ParamSet::add_weight(std::string name, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor w({fan_in, fan_out}, 0.0);
    for (double& v : w.values()) v = uniform(rng, -limit, limit);
    add(std::move(name), std::move(w));
}

void ParamSet::add_zeros(std::string name, Shape shape) { add(std::move(name), Tensor(std::move(shape), 0.0)); }

std::size_t ParamSet::index_of(const std::string& name) const {
    for (std::size_t i = 0; i < params_.size(); ++i) {
        if (params_[i].name == name) return i;
    }
    throw Error("unknown parameter " + name);
}

bool ParamSet::contains(const std::string& name) const {
    return std::any_of(params_.begin(), params_.end(), [&](const Parameter& p) { return p.name == name; });
}

const Parameter& ParamSet::get(const std::string& name) const { return params_[index_of(name)]; }
Parameter& ParamSet::get(const std::string& name) { return params_[index_of(name)]; }

std::size_t ParamSet::scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
}

Gradients Gradients::zeros_like(const ParamSet& params) {
    Gradients g;
    for (const auto& p : params) g.values.emplace_back(p.value.shape(), 0.0);
    return g;
}

void Gradients::add(const Gradients& other) {
    if (other.values.size() != values.size()) throw DimensionError("gradient sets differ in length");
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (values[i].shape() != other.values[i].shape()) throw DimensionError("gradient shapes differ");
        for (std::size_t j = 0; j < values[i].size(); ++j) values[i][j] += other.values[i][j];
    }
}

void Gradients::scale(double factor) {
    for (auto& t : values) {
        for (double& v : t.values()) v *= factor;
    }
}

BoundParams::BoundParams(Tape& tape, const ParamSet& params, bool trainable)
    : tape_(&tape), params_(&params), trainable_(trainable) {
    vars_.reserve(params.size());
    for (const auto& p : params) vars_.push_back(trainable ? tape.variable(p.value) : tape.constant(p.value));
}

Var BoundParams::operator[](const std::string& name) const { return vars_[params_->index_of(name)]; }

Gradients BoundParams::gradients() const {
    if (!trainable_) throw Error("gradients requested from a frozen parameter set");
    Gradients g;
    for (const Var& v : vars_) g.values.push_back(tape_->grad(v));
    return g;
}

AdamState AdamState::for_params(const ParamSet& params, AdamConfig config) {
    AdamState s;
    s.config = config;
    for (const auto& p : params) {
        s.first_moment.emplace_back(p.value.shape(), 0.0);
        s.second_moment.emplace_back(p.value.shape(), 0.0);
    }
    return s;
}

void adam_step(ParamSet& params, const Gradients& grads, AdamState& state) {
    if (grads.values.size() != params.size() || state.first_moment.size() != params.size()) {
        throw DimensionError("adam_step: parameter, gradient and state counts differ");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (grads.values[i].shape() != params[i].value.shape()) {
            throw DimensionError("adam_step: gradient shape " + shape_string(grads.values[i].shape()) +
                                 " does not match parameter " + params[i].name);
        }
        if (!grads.values[i].all_finite()) {
            throw NumericError("adam_step: non-finite gradient for parameter " + params[i].name);
        }
    }
    const AdamConfig& c = state.config;
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(c.beta1, t);
    const double bc2 = 1.0 - std::pow(c.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& w = params[i].value;
        Tensor& m = state.first_moment[i];
        Tensor& v = state.second_moment[i];
        const Tensor& g = grads.values[i];
        for (std::size_t j = 0; j < w.size(); ++j) {
            m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g[j];
            v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g[j] * g[j];
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            w[j] -= c.learning_rate * mhat / (std::sqrt(vhat) + c.epsilon);
        }
    }
}

}  // namespace nar
