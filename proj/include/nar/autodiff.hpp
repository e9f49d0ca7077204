#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <string_view>
#include <vector>

#include "nar/tensor.hpp"

namespace nar {

class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
public:
    Var() = default;

    // Invalidated when the tape records another node.
    const Tensor& value() const;
    Tape& tape() const { return *tape_; }
    std::uint32_t id() const noexcept { return id_; }
    bool valid() const noexcept { return tape_ != nullptr; }

private:
    friend class Tape;
    Var(Tape* tape, std::uint32_t id) : tape_(tape), id_(id) {}

    Tape* tape_ = nullptr;
    std::uint32_t id_ = 0;
};

// Reverse-mode tape. Nodes are appended in creation order, which is a topological
// order of the expression DAG; backward walks it in reverse exactly once.
// A tape is single-threaded. Independent tapes may run concurrently.
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, const Tensor& out_grad)>;

    // With record=false no backward closures are kept (inference mode).
    explicit Tape(bool record = true) : record_(record) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Tensor value);
    Var variable(Tensor value);

    const Tensor& value(Var v) const { return nodes_[v.id()].value; }
    bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }
    bool recording() const noexcept { return record_; }
    std::size_t size() const noexcept { return nodes_.size(); }

    // Gradient of the last backward() w.r.t. v; zeros when v was not reached.
    Tensor grad(Var v) const;

    void backward(Var loss);

    // Used by operation implementations.
    Var record(std::string_view op, Tensor value, std::span<const Var> inputs, BackwardFn fn);
    Var record(std::string_view op, Tensor value, std::initializer_list<Var> inputs, BackwardFn fn) {
        return record(op, std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(fn));
    }
    Tensor& grad_buffer(Var v);

private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool has_grad = false;
        bool requires_grad = false;
        BackwardFn backward;
    };

    std::vector<Node> nodes_;
    bool record_ = true;
};

enum class UnaryOp { relu, sigmoid, log, neg };
enum class BinaryOp { add, mul };
enum class ReduceOp { sum, max };

Var matmul(Var a, Var b);

// Elementwise ops. Binary operands must have equal shapes, or one of them a single element.
Var apply(UnaryOp op, Var x);
Var apply(BinaryOp op, Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var neg(Var x);
Var relu(Var x);
Var sigmoid(Var x);
Var log(Var x);
Var scale(Var x, double factor);

Var sum(Var x);
// Removes `axis`; reducing a rank-1 tensor yields shape {1}. Max routes gradient to
// the first maximal index.
Var reduce(ReduceOp op, Var x, std::size_t axis);

// Structural ops for message passing over [rows x cols] matrices.
Var gather_rows(Var x, std::span<const std::uint32_t> index);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var repeat_rows(Var row, std::size_t count);
Var add_row(Var x, Var row);

// out[s] = elementwise max over rows r with segment[r] == s; empty segments take `fallback`.
Var segment_max(Var x, std::span<const std::uint32_t> segment, std::size_t num_segments, Var fallback);

// Max-subtracted cross-entropy over the masked entries of a score vector.
Var softmax_cross_entropy(Var scores, std::size_t target, std::span<const std::uint8_t> mask);

// sum_s weight[s] * CE(scores restricted to segment s, target[s]). Scores are a column or vector.
Var segment_softmax_cross_entropy(Var scores, std::span<const std::uint32_t> segment, std::size_t num_segments,
                                  std::span<const std::uint32_t> target, std::span<const double> weight);

// sum_i weight[i] * BCE(sigmoid(logit[i]), target[i]), computed stably from logits.
Var bce_with_logits(Var logits, std::span<const double> target, std::span<const double> weight);

}  // namespace nar
