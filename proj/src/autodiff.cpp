#include "nar/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace nar {

const Tensor& Var::value() const { return tape_->value(*this); }

Var Tape::constant(Tensor value) { return record("constant", std::move(value), {}, nullptr); }

Var Tape::variable(Tensor value) {
    Var v = record("variable", std::move(value), {}, nullptr);
    nodes_.back().requires_grad = true;
    return v;
}

Var Tape::record(std::string_view op, Tensor value, std::span<const Var> inputs, BackwardFn fn) {
    if (!value.all_finite()) {
        throw NumericError("non-finite value produced by " + std::string(op) + " (node " +
                           std::to_string(nodes_.size()) + ")");
    }
    bool needs = false;
    for (const Var& in : inputs) {
        if (in.tape_ != this) throw Error("operand recorded on a different tape");
        needs = needs || nodes_[in.id_].requires_grad;
    }
    Node node;
    node.value = std::move(value);
    node.requires_grad = record_ && needs;
    if (node.requires_grad) node.backward = std::move(fn);
    nodes_.push_back(std::move(node));
    return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Tensor& Tape::grad_buffer(Var v) {
    Node& node = nodes_[v.id_];
    if (!node.has_grad) {
        node.grad = Tensor(node.value.shape(), 0.0);
        node.has_grad = true;
    }
    return node.grad;
}

Tensor Tape::grad(Var v) const {
    const Node& node = nodes_[v.id_];
    if (node.has_grad) return node.grad;
    return Tensor(node.value.shape(), 0.0);
}

void Tape::backward(Var loss) {
    if (loss.tape_ != this) throw Error("backward on a variable from another tape");
    if (nodes_[loss.id_].value.size() != 1) {
        throw DimensionError("backward requires a scalar loss, got shape " +
                             shape_string(nodes_[loss.id_].value.shape()));
    }
    for (auto& node : nodes_) {
        node.has_grad = false;
        node.grad = Tensor();
    }
    grad_buffer(loss)[0] = 1.0;
    for (std::size_t i = loss.id_ + 1; i-- > 0;) {
        Node& node = nodes_[i];
        if (!node.has_grad || !node.backward) continue;
        // Closures only touch grad buffers of earlier nodes, so this reference stays valid.
        node.backward(*this, node.grad);
    }
}

namespace {

bool is_single(const Tensor& t) { return t.size() == 1; }

void require_rank2(const Tensor& t, const char* op) {
    if (t.rank() != 2) {
        throw DimensionError(std::string(op) + " expects a matrix, got shape " + shape_string(t.shape()));
    }
}

// Shape of a broadcast binary result, or a dimension error.
Shape binary_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() == b.shape()) return a.shape();
    if (is_single(b)) return a.shape();
    if (is_single(a)) return b.shape();
    throw DimensionError(std::string(op) + ": shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()) + " are not equal and neither is a scalar");
}

// Adds g into dst, summing over all entries when dst is a broadcast scalar.
void accumulate_broadcast(Tensor& dst, const Tensor& g) {
    if (dst.size() == g.size()) {
        for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
    } else {
        double s = 0.0;
        for (double v : g.values()) s += v;
        dst[0] += s;
    }
}

}  // namespace

Var matmul(Var a, Var b) {
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    require_rank2(A, "matmul");
    require_rank2(B, "matmul");
    const std::size_t m = A.shape()[0], k = A.shape()[1], n = B.shape()[1];
    if (B.shape()[0] != k) {
        throw DimensionError("matmul: inner dimensions differ for " + shape_string(A.shape()) + " and " +
                             shape_string(B.shape()));
    }
    Tensor C({m, n}, 0.0);
    const double* pa = A.values().data();
    const double* pb = B.values().data();
    double* pc = C.values().data();
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = pc + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = pa[i * k + p];
            const double* brow = pb + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
        }
    }
    Tape& tape = a.tape();
    return tape.record("matmul", std::move(C), {a, b}, [a, b, m, k, n](Tape& t, const Tensor& g) {
        const double* pg = g.values().data();
        if (t.requires_grad(a)) {
            const double* pb2 = t.value(b).values().data();
            double* pda = t.grad_buffer(a).values().data();
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t p = 0; p < k; ++p) {
                    double s = 0.0;
                    for (std::size_t j = 0; j < n; ++j) s += pg[i * n + j] * pb2[p * n + j];
                    pda[i * k + p] += s;
                }
            }
        }
        if (t.requires_grad(b)) {
            const double* pa2 = t.value(a).values().data();
            double* pdb = t.grad_buffer(b).values().data();
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t p = 0; p < k; ++p) {
                    const double aip = pa2[i * k + p];
                    for (std::size_t j = 0; j < n; ++j) pdb[p * n + j] += aip * pg[i * n + j];
                }
            }
        }
    });
}

Var apply(BinaryOp op, Var a, Var b) {
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    const char* name = op == BinaryOp::add ? "add" : "mul";
    Tensor out(binary_shape(A, B, name), 0.0);
    const bool sa = A.size() != out.size();
    const bool sb = B.size() != out.size();
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double x = A[sa ? 0 : i];
        const double y = B[sb ? 0 : i];
        out[i] = op == BinaryOp::add ? x + y : x * y;
    }
    return a.tape().record(name, std::move(out), {a, b}, [op, a, b, sa, sb](Tape& t, const Tensor& g) {
        if (op == BinaryOp::add) {
            if (t.requires_grad(a)) accumulate_broadcast(t.grad_buffer(a), g);
            if (t.requires_grad(b)) accumulate_broadcast(t.grad_buffer(b), g);
            return;
        }
        const Tensor& A2 = t.value(a);
        const Tensor& B2 = t.value(b);
        if (t.requires_grad(a)) {
            Tensor ga(g.shape(), 0.0);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] * B2[sb ? 0 : i];
            accumulate_broadcast(t.grad_buffer(a), ga);
        }
        if (t.requires_grad(b)) {
            Tensor gb(g.shape(), 0.0);
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] = g[i] * A2[sa ? 0 : i];
            accumulate_broadcast(t.grad_buffer(b), gb);
        }
    });
}

Var apply(UnaryOp op, Var x) {
    const Tensor& X = x.value();
    Tensor out(X.shape(), 0.0);
    const char* name = "neg";
    switch (op) {
        case UnaryOp::relu:
            name = "relu";
            for (std::size_t i = 0; i < X.size(); ++i) out[i] = X[i] > 0.0 ? X[i] : 0.0;
            break;
        case UnaryOp::sigmoid:
            name = "sigmoid";
            for (std::size_t i = 0; i < X.size(); ++i) {
                const double v = X[i];
                out[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
            }
            break;
        case UnaryOp::log:
            name = "log";
            for (std::size_t i = 0; i < X.size(); ++i) out[i] = std::log(X[i]);
            break;
        case UnaryOp::neg:
            for (std::size_t i = 0; i < X.size(); ++i) out[i] = -X[i];
            break;
    }
    return x.tape().record(name, std::move(out), {x}, [op, x](Tape& t, const Tensor& g) {
        const Tensor& X2 = t.value(x);
        Tensor& dx = t.grad_buffer(x);
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double v = X2[i];
            switch (op) {
                case UnaryOp::relu: dx[i] += v > 0.0 ? g[i] : 0.0; break;
                case UnaryOp::sigmoid: {
                    const double y = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
                    dx[i] += g[i] * y * (1.0 - y);
                    break;
                }
                case UnaryOp::log: dx[i] += g[i] / v; break;
                case UnaryOp::neg: dx[i] -= g[i]; break;
            }
        }
    });
}

Var add(Var a, Var b) { return apply(BinaryOp::add, a, b); }
Var mul(Var a, Var b) { return apply(BinaryOp::mul, a, b); }
Var neg(Var x) { return apply(UnaryOp::neg, x); }
Var sub(Var a, Var b) { return add(a, neg(b)); }
Var relu(Var x) { return apply(UnaryOp::relu, x); }
Var sigmoid(Var x) { return apply(UnaryOp::sigmoid, x); }
Var log(Var x) { return apply(UnaryOp::log, x); }

Var scale(Var x, double factor) {
    const Tensor& X = x.value();
    Tensor out(X.shape(), 0.0);
    for (std::size_t i = 0; i < X.size(); ++i) out[i] = X[i] * factor;
    return x.tape().record("scale", std::move(out), {x}, [x, factor](Tape& t, const Tensor& g) {
        Tensor& dx = t.grad_buffer(x);
        for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * factor;
    });
}

Var sum(Var x) {
    double s = 0.0;
    for (double v : x.value().values()) s += v;
    return x.tape().record("sum", Tensor::scalar(s), {x}, [x](Tape& t, const Tensor& g) {
        Tensor& dx = t.grad_buffer(x);
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g[0];
    });
}

Var reduce(ReduceOp op, Var x, std::size_t axis) {
    const Tensor& X = x.value();
    const Shape& shape = X.shape();
    if (axis >= shape.size()) {
        throw DimensionError("reduce: axis " + std::to_string(axis) + " out of range for shape " +
                             shape_string(shape));
    }
    if (shape[axis] == 0) {
        throw DimensionError("reduce: empty reduction axis " + std::to_string(axis) + " in shape " +
                             shape_string(shape));
    }
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
    const std::size_t len = shape[axis];
    Shape out_shape;
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i != axis) out_shape.push_back(shape[i]);
    }
    if (out_shape.empty()) out_shape.push_back(1);
    Tensor out(out_shape, 0.0);
    std::vector<std::size_t> argmax;
    if (op == ReduceOp::max) argmax.assign(outer * inner, 0);
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * len * inner + in;
            if (op == ReduceOp::sum) {
                double s = 0.0;
                for (std::size_t l = 0; l < len; ++l) s += X[base + l * inner];
                out[o * inner + in] = s;
            } else {
                std::size_t best = 0;
                for (std::size_t l = 1; l < len; ++l) {
                    if (X[base + l * inner] > X[base + best * inner]) best = l;
                }
                argmax[o * inner + in] = best;
                out[o * inner + in] = X[base + best * inner];
            }
        }
    }
    const char* name = op == ReduceOp::sum ? "reduce_sum" : "reduce_max";
    return x.tape().record(name, std::move(out), {x},
                           [x, op, outer, inner, len, argmax = std::move(argmax)](Tape& t, const Tensor& g) {
                               Tensor& dx = t.grad_buffer(x);
                               for (std::size_t o = 0; o < outer; ++o) {
                                   for (std::size_t in = 0; in < inner; ++in) {
                                       const std::size_t base = o * len * inner + in;
                                       const double gv = g[o * inner + in];
                                       if (op == ReduceOp::sum) {
                                           for (std::size_t l = 0; l < len; ++l) dx[base + l * inner] += gv;
                                       } else {
                                           dx[base + argmax[o * inner + in] * inner] += gv;
                                       }
                                   }
                               }
                           });
}

Var gather_rows(Var x, std::span<const std::uint32_t> index) {
    const Tensor& X = x.value();
    require_rank2(X, "gather_rows");
    const std::size_t rows = X.shape()[0], cols = X.shape()[1];
    Tensor out({index.size(), cols}, 0.0);
    for (std::size_t r = 0; r < index.size(); ++r) {
        if (index[r] >= rows) {
            throw DimensionError("gather_rows: index " + std::to_string(index[r]) + " out of range for shape " +
                                 shape_string(X.shape()));
        }
        std::copy_n(X.values().data() + index[r] * cols, cols, out.values().data() + r * cols);
    }
    std::vector<std::uint32_t> idx(index.begin(), index.end());
    return x.tape().record("gather_rows", std::move(out), {x}, [x, cols, idx = std::move(idx)](Tape& t, const Tensor& g) {
        Tensor& dx = t.grad_buffer(x);
        for (std::size_t r = 0; r < idx.size(); ++r) {
            for (std::size_t c = 0; c < cols; ++c) dx[idx[r] * cols + c] += g[r * cols + c];
        }
    });
}

Var concat_cols(std::span<const Var> parts) {
    if (parts.empty()) throw DimensionError("concat_cols: no operands");
    const std::size_t rows = parts[0].value().shape()[0];
    std::size_t total = 0;
    std::vector<std::size_t> widths;
    for (const Var& p : parts) {
        require_rank2(p.value(), "concat_cols");
        if (p.value().shape()[0] != rows) {
            throw DimensionError("concat_cols: row counts differ (" + shape_string(parts[0].value().shape()) + " vs " +
                                 shape_string(p.value().shape()) + ")");
        }
        widths.push_back(p.value().shape()[1]);
        total += widths.back();
    }
    Tensor out({rows, total}, 0.0);
    std::size_t offset = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const Tensor& P = parts[k].value();
        for (std::size_t r = 0; r < rows; ++r) {
            std::copy_n(P.values().data() + r * widths[k], widths[k], out.values().data() + r * total + offset);
        }
        offset += widths[k];
    }
    std::vector<Var> ins(parts.begin(), parts.end());
    return parts[0].tape().record("concat_cols", std::move(out), parts, [ins, widths, rows, total](Tape& t, const Tensor& g) {
        std::size_t off = 0;
        for (std::size_t k = 0; k < ins.size(); ++k) {
            if (t.requires_grad(ins[k])) {
                Tensor& d = t.grad_buffer(ins[k]);
                for (std::size_t r = 0; r < rows; ++r) {
                    for (std::size_t c = 0; c < widths[k]; ++c) d[r * widths[k] + c] += g[r * total + off + c];
                }
            }
            off += widths[k];
        }
    });
}

Var concat_rows(std::span<const Var> parts) {
    if (parts.empty()) throw DimensionError("concat_rows: no operands");
    require_rank2(parts[0].value(), "concat_rows");
    const std::size_t cols = parts[0].value().shape()[1];
    std::size_t rows = 0;
    for (const Var& p : parts) {
        require_rank2(p.value(), "concat_rows");
        if (p.value().shape()[1] != cols) {
            throw DimensionError("concat_rows: column counts differ (" + shape_string(parts[0].value().shape()) +
                                 " vs " + shape_string(p.value().shape()) + ")");
        }
        rows += p.value().shape()[0];
    }
    std::vector<double> data;
    data.reserve(rows * cols);
    for (const Var& p : parts) data.insert(data.end(), p.value().values().begin(), p.value().values().end());
    std::vector<Var> ins(parts.begin(), parts.end());
    return parts[0].tape().record("concat_rows", Tensor({rows, cols}, std::move(data)), parts,
                                  [ins](Tape& t, const Tensor& g) {
                                      std::size_t off = 0;
                                      for (const Var& p : ins) {
                                          const std::size_t len = t.value(p).size();
                                          if (t.requires_grad(p)) {
                                              Tensor& d = t.grad_buffer(p);
                                              for (std::size_t i = 0; i < len; ++i) d[i] += g[off + i];
                                          }
                                          off += len;
                                      }
                                  });
}

Var repeat_rows(Var row, std::size_t count) {
    const Tensor& R = row.value();
    require_rank2(R, "repeat_rows");
    if (R.shape()[0] != 1) throw DimensionError("repeat_rows expects a single row, got " + shape_string(R.shape()));
    const std::size_t cols = R.shape()[1];
    Tensor out({count, cols}, 0.0);
    for (std::size_t r = 0; r < count; ++r) std::copy_n(R.values().data(), cols, out.values().data() + r * cols);
    return row.tape().record("repeat_rows", std::move(out), {row}, [row, count, cols](Tape& t, const Tensor& g) {
        Tensor& d = t.grad_buffer(row);
        for (std::size_t r = 0; r < count; ++r) {
            for (std::size_t c = 0; c < cols; ++c) d[c] += g[r * cols + c];
        }
    });
}

Var add_row(Var x, Var row) {
    const Tensor& X = x.value();
    const Tensor& R = row.value();
    require_rank2(X, "add_row");
    require_rank2(R, "add_row");
    if (R.shape()[0] != 1 || R.shape()[1] != X.shape()[1]) {
        throw DimensionError("add_row: row " + shape_string(R.shape()) + " does not fit " + shape_string(X.shape()));
    }
    const std::size_t rows = X.shape()[0], cols = X.shape()[1];
    Tensor out = X;
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] += R[c];
    }
    return x.tape().record("add_row", std::move(out), {x, row}, [x, row, rows, cols](Tape& t, const Tensor& g) {
        if (t.requires_grad(x)) {
            Tensor& dx = t.grad_buffer(x);
            for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
        }
        if (t.requires_grad(row)) {
            Tensor& dr = t.grad_buffer(row);
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t c = 0; c < cols; ++c) dr[c] += g[r * cols + c];
            }
        }
    });
}

Var segment_max(Var x, std::span<const std::uint32_t> segment, std::size_t num_segments, Var fallback) {
    const Tensor& X = x.value();
    const Tensor& F = fallback.value();
    require_rank2(X, "segment_max");
    require_rank2(F, "segment_max");
    const std::size_t rows = X.shape()[0], cols = X.shape()[1];
    if (segment.size() != rows) throw DimensionError("segment_max: one segment id per row required");
    if (F.shape()[0] != 1 || F.shape()[1] != cols) {
        throw DimensionError("segment_max: fallback " + shape_string(F.shape()) + " does not fit " +
                             shape_string(X.shape()));
    }
    Tensor out({num_segments, cols}, 0.0);
    // Source row per output entry; `rows` marks the fallback.
    std::vector<std::uint32_t> src(num_segments * cols, static_cast<std::uint32_t>(rows));
    for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t s = segment[r];
        if (s >= num_segments) throw DimensionError("segment_max: segment id out of range");
        for (std::size_t c = 0; c < cols; ++c) {
            auto& cur = src[s * cols + c];
            if (cur == rows || X[r * cols + c] > X[cur * cols + c]) cur = static_cast<std::uint32_t>(r);
        }
    }
    for (std::size_t s = 0; s < num_segments; ++s) {
        for (std::size_t c = 0; c < cols; ++c) {
            const auto r = src[s * cols + c];
            out[s * cols + c] = r == rows ? F[c] : X[r * cols + c];
        }
    }
    return x.tape().record("segment_max", std::move(out), {x, fallback},
                           [x, fallback, rows, cols, src = std::move(src)](Tape& t, const Tensor& g) {
                               const bool gx = t.requires_grad(x);
                               const bool gf = t.requires_grad(fallback);
                               Tensor* dx = gx ? &t.grad_buffer(x) : nullptr;
                               Tensor* df = gf ? &t.grad_buffer(fallback) : nullptr;
                               for (std::size_t i = 0; i < src.size(); ++i) {
                                   const std::size_t c = i % cols;
                                   if (src[i] == rows) {
                                       if (df) (*df)[c] += g[i];
                                   } else if (dx) {
                                       (*dx)[src[i] * cols + c] += g[i];
                                   }
                               }
                           });
}

Var softmax_cross_entropy(Var scores, std::size_t target, std::span<const std::uint8_t> mask) {
    const Tensor& S = scores.value();
    if (mask.size() != S.size()) throw DimensionError("softmax_cross_entropy: mask length differs from scores");
    if (target >= S.size() || !mask[target]) {
        throw Error("softmax_cross_entropy: target " + std::to_string(target) + " lies outside the mask");
    }
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < S.size(); ++i) {
        if (mask[i]) mx = std::max(mx, S[i]);
    }
    std::vector<double> prob(S.size(), 0.0);
    double z = 0.0;
    for (std::size_t i = 0; i < S.size(); ++i) {
        if (mask[i]) z += (prob[i] = std::exp(S[i] - mx));
    }
    for (double& p : prob) p /= z;
    const double loss = -(S[target] - mx - std::log(z));
    return scores.tape().record("softmax_cross_entropy", Tensor::scalar(loss), {scores},
                                [scores, target, prob = std::move(prob)](Tape& t, const Tensor& g) {
                                    Tensor& d = t.grad_buffer(scores);
                                    for (std::size_t i = 0; i < prob.size(); ++i) d[i] += g[0] * prob[i];
                                    d[target] -= g[0];
                                });
}

Var segment_softmax_cross_entropy(Var scores, std::span<const std::uint32_t> segment, std::size_t num_segments,
                                  std::span<const std::uint32_t> target, std::span<const double> weight) {
    const Tensor& S = scores.value();
    if (segment.size() != S.size()) throw DimensionError("segment_softmax_cross_entropy: one segment id per score");
    if (target.size() != num_segments || weight.size() != num_segments) {
        throw DimensionError("segment_softmax_cross_entropy: one target and weight per segment");
    }
    std::vector<double> mx(num_segments, -std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < S.size(); ++i) {
        if (segment[i] >= num_segments) throw DimensionError("segment_softmax_cross_entropy: segment id out of range");
        mx[segment[i]] = std::max(mx[segment[i]], S[i]);
    }
    std::vector<double> z(num_segments, 0.0);
    std::vector<double> prob(S.size(), 0.0);
    for (std::size_t i = 0; i < S.size(); ++i) z[segment[i]] += (prob[i] = std::exp(S[i] - mx[segment[i]]));
    for (std::size_t i = 0; i < S.size(); ++i) prob[i] /= z[segment[i]];
    double loss = 0.0;
    for (std::size_t s = 0; s < num_segments; ++s) {
        if (target[s] >= S.size() || segment[target[s]] != s) {
            throw Error("segment_softmax_cross_entropy: target of segment " + std::to_string(s) +
                        " lies outside the segment");
        }
        loss += weight[s] * -(S[target[s]] - mx[s] - std::log(z[s]));
    }
    std::vector<std::uint32_t> seg(segment.begin(), segment.end());
    std::vector<std::uint32_t> tgt(target.begin(), target.end());
    std::vector<double> w(weight.begin(), weight.end());
    return scores.tape().record(
        "segment_softmax_cross_entropy", Tensor::scalar(loss), {scores},
        [scores, prob = std::move(prob), seg = std::move(seg), tgt = std::move(tgt), w = std::move(w)](Tape& t,
                                                                                                      const Tensor& g) {
            Tensor& d = t.grad_buffer(scores);
            for (std::size_t i = 0; i < prob.size(); ++i) d[i] += g[0] * w[seg[i]] * prob[i];
            for (std::size_t s = 0; s < tgt.size(); ++s) d[tgt[s]] -= g[0] * w[s];
        });
}

Var bce_with_logits(Var logits, std::span<const double> target, std::span<const double> weight) {
    const Tensor& L = logits.value();
    if (target.size() != L.size() || weight.size() != L.size()) {
        throw DimensionError("bce_with_logits: targets and weights must match logits " + shape_string(L.shape()));
    }
    double loss = 0.0;
    for (std::size_t i = 0; i < L.size(); ++i) {
        const double x = L[i];
        // log(1 + e^x) - x*y, written to avoid overflow.
        const double softplus = std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
        loss += weight[i] * (softplus - x * target[i]);
    }
    std::vector<double> y(target.begin(), target.end());
    std::vector<double> w(weight.begin(), weight.end());
    return logits.tape().record("bce_with_logits", Tensor::scalar(loss), {logits},
                                [logits, y = std::move(y), w = std::move(w)](Tape& t, const Tensor& g) {
                                    const Tensor& L2 = t.value(logits);
                                    Tensor& d = t.grad_buffer(logits);
                                    for (std::size_t i = 0; i < y.size(); ++i) {
                                        const double x = L2[i];
                                        const double s = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                                                                  : std::exp(x) / (1.0 + std::exp(x));
                                        d[i] += g[0] * w[i] * (s - y[i]);
                                    }
                                });
}

}  // namespace nar
