#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nar/graph.hpp"

namespace nar {

class PreconditionError : public Error {
public:
    using Error::Error;
};

enum class Teacher { bfs, bellman_ford };

std::string to_string(Teacher teacher);
Teacher teacher_from_string(const std::string& name);

// A graph plus the node the algorithm starts from.
struct AbstractInput {
    Graph graph;
    std::uint32_t source = 0;

    std::size_t n() const noexcept { return graph.n; }
    friend bool operator==(const AbstractInput&, const AbstractInput&) = default;
};

// One step of algorithm state. Unreached nodes hold dist 0, reached 0 and
// pred == self; the sentinel flag replaces an infinite distance.
struct HintStep {
    std::vector<double> dist;
    std::vector<std::uint8_t> reached;
    std::vector<std::uint32_t> pred;
    std::vector<std::uint8_t> reach;

    std::size_t n() const noexcept { return dist.size(); }
    friend bool operator==(const HintStep&, const HintStep&) = default;
};

// steps[0] is the initialisation; the trace ends at the first fixed point or
// after n steps, whichever comes first.
struct Trace {
    Teacher teacher = Teacher::bellman_ford;
    AbstractInput input;
    std::vector<HintStep> steps;

    const HintStep& output() const { return steps.back(); }
    friend bool operator==(const Trace&, const Trace&) = default;
};

HintStep initial_hint(const AbstractInput& input);

// Synchronous relaxation: step t holds the best distances over paths of at most
// t edges. Parents are the lowest-index in-neighbour attaining the minimum.
Trace bellman_ford_trace(const AbstractInput& input);

// Frontier expansion by one hop per step. A newly reached node takes as parent the
// previously reached in-neighbour with the lightest connecting edge (lowest index
// on equal weights); dist counts hops.
Trace bfs_trace(const AbstractInput& input);

Trace run_teacher(Teacher teacher, const AbstractInput& input);

// One synchronous step of the teacher from an arbitrary state.
HintStep teacher_step(Teacher teacher, const AbstractInput& input, const HintStep& state);

struct Violation {
    std::string description;
};
// nullopt means the contract holds.
using ContractResult = std::optional<Violation>;

ContractResult check_precondition(Teacher teacher, const AbstractInput& input);

// Tree validity and local optimality of a candidate output. BFS is checked with
// unit edge lengths. `tolerance` is relative to max(1, |values|).
ContractResult check_postcondition(Teacher teacher, const AbstractInput& input, const HintStep& out,
                                   double tolerance = 1e-9);

// Distances implied by following pred pointers to the source (unit lengths for
// BFS). Nodes whose pointers do not reach the source, or cycle, are marked unreached.
HintStep tree_distances(Teacher teacher, const AbstractInput& input, const HintStep& candidate);

AbstractInput permute(const AbstractInput& input, std::span<const std::uint32_t> perm);
HintStep permute(const HintStep& hint, std::span<const std::uint32_t> perm);
Trace permute(const Trace& trace, std::span<const std::uint32_t> perm);

// Draws graphs from the family, picks a uniform source and makes every node reachable from it.
std::vector<AbstractInput> sample_inputs(const GraphFamily& family, std::size_t count, Rng& rng,
                                         bool connect = true);

}  // namespace nar
