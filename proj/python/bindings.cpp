#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "nar/cli.hpp"
#include "nar/config.hpp"

namespace py = pybind11;
using namespace nar;

namespace {

// Records cross the boundary as JSON text; the Python side decodes them.
std::string dump(const json& j) { return j.dump(); }

std::vector<Trace> traces_from(const std::string& array) {
    std::vector<Trace> out;
    for (const auto& r : json::parse(array)) out.push_back(trace_from_json(r));
    return out;
}

py::bytes checkpoint_bytes(const Checkpoint& ck) { return py::bytes(encode_checkpoint(ck)); }

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Neural algorithmic reasoning core";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<PreconditionError>(m, "PreconditionError", PyExc_ValueError);
    py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
    py::register_exception<CheckpointError>(m, "CheckpointError", PyExc_ValueError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

    m.def("sha256", [](const std::string& bytes) { return sha256_hex(bytes); });

    m.def(
        "sample_graphs",
        [](const std::string& config, std::size_t count) {
            RunConfig c = parse_run_config(config);
            Rng rng = substream(c.seed, "dataset/generate");
            std::vector<json> recs;
            for (const auto& x : sample_inputs(c.family, count, rng)) recs.push_back(to_json(x));
            return to_jsonl(recs, "graph");
        },
        py::arg("config"), py::arg("count"));

    m.def(
        "run_teacher",
        [](const std::string& teacher, const std::string& graph) {
            return dump(to_json(run_teacher(teacher_from_string(teacher), input_from_json(json::parse(graph)))));
        },
        py::arg("teacher"), py::arg("graph"));

    m.def(
        "check_postcondition",
        [](const std::string& teacher, const std::string& graph, const std::string& hint) -> std::optional<std::string> {
            const AbstractInput x = input_from_json(json::parse(graph));
            const auto v = check_postcondition(teacher_from_string(teacher), x, hint_from_json(json::parse(hint), x.n()));
            if (!v) return std::nullopt;
            return v->description;
        },
        py::arg("teacher"), py::arg("graph"), py::arg("hint"));

    m.def(
        "train",
        [](const std::string& config) {
            RunConfig c = parse_run_config(config);
            TrainResult r;
            {
                py::gil_scoped_release release;
                r = train(c.teachers.front(), c.training);
            }
            return py::make_tuple(checkpoint_bytes(Checkpoint::of(r.params)), dump(metrics_to_json(r.metrics)));
        },
        py::arg("config"));

    m.def(
        "evaluate",
        [](const py::bytes& checkpoint, const std::string& traces) {
            const ReasonerParams p = decode_checkpoint(std::string(checkpoint)).single();
            return dump(metrics_to_json(evaluate(p, traces_from(traces))));
        },
        py::arg("checkpoint"), py::arg("traces"));

    m.def(
        "evaluate_oracle", [](const std::string& traces) { return dump(metrics_to_json(evaluate_oracle(traces_from(traces)))); },
        py::arg("traces"));

    m.def(
        "processor_digest",
        [](const py::bytes& checkpoint) { return params_digest(decode_checkpoint(std::string(checkpoint)).processor); },
        py::arg("checkpoint"));

    m.def(
        "run_cli",
        [](std::vector<std::string> args) {
            args.insert(args.begin(), "nar");
            std::ostringstream out, err;
            int code;
            {
                py::gil_scoped_release release;
                code = run_cli(args, out, err);
            }
            return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"));
}
