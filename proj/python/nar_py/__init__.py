"""Python access to the reasoner core. Records are plain dicts."""

import json

from . import _core
from ._core import CheckpointError, ConfigError, FormatError, NumericError, PreconditionError

__all__ = [
    "CheckpointError",
    "ConfigError",
    "FormatError",
    "NumericError",
    "PreconditionError",
    "check_postcondition",
    "evaluate",
    "evaluate_oracle",
    "processor_digest",
    "run_cli",
    "run_teacher",
    "sample_graphs",
    "sha256",
    "train",
]


def sha256(data):
    if isinstance(data, str):
        data = data.encode()
    return _core.sha256(data)


def sample_graphs(config, count):
    text = _core.sample_graphs(json.dumps(config), count)
    return [json.loads(line) for line in text.splitlines()]


def run_teacher(teacher, graph):
    return json.loads(_core.run_teacher(teacher, json.dumps(graph)))


def check_postcondition(teacher, graph, hint):
    """None when the output satisfies the contract, else the violation text."""
    return _core.check_postcondition(teacher, json.dumps(graph), json.dumps(hint))


def train(config):
    """Returns (checkpoint bytes, validation metrics)."""
    checkpoint, metrics = _core.train(json.dumps(config))
    return checkpoint, json.loads(metrics)


def evaluate(checkpoint, traces):
    return json.loads(_core.evaluate(checkpoint, json.dumps(traces)))


def evaluate_oracle(traces):
    return json.loads(_core.evaluate_oracle(json.dumps(traces)))


def processor_digest(checkpoint):
    return _core.processor_digest(checkpoint)


def run_cli(*args):
    """Runs a CLI command in-process; returns (exit code, stdout, stderr)."""
    return _core.run_cli([str(a) for a in args])
