"""Quadrotor MPC with a delay-injecting edge link."""

import json as _json
from os import PathLike as _PathLike

from ._core import (
    DEFAULT_TOLERANCE,
    PROTOCOL_VERSION,
    ConfigError,
    MpcConfig,
    MpcProblem,
    MpcWeights,
    ProtocolError,
    SchemaError,
    SolverDiverged,
    TrajectoryKind,
    TrajectorySpec,
    VehicleParams,
    cost,
    cost_gradient,
    derivative,
    euclidean_error,
    euler_step,
    report,
    rollout,
    sample,
    solve,
    thrust_acceleration,
)
from . import _core

__all__ = [
    "DEFAULT_TOLERANCE",
    "PROTOCOL_VERSION",
    "ConfigError",
    "MpcConfig",
    "MpcProblem",
    "MpcWeights",
    "ProtocolError",
    "SchemaError",
    "SolverDiverged",
    "TrajectoryKind",
    "TrajectorySpec",
    "VehicleParams",
    "check_config",
    "cost",
    "cost_gradient",
    "decode",
    "derivative",
    "encode",
    "euclidean_error",
    "euler_step",
    "report",
    "rollout",
    "sample",
    "simulate",
    "solve",
    "thrust_acceleration",
]


def _config_text(config):
    if isinstance(config, dict):
        return _json.dumps(config)
    if isinstance(config, (str, _PathLike)):
        with open(config, encoding="utf-8") as f:
            return f.read()
    raise TypeError("config must be a dict or a path")


def encode(message: dict) -> bytes:
    """Length-prefixed wire frame for a message dict with a "type" field."""
    return _core.encode_json(_json.dumps(message))


def decode(frame: bytes):
    """Returns (message dict, bytes consumed), or None if the frame is incomplete."""
    out = _core.decode_json(frame)
    if out is None:
        return None
    text, consumed = out
    return _json.loads(text), consumed


def check_config(config) -> None:
    """Validates a run config (dict or path); raises ConfigError naming the key."""
    _core.check_config(_config_text(config))


def simulate(config, seed=None):
    """Runs the closed loop; returns (summary dict, CSV text)."""
    return _core.simulate(_config_text(config), seed)
