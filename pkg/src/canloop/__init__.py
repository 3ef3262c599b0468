"""Deterministic closed-loop engine speed control over a simulated
CAN bus, with fuzzing, replay, and injection attack scenarios."""

from .attacks import AttackConfig, build_attack
from .canbus import ES, TR, Bus, Frame, decode_signal, encode_signal, make_frame
from .engine import EngineParams, EngineState
from .errors import (
    AttackError,
    CanloopError,
    ConfigError,
    EncodeError,
    EquilibriumError,
    IntegrationError,
    SimulationError,
    SynthesisError,
)
from .kernels import kernel_name
from .rng import Rng, gaussian_draw
from .sim import (
    DEFAULT_SEED,
    ScenarioConfig,
    Trace,
    export_trace,
    load_config,
    read_trace,
    run_scenario,
    summarize,
    write_config,
)

__version__ = "0.1.0"

__all__ = [
    "AttackConfig",
    "AttackError",
    "Bus",
    "CanloopError",
    "ConfigError",
    "DEFAULT_SEED",
    "ES",
    "EncodeError",
    "EngineParams",
    "EngineState",
    "EquilibriumError",
    "Frame",
    "IntegrationError",
    "Rng",
    "ScenarioConfig",
    "SimulationError",
    "SynthesisError",
    "TR",
    "Trace",
    "build_attack",
    "decode_signal",
    "encode_signal",
    "export_trace",
    "gaussian_draw",
    "kernel_name",
    "load_config",
    "make_frame",
    "read_trace",
    "run_scenario",
    "summarize",
    "write_config",
    "__version__",
]
