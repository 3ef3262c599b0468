"""Exception hierarchy shared across the package.

ConfigError maps to CLI exit code 2, SimulationError and its
subclasses map to exit code 3.
"""


class CanloopError(Exception):
    """Base class for all package errors."""


class ConfigError(CanloopError):
    """Invalid configuration value, file, or override."""


class SimulationError(CanloopError):
    """Runtime failure inside a scenario execution."""


class IntegrationError(SimulationError):
    """Integrator produced a non-finite or unphysical state."""


class SynthesisError(SimulationError):
    """Controller synthesis failed (Riccati divergence or unstable result)."""


class EquilibriumError(SimulationError):
    """Equilibrium solver did not converge."""


class AttackError(SimulationError):
    """Attack machinery hit an unrecoverable condition mid-run."""


class EncodeError(SimulationError):
    """Signal value cannot be encoded into a frame payload."""
