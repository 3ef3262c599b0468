"""Selection of the integration kernel backend.

The compiled Cython kernel is preferred when present; the pure Python
twin is the fallback. Both produce bit-identical results (verified by
the benchmark script and the kernel test suite), so the choice only
affects speed. Set CANLOOP_KERNEL=pure or CANLOOP_KERNEL=compiled to
force a backend; compiled raises if the extension is missing.
"""

from __future__ import annotations

import logging
import os

from . import _pure_kernel
from .errors import ConfigError

log = logging.getLogger(__name__)

try:
    from . import _core
except ImportError:
    _core = None


def _select():
    choice = os.environ.get("CANLOOP_KERNEL", "auto").lower()
    if choice not in ("auto", "compiled", "pure"):
        raise ConfigError(f"CANLOOP_KERNEL must be auto, compiled, or pure, got {choice!r}")
    if choice == "pure":
        return _pure_kernel, "pure"
    if choice == "compiled":
        if _core is None:
            raise ConfigError("CANLOOP_KERNEL=compiled but the extension is not built")
        return _core, "compiled"
    if _core is not None:
        return _core, "compiled"
    log.info("compiled kernel unavailable, using the pure Python fallback")
    return _pure_kernel, "pure"


_backend, _backend_name = _select()


def kernel_name() -> str:
    return _backend_name


def backend_module(name: str | None = None):
    """Return a kernel module by name, default the selected one."""
    if name is None:
        return _backend
    if name == "pure":
        return _pure_kernel
    if name == "compiled":
        if _core is None:
            raise ConfigError("compiled kernel is not built")
        return _core
    raise ConfigError(f"unknown kernel backend {name!r}")


def make_stepper(params, two_branch: bool, backend: str | None = None):
    """Build a Stepper for one engine parameter set."""
    mod = backend_module(backend)
    return mod.Stepper(
        params.r_gas, params.theta_a, params.theta_m,
        params.v_d, params.v_c, params.p_a, params.p_out,
        params.gamma0, params.gamma1, params.gamma2,
        params.eta0, params.eta1, params.beta0, params.beta2,
        params.theta_e, params.h_f, params.kappa, params.alpha,
        two_branch,
    )
