"""Nonlinear mean-value engine model.

Two states: intake manifold pressure p_m [Pa] and crankshaft speed
omega_e [rad/s]. One input: throttle open area [m^2], plus a constant
load torque. The component operations here are readable reference
implementations used for inspection and testing; the simulation loop
integrates through the selected kernel (see kernels.py), and a test
asserts both routes agree.
"""

from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass

from .errors import ConfigError, EquilibriumError
from .kernels import make_stepper

log = logging.getLogger(__name__)

RAD_TO_RPM = 30.0 / math.pi
RPM_TO_RAD = math.pi / 30.0

FLOW_CHOKED = "choked"
FLOW_TWO_BRANCH = "two-branch"
FLOW_MODES = (FLOW_CHOKED, FLOW_TWO_BRANCH)

FORM_COMPLEMENTED = "complemented"
FORM_VERBATIM = "verbatim"
THROTTLE_FORMS = (FORM_COMPLEMENTED, FORM_VERBATIM)


@dataclass(frozen=True)
class EngineParams:
    """Physical constants of the engine and intake path.

    Defaults describe a 4-cylinder SI engine with a 2.77 l displacement.
    Units: SI throughout; angles in radians (alpha_th0 stores the 7.9
    degree resting throttle angle converted).
    """

    r_gas: float = 287.0            # J/(kg K)
    theta_a: float = 298.0          # K, ambient
    theta_m: float = 340.0          # K, manifold
    alpha_th0: float = math.radians(7.9)
    d_th: float = 58.7e-3           # m
    a_leak: float = 5.6e-6          # m^2
    v_d: float = 2.77e-3            # m^3, displacement
    v_c: float = 0.277e-3           # m^3, compression
    p_a: float = 1e5                # Pa
    p_out: float = 1e5              # Pa
    gamma0: float = 0.45
    gamma1: float = 3.42e-3         # s
    gamma2: float = -7.7e-6         # s^2
    eta0: float = 0.16
    eta1: float = 2.21e-3           # s
    beta0: float = 15.6
    beta2: float = 0.175e-3
    theta_e: float = 0.2            # kg m^2
    h_f: float = 45.8e6             # J/kg
    kappa: float = 1.35
    alpha: float = 14.70            # air mass per fuel mass


@dataclass(frozen=True)
class EngineState:
    """Physical state (p_m [Pa], omega_e [rad/s])."""

    p_m: float
    omega_e: float

    def validate(self, params: EngineParams) -> None:
        if not self.p_m > 0.0:
            raise ValueError(f"p_m must be positive, got {self.p_m!r}")
        if self.p_m > params.p_a:
            raise ValueError(f"p_m {self.p_m!r} above ambient {params.p_a!r}")
        if not self.omega_e > 0.0:
            raise ValueError(f"omega_e must be positive, got {self.omega_e!r}")


def validate_params(params: EngineParams) -> None:
    """Reject parameter sets that violate the model's domain.

    Used on the configuration path; numerics self-checks deliberately
    accept arbitrary values so that a corrupted set fails loudly in
    the checks themselves.
    """
    positive = (
        "r_gas", "theta_a", "theta_m", "d_th", "a_leak", "v_d", "v_c",
        "p_a", "p_out", "theta_e", "h_f", "kappa", "alpha",
    )
    for name in positive:
        if not getattr(params, name) > 0.0:
            raise ConfigError(f"engine parameter {name} must be positive")
    if not 0.0 < params.alpha_th0 < math.pi / 2.0:
        raise ConfigError("alpha_th0 must lie strictly between 0 and pi/2")
    if not params.v_c < params.v_d:
        raise ConfigError("compression volume must be below displacement volume")


def full_open_area(params: EngineParams) -> float:
    return math.pi * params.d_th ** 2 / 4.0 + params.a_leak


def throttle_angle(u_alpha: float, params: EngineParams) -> float:
    """Affine map from normalized throttle [0, 1] to plate angle [rad]."""
    if not 0.0 <= u_alpha <= 1.0:
        raise ValueError(f"normalized throttle must lie in [0, 1], got {u_alpha!r}")
    return params.alpha_th0 + (math.pi / 2.0 - params.alpha_th0) * u_alpha


def throttle_area(alpha_th: float, params: EngineParams,
                  form: str = FORM_COMPLEMENTED) -> float:
    """Open area as a function of plate angle.

    The complemented form grows from the leakage area at rest to the
    full bore at 90 degrees. The verbatim form keeps the cosine ratio
    uncomplemented and therefore decreases with angle; it is retained
    behind the flag for fidelity experiments only.
    """
    if not params.alpha_th0 <= alpha_th <= math.pi / 2.0:
        raise ValueError(f"plate angle {alpha_th!r} outside [alpha_th0, pi/2]")
    bore = math.pi * params.d_th ** 2 / 4.0
    ratio = math.cos(alpha_th) / math.cos(params.alpha_th0)
    if form == FORM_COMPLEMENTED:
        return bore * (1.0 - ratio) + params.a_leak
    if form == FORM_VERBATIM:
        return bore * ratio + params.a_leak
    raise ValueError(f"unknown throttle form {form!r}")


def intake_mass_flow(area: float, p_m: float, params: EngineParams,
                     mode: str = FLOW_CHOKED) -> float:
    """Air mass flow through the throttle restriction [kg/s].

    Choked mode applies the sonic factor 1/sqrt(2) regardless of the
    pressure ratio. Two-branch mode switches to the subsonic factor
    sqrt(2 r (1 - r)) above r = p_m/p_a = 0.5; the two branches agree
    exactly at the switch point.
    """
    if area < 0.0:
        raise ValueError(f"throttle area must be nonnegative, got {area!r}")
    if not p_m > 0.0:
        raise ValueError(f"manifold pressure must be positive, got {p_m!r}")
    base = area * params.p_a / math.sqrt(params.r_gas * params.theta_a)
    if mode == FLOW_CHOKED:
        return base * math.sqrt(0.5)
    if mode == FLOW_TWO_BRANCH:
        r = p_m / params.p_a
        if r <= 0.5:
            return base * math.sqrt(0.5)
        return base * math.sqrt(2.0 * r * (1.0 - r))
    raise ValueError(f"unknown flow mode {mode!r}")


def volumetric_efficiency(omega_e: float, p_m: float, params: EngineParams) -> float:
    """Fraction of the displacement filled per intake stroke.

    Product of a speed polynomial and a residual-gas pressure factor,
    clamped at zero from below; clamping is logged because it marks an
    operating point outside the model's fitted range.
    """
    if not p_m > 0.0:
        raise ValueError(f"manifold pressure must be positive, got {p_m!r}")
    if not omega_e > 0.0:
        raise ValueError(f"engine speed must be positive, got {omega_e!r}")
    speed_part = params.gamma0 + params.gamma1 * omega_e + params.gamma2 * omega_e ** 2
    pressure_part = (params.v_c + params.v_d) / params.v_d \
        - (params.v_c / params.v_d) * (params.p_out / p_m) ** (1.0 / params.kappa)
    lam = speed_part * pressure_part
    if lam < 0.0:
        log.debug("volumetric efficiency clamped to 0 at omega=%r p_m=%r", omega_e, p_m)
        return 0.0
    return lam


def cylinder_flows(p_m: float, omega_e: float, params: EngineParams):
    """(mixture, air, fuel) mass flows aspired by the cylinders [kg/s]."""
    lam = volumetric_efficiency(omega_e, p_m, params)
    mdot = (p_m / (params.r_gas * params.theta_m)) * lam * params.v_d * omega_e / (4.0 * math.pi)
    mdot_air = mdot * params.alpha / (params.alpha + 1.0)
    mdot_fuel = mdot_air / params.alpha
    return mdot, mdot_air, mdot_fuel


def engine_torque(p_m: float, omega_e: float, params: EngineParams) -> float:
    """Net indicated torque minus friction and gas-exchange losses [Nm]."""
    if omega_e == 0.0:
        raise ValueError("engine torque is undefined at zero speed")
    _, mdot_air, _ = cylinder_flows(p_m, omega_e, params)
    thermal = (params.eta0 + params.eta1 * omega_e) * params.h_f * mdot_air \
        / (params.alpha * omega_e)
    losses = (params.beta0 + params.beta2 * omega_e ** 2 + params.p_out - p_m) \
        * params.v_d / (4.0 * math.pi)
    return thermal - losses


@functools.lru_cache(maxsize=16)
def _stepper(params: EngineParams, flow_mode: str, backend: str | None):
    if flow_mode not in FLOW_MODES:
        raise ValueError(f"unknown flow mode {flow_mode!r}")
    return make_stepper(params, flow_mode == FLOW_TWO_BRANCH, backend)


def stepper_for(params: EngineParams, flow_mode: str = FLOW_CHOKED,
                backend: str | None = None):
    """Kernel stepper for this parameter set (cached)."""
    return _stepper(params, flow_mode, backend)


def derivatives(p_m: float, omega_e: float, area: float, t_load: float,
                params: EngineParams, flow_mode: str = FLOW_CHOKED):
    """(dp_m/dt, domega_e/dt) through the selected kernel."""
    return stepper_for(params, flow_mode).deriv(p_m, omega_e, area, t_load)


def rk4_step(p_m: float, omega_e: float, area: float, t_load: float, dt: float,
             params: EngineParams, flow_mode: str = FLOW_CHOKED,
             wp: float = 0.0, ww: float = 0.0):
    """One fixed-step Runge-Kutta advance through the selected kernel."""
    if not dt > 0.0:
        raise ValueError(f"dt must be positive, got {dt!r}")
    return stepper_for(params, flow_mode).rk4(p_m, omega_e, area, t_load, dt, wp, ww)


# Residuals are compared in scaled units so pressure and speed weigh
# equally: pressure against ambient, speed against the target.
_MAX_NEWTON_ITERS = 50


def _scaled_residual(dp: float, dw: float, params: EngineParams, omega: float) -> float:
    return max(abs(dp) / params.p_a, abs(dw) / omega)


def find_equilibrium(omega_target: float, t_load: float, params: EngineParams,
                     flow_mode: str = FLOW_CHOKED, tol: float = 1e-9):
    """Solve for (p_m, area) holding the given speed against the load.

    Damped Newton on the two derivative components with a central
    finite-difference Jacobian (relative step 1e-6). The step is
    halved whenever the scaled residual would increase.
    """
    if not omega_target > 0.0:
        raise ValueError(f"target speed must be positive, got {omega_target!r}")
    if t_load < 0.0:
        raise ValueError(f"load torque must be nonnegative, got {t_load!r}")
    step = stepper_for(params, flow_mode)

    def residual(p, area):
        return step.deriv(p, omega_target, area, t_load)

    p = 0.5 * params.p_a
    area = 1e-4
    fp, fw = residual(p, area)
    norm = _scaled_residual(fp, fw, params, omega_target)
    for _ in range(_MAX_NEWTON_ITERS):
        if norm < tol:
            return p, area
        hp = 1e-6 * abs(p) + 1e-9 * params.p_a
        ha = 1e-6 * abs(area) + 1e-15
        f1p, f1w = residual(p + hp, area)
        f2p, f2w = residual(p - hp, area)
        g1p, g1w = residual(p, area + ha)
        g2p, g2w = residual(p, area - ha)
        j11 = (f1p - f2p) / (2.0 * hp)
        j21 = (f1w - f2w) / (2.0 * hp)
        j12 = (g1p - g2p) / (2.0 * ha)
        j22 = (g1w - g2w) / (2.0 * ha)
        det = j11 * j22 - j12 * j21
        if det == 0.0 or not math.isfinite(det):
            raise EquilibriumError(f"singular Jacobian at p={p!r}, area={area!r}")
        dp_step = (-fp * j22 + fw * j12) / det
        da_step = (-fw * j11 + fp * j21) / det
        scale = 1.0
        while scale > 1e-6:
            p_try = p + scale * dp_step
            area_try = area + scale * da_step
            if p_try > 0.0 and area_try > 0.0:
                tp, tw = residual(p_try, area_try)
                tnorm = _scaled_residual(tp, tw, params, omega_target)
                if tnorm < norm:
                    p, area, fp, fw, norm = p_try, area_try, tp, tw, tnorm
                    break
            scale *= 0.5
        else:
            raise EquilibriumError(
                f"no descent direction, residual {norm:.3e} at p={p!r}, area={area!r}"
            )
    if norm < tol:
        return p, area
    raise EquilibriumError(f"no convergence after {_MAX_NEWTON_ITERS} iterations, "
                           f"residual {norm:.3e}")


def solve_manifold_pressure(area: float, omega_e: float, params: EngineParams,
                            flow_mode: str = FLOW_CHOKED, tol: float = 1e-12):
    """Pressure balancing intake and cylinder flow at fixed area and speed."""
    p = 0.5 * params.p_a
    for _ in range(200):
        flow_in = intake_mass_flow(area, p, params, flow_mode)
        _, flow_out, _ = cylinder_flows(p, omega_e, params)
        f = flow_in - flow_out
        h = 1e-6 * abs(p) + 1e-6
        f1 = intake_mass_flow(area, p + h, params, flow_mode) \
            - cylinder_flows(p + h, omega_e, params)[1]
        f2 = intake_mass_flow(area, p - h, params, flow_mode) \
            - cylinder_flows(p - h, omega_e, params)[1]
        slope = (f1 - f2) / (2.0 * h)
        if slope == 0.0:
            break
        p_new = p - f / slope
        if p_new <= 0.0:
            p_new = 0.5 * p
        if abs(p_new - p) < tol * max(1.0, abs(p)):
            return p_new
        p = p_new
    raise EquilibriumError(f"manifold pressure balance did not converge at area={area!r}")


def derive_load_torque(params: EngineParams, omega_rpm: float = 4200.0,
                       area: float = 7.44e-5, flow_mode: str = FLOW_CHOKED) -> float:
    """Load torque that makes (omega_rpm, area) a closed-loop operating point.

    Solves the manifold pressure balance at the given area and speed,
    then reads the torque there. The default scenario stores the
    resulting literal; a test keeps the two in sync.
    """
    omega = omega_rpm * RPM_TO_RAD
    p_bar = solve_manifold_pressure(area, omega, params, flow_mode)
    return engine_torque(p_bar, omega, params)
