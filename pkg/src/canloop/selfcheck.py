"""Self-diagnostic battery.

Runs numerical consistency checks on the configured model: operating
point residual, regulator and estimator Riccati residuals, stability
margins, Jacobian finite-difference convergence, integrator order,
and signal codec round trips. Each check reports its measured
residual so a failure is attributable. Parameter sets are taken as
given here; a corrupted value shows up as a failed residual rather
than a rejected input.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

from . import control, engine
from .canbus import ES, TR, decode_signal, encode_signal
from .errors import CanloopError
from .rng import Rng


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def _check(results: list, name: str, passed: bool, detail: str) -> None:
    results.append(CheckResult(name, bool(passed), detail))


def _equilibrium_check(results, params, omega_set_rpm, load_torque, flow_mode):
    omega = omega_set_rpm * engine.RPM_TO_RAD
    p_bar, area = engine.find_equilibrium(omega, load_torque, params, flow_mode)
    dp, dw = engine.derivatives(p_bar, omega, area, load_torque, params, flow_mode)
    residual = max(abs(dp) / params.p_a, abs(dw) / omega)
    _check(results, "equilibrium_residual", residual < 1e-9,
           f"scaled residual {residual:.3e} (limit 1e-9)")

    # The root alone does not prove the parameters are sane: a flipped
    # inertia sign leaves the same root but turns it into a saddle.
    # Require a locally attracting point inside the physical envelope.
    stepper = engine.stepper_for(params, flow_mode)

    def dynamics(p, w, h):
        return stepper.deriv(p, w, h, load_torque)

    a, _ = control.linearize(dynamics, (p_bar, omega), area)
    tr = a[0][0] + a[1][1]
    det = a[0][0] * a[1][1] - a[0][1] * a[1][0]
    in_envelope = (0.0 < p_bar <= params.p_a
                   and params.a_leak <= area <= engine.full_open_area(params))
    _check(results, "equilibrium_attracting", tr < 0.0 and det > 0.0 and in_envelope,
           f"jacobian trace {tr:.3f} (<0), det {det:.3f} (>0), "
           f"p {p_bar:.0f} Pa, area {area:.4e} m2")
    return p_bar, area


def _synthesis_checks(results, params, omega_set_rpm, load_torque, cfg, flow_mode):
    model, gains = control.synthesize(
        params, omega_set_rpm, load_torque,
        control.SynthesisWeights([list(r) for r in cfg.w_cost], cfg.u_cost),
        [list(r) for r in cfg.q_cov], cfg.r_var,
        cfg.control_period_ms / 1000.0, flow_mode,
    )
    res_ctrl = control.riccati_residual(
        gains.p_ctrl, model.a_d, model.b_d, cfg.w_cost, cfg.u_cost)
    _check(results, "regulator_riccati_residual", res_ctrl < 1e-9,
           f"max abs residual {res_ctrl:.3e} (limit 1e-9)")
    res_est = control.riccati_residual(
        gains.p_est, control.mat2_t(model.a_d), model.c, model.q_d, model.r_d)
    _check(results, "estimator_riccati_residual", res_est < 1e-9,
           f"max abs residual {res_est:.3e} (limit 1e-9)")

    a_cl = [[model.a_d[i][j] + model.b_d[i] * gains.l[j] for j in range(2)]
            for i in range(2)]
    rho_cl = control.spectral_radius_2x2(a_cl)
    _check(results, "closed_loop_stable", rho_cl < 1.0,
           f"spectral radius {rho_cl:.4f} (limit 1)")
    k, c = gains.k, model.c
    a_est = control.mat2_mul(
        [[1.0 - k[0] * c[0], -k[0] * c[1]], [-k[1] * c[0], 1.0 - k[1] * c[1]]],
        model.a_d,
    )
    rho_est = control.spectral_radius_2x2(a_est)
    _check(results, "estimator_stable", rho_est < 1.0,
           f"spectral radius {rho_est:.4f} (limit 1)")


def _jacobian_check(results, params, p_bar, area, omega, load_torque, flow_mode):
    stepper = engine.stepper_for(params, flow_mode)

    def dynamics(p, w, h):
        return stepper.deriv(p, w, h, load_torque)

    a1, b1 = control.linearize(dynamics, (p_bar, omega), area)
    a2, b2 = control.linearize(dynamics, (p_bar, omega), area, step_scale=0.5)
    worst = 0.0
    for i in range(2):
        for j in range(2):
            scale = max(abs(a1[i][j]), abs(a2[i][j]), 1e-30)
            worst = max(worst, abs(a1[i][j] - a2[i][j]) / scale)
        scale = max(abs(b1[i]), abs(b2[i]), 1e-30)
        worst = max(worst, abs(b1[i] - b2[i]) / scale)
    _check(results, "jacobian_step_halving", worst < 1e-4,
           f"max relative change {worst:.3e} (limit 1e-4)")


def _integrator_order_check(results, params, p_bar, area_bar, omega, load_torque,
                            flow_mode):
    # One transient, three step sizes. The coarse/fine error ratio of a
    # fourth-order one-step method against a much finer reference is
    # close to 2^4.
    stepper = engine.stepper_for(params, flow_mode)
    p0, w0 = p_bar * 0.92, omega * 0.96
    area = min(area_bar * 1.3, engine.full_open_area(params))
    horizon = 0.08

    def integrate(dt):
        p, w = p0, w0
        for _ in range(round(horizon / dt)):
            p, w = stepper.rk4(p, w, area, load_torque, dt, 0.0, 0.0)
        return p, w

    ref = integrate(6.25e-5)
    coarse = integrate(2e-3)
    fine = integrate(1e-3)
    err_coarse = max(abs(coarse[0] - ref[0]) / params.p_a, abs(coarse[1] - ref[1]) / omega)
    err_fine = max(abs(fine[0] - ref[0]) / params.p_a, abs(fine[1] - ref[1]) / omega)
    if err_fine == 0.0:
        _check(results, "integrator_order", False, "fine-step error underflowed")
        return
    order = math.log2(err_coarse / err_fine)
    _check(results, "integrator_order", 3.5 <= order <= 4.5,
           f"measured order {order:.2f} (expected 3.5..4.5)")


def _codec_check(results):
    rng = Rng(0xC0DEC)
    failures = 0
    first = None
    for i in range(10000):
        if i % 2 == 0:
            value = rng.uniform() * 9000.0          # rpm range
            spec = ES
        else:
            value = rng.uniform() * 3e-3            # area range
            spec = TR
        payload = encode_signal(value, spec)
        back = decode_signal(payload, spec)
        expected = struct.unpack("<f", struct.pack("<f", value))[0]
        if back != expected or encode_signal(back, spec) != payload:
            failures += 1
            if first is None:
                first = value
    _check(results, "codec_round_trip", failures == 0,
           f"{failures} of 10000 values failed"
           + (f" (first {first!r})" if failures else ""))


def run_selfcheck(cfg=None) -> list:
    """Run every check and return the list of CheckResult."""
    from .sim import ScenarioConfig
    if cfg is None:
        cfg = ScenarioConfig()
    results: list = []
    params = cfg.params
    omega = cfg.omega_set_rpm * engine.RPM_TO_RAD
    try:
        p_bar, area = _equilibrium_check(results, params, cfg.omega_set_rpm,
                                         cfg.load_torque, cfg.flow_mode)
    except CanloopError as err:
        _check(results, "equilibrium_residual", False, str(err))
        return results
    try:
        _synthesis_checks(results, params, cfg.omega_set_rpm, cfg.load_torque,
                          cfg, cfg.flow_mode)
    except CanloopError as err:
        _check(results, "synthesis", False, str(err))
    try:
        _jacobian_check(results, params, p_bar, area, omega, cfg.load_torque,
                        cfg.flow_mode)
    except CanloopError as err:
        _check(results, "jacobian_step_halving", False, str(err))
    try:
        _integrator_order_check(results, params, p_bar, area, omega,
                                cfg.load_torque, cfg.flow_mode)
    except CanloopError as err:
        _check(results, "integrator_order", False, str(err))
    _codec_check(results)
    return results


def format_report(results, verbose: bool = True) -> str:
    lines = []
    for r in results:
        line = f"{'ok  ' if r.passed else 'FAIL'} {r.name}"
        if verbose:
            line += f": {r.detail}"
        lines.append(line)
    lines.append("selfcheck " + ("passed" if all(r.passed for r in results) else "FAILED"))
    return "\n".join(lines)
