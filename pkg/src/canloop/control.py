"""Linearization, discretization, and LQG synthesis around the
operating point, plus the per-tick controller execution.

All matrix work here is 2x2 (plus one 3x3 exponential) in plain
Python floats with a fixed evaluation order, so the synthesized gains
and therefore every trace are reproducible across machines and
builds regardless of any BLAS. numpy and scipy serve as independent
oracles in the test suite only.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

from . import engine
from .errors import SynthesisError

log = logging.getLogger(__name__)

# --------------------------------------------------------------------
# Small fixed-order matrix helpers. 2x2 matrices are [[a, b], [c, d]],
# vectors are [x, y].


def mat2_mul(x, y):
    return [
        [x[0][0] * y[0][0] + x[0][1] * y[1][0], x[0][0] * y[0][1] + x[0][1] * y[1][1]],
        [x[1][0] * y[0][0] + x[1][1] * y[1][0], x[1][0] * y[0][1] + x[1][1] * y[1][1]],
    ]


def mat2_vec(m, v):
    return [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]


def mat2_t(m):
    return [[m[0][0], m[1][0]], [m[0][1], m[1][1]]]


def mat2_add(x, y):
    return [[x[0][0] + y[0][0], x[0][1] + y[0][1]], [x[1][0] + y[1][0], x[1][1] + y[1][1]]]


def mat2_sub(x, y):
    return [[x[0][0] - y[0][0], x[0][1] - y[0][1]], [x[1][0] - y[1][0], x[1][1] - y[1][1]]]


def mat2_scale(m, s):
    return [[m[0][0] * s, m[0][1] * s], [m[1][0] * s, m[1][1] * s]]


def mat2_norm_inf(m):
    return max(abs(m[0][0]) + abs(m[0][1]), abs(m[1][0]) + abs(m[1][1]))


def spectral_radius_2x2(m) -> float:
    """Largest eigenvalue magnitude, by the characteristic polynomial."""
    tr = m[0][0] + m[1][1]
    det = m[0][0] * m[1][1] - m[0][1] * m[1][0]
    disc = tr * tr / 4.0 - det
    if disc >= 0.0:
        root = math.sqrt(disc)
        return max(abs(tr / 2.0 + root), abs(tr / 2.0 - root))
    return math.sqrt(det)


def _matn_mul(x, y, n):
    return [
        [sum(x[i][k] * y[k][j] for k in range(n)) for j in range(n)]
        for i in range(n)
    ]


def _matn_norm_inf(m):
    return max(sum(abs(v) for v in row) for row in m)


def expm(m):
    """Matrix exponential by scaling and squaring a truncated series.

    Works for the small square matrices used here. The series runs
    until terms fall below 1e-20 of the accumulated sum, after the
    matrix has been scaled to an infinity norm of at most 0.5.
    """
    n = len(m)
    norm = _matn_norm_inf(m)
    if not math.isfinite(norm):
        raise SynthesisError("matrix exponential of a non-finite matrix")
    squarings = 0
    while norm > 0.5:
        norm /= 2.0
        squarings += 1
    scale = 0.5 ** squarings
    work = [[v * scale for v in row] for row in m]
    result = [[1.0 if i == j else 0.0 for j in range(n)] for i in range(n)]
    term = [row[:] for row in result]
    for k in range(1, 40):
        term = _matn_mul(term, work, n)
        term = [[v / k for v in row] for row in term]
        result = [[result[i][j] + term[i][j] for j in range(n)] for i in range(n)]
        if _matn_norm_inf(term) <= 1e-20 * _matn_norm_inf(result):
            break
    else:
        raise SynthesisError("matrix exponential series did not converge")
    for _ in range(squarings):
        result = _matn_mul(result, result, n)
    return result


# --------------------------------------------------------------------
# Model containers.


@dataclass
class LinearModel:
    """Discrete-time model around the operating point, deviation coordinates."""

    a_d: list
    b_d: list
    c: list
    q_d: list
    r_d: float
    ts: float
    z_bar: tuple          # (p_m [Pa], omega_e [rad/s])
    h_bar: float          # throttle area [m^2]


@dataclass
class SynthesisWeights:
    w: list               # 2x2 state cost
    u: float              # scalar input cost


@dataclass
class GainSet:
    l: list               # 1x2 feedback gain, u = l . x_hat
    k: list               # 2x1 estimator gain
    p_ctrl: list
    p_est: list


@dataclass
class EstimatorState:
    x_hat: list
    u_prev: float


# --------------------------------------------------------------------
# Synthesis.


def linearize(dynamics, z_bar, h_bar, step_scale: float = 1.0):
    """Continuous-time (A, B) by central differences at (z_bar, h_bar).

    Per-component step: 1e-6 relative with a 1e-9 absolute floor,
    times step_scale (diagnostics halve it to probe convergence).
    dynamics(p, w, h) must return (dp/dt, dw/dt).
    """
    def step_for(x):
        return step_scale * (1e-6 * abs(x) + 1e-9)

    a = [[0.0, 0.0], [0.0, 0.0]]
    point = [z_bar[0], z_bar[1]]
    for j in range(2):
        h = step_for(point[j])
        hi = point[:]
        lo = point[:]
        hi[j] += h
        lo[j] -= h
        f_hi = dynamics(hi[0], hi[1], h_bar)
        f_lo = dynamics(lo[0], lo[1], h_bar)
        for i in range(2):
            value = (f_hi[i] - f_lo[i]) / (2.0 * h)
            if not math.isfinite(value):
                raise SynthesisError(f"non-finite Jacobian entry ({i}, {j})")
            a[i][j] = value
    h = step_for(h_bar)
    f_hi = dynamics(point[0], point[1], h_bar + h)
    f_lo = dynamics(point[0], point[1], h_bar - h)
    b = [(f_hi[0] - f_lo[0]) / (2.0 * h), (f_hi[1] - f_lo[1]) / (2.0 * h)]
    if not all(math.isfinite(v) for v in b):
        raise SynthesisError("non-finite input Jacobian")
    return a, b


def discretize(a, b, q, ts):
    """Zero-order-hold discretization: (A_d, B_d) from one 3x3
    exponential of the augmented matrix, Q_d = Q * Ts."""
    if not ts > 0.0:
        raise SynthesisError(f"sampling time must be positive, got {ts!r}")
    aug = [
        [a[0][0] * ts, a[0][1] * ts, b[0] * ts],
        [a[1][0] * ts, a[1][1] * ts, b[1] * ts],
        [0.0, 0.0, 0.0],
    ]
    e = expm(aug)
    a_d = [[e[0][0], e[0][1]], [e[1][0], e[1][1]]]
    b_d = [e[0][2], e[1][2]]
    q_d = mat2_scale(q, ts)
    return a_d, b_d, q_d


_DARE_TOL = 1e-12
_DARE_MAX_ITERS = 100_000


def dare_fixed_point(a, b, q, r):
    """Steady-state solution of the discrete Riccati recursion.

    Iterates P <- Q + A'(P - P b (r + b'P b)^-1 b'P) A from P = Q
    until successive iterates differ by less than 1e-12 in infinity
    norm. b is a 2-vector (single input or single output channel).
    """
    p = [row[:] for row in q]
    at = mat2_t(a)
    for _ in range(_DARE_MAX_ITERS):
        pb = mat2_vec(p, b)
        denom = r + b[0] * pb[0] + b[1] * pb[1]
        if denom <= 0.0 or not math.isfinite(denom):
            raise SynthesisError("Riccati iteration lost positive definiteness")
        outer = [
            [pb[0] * pb[0] / denom, pb[0] * pb[1] / denom],
            [pb[1] * pb[0] / denom, pb[1] * pb[1] / denom],
        ]
        inner = mat2_sub(p, outer)
        p_next = mat2_add(q, mat2_mul(at, mat2_mul(inner, a)))
        p_next = mat2_scale(mat2_add(p_next, mat2_t(p_next)), 0.5)
        if mat2_norm_inf(mat2_sub(p_next, p)) < _DARE_TOL:
            return p_next
        p = p_next
    raise SynthesisError(f"Riccati iteration did not converge in {_DARE_MAX_ITERS} steps")


def riccati_residual(p, a, b, q, r) -> float:
    """Infinity norm of P minus one more Riccati map application."""
    at = mat2_t(a)
    pb = mat2_vec(p, b)
    denom = r + b[0] * pb[0] + b[1] * pb[1]
    outer = [
        [pb[0] * pb[0] / denom, pb[0] * pb[1] / denom],
        [pb[1] * pb[0] / denom, pb[1] * pb[1] / denom],
    ]
    mapped = mat2_add(q, mat2_mul(at, mat2_mul(mat2_sub(p, outer), a)))
    return mat2_norm_inf(mat2_sub(p, mapped))


def feedback_gain(a_d, b_d, weights: SynthesisWeights):
    """(L, P) such that u = L . x_hat stabilizes A_d + B_d L."""
    p = dare_fixed_point(a_d, b_d, weights.w, weights.u)
    pb = mat2_vec(p, b_d)
    denom = weights.u + b_d[0] * pb[0] + b_d[1] * pb[1]
    pa = mat2_mul(p, a_d)
    gain = [
        -(b_d[0] * pa[0][0] + b_d[1] * pa[1][0]) / denom,
        -(b_d[0] * pa[0][1] + b_d[1] * pa[1][1]) / denom,
    ]
    closed = [
        [a_d[0][0] + b_d[0] * gain[0], a_d[0][1] + b_d[0] * gain[1]],
        [a_d[1][0] + b_d[1] * gain[0], a_d[1][1] + b_d[1] * gain[1]],
    ]
    rho = spectral_radius_2x2(closed)
    if not rho < 1.0:
        raise SynthesisError(f"feedback gain does not stabilize, spectral radius {rho!r}")
    return gain, p


def estimator_gain(a_d, c, q_d, r_d):
    """(K, P) steady-state estimator gain from the predicted covariance."""
    p = dare_fixed_point(mat2_t(a_d), c, q_d, r_d)
    denom = c[0] * (p[0][0] * c[0] + p[0][1] * c[1]) \
        + c[1] * (p[1][0] * c[0] + p[1][1] * c[1]) + r_d
    if denom <= 0.0:
        raise SynthesisError("estimator synthesis needs positive innovation variance")
    k = [
        (p[0][0] * c[0] + p[0][1] * c[1]) / denom,
        (p[1][0] * c[0] + p[1][1] * c[1]) / denom,
    ]
    predictor = mat2_mul(
        [[1.0 - k[0] * c[0], -k[0] * c[1]], [-k[1] * c[0], 1.0 - k[1] * c[1]]],
        a_d,
    )
    rho = spectral_radius_2x2(predictor)
    if not rho < 1.0:
        raise SynthesisError(f"estimator gain does not converge, spectral radius {rho!r}")
    return k, p


def synthesize(params: engine.EngineParams, omega_set_rpm: float, t_load: float,
               weights: SynthesisWeights, q_cov, r_var: float, ts: float,
               flow_mode: str = engine.FLOW_CHOKED):
    """Full synthesis chain: equilibrium, linearization, discretization, gains."""
    omega_bar = omega_set_rpm * engine.RPM_TO_RAD
    p_bar, h_bar = engine.find_equilibrium(omega_bar, t_load, params, flow_mode)
    step = engine.stepper_for(params, flow_mode)

    def dynamics(p, w, h):
        return step.deriv(p, w, h, t_load)

    a, b = linearize(dynamics, (p_bar, omega_bar), h_bar)
    a_d, b_d, q_d = discretize(a, b, q_cov, ts)
    c = [0.0, 1.0]
    gain_l, p_ctrl = feedback_gain(a_d, b_d, weights)
    gain_k, p_est = estimator_gain(a_d, c, q_d, r_var)
    model = LinearModel(a_d, b_d, c, q_d, r_var, ts, (p_bar, omega_bar), h_bar)
    gains = GainSet(gain_l, gain_k, p_ctrl, p_est)
    return model, gains


# --------------------------------------------------------------------
# Per-tick execution.


def controller_step(est: EstimatorState, y_dev: float, model: LinearModel,
                    gains: GainSet):
    """One predict-update-act cycle. y_dev is the measured speed
    deviation [rad/s]; returns the deviation input and the new state."""
    if not math.isfinite(y_dev):
        raise SynthesisError(f"non-finite measurement {y_dev!r}")
    a_d, b_d, k, l = model.a_d, model.b_d, gains.k, gains.l
    xp0 = a_d[0][0] * est.x_hat[0] + a_d[0][1] * est.x_hat[1] + b_d[0] * est.u_prev
    xp1 = a_d[1][0] * est.x_hat[0] + a_d[1][1] * est.x_hat[1] + b_d[1] * est.u_prev
    innovation = y_dev - xp1
    x0 = xp0 + k[0] * innovation
    x1 = xp1 + k[1] * innovation
    u = l[0] * x0 + l[1] * x1
    return u, EstimatorState([x0, x1], u)


def to_absolute(u_dev: float, model: LinearModel, params: engine.EngineParams) -> float:
    """Deviation input to absolute throttle area, clamped to the
    physical range; clamping is logged."""
    area = model.h_bar + u_dev
    low = params.a_leak
    high = engine.full_open_area(params)
    if area < low:
        log.debug("throttle command clamped up from %r", area)
        return low
    if area > high:
        log.debug("throttle command clamped down from %r", area)
        return high
    return area


def from_absolute(rpm: float, model: LinearModel) -> float:
    """Measured rpm to deviation output [rad/s]."""
    return (rpm - model.z_bar[1] * engine.RAD_TO_RPM) * engine.RPM_TO_RAD


def matrix_report(model: LinearModel, gains: GainSet, weights: SynthesisWeights) -> str:
    """Plain-text dump of the synthesized model and gains."""
    def fmt_mat(name, m):
        rows = "; ".join("  ".join(repr(v) for v in row) for row in m)
        return f"{name} = [{rows}]"

    closed = [
        [model.a_d[0][0] + model.b_d[0] * gains.l[0],
         model.a_d[0][1] + model.b_d[0] * gains.l[1]],
        [model.a_d[1][0] + model.b_d[1] * gains.l[0],
         model.a_d[1][1] + model.b_d[1] * gains.l[1]],
    ]
    predictor = mat2_mul(
        [[1.0 - gains.k[0] * model.c[0], -gains.k[0] * model.c[1]],
         [-gains.k[1] * model.c[0], 1.0 - gains.k[1] * model.c[1]]],
        model.a_d,
    )
    lines = [
        "operating point:",
        f"  p_m = {model.z_bar[0]!r} Pa",
        f"  omega_e = {model.z_bar[1]!r} rad/s"
        f" ({model.z_bar[1] * engine.RAD_TO_RPM!r} rpm)",
        f"  throttle area = {model.h_bar!r} m^2",
        f"  Ts = {model.ts!r} s",
        "discrete model:",
        "  " + fmt_mat("A_d", model.a_d),
        f"  B_d = {model.b_d!r}",
        f"  C = {model.c!r}",
        "  " + fmt_mat("Q_d", model.q_d),
        f"  R_d = {model.r_d!r}",
        "weights:",
        "  " + fmt_mat("W", weights.w),
        f"  U = {weights.u!r}",
        "gains:",
        f"  L = {gains.l!r}",
        f"  K = {gains.k!r}",
        "  " + fmt_mat("P_ctrl", gains.p_ctrl),
        "  " + fmt_mat("P_est", gains.p_est),
        "checks:",
        f"  spectral radius closed loop = {spectral_radius_2x2(closed)!r}",
        f"  spectral radius estimator = {spectral_radius_2x2(predictor)!r}",
        f"  Riccati residual ctrl = "
        f"{riccati_residual(gains.p_ctrl, model.a_d, model.b_d, weights.w, weights.u)!r}",
        f"  Riccati residual est = "
        f"{riccati_residual(gains.p_est, mat2_t(model.a_d), model.c, model.q_d, model.r_d)!r}",
    ]
    return "\n".join(lines) + "\n"
