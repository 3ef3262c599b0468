"""Pure Python twin of the compiled integration kernel.

The expression order here is the reference: the Cython kernel mirrors
it line by line and is compiled with floating-point contraction off,
so both backends produce bit-identical trajectories. Any change to an
arithmetic expression must be made in both files.
"""

from __future__ import annotations

import math

from .errors import IntegrationError

_FOUR_PI = 4.0 * math.pi


class Stepper:
    """Engine state derivative and RK4 advance for one parameter set.

    State is (p, w): manifold pressure [Pa] and engine speed [rad/s].
    Input is the throttle open area A [m^2] plus a constant load
    torque [Nm]. Optional (wp, ww) are process-noise derivative
    offsets [Pa/s, rad/s^2] held constant across the step.
    """

    __slots__ = (
        "gamma0", "gamma1", "gamma2", "eta0", "eta1", "beta0", "beta2",
        "p_a", "p_out", "alpha", "theta_e", "h_f", "two_branch",
        "c_flow", "c_choked", "c_man", "c_cyl", "k_vol1", "k_vol2",
        "k_exp", "c_air", "vd_4pi",
    )

    def __init__(self, r_gas, theta_a, theta_m, v_d, v_c, p_a, p_out,
                 gamma0, gamma1, gamma2, eta0, eta1, beta0, beta2,
                 theta_e, h_f, kappa, alpha, two_branch):
        self.gamma0 = gamma0
        self.gamma1 = gamma1
        self.gamma2 = gamma2
        self.eta0 = eta0
        self.eta1 = eta1
        self.beta0 = beta0
        self.beta2 = beta2
        self.p_a = p_a
        self.p_out = p_out
        self.alpha = alpha
        self.theta_e = theta_e
        self.h_f = h_f
        self.two_branch = bool(two_branch)
        self.c_flow = p_a / math.sqrt(r_gas * theta_a)
        self.c_choked = self.c_flow * math.sqrt(0.5)
        self.c_man = r_gas * theta_m / v_d
        self.c_cyl = v_d / (r_gas * theta_m) / _FOUR_PI
        self.k_vol1 = (v_c + v_d) / v_d
        self.k_vol2 = v_c / v_d
        self.k_exp = 1.0 / kappa
        self.c_air = alpha / (alpha + 1.0)
        self.vd_4pi = v_d / _FOUR_PI

    def deriv(self, p, w, area, t_load):
        """(dp/dt, dw/dt) at state (p, w) under input (area, t_load)."""
        if self.two_branch:
            r = p / self.p_a
            if r > 0.5:
                mdot_a = area * (self.c_flow * math.sqrt(2.0 * r * (1.0 - r)))
            else:
                mdot_a = area * self.c_choked
        else:
            mdot_a = area * self.c_choked
        lam_w = self.gamma0 + self.gamma1 * w + self.gamma2 * (w * w)
        lam_p = self.k_vol1 - self.k_vol2 * (self.p_out / p) ** self.k_exp
        lam = lam_w * lam_p
        if lam < 0.0:
            lam = 0.0
        mdot = p * lam * w * self.c_cyl
        mdot_b = mdot * self.c_air
        torque = (self.eta0 + self.eta1 * w) * (self.h_f * mdot_b) / (self.alpha * w) \
            - (self.beta0 + self.beta2 * (w * w) + self.p_out - p) * self.vd_4pi
        dp = self.c_man * (mdot_a - mdot_b)
        dw = (torque - t_load) / self.theta_e
        return dp, dw

    def rk4(self, p, w, area, t_load, dt, wp=0.0, ww=0.0):
        """One classical Runge-Kutta step of length dt."""
        d1p, d1w = self.deriv(p, w, area, t_load)
        k1p = d1p + wp
        k1w = d1w + ww
        half = 0.5 * dt
        d2p, d2w = self.deriv(p + half * k1p, w + half * k1w, area, t_load)
        k2p = d2p + wp
        k2w = d2w + ww
        d3p, d3w = self.deriv(p + half * k2p, w + half * k2w, area, t_load)
        k3p = d3p + wp
        k3w = d3w + ww
        d4p, d4w = self.deriv(p + dt * k3p, w + dt * k3w, area, t_load)
        k4p = d4p + wp
        k4w = d4w + ww
        dt6 = dt / 6.0
        p2 = p + dt6 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)
        w2 = w + dt6 * (k1w + 2.0 * k2w + 2.0 * k3w + k4w)
        if not (math.isfinite(p2) and math.isfinite(w2)) or p2 <= 0.0 or w2 <= 0.0:
            raise IntegrationError(
                f"integration left the physical domain: p={p2!r}, w={w2!r}"
            )
        return p2, w2
