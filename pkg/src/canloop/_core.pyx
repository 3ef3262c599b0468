# cython: language_level=3, boundscheck=False, cdivision=False
"""Compiled twin of canloop._pure_kernel.

Mirrors the pure Python Stepper expression by expression. Built with
-ffp-contract=off so no fused multiply-add can change a bit relative
to the interpreter's double arithmetic.
"""

from libc.math cimport isfinite, pow, sqrt

from .errors import IntegrationError

cdef double _FOUR_PI = 4.0 * 3.141592653589793


cdef class Stepper:
    """Engine state derivative and RK4 advance for one parameter set."""

    cdef double gamma0, gamma1, gamma2, eta0, eta1, beta0, beta2
    cdef double p_a, p_out, alpha, theta_e, h_f
    cdef double c_flow, c_choked, c_man, c_cyl, k_vol1, k_vol2
    cdef double k_exp, c_air, vd_4pi
    cdef bint two_branch

    def __init__(self, double r_gas, double theta_a, double theta_m,
                 double v_d, double v_c, double p_a, double p_out,
                 double gamma0, double gamma1, double gamma2,
                 double eta0, double eta1, double beta0, double beta2,
                 double theta_e, double h_f, double kappa, double alpha,
                 bint two_branch):
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
        self.two_branch = two_branch
        self.c_flow = p_a / sqrt(r_gas * theta_a)
        self.c_choked = self.c_flow * sqrt(0.5)
        self.c_man = r_gas * theta_m / v_d
        self.c_cyl = v_d / (r_gas * theta_m) / _FOUR_PI
        self.k_vol1 = (v_c + v_d) / v_d
        self.k_vol2 = v_c / v_d
        self.k_exp = 1.0 / kappa
        self.c_air = alpha / (alpha + 1.0)
        self.vd_4pi = v_d / _FOUR_PI

    cdef inline int _deriv(self, double p, double w, double area,
                           double t_load, double* dp, double* dw) except -1:
        cdef double r, mdot_a, lam_w, lam_p, lam, mdot, mdot_b, torque
        if self.two_branch:
            r = p / self.p_a
            if r > 0.5:
                mdot_a = area * (self.c_flow * sqrt(2.0 * r * (1.0 - r)))
            else:
                mdot_a = area * self.c_choked
        else:
            mdot_a = area * self.c_choked
        lam_w = self.gamma0 + self.gamma1 * w + self.gamma2 * (w * w)
        lam_p = self.k_vol1 - self.k_vol2 * pow(self.p_out / p, self.k_exp)
        lam = lam_w * lam_p
        if lam < 0.0:
            lam = 0.0
        mdot = p * lam * w * self.c_cyl
        mdot_b = mdot * self.c_air
        torque = (self.eta0 + self.eta1 * w) * (self.h_f * mdot_b) / (self.alpha * w) \
            - (self.beta0 + self.beta2 * (w * w) + self.p_out - p) * self.vd_4pi
        dp[0] = self.c_man * (mdot_a - mdot_b)
        dw[0] = (torque - t_load) / self.theta_e
        return 0

    def deriv(self, double p, double w, double area, double t_load):
        """(dp/dt, dw/dt) at state (p, w) under input (area, t_load)."""
        cdef double dp, dw
        self._deriv(p, w, area, t_load, &dp, &dw)
        return dp, dw

    def rk4(self, double p, double w, double area, double t_load,
            double dt, double wp=0.0, double ww=0.0):
        """One classical Runge-Kutta step of length dt."""
        cdef double d1p, d1w, d2p, d2w, d3p, d3w, d4p, d4w
        cdef double k1p, k1w, k2p, k2w, k3p, k3w, k4p, k4w
        cdef double half, dt6, p2, w2
        self._deriv(p, w, area, t_load, &d1p, &d1w)
        k1p = d1p + wp
        k1w = d1w + ww
        half = 0.5 * dt
        self._deriv(p + half * k1p, w + half * k1w, area, t_load, &d2p, &d2w)
        k2p = d2p + wp
        k2w = d2w + ww
        self._deriv(p + half * k2p, w + half * k2w, area, t_load, &d3p, &d3w)
        k3p = d3p + wp
        k3w = d3w + ww
        self._deriv(p + dt * k3p, w + dt * k3w, area, t_load, &d4p, &d4w)
        k4p = d4p + wp
        k4w = d4w + ww
        dt6 = dt / 6.0
        p2 = p + dt6 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)
        w2 = w + dt6 * (k1w + 2.0 * k2w + 2.0 * k3w + k4w)
        if not (isfinite(p2) and isfinite(w2)) or p2 <= 0.0 or w2 <= 0.0:
            raise IntegrationError(
                f"integration left the physical domain: p={p2!r}, w={w2!r}"
            )
        return p2, w2
