"""Seeded random number generation with a fully documented algorithm.

Traces must be reproducible across interpreter versions and across
rebuilds of the compiled kernel, so the generator is implemented here
from scratch instead of delegating to an external library whose stream
could change between releases.

Algorithm
---------
Integer stream: SplitMix64 (Steele, Lea, Flood, 2014). State is a
single 64-bit counter advanced by the golden-gamma constant; each
output is the finalizer

    s += 0x9E3779B97F4A7C15
    z = s
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    return z ^ (z >> 31)

with all arithmetic modulo 2**64.

Uniform doubles: the top 53 bits of one output, scaled by 2**-53,
giving values in [0, 1).

Normal draws: Box-Muller. Per pair of uniforms u1 in (0, 1] and
u2 in [0, 1):

    r  = sqrt(-2 ln u1)
    z0 = r cos(2 pi u2)
    z1 = r sin(2 pi u2)

u1 uses (top53 + 1) * 2**-53 so the logarithm never sees zero. z1 is
cached and returned by the next call, so draws are consumed from the
integer stream two at a time.

The uint64 stream is platform independent. Derived floating-point
draws are bit-stable for a given libm (cos/sin/log/sqrt); on one
machine, repeated runs are exactly identical.
"""

from __future__ import annotations

import math

from .errors import ConfigError

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_INV53 = 2.0**-53
_TWO_PI = 2.0 * math.pi


class Rng:
    """SplitMix64 stream with Box-Muller normal draws."""

    def __init__(self, seed: int):
        self._state = int(seed) & _MASK64
        self._cached_normal: float | None = None

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
        z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
        return z ^ (z >> 31)

    def uniform(self) -> float:
        """One double in [0, 1)."""
        return (self.next_u64() >> 11) * _INV53

    def normal(self) -> float:
        """One standard normal draw."""
        if self._cached_normal is not None:
            z = self._cached_normal
            self._cached_normal = None
            return z
        u1 = ((self.next_u64() >> 11) + 1) * _INV53
        u2 = (self.next_u64() >> 11) * _INV53
        r = math.sqrt(-2.0 * math.log(u1))
        a = _TWO_PI * u2
        self._cached_normal = r * math.sin(a)
        return r * math.cos(a)


def _cholesky2(cov: list[list[float]]) -> list[list[float]]:
    """Lower Cholesky factor of a symmetric PSD 2x2 matrix."""
    a, b = cov[0][0], cov[0][1]
    c, d = cov[1][0], cov[1][1]
    if abs(b - c) > 1e-12 * max(1.0, abs(b), abs(c)):
        raise ConfigError("covariance matrix must be symmetric")
    if a < 0.0:
        raise ConfigError("covariance matrix must be positive semidefinite")
    l11 = math.sqrt(a)
    l21 = b / l11 if l11 > 0.0 else 0.0
    rem = d - l21 * l21
    if rem < -1e-12 * max(1.0, abs(d)):
        raise ConfigError("covariance matrix must be positive semidefinite")
    l22 = math.sqrt(rem) if rem > 0.0 else 0.0
    if l11 == 0.0 and b != 0.0:
        raise ConfigError("covariance matrix must be positive semidefinite")
    return [[l11, 0.0], [l21, l22]]


def gaussian_draw(rng: Rng, covariance) -> list[float]:
    """Zero-mean gaussian draw with the requested covariance.

    covariance may be a scalar variance, a sequence of per-component
    variances (diagonal), or a full 2x2 PSD matrix. A zero covariance
    yields exact zeros without consuming the stream, so disabling a
    noise source never shifts the draws of the remaining ones.
    """
    if isinstance(covariance, (int, float)):
        v = float(covariance)
        if v < 0.0:
            raise ConfigError("variance must be nonnegative")
        if v == 0.0:
            return [0.0]
        return [math.sqrt(v) * rng.normal()]
    cov = list(covariance)
    if cov and isinstance(cov[0], (list, tuple)):
        if len(cov) != 2 or any(len(row) != 2 for row in cov):
            raise ConfigError("matrix covariance must be 2x2")
        mat = [[float(x) for x in row] for row in cov]
        if all(x == 0.0 for row in mat for x in row):
            return [0.0, 0.0]
        low = _cholesky2(mat)
        z0 = rng.normal() if (low[0][0] or low[1][0]) else 0.0
        z1 = rng.normal() if low[1][1] else 0.0
        return [low[0][0] * z0, low[1][0] * z0 + low[1][1] * z1]
    out = []
    for v in cov:
        v = float(v)
        if v < 0.0:
            raise ConfigError("variance must be nonnegative")
        out.append(math.sqrt(v) * rng.normal() if v > 0.0 else 0.0)
    return out
