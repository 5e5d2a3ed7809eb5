"""Exact sampling from the Polya-Gamma PG(1, c) distribution.

Accept-reject scheme on the tilted Jacobi representation: proposals mix a
truncated inverse-Gaussian left piece with an exponential right tail, and
the alternating-series bound of the Jacobi density decides acceptance.
Draws are exact (no truncation of the series) and E[PG(1, c)] =
tanh(c/2) / (2c), with the limit 1/4 at c = 0.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

_TRUNC = 0.64
_PI2_8 = math.pi ** 2 / 8.0


@njit(cache=True, fastmath=False)
def _norm_cdf(x):
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


@njit(cache=True, fastmath=False)
def _tilted_ig_cdf_at_trunc(z):
    """CDF at the truncation point of IG(mu=1/z, lambda=1), z >= 0."""
    t = _TRUNC
    if z < 1e-12:
        # Levy limit of the inverse Gaussian as the mean diverges.
        return 2.0 * _norm_cdf(-1.0 / math.sqrt(t))
    b = math.sqrt(1.0 / t) * (t * z - 1.0)
    a = math.sqrt(1.0 / t) * (t * z + 1.0)
    term1 = _norm_cdf(b)
    if z > 30.0:
        # exp(2z) would overflow while the matching tail is < 1e-120.
        return term1
    return term1 + math.exp(2.0 * z) * _norm_cdf(-a)


@njit(cache=True, fastmath=False)
def _rtigauss(z, rng):
    """IG(mu=1/z, lambda=1) truncated to (0, _TRUNC]."""
    t = _TRUNC
    if z < 1.0 / t:
        # Mean beyond the truncation point: propose from the scaled
        # reciprocal chi-square tail and thin by the Gaussian tilt.
        while True:
            while True:
                e1 = rng.standard_exponential()
                e2 = rng.standard_exponential()
                if e1 * e1 <= 2.0 * e2 / t:
                    break
            x = t / ((1.0 + t * e1) * (1.0 + t * e1))
            if rng.random() <= math.exp(-0.5 * z * z * x):
                return x
    mu = 1.0 / z
    while True:
        y = rng.standard_normal()
        y *= y
        x = mu + 0.5 * mu * mu * y - 0.5 * mu * math.sqrt(4.0 * mu * y + (mu * y) * (mu * y))
        if rng.random() > mu / (mu + x):
            x = mu * mu / x
        if x <= t:
            return x


@njit(cache=True, fastmath=False)
def _jacobi_coef(n, x):
    """n-th alternating-series coefficient of the Jacobi density at x."""
    h = n + 0.5
    if x <= _TRUNC:
        return math.pi * h * math.pow(2.0 / (math.pi * x), 1.5) * math.exp(-2.0 * h * h / x)
    return math.pi * h * math.exp(-0.5 * h * h * math.pi * math.pi * x)


@njit(cache=True, fastmath=False)
def pg_draw(c, rng):
    """One exact draw from PG(1, c)."""
    z = 0.5 * abs(c)
    t = _TRUNC
    rate = _PI2_8 + 0.5 * z * z
    mass_right = (math.pi / (2.0 * rate)) * math.exp(-rate * t)
    mass_left = 2.0 * math.exp(-z) * _tilted_ig_cdf_at_trunc(z)
    prob_right = mass_right / (mass_right + mass_left)
    while True:
        if rng.random() < prob_right:
            x = t + rng.standard_exponential() / rate
        else:
            x = _rtigauss(z, rng)
        # Squeeze via the partial sums of the alternating series.
        s = _jacobi_coef(0, x)
        y = rng.random() * s
        n = 0
        while True:
            n += 1
            if n % 2 == 1:
                s -= _jacobi_coef(n, x)
                if y <= s:
                    return 0.25 * x
            else:
                s += _jacobi_coef(n, x)
                if y > s:
                    break


@njit(cache=True, fastmath=False)
def pg_draw_into(out, c, rng):
    for i in range(out.shape[0]):
        out[i] = pg_draw(c[i], rng)


def sample_pg(c: float, rng: np.random.Generator) -> float:
    """One PG(1, c) draw; thin wrapper over the compiled kernel."""
    return float(pg_draw(float(c), rng))


def sample_pg_many(c, size: int | None = None, rng: np.random.Generator | None = None) -> np.ndarray:
    """Vector of PG(1, c_i) draws; scalar c is broadcast to size."""
    if rng is None:
        rng = np.random.default_rng()
    c = np.asarray(c, dtype=np.float64)
    if c.ndim == 0:
        if size is None:
            raise ValueError("size required for scalar c")
        c = np.full(size, float(c))
    out = np.empty(c.shape[0], dtype=np.float64)
    pg_draw_into(out, c, rng)
    return out


def pg_mean(c: float) -> float:
    """E[PG(1, c)] = tanh(c/2) / (2c), continuously extended to 1/4 at 0."""
    if abs(c) < 1e-8:
        return 0.25
    return math.tanh(c / 2.0) / (2.0 * c)
