"""The mobility square root ``s(x) = sqrt(x(1-x))`` and its bump-kernel mollifications."""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy import integrate


def s(x):
    """``sqrt(x(1-x))`` on ``[0, 1]`` and zero elsewhere."""
    x = np.asarray(x, dtype=float)
    inside = (x >= 0.0) & (x <= 1.0)
    xc = np.where(inside, x, 0.0)
    return np.where(inside, np.sqrt(xc * (1.0 - xc)), 0.0)


def _bump(u):
    u = np.asarray(u, dtype=float)
    inside = np.abs(u) < 1.0
    uc = np.where(inside, u, 0.0)
    return np.where(inside, np.exp(-1.0 / (1.0 - uc * uc)), 0.0)


_BUMP_MASS = integrate.quad(lambda u: float(_bump(u)), -1.0, 1.0, epsabs=1e-14, limit=200)[0]


def convolve_quadrature(x, eta: float, nodes: int = 96) -> tuple[np.ndarray, np.ndarray]:
    """``(k_eta * s)(x)`` and its derivative by Gauss-Legendre quadrature.

    The substitution ``y = (1 - cos phi)/2`` turns ``s(y) dy`` into
    ``sin(phi)^2/4 dphi``, which removes both square-root endpoints, so the
    integrand is smooth and a fixed rule converges fast.  The derivative moves
    onto the kernel.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    val = np.zeros_like(x)
    der = np.zeros_like(x)
    lo = np.clip(x - eta, 0.0, 1.0)
    hi = np.clip(x + eta, 0.0, 1.0)
    live = hi > lo
    if not live.any():
        return val, der
    t, w = np.polynomial.legendre.leggauss(nodes)
    xs, a, b = x[live], np.arccos(1.0 - 2.0 * lo[live]), np.arccos(1.0 - 2.0 * hi[live])
    rv, rd = np.empty_like(xs), np.empty_like(xs)
    for start in range(0, xs.size, 4096):
        sl = slice(start, start + 4096)
        half = 0.5 * (b[sl] - a[sl])[:, None]
        phi = 0.5 * (a[sl] + b[sl])[:, None] + half * t[None, :]
        u = (xs[sl, None] - 0.5 * (1.0 - np.cos(phi))) / eta
        inside = np.abs(u) < 1.0
        uc = np.where(inside, u, 0.0)
        q = 1.0 - uc * uc
        bump = np.where(inside, np.exp(-1.0 / q), 0.0)
        weight = w[None, :] * 0.25 * np.sin(phi) ** 2 * half / (eta * _BUMP_MASS)
        rv[sl] = (bump * weight).sum(axis=1)
        rd[sl] = (bump * (-2.0 * uc / (q * q)) * weight).sum(axis=1) / eta
    val[live] = rv
    der[live] = rd
    return val, der


class MollifiedSqrt:
    """Tabulated ``s^eta = k_eta * s`` with cubic Hermite interpolation.

    The table stores values and derivatives on a uniform grid over the
    support ``[-eta, 1 + eta]``; evaluation is a direct index computation, so
    it costs the same at every point.  Outside the support both return 0.
    """

    def __init__(self, eta: float, table_size: int = 2**16):
        if not 0.0 < eta < 1.0:
            raise ValueError(f"eta must lie in (0, 1), got {eta}")
        self.eta = float(eta)
        self.lo = -self.eta
        self.hi = 1.0 + self.eta
        self.nodes = np.linspace(self.lo, self.hi, table_size + 1)
        self.step = (self.hi - self.lo) / table_size
        self.values, self.derivs = convolve_quadrature(self.nodes, self.eta)
        self.values[0] = self.values[-1] = 0.0
        self.derivs[0] = self.derivs[-1] = 0.0

    def _locate(self, x):
        x = np.asarray(x, dtype=float)
        inside = (x > self.lo) & (x < self.hi)
        t = (np.where(inside, x, self.lo) - self.lo) / self.step
        i = np.clip(np.floor(t).astype(np.intp), 0, self.nodes.size - 2)
        return inside, i, t - i

    def value(self, x):
        inside, i, tau = self._locate(x)
        t2, t3 = tau * tau, tau * tau * tau
        y0, y1 = self.values[i], self.values[i + 1]
        m0, m1 = self.derivs[i] * self.step, self.derivs[i + 1] * self.step
        v = (2 * t3 - 3 * t2 + 1) * y0 + (t3 - 2 * t2 + tau) * m0 + (3 * t2 - 2 * t3) * y1 + (t3 - t2) * m1
        return np.where(inside, np.clip(v, 0.0, 0.5), 0.0)

    def deriv(self, x):
        inside, i, tau = self._locate(x)
        t2 = tau * tau
        y0, y1 = self.values[i], self.values[i + 1]
        m0, m1 = self.derivs[i], self.derivs[i + 1]
        v = (6 * t2 - 6 * tau) * (y0 - y1) / self.step + (3 * t2 - 4 * tau + 1) * m0 + (3 * t2 - 2 * tau) * m1
        return np.where(inside, v, 0.0)

    __call__ = value


class ConstantNonlinearity:
    """``s`` frozen at a constant; its derivative, and hence the Ito correction, vanish."""

    def __init__(self, c: float):
        self.c = float(c)

    def value(self, x):
        return np.full(np.shape(x), self.c)

    def deriv(self, x):
        return np.zeros(np.shape(x))


@lru_cache(maxsize=32)
def mollified(eta: float) -> MollifiedSqrt:
    return MollifiedSqrt(eta)


def s_eta(eta: float, x):
    return mollified(float(eta)).value(x)


def s_eta_prime(eta: float, x):
    return mollified(float(eta)).deriv(x)


def _sup_grid(eta: float) -> np.ndarray:
    coarse = np.linspace(-2 * eta, 1 + 2 * eta, 100_001)
    near = eta * np.concatenate([-np.geomspace(2.0, 1e-4, 2000), [0.0], np.geomspace(1e-4, 2.0, 2000)])
    return np.concatenate([coarse, near, 1.0 + near])


@lru_cache(maxsize=64)
def sup_error(eta: float) -> float:
    """``sup_x |s(x) - s^eta(x)|`` on a grid refined near the endpoints."""
    x = _sup_grid(eta)
    return float(np.max(np.abs(s(x) - s_eta(eta, x))))


@lru_cache(maxsize=64)
def sup_deriv(eta: float) -> float:
    """``sup_x |(s^eta)'(x)|``; enters every scaling-regime diagnostic."""
    x = _sup_grid(eta)
    return float(np.max(np.abs(s_eta_prime(eta, x))))
