"""Generalized Ornstein-Uhlenbeck fluctuations around a hydrodynamic profile.

    d v = Lap(v) dt - div(s(rho_bar) dxi),   v(0) = 0.

In modes, ``dv_k = -lam_k v_k dt + int s(rho_bar) grad(e_k) . dxi`` with
``lam_k = 4 pi^2 |k|^2``.  The drift is integrated exactly; the noise weight
``s(rho_bar)`` is frozen over a step and the step noise of mode ``k`` carries
the exact factor ``sqrt((1 - e^{-2 lam dt}) / (2 lam dt))``, so for constant
``rho_bar`` any ``dt`` gives the exact law.  The weight multiplies the noise in
physical space, which couples modes when ``rho_bar`` is not constant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .mollifier import s
from .noise import ReplicaNoise, replica_rng
from .skeleton import DensityPath
from .torus import TorusGrid, half_lattice_array, slots_for


@dataclass
class ModeVector:
    """Coefficients of ``v`` against ``e'_k`` (cos) and ``e_k`` (sin), ``0 < |k| <= m``.

    Leading axes of ``cos``/``sin`` are free (replicas, output times).
    """

    waves: np.ndarray
    cos: np.ndarray
    sin: np.ndarray
    t: np.ndarray | float = 0.0

    @property
    def norms(self) -> np.ndarray:
        return np.sqrt((self.waves.astype(float) ** 2).sum(axis=1))

    def restrict(self, m: float) -> "ModeVector":
        keep = self.norms <= m + 1e-9
        return ModeVector(self.waves[keep], self.cos[..., keep], self.sin[..., keep], self.t)


def mode_waves(d: int, m: float) -> np.ndarray:
    w = half_lattice_array(d, m)
    return w[w.any(axis=1)]


def modes_from_hat(F: np.ndarray, grid: TorusGrid, m: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(waves, cos, sin)`` for ``0 < |k| <= m`` from a normalised rfft array."""
    slots = slots_for(grid, float(m))
    cos, sin = slots.gather(F)
    nz = slots.waves.any(axis=1)
    return slots.waves[nz], cos[..., nz], sin[..., nz]


def modes_of(field: np.ndarray, grid: TorusGrid, m: float, t=0.0) -> ModeVector:
    waves, c, sn = modes_from_hat(grid.fft(field), grid, m)
    return ModeVector(waves, c, sn, t)


def analytic_mode_variance(rho: float, k, t: float) -> float:
    """``Var v_k(t)`` for constant ``rho_bar = rho``: ``rho(1-rho)(1 - e^{-2 lam_k t})/2``."""
    if not 0.0 <= rho <= 1.0:
        raise ValidationError("rho must lie in [0, 1]")
    lam = 4.0 * np.pi**2 * float(np.sum(np.asarray(k, float) ** 2))
    return rho * (1.0 - rho) * (-np.expm1(-2.0 * lam * t)) / 2.0


def neg_sobolev_norm(modes: ModeVector, delta: float) -> np.ndarray:
    """``(sum_{k != 0} (v_k^2 + v'_k^2) / |k|^{d+delta})^{1/2}`` over the last axis."""
    if delta <= 0:
        raise ValidationError("delta must be positive")
    d = modes.waves.shape[1]
    w = modes.norms ** -(d + delta)
    return np.sqrt(np.sum((modes.cos**2 + modes.sin**2) * w, axis=-1))


def tail_fraction(modes: ModeVector, delta: float, cut: float) -> float:
    """Share of the mean squared ``H^{-(d+delta)/2}`` norm carried by ``|k| > cut``."""
    d = modes.waves.shape[1]
    w = modes.norms ** -(d + delta)
    e = (modes.cos**2 + modes.sin**2) * w
    tail = e[..., modes.norms > cut + 1e-9].sum()
    total = e.sum()
    return float(tail / total) if total > 0 else 0.0


class _Weight:
    """``s(rho_bar(t_n))`` for a constant, a fixed field or a path on the step mesh."""

    def __init__(self, rho_bar, grid: TorusGrid, dt: float, steps: int):
        self.grid = grid
        if isinstance(rho_bar, DensityPath):
            ratio = dt / rho_bar.dt
            if rho_bar.grid != grid or abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
                raise ValidationError("rho_bar path must live on the OU grid with a step dividing dt")
            self.every = int(round(ratio))
            if (steps - 1) * self.every >= rho_bar.frames.shape[0]:
                raise ValidationError("rho_bar path is shorter than the OU run")
            self.frames = rho_bar.frames
            self.const = None
        else:
            rb = np.asarray(rho_bar, float)
            self.const = s(np.broadcast_to(rb, grid.shape)) if rb.ndim else s(np.full(grid.shape, float(rb)))
            self.frames = None

    def __call__(self, n: int) -> np.ndarray:
        if self.const is not None:
            return self.const
        return s(self.frames[n * self.every])


@dataclass
class OuEnsemble:
    replicas: np.ndarray
    times: np.ndarray
    modes: ModeVector


def simulate_ou_ensemble(rho_bar, grid: TorusGrid, m_sim: float, K_noise: float | None, T: float, dt: float,
                         seed: int, replicas, stride: int | None = None, batch: int = 512) -> OuEnsemble:
    """OU paths for replicas keyed by ``(seed, r)``; modes kept every ``stride`` steps.

    The generator of replica ``r`` is consumed exactly as the SPDE solver
    consumes it with noise cutoff ``K_noise``, which couples the two when the
    cutoffs agree.
    """
    K_noise = 4 * m_sim if K_noise is None else K_noise
    if not m_sim <= K_noise <= grid.nyquist:
        raise ValidationError(f"need m_sim <= K_noise <= {grid.nyquist}, got {m_sim}, {K_noise}")
    if grid.n < 4 * K_noise + 4:
        raise ValidationError(f"grid n={grid.n} does not resolve K_noise={K_noise} (need n >= 4K+4)")
    steps = int(round(T / dt))
    if steps < 1 or abs(steps * dt - T) > 1e-9 * T:
        raise ValidationError(f"T={T} is not a positive multiple of dt={dt}")
    stride = steps if stride is None else stride
    out = list(range(0, steps + 1, stride))
    if out[-1] != steps:
        out.append(steps)
    weight = _Weight(rho_bar, grid, dt, steps)
    lam = grid.eigenvalues
    prop = np.exp(-lam * dt)
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.sqrt(np.where(lam > 0, -np.expm1(-2 * lam * dt) / (2 * lam * dt), 1.0))
    mask = grid.spectral_mask(m_sim)
    noise_slots = slots_for(grid, float(K_noise))
    shape = (2, grid.d, half_lattice_array(grid.d, K_noise).shape[0])
    ids = np.asarray(list(replicas) if not isinstance(replicas, int) else range(replicas), dtype=np.int64)
    waves = mode_waves(grid.d, m_sim)
    cos = np.zeros((ids.size, len(out), waves.shape[0]))
    sin = np.zeros_like(cos)
    sqdt = np.sqrt(dt)
    for b0 in range(0, ids.size, batch):
        rows = slice(b0, min(ids.size, b0 + batch))
        noise = ReplicaNoise([replica_rng(seed, int(r)) for r in ids[rows]], shape)
        v = np.zeros((ids[rows].size,) + lam.shape, dtype=complex)
        j = 1
        for n in range(steps):
            z = noise.next(steps - n)
            xi = grid.ifft(noise_slots.scatter(z[:, 1] * sqdt, z[:, 0] * sqdt))
            flux = -grid.divergence_hat(weight(n)[None, None] * xi)
            v = prop * v + q * mask * flux
            if j < len(out) and n + 1 == out[j]:
                _, c, sn = modes_from_hat(v, grid, m_sim)
                cos[rows, j] = c
                sin[rows, j] = sn
                j += 1
    return OuEnsemble(ids, dt * np.array(out, float), ModeVector(waves, cos, sin, dt * np.array(out, float)))


def simulate_ou(rho_bar, grid: TorusGrid, m_sim: float, K_noise: float | None, T: float, dt: float,
                seed: int, replica: int = 0, stride: int = 1) -> ModeVector:
    """Single OU path (modes at every ``stride`` steps, starting from ``v(0) = 0``)."""
    res = simulate_ou_ensemble(rho_bar, grid, m_sim, K_noise, T, dt, seed, [replica], stride)
    m = res.modes
    return ModeVector(m.waves, m.cos[0], m.sin[0], res.times)
