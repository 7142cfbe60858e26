"""Symmetric simple exclusion on the periodic lattice ``(Z/NZ)^d``.

Rates: every unordered nearest-neighbour edge swaps its two occupations at
rate ``N^2`` (macroscopic time).  A lone particle then jumps to each
neighbour at rate ``N^2`` and its macroscopic displacement has variance
``2 t`` per axis, so the hydrodynamic equation is ``d_t rho = Lap(rho)``.

Since every edge has the same rate, the process is simulated exactly by
uniformization: over a macroscopic interval ``dt`` the number of clock rings
is Poisson with mean ``d N^d N^2 dt`` and each ring picks an edge uniformly.
A swap of equal occupations is a no-op, so no rejection is needed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import ValidationError
from .torus import TorusGrid, slots_for

_CHUNK = 1 << 20


@njit(cache=True)
def _apply_swaps(occ, raw, count, n_sites, d, N):  # pragma: no cover - compiled
    # each 64-bit word yields two 32-bit uniforms; multiply-shift maps them to edges
    n_edges = np.uint64(d * n_sites)
    mask = np.uint64(0xFFFFFFFF)
    shift = np.uint64(32)
    for i in range(count):
        w = raw[i >> 1]
        u = (w >> shift) if (i & 1) == 0 else (w & mask)
        e = np.int64((u * n_edges) >> shift)
        axis = e // n_sites
        site = e - axis * n_sites
        stride = 1
        for _ in range(d - 1 - axis):
            stride *= N
        c = (site // stride) % N
        nb = site + stride if c < N - 1 else site - (N - 1) * stride
        a = occ[site]
        occ[site] = occ[nb]
        occ[nb] = a


@dataclass
class SsepConfiguration:
    occupations: np.ndarray
    N: int
    t_macro: float = 0.0
    particle_count: int = -1

    def __post_init__(self):
        self.occupations = np.ascontiguousarray(self.occupations, dtype=np.uint8)
        if self.occupations.shape != (self.N,) * self.occupations.ndim:
            raise ValidationError(f"occupations of shape {self.occupations.shape} do not fit N={self.N}")
        if self.particle_count < 0:
            self.particle_count = int(self.occupations.sum())

    @property
    def d(self) -> int:
        return self.occupations.ndim

    def copy(self) -> "SsepConfiguration":
        return SsepConfiguration(self.occupations.copy(), self.N, self.t_macro, self.particle_count)


def lattice_points(N: int, d: int) -> np.ndarray:
    """Rescaled sites ``x/N``, shape ``(d, N, ..., N)``."""
    return TorusGrid(d, N).points()


def _profile_values(profile, N: int, d: int) -> np.ndarray:
    if callable(profile):
        vals = np.asarray(profile(lattice_points(N, d)), float)
    else:
        vals = np.asarray(profile, float)
        if vals.ndim == 0:
            vals = np.full((N,) * d, float(vals))
        elif vals.shape != (N,) * d:
            raise ValidationError(f"profile of shape {vals.shape} does not match the lattice (N={N}, d={d})")
    if vals.min() < 0 or vals.max() > 1:
        raise ValidationError("profile must take values in [0, 1]")
    return np.broadcast_to(vals, (N,) * d)


def init_bernoulli(profile, N: int, rng: np.random.Generator, d: int = 1) -> SsepConfiguration:
    """Independent occupations with ``P(eta(x) = 1) = profile(x/N)``.

    ``profile`` is a constant, an array over the lattice, or a function of
    the rescaled coordinates (shape ``(d, N, ...)``).
    """
    p = _profile_values(profile, N, d)
    occ = (rng.random((N,) * d) < p).astype(np.uint8)
    return SsepConfiguration(occ, N)


def init_quenched(rho: float, N: int) -> SsepConfiguration:
    """Deterministic 1d configuration ``eta(x) = floor((x+1) rho) - floor(x rho)`` with density ``rho``."""
    x = np.arange(N)
    occ = (np.floor((x + 1) * rho) - np.floor(x * rho)).astype(np.uint8)
    return SsepConfiguration(occ, N)


def advance(config: SsepConfiguration, dt_macro: float, rng: np.random.Generator,
            inplace: bool = False) -> SsepConfiguration:
    """Run the exclusion dynamics for macroscopic time ``dt_macro``."""
    if dt_macro < 0:
        raise ValidationError("dt_macro must be nonnegative")
    cfg = config if inplace else config.copy()
    N, d = cfg.N, cfg.d
    n_sites = N**d
    if d * n_sites >= 2**32:
        raise ValidationError("lattice too large for 32-bit edge sampling")
    rings = int(rng.poisson(d * n_sites * float(N) ** 2 * dt_macro)) if dt_macro > 0 else 0
    flat = cfg.occupations.reshape(-1)
    left = rings
    while left > 0:
        c = min(left, 2 * _CHUNK)
        raw = rng.bit_generator.random_raw((c + 1) // 2)
        _apply_swaps(flat, raw, c, n_sites, d, N)
        left -= c
    cfg.t_macro += dt_macro
    return cfg


# -- observables ------------------------------------------------------------


@dataclass
class EmpiricalField:
    values: np.ndarray
    grid: TorusGrid
    t: float


def _box_mean(f: np.ndarray, N: int, n: int, d: int) -> np.ndarray:
    if N % n:
        raise ValidationError(f"coarse grid n={n} does not divide N={N}")
    b = N // n
    lead = f.shape[: f.ndim - d]
    shp = lead + sum(((n, b) for _ in range(d)), ())
    axes = tuple(len(lead) + 2 * j + 1 for j in range(d))
    return f.reshape(shp).mean(axis=axes)


def empirical_density(config: SsepConfiguration, grid: TorusGrid) -> EmpiricalField:
    """Box-averaged density on ``grid``."""
    if grid.d != config.d:
        raise ValidationError("grid and lattice dimensions differ")
    return EmpiricalField(_box_mean(config.occupations.astype(float), config.N, grid.n, grid.d), grid, config.t_macro)


def heat_eigenvalues(N: int, d: int) -> np.ndarray:
    """Spectrum ``2 N^2 sum_j (1 - cos(2 pi k_j / N))`` of the lattice generator on the rfft layout."""
    lattice = TorusGrid(d, N)
    return 2.0 * N**2 * sum(1.0 - np.cos(2 * np.pi * k / N) for k in lattice.wavenumbers)


def discrete_heat_mean(initial_mean: np.ndarray, t: float) -> np.ndarray:
    """``E eta_t`` from ``E eta_0``: the lattice heat equation solved by DFT."""
    initial_mean = np.asarray(initial_mean, float)
    d, N = initial_mean.ndim, initial_mean.shape[0]
    axes = tuple(range(d))
    F = np.fft.rfftn(initial_mean, axes=axes)
    return np.fft.irfftn(F * np.exp(-heat_eigenvalues(N, d) * t), s=initial_mean.shape, axes=axes)


def fluctuation_field(configs, grid: TorusGrid, mean: np.ndarray) -> np.ndarray:
    """Coarse fluctuation fields ``N^{d/2} (box(eta) - box(E eta))``, one per configuration."""
    occ = np.stack([c.occupations for c in configs]).astype(float)
    N, d = configs[0].N, grid.d
    return N ** (d / 2) * _box_mean(occ - mean, N, grid.n, d)


def fluctuation_modes(occupations: np.ndarray, mean: np.ndarray, m: float):
    """``(cos, sin)`` mode coefficients ``N^{-d/2} sum_x (eta - E eta)(x) e_k(x/N)`` for ``|k| <= m``.

    ``occupations`` may carry leading replica axes.
    """
    mean = np.asarray(mean, float)
    d, N = mean.ndim, mean.shape[0]
    lattice = TorusGrid(d, N)
    fluct = np.asarray(occupations, float) - mean
    # fft() averages over N^d sites; the field normalization wants N^{d/2} of that
    cos, sin = slots_for(lattice, float(m)).gather(lattice.fft(fluct))
    return N ** (d / 2) * cos, N ** (d / 2) * sin


def equilibrium_mode_variance(rho: float) -> float:
    """Static structure function of the Bernoulli product measure."""
    return rho * (1.0 - rho)
