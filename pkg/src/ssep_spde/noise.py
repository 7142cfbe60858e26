"""Ultraviolet-truncated vector white noise on the torus and replica seeding."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .torus import TWO_PI, TorusGrid, enumerate_half_lattice, half_lattice_array, slots_for, vector_basis_eval


def correction_constant(d: int, K: float) -> int:
    """Constant ``N`` with ``sum_{j,|k|<=K} (v.E)E + (v.E')E' = N v`` pointwise.

    Every nonzero half-lattice mode contributes ``2 sin^2 + 2 cos^2 = 2`` and
    the constant mode contributes ``1``, hence ``2 #{k != 0} + 1``.
    """
    if K < 0:
        raise ValueError("cutoff must be nonnegative")
    return 2 * (half_lattice_array(d, K).shape[0] - 1) + 1


def basis_divergence(k, axis: int, kind: str, x) -> np.ndarray:
    """Pointwise divergence of ``E_{axis,k}`` (sin) or ``E'_{axis,k}`` (cos)."""
    k = np.atleast_1d(np.asarray(k, dtype=int))
    x = np.asarray(x, dtype=float)
    phase = TWO_PI * np.tensordot(k, x, axes=(0, 0))
    c = np.sqrt(2.0) * TWO_PI * k[axis]
    return c * np.cos(phase) if kind == "sin" else -c * np.sin(phase)


def identity_sums(d: int, K: float, x) -> tuple[np.ndarray, np.ndarray]:
    """Both basis sums over ``j`` and ``|k| <= K`` at points ``x`` (shape ``(d, P)``).

    Returns ``sum (div E) E + (div E') E'``, which vanishes identically, and the
    matrix ``G = sum E E^T + E' E'^T`` of shape ``(d, d, P)``; the second
    identity reads ``G v = correction_constant(d, K) v`` for every vector ``v``.
    """
    x = np.asarray(x, dtype=float)
    first = np.zeros((d,) + x.shape[1:])
    gram = np.zeros((d, d) + x.shape[1:])
    for k in enumerate_half_lattice(d, K):
        for j in range(d):
            for kind in ("sin", "cos"):
                E = vector_basis_eval(k, j, kind, x)
                first += basis_divergence(k, j, kind, x) * E
                gram += E[:, None] * E[None, :]
    return first, gram


@dataclass(frozen=True)
class ScalingParams:
    epsilon: float
    eta: float
    K: int
    M: int

    def validate(self, grid: TorusGrid | None = None) -> None:
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError(f"epsilon must lie in [0, 1], got {self.epsilon}")
        if not 0.0 < self.eta < 1.0:
            raise ValueError(f"eta must lie in (0, 1), got {self.eta}")
        if self.K < 1 or self.M < 1:
            raise ValueError("cutoffs K and M must be >= 1")
        if grid is not None:
            if self.M > grid.nyquist:
                raise ValueError(f"M={self.M} exceeds the grid limit {grid.nyquist}")
            if grid.n < 4 * self.K + 4:
                raise ValueError(f"grid n={grid.n} does not resolve noise cutoff K={self.K} (need n >= 4K+4)")


@dataclass(frozen=True)
class NoiseIncrement:
    """Brownian increments over one step for every ``(axis, k)`` with ``|k| <= K``.

    ``dB`` drives the sin members and ``dW`` the cos members; both have shape
    ``(..., d, count)``.  The ``k = 0`` entry of ``dB`` is drawn but multiplies
    the zero function.
    """

    dt: float
    K: float
    waves: np.ndarray
    dB: np.ndarray
    dW: np.ndarray

    @property
    def d(self) -> int:
        return self.waves.shape[1]


def sample_increment(rng: np.random.Generator, d: int, K: float, dt: float) -> NoiseIncrement:
    if dt < 0:
        raise ValueError("dt must be nonnegative")
    waves = half_lattice_array(d, K)
    z = rng.standard_normal((2, d, waves.shape[0])) * np.sqrt(dt)
    return NoiseIncrement(dt, K, waves, z[0], z[1])


def noise_field(inc: NoiseIncrement, grid: TorusGrid) -> np.ndarray:
    """Evaluate ``sum_j sum_k E_{k,j} dB + E'_{k,j} dW`` on the grid."""
    if grid.n < 4 * inc.K + 4:
        raise ValueError(f"grid n={grid.n} aliases noise cutoff K={inc.K} (need n >= 4K+4)")
    return grid.ifft(noise_field_hat(inc.dB, inc.dW, grid, inc.K))


def noise_field_hat(dB: np.ndarray, dW: np.ndarray, grid: TorusGrid, K: float) -> np.ndarray:
    """rfft of the noise field from raw increment arrays of shape ``(..., d, count)``."""
    return slots_for(grid, float(K)).scatter(dW, dB)


def replica_rng(master_seed: int, replica: int) -> np.random.Generator:
    """Generator for replica ``r``: Philox keyed by ``SeedSequence([master_seed, r])``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(master_seed), int(replica)])))


class ReplicaNoise:
    """Per-replica Gaussian streams served in lock step for batched solvers.

    Each replica owns its generator, so the numbers a replica sees do not
    depend on which other replicas share the batch.  Draws are buffered in
    blocks; Philox fills blocks in the same order as single draws, so the
    stream is identical to calling ``sample_increment`` once per step.
    """

    def __init__(self, generators: list[np.random.Generator], shape: tuple[int, ...], block: int = 256):
        self.generators = generators
        self.shape = tuple(shape)
        self.block = block
        self._buf: np.ndarray | None = None
        self._pos = 0

    @classmethod
    def from_seeds(cls, master_seed: int, replicas, shape, block: int = 256) -> "ReplicaNoise":
        return cls([replica_rng(master_seed, r) for r in replicas], shape, block)

    def next(self, remaining: int | None = None) -> np.ndarray:
        """Standard normals of shape ``(R,) + shape`` for one step."""
        if self._buf is None or self._pos == self._buf.shape[1]:
            b = self.block if remaining is None else max(1, min(self.block, remaining))
            self._buf = np.stack([g.standard_normal((b,) + self.shape) for g in self.generators])
            self._pos = 0
        out = self._buf[:, self._pos]
        self._pos += 1
        return out
