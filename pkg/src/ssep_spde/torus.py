"""Uniform periodic grids on the unit torus and the real sin/cos Fourier basis.

Scalar fields are plain arrays whose last ``d`` axes are the grid; vector
fields carry one extra axis of length ``d`` just before the grid axes.  Any
leading axes are batch axes (replicas, time frames) and pass through every
operator untouched.

The real orthonormal basis is indexed by the half lattice: ``k = 0`` or the
first nonzero component of ``k`` is positive.  For ``k != 0`` the members are
``sqrt(2) sin(2 pi k.x)`` and ``sqrt(2) cos(2 pi k.x)``; at ``k = 0`` only the
constant ``1`` survives.
"""

from __future__ import annotations

import itertools
import struct
from dataclasses import dataclass
from functools import cached_property, lru_cache
from pathlib import Path

import numpy as np

SQRT2 = np.sqrt(2.0)
TWO_PI = 2.0 * np.pi

SNAPSHOT_MAGIC = b"FLSIM1"
# magic, d, reserved, n, 4 pad bytes, payload length in bytes
_SNAPSHOT_HEADER = struct.Struct("<6sBBI4xQ")


@dataclass(frozen=True)
class TorusGrid:
    """Uniform grid with ``n`` points per axis on ``[0, 1)^d``."""

    d: int
    n: int

    def __post_init__(self):
        if self.d < 1:
            raise ValueError(f"dimension must be >= 1, got {self.d}")
        if self.n < 2:
            raise ValueError(f"need at least 2 points per axis, got {self.n}")

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.d

    @property
    def axes(self) -> tuple[int, ...]:
        return tuple(range(-self.d, 0))

    @property
    def size(self) -> int:
        return self.n**self.d

    @property
    def nyquist(self) -> int:
        """Largest cutoff that the sin/cos transform resolves without aliasing."""
        return self.n // 2 - 1

    def points(self) -> np.ndarray:
        """Coordinates of the grid points, shape ``(d, n, ..., n)``."""
        x = np.arange(self.n) * self.h
        return np.stack(np.meshgrid(*([x] * self.d), indexing="ij"))

    @cached_property
    def wavenumbers(self) -> tuple[np.ndarray, ...]:
        """Integer wave vectors on the ``rfftn`` layout, one broadcastable array per axis."""
        out = []
        for j in range(self.d):
            if j == self.d - 1:
                k = np.arange(self.n // 2 + 1)
            else:
                k = np.fft.fftfreq(self.n, d=1.0 / self.n).round().astype(int)
            shp = [1] * self.d
            shp[j] = k.size
            out.append(k.reshape(shp))
        return tuple(out)

    @cached_property
    def k2(self) -> np.ndarray:
        return sum(k.astype(float) ** 2 for k in self.wavenumbers)

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        """``4 pi^2 |k|^2`` on the rfft layout: the spectrum of ``-Laplacian``."""
        return 4.0 * np.pi**2 * self.k2

    @cached_property
    def _ik(self) -> tuple[np.ndarray, ...]:
        # the Nyquist row has no real derivative; dropping it keeps grad/div adjoint
        out = []
        for k in self.wavenumbers:
            f = 1j * TWO_PI * k.astype(float)
            if self.n % 2 == 0:
                f = np.where(np.abs(k) == self.n // 2, 0.0, f)
            out.append(f)
        return tuple(out)

    # -- transforms on the complex rfft layout, normalised so F[0] is the mean
    def fft(self, f: np.ndarray) -> np.ndarray:
        return np.fft.rfftn(f, axes=self.axes) / self.size

    def ifft(self, F: np.ndarray) -> np.ndarray:
        return np.fft.irfftn(F * self.size, s=self.shape, axes=self.axes)

    def spectral_mask(self, m: float) -> np.ndarray:
        """Boolean mask of rfft slots with ``|k| <= m``."""
        return self.k2 <= m * m + 1e-9

    # -- calculus
    def integrate(self, f: np.ndarray) -> np.ndarray:
        """Trapezoidal (periodic) quadrature over the torus."""
        return f.mean(axis=self.axes)

    def inner(self, f: np.ndarray, g: np.ndarray) -> np.ndarray:
        return self.integrate(f * g)

    def l2_norm(self, f: np.ndarray) -> np.ndarray:
        return np.sqrt(self.integrate(f * f))

    def gradient_hat(self, F: np.ndarray) -> np.ndarray:
        return np.stack([ik * F for ik in self._ik], axis=-self.d - 1)

    def divergence_hat(self, V: np.ndarray) -> np.ndarray:
        """Spectral divergence of a vector field given in physical space."""
        comps = [self.fft(np.take(V, j, axis=-self.d - 1)) for j in range(self.d)]
        out = sum(ik * c for ik, c in zip(self._ik, comps))
        out[(...,) + (0,) * self.d] = 0.0
        return out

    def gradient(self, f: np.ndarray) -> np.ndarray:
        return self.ifft(self.gradient_hat(self.fft(f)))

    def divergence(self, V: np.ndarray) -> np.ndarray:
        return self.ifft(self.divergence_hat(V))

    def laplacian(self, f: np.ndarray) -> np.ndarray:
        return self.ifft(-self.eigenvalues * self.fft(f))

    def project(self, f: np.ndarray, m: float) -> np.ndarray:
        """L2-orthogonal projection onto modes with ``|k| <= m``."""
        return self.ifft(self.fft(f) * self.spectral_mask(m))

    def h1_seminorm(self, f: np.ndarray) -> np.ndarray:
        F = self.fft(f)
        # rfft stores half the spectrum; interior columns of the last axis count twice
        return np.sqrt(np.sum(self._half_weights * self.eigenvalues * np.abs(F) ** 2, axis=self.axes))

    @cached_property
    def _half_weights(self) -> np.ndarray:
        kl = self.wavenumbers[-1]
        w = np.full(kl.shape, 2.0)
        w[kl == 0] = 1.0
        if self.n % 2 == 0:
            w[kl == self.n // 2] = 1.0
        return np.broadcast_to(w, self.k2.shape)


def in_half_lattice(k) -> bool:
    k = np.atleast_1d(np.asarray(k, dtype=int))
    nz = np.flatnonzero(k)
    return nz.size == 0 or k[nz[0]] > 0


@lru_cache(maxsize=None)
def _half_lattice(d: int, K: float) -> np.ndarray:
    r = int(np.floor(K + 1e-9))
    pts = [
        k
        for k in itertools.product(range(-r, r + 1), repeat=d)
        if sum(c * c for c in k) <= K * K + 1e-9 and in_half_lattice(k)
    ]
    arr = np.array(sorted(pts), dtype=int).reshape(-1, d)
    arr.setflags(write=False)
    return arr


def enumerate_half_lattice(d: int, K: float) -> list[tuple[int, ...]]:
    """Half-lattice wave vectors with Euclidean norm ``<= K``, sorted lexicographically."""
    if d < 1 or K < 0:
        raise ValueError("need d >= 1 and K >= 0")
    return [tuple(int(c) for c in k) for k in _half_lattice(d, float(K))]


def half_lattice_array(d: int, K: float) -> np.ndarray:
    """Same set as :func:`enumerate_half_lattice`, as a read-only ``(count, d)`` array."""
    if d < 1 or K < 0:
        raise ValueError("need d >= 1 and K >= 0")
    return _half_lattice(d, float(K))


def laplacian_eigenvalue(k) -> float:
    k = np.atleast_1d(np.asarray(k, dtype=float))
    return float(4.0 * np.pi**2 * np.dot(k, k))


def basis_eval(k, kind: str, x) -> np.ndarray:
    """Scalar basis function ``e_k`` (``kind='sin'``) or ``e'_k`` (``'cos'``) at points ``x``.

    ``x`` has the spatial dimension on its first axis.
    """
    k = np.atleast_1d(np.asarray(k, dtype=int))
    if not in_half_lattice(k):
        raise ValueError(f"{tuple(k)} is not in the half lattice")
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x[None]
    phase = TWO_PI * np.tensordot(k, x, axes=(0, 0))
    if not k.any():
        return np.zeros_like(phase) if kind == "sin" else np.ones_like(phase)
    if kind == "sin":
        return SQRT2 * np.sin(phase)
    if kind == "cos":
        return SQRT2 * np.cos(phase)
    raise ValueError(f"kind must be 'sin' or 'cos', got {kind!r}")


def vector_basis_eval(k, axis: int, kind: str, x) -> np.ndarray:
    """Vector noise basis member ``E_{axis,k}`` / ``E'_{axis,k}`` at ``x``.

    ``axis`` is 0-based.  Returns an array of shape ``(d,) + x.shape[1:]``.
    """
    k = np.atleast_1d(np.asarray(k, dtype=int))
    d = k.size
    if not 0 <= axis < d:
        raise ValueError(f"axis {axis} out of range for d={d}")
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x[None]
    val = basis_eval(k, kind, x)
    out = np.zeros((d,) + val.shape)
    out[axis] = val
    return out


@dataclass(frozen=True)
class SpectralCoeffs:
    """Coefficients on the real basis for all half-lattice ``k`` with ``|k| <= m``.

    ``cos[..., i]`` and ``sin[..., i]`` belong to ``waves[i]``; the entry for
    ``k = 0`` in ``cos`` is the mean and its ``sin`` entry is always zero.
    """

    waves: np.ndarray
    cos: np.ndarray
    sin: np.ndarray
    m: float

    def index(self, k) -> int:
        k = tuple(np.atleast_1d(k).tolist())
        hits = np.flatnonzero((self.waves == np.asarray(k)).all(axis=1))
        if hits.size == 0:
            raise KeyError(k)
        return int(hits[0])

    def project(self, m: float) -> "SpectralCoeffs":
        keep = (self.waves**2).sum(axis=1) <= m * m + 1e-9
        return SpectralCoeffs(self.waves[keep], self.cos[..., keep], self.sin[..., keep], m)

    def sum_of_squares(self) -> np.ndarray:
        return (self.cos**2).sum(axis=-1) + (self.sin**2).sum(axis=-1)


class HalfLatticeSlots:
    """Where each half-lattice wave vector lives in an rfft array.

    A coefficient pair ``(a, b)`` for ``a e'_k + b e_k`` maps to the complex
    amplitude ``(a - i b) / sqrt(2)`` at ``+k`` and its conjugate at ``-k``.
    Only one of the two is stored by ``rfftn`` unless the last component is
    zero, in which case both must be written.
    """

    def __init__(self, grid: TorusGrid, waves: np.ndarray):
        n = grid.n
        self.waves = np.asarray(waves, dtype=int).reshape(-1, grid.d)
        if self.waves.size and np.abs(self.waves).max() > grid.nyquist:
            raise ValueError(f"cutoff exceeds the alias-free limit n/2-1={grid.nyquist} for n={n}")
        self.grid = grid
        primary, conj, mirror_pos, mirror = [], [], [], []
        for i, k in enumerate(self.waves):
            if k[-1] >= 0:
                primary.append(tuple(c % n for c in k))
                conj.append(False)
                if k[-1] == 0 and k.any():
                    mirror_pos.append(i)
                    mirror.append(tuple((-c) % n for c in k))
            else:
                primary.append(tuple((-c) % n for c in k))
                conj.append(True)
        self.primary = tuple(np.array(c, dtype=int) for c in zip(*primary)) if primary else ()
        self.conj = np.array(conj, dtype=bool)
        self.mirror_pos = np.array(mirror_pos, dtype=int)
        self.mirror = tuple(np.array(c, dtype=int) for c in zip(*mirror)) if mirror else ()
        self.zero = np.flatnonzero(~self.waves.any(axis=1))

    def gather(self, F: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Read ``(cos, sin)`` coefficients from a normalised rfft array."""
        vals = F[(...,) + self.primary]
        vals = np.where(self.conj, np.conj(vals), vals)
        cos = SQRT2 * vals.real
        sin = -SQRT2 * vals.imag
        if self.zero.size:
            cos[..., self.zero] = vals[..., self.zero].real
            sin[..., self.zero] = 0.0
        return cos, sin

    def scatter(self, cos: np.ndarray, sin: np.ndarray) -> np.ndarray:
        """Build a normalised rfft array from ``(cos, sin)`` coefficients."""
        cos = np.asarray(cos, dtype=float)
        sin = np.asarray(sin, dtype=float)
        vals = (cos - 1j * sin) / SQRT2
        if self.zero.size:
            vals[..., self.zero] = cos[..., self.zero]
        batch = vals.shape[:-1]
        F = np.zeros(batch + self.grid.k2.shape, dtype=complex)
        F[(...,) + self.primary] = np.where(self.conj, np.conj(vals), vals)
        if self.mirror_pos.size:
            F[(...,) + self.mirror] = np.conj(vals[..., self.mirror_pos])
        return F


@lru_cache(maxsize=64)
def slots_for(grid: TorusGrid, m: float) -> HalfLatticeSlots:
    return HalfLatticeSlots(grid, half_lattice_array(grid.d, m))


def transform(field: np.ndarray, grid: TorusGrid, m: float) -> SpectralCoeffs:
    """Sin/cos coefficients of ``field`` for every half-lattice ``|k| <= m``."""
    if m > grid.nyquist:
        raise ValueError(f"cutoff {m} exceeds the alias-free limit {grid.nyquist} for n={grid.n}")
    slots = slots_for(grid, float(m))
    cos, sin = slots.gather(grid.fft(np.asarray(field, dtype=float)))
    return SpectralCoeffs(slots.waves, cos, sin, m)


def inverse_transform(coeffs: SpectralCoeffs, grid: TorusGrid) -> np.ndarray:
    slots = HalfLatticeSlots(grid, coeffs.waves)
    return grid.ifft(slots.scatter(coeffs.cos, coeffs.sin))


def random_band_limited(grid: TorusGrid, m: float, rng: np.random.Generator, scale: float = 1.0,
                        batch: tuple[int, ...] = ()) -> np.ndarray:
    """Gaussian random field with i.i.d. ``N(0, scale^2)`` coefficients on ``|k| <= m``."""
    slots = slots_for(grid, float(m))
    cnt = slots.waves.shape[0]
    cos = scale * rng.standard_normal(batch + (cnt,))
    sin = scale * rng.standard_normal(batch + (cnt,))
    return grid.ifft(slots.scatter(cos, sin))


def write_snapshot(path, field: np.ndarray, d: int) -> None:
    """Write one scalar field in the ``FLSIM1`` binary format."""
    field = np.ascontiguousarray(field, dtype="<f8")
    n = field.shape[0]
    if field.shape != (n,) * d:
        raise ValueError(f"field shape {field.shape} is not a {d}-dimensional cube")
    payload = field.tobytes(order="C")
    with open(path, "wb") as fh:
        fh.write(_SNAPSHOT_HEADER.pack(SNAPSHOT_MAGIC, d, 0, n, len(payload)))
        fh.write(payload)


def read_snapshot(path) -> tuple[np.ndarray, TorusGrid]:
    raw = Path(path).read_bytes()
    if len(raw) < _SNAPSHOT_HEADER.size:
        raise ValueError(f"{path}: truncated header")
    magic, d, _, n, nbytes = _SNAPSHOT_HEADER.unpack_from(raw)
    if magic != SNAPSHOT_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    if nbytes != 8 * n**d or len(raw) != _SNAPSHOT_HEADER.size + nbytes:
        raise ValueError(f"{path}: payload length mismatch")
    values = np.frombuffer(raw, dtype="<f8", offset=_SNAPSHOT_HEADER.size).reshape((n,) * d)
    return values.astype(float), TorusGrid(d, n)
