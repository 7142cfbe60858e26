"""Deterministic solver for the controlled skeleton equation.

    d_t rho = Laplacian(rho) - div(s(rho) g),   s(x) = sqrt(x(1-x)) on [0, 1], 0 outside

One step is exact for the heat part and treats the flux explicitly (first
order exponential time differencing):

    rho_hat(t+dt) = exp(-lam dt) rho_hat(t) + (1 - exp(-lam dt))/lam * N_hat(t),
    N = -div(s(rho(t)) g(t)).

The flux enters only through a spectral divergence whose zero mode is set to
zero, so the mean of ``rho`` is carried bit-for-bit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import NumericalError, ValidationError
from .mollifier import s
from .torus import TorusGrid


@dataclass
class DensityPath:
    grid: TorusGrid
    dt: float
    frames: np.ndarray
    range_tol: float | None = None

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.frames.shape[0])

    @property
    def T(self) -> float:
        return self.dt * (self.frames.shape[0] - 1)

    def mass(self) -> np.ndarray:
        return self.grid.integrate(self.frames)

    def frame_at(self, t: float) -> np.ndarray:
        i = int(round(t / self.dt))
        if not 0 <= i < self.frames.shape[0] or abs(i * self.dt - t) > 1e-9 * max(1.0, abs(t)):
            raise ValidationError(f"time {t} is not on the path mesh")
        return self.frames[i]

    def check_range(self, tol: float | None = None) -> bool:
        tol = self.range_tol if tol is None else tol
        if tol is None:
            return True
        return bool(self.frames.min() >= -tol and self.frames.max() <= 1.0 + tol)

    def strided(self, k: int) -> "DensityPath":
        return DensityPath(self.grid, self.dt * k, self.frames[::k], self.range_tol)


@dataclass
class ControlPath:
    """Piecewise-constant control: ``frames[i]`` acts on ``[i dt, (i+1) dt)``."""

    grid: TorusGrid
    dt: float
    frames: np.ndarray

    def norm_sq(self) -> float:
        """``||g||^2`` in L2 over space and time."""
        return float(self.dt * np.sum(self.grid.integrate((self.frames**2).sum(axis=-self.grid.d - 1))))


class FeedbackControl:
    """Control evaluated from the current state: ``g(t) = fn(t, rho(t))``."""

    def __init__(self, fn: Callable[[float, np.ndarray], np.ndarray]):
        self.fn = fn

    def __call__(self, t: float, rho: np.ndarray) -> np.ndarray:
        return np.asarray(self.fn(t, rho), dtype=float)


ControlLike = ControlPath | FeedbackControl | Callable[[float], np.ndarray] | None


def grid_of(field: np.ndarray) -> TorusGrid:
    field = np.asarray(field)
    if field.ndim < 1 or len(set(field.shape)) != 1:
        raise ValidationError(f"field of shape {field.shape} is not a periodic cube")
    return TorusGrid(field.ndim, field.shape[0])


def etd_factors(grid: TorusGrid, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Heat propagator ``exp(-lam dt)`` and forcing weight ``(1 - exp(-lam dt))/lam``."""
    lam = grid.eigenvalues
    prop = np.exp(-lam * dt)
    with np.errstate(divide="ignore", invalid="ignore"):
        weight = np.where(lam > 0, -np.expm1(-lam * dt) / np.where(lam > 0, lam, 1.0), dt)
    return prop, weight


def heat_flow(rho0: np.ndarray, t: float, grid: TorusGrid | None = None) -> np.ndarray:
    """Exact heat semigroup applied to ``rho0``."""
    grid = grid or grid_of(rho0)
    return grid.ifft(np.exp(-grid.eigenvalues * t) * grid.fft(rho0))


def _control_frame(g: ControlLike, i: int, t: float, grid: TorusGrid, rho: np.ndarray) -> np.ndarray | None:
    if g is None:
        return None
    if isinstance(g, FeedbackControl):
        return g(t, rho)
    if isinstance(g, ControlPath):
        if g.grid != grid:
            raise ValidationError("control lives on a different grid")
        return g.frames[min(i, g.frames.shape[0] - 1)]
    return np.asarray(g(t), dtype=float)


def solve_skeleton(rho0: np.ndarray, g: ControlLike, T: float, dt: float, stride: int = 1,
                   range_tol: float | None = None, mass_tol: float = 1e-10,
                   return_control: bool = False):
    """Integrate the skeleton equation from ``rho0`` with control ``g`` up to ``T``.

    ``g`` may be a :class:`ControlPath` on the same time mesh, a
    :class:`FeedbackControl`, a callable ``t -> VectorField`` or ``None``
    (pure heat flow).  Frames are kept every ``stride`` steps; the initial
    frame is always included.  With ``return_control`` the control actually
    applied at every step comes back as a :class:`ControlPath` as well.
    """
    rho0 = np.asarray(rho0, dtype=float)
    grid = grid_of(rho0)
    if rho0.min() < 0.0 or rho0.max() > 1.0:
        raise ValidationError("initial density must take values in [0, 1]")
    steps = int(round(T / dt))
    if steps < 1 or abs(steps * dt - T) > 1e-9 * T:
        raise ValidationError(f"T={T} is not a positive multiple of dt={dt}")
    if isinstance(g, ControlPath) and g.frames.shape[0] < steps:
        raise ValidationError(f"control has {g.frames.shape[0]} frames, need {steps}")
    prop, weight = etd_factors(grid, dt)
    rho_hat = grid.fft(rho0)
    mass0 = rho_hat[(0,) * grid.d].real
    rho = rho0.copy()
    frames = [rho0.copy()]
    applied = []
    for i in range(steps):
        gi = _control_frame(g, i, i * dt, grid, rho)
        if return_control:
            applied.append(np.zeros((grid.d,) + grid.shape) if gi is None else np.broadcast_to(gi, (grid.d,) + grid.shape))
        if gi is None:
            rho_hat = prop * rho_hat
        else:
            rho_hat = prop * rho_hat - weight * grid.divergence_hat(s(rho) * gi)
        rho = grid.ifft(rho_hat)
        if not np.all(np.isfinite(rho)):
            raise NumericalError(f"non-finite density at step {i + 1} (t={(i + 1) * dt:.6g})")
        drift = abs(grid.integrate(rho) - mass0)
        if drift > mass_tol:
            raise NumericalError(f"mass drift {drift:.3e} at step {i + 1}")
        if (i + 1) % stride == 0:
            frames.append(rho.copy())
    path = DensityPath(grid, dt * stride, np.array(frames), range_tol)
    if return_control:
        return path, ControlPath(grid, dt, np.array(applied))
    return path


def l1_distance(path1: DensityPath, path2: DensityPath, t: float) -> float:
    if path1.grid != path2.grid or abs(path1.dt - path2.dt) > 1e-15 or path1.frames.shape != path2.frames.shape:
        raise ValidationError("paths live on different meshes")
    return float(path1.grid.integrate(np.abs(path1.frame_at(t) - path2.frame_at(t))))


def l2l2_distance(path1: DensityPath, path2: DensityPath) -> float:
    """``||rho1 - rho2||`` in L2([0,T]; L2) by left-point rule over frames."""
    if path1.grid != path2.grid or path1.frames.shape != path2.frames.shape:
        raise ValidationError("paths live on different meshes")
    diff = path1.frames[:-1] - path2.frames[:-1]
    return float(np.sqrt(path1.dt * np.sum(path1.grid.integrate(diff * diff))))


def path_diagnostics(path: DensityPath) -> dict[str, np.ndarray]:
    g = path.grid
    f = path.frames
    return {
        "t": path.times,
        "mass": g.integrate(f),
        "min": f.reshape(f.shape[0], -1).min(axis=1),
        "max": f.reshape(f.shape[0], -1).max(axis=1),
        "l2": g.l2_norm(f),
        "h1": g.h1_seminorm(f),
    }
