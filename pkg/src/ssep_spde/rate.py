"""Rate function of a density path via the minimal-norm control.

For each step the controlled skeleton equation asks for a flux source

    N = -div(s(rho) g).

Among all admissible ``g`` the one with least L2 norm is a weighted gradient
``g = s(rho) grad(phi)``, where ``phi`` solves

    -div((s(rho)^2 + kappa) grad(phi)) = N.

The source is read off the path by inverting the exponential step used by
:func:`ssep_spde.skeleton.solve_skeleton`, so paths produced by that solver are
reproduced with zero defect (heat flows cost nothing to round-off).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from .errors import ValidationError
from .mollifier import s
from .skeleton import ControlPath, DensityPath, etd_factors, grid_of, heat_flow
from .torus import TorusGrid, basis_eval, enumerate_half_lattice

KAPPA = 1e-10


@dataclass
class RateResult:
    value: float
    control: ControlPath | None
    residuals: np.ndarray
    iterations: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    kappa_contribution: float = 0.0
    path: DensityPath | None = None
    reason: str = ""

    @property
    def finite(self) -> bool:
        return bool(np.isfinite(self.value))

    def summary(self) -> dict:
        res = self.residuals
        return {
            "value": self.value if self.finite else "inf",
            "finite": self.finite,
            "kappa_contribution": self.kappa_contribution,
            "residual_max": float(res.max()) if res.size else 0.0,
            "residual_mean": float(res.mean()) if res.size else 0.0,
            "iterations_max": int(self.iterations.max()) if self.iterations.size else 0,
            "steps": int(res.size),
            "reason": self.reason,
        }

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True)


def step_sources(path: DensityPath) -> np.ndarray:
    """Flux source ``N^n`` that carries frame ``n`` to frame ``n+1`` (spectral)."""
    grid = path.grid
    prop, weight = etd_factors(grid, path.dt)
    F = grid.fft(path.frames)
    return (F[1:] - prop * F[:-1]) / weight


class WeightedLaplacian:
    """``phi -> -div(w grad(phi))`` with the spectral derivatives of the grid.

    The constant-weight inverse is the preconditioner; it is exact on the
    modes the discrete gradient sees and zero on its kernel (the constant and
    the all-Nyquist corners), which is also where the operator vanishes.
    """

    def __init__(self, grid: TorusGrid, w: np.ndarray):
        self.grid = grid
        self.w = w
        sym = sum((ik * np.conj(ik)).real for ik in grid._ik)
        self.kernel = sym == 0
        self.inv_sym = np.where(self.kernel, 0.0, 1.0 / np.where(self.kernel, 1.0, sym))

    def apply(self, phi: np.ndarray) -> np.ndarray:
        g = self.grid
        grad = g.ifft(g.gradient_hat(g.fft(phi)))
        return -g.ifft(g.divergence_hat(self.w * grad))

    def precondition(self, r: np.ndarray) -> np.ndarray:
        g = self.grid
        return g.ifft(self.inv_sym * g.fft(r))

    def operators(self):
        n = self.grid.size
        shape = self.grid.shape
        A = LinearOperator((n, n), matvec=lambda v: self.apply(v.reshape(shape)).ravel(), dtype=float)
        M = LinearOperator((n, n), matvec=lambda v: self.precondition(v.reshape(shape)).ravel(), dtype=float)
        return A, M


def solve_weighted_poisson(grid: TorusGrid, w: np.ndarray, source_hat: np.ndarray, rtol: float = 1e-10,
                           maxiter: int = 10_000, atol_floor: float = 1e-14):
    """Zero-mean ``phi`` with ``-div(w grad phi) = source``.

    Returns ``(phi, relative_residual, iterations, unreachable_fraction)``.
    The last entry measures the part of the source living on the kernel of
    the discrete gradient (apart from the mean, which the caller checks).
    Source content at or below ``atol_floor`` (RMS amplitude) is round-off
    and treated as zero.
    """
    op = WeightedLaplacian(grid, w)
    kern = op.kernel.copy()
    kern[(0,) * grid.d] = False
    norm_all = np.sqrt(np.sum(np.abs(source_hat) ** 2))
    stray = np.sqrt(np.sum(np.abs(source_hat[kern]) ** 2))
    unreachable = stray / norm_all if stray > atol_floor else 0.0
    clean = np.where(op.kernel, 0.0, source_hat)
    b = grid.ifft(clean)
    bnorm = float(np.linalg.norm(b))
    if bnorm <= atol_floor * np.sqrt(grid.size):
        return np.zeros(grid.shape), 0.0, 0, unreachable
    A, M = op.operators()
    count = [0]

    def tick(_):
        count[0] += 1

    x0 = op.precondition(b / np.maximum(w, KAPPA) * w.mean()).ravel()
    x, _ = cg(A, b.ravel(), x0=x0, rtol=rtol, atol=0.0, maxiter=maxiter, M=M, callback=tick)
    phi = x.reshape(grid.shape)
    phi -= phi.mean()
    resid = float(np.linalg.norm(op.apply(phi) - b)) / bnorm
    return phi, resid, count[0], unreachable


def minimal_control(path: DensityPath, kappa: float = KAPPA, rtol: float = 1e-10, maxiter: int = 10_000,
                    range_tol: float = 1e-8, residual_tol: float | None = None,
                    kappa_tol: float = 1e-6) -> RateResult:
    """Rate ``1/2 ||g||^2`` of ``path`` with the minimal-norm control ``g``.

    A finite value requires every elliptic residual below ``residual_tol``
    (default ``100 * rtol``) and a kappa contribution below ``kappa_tol``
    relative to ``max(1, value)``; otherwise ``value`` is ``inf``.
    """
    grid = path.grid
    frames = path.frames
    if frames.shape[0] < 2:
        raise ValidationError("a path needs at least two frames")
    if frames.min() < -range_tol or frames.max() > 1.0 + range_tol:
        raise ValidationError(f"path leaves [0, 1] beyond tolerance {range_tol}")
    residual_tol = 100.0 * rtol if residual_tol is None else residual_tol
    sources = step_sources(path)
    zero = (slice(None),) + (0,) * grid.d
    means = np.abs(sources[zero])
    scale = np.abs(sources).max() + 1.0
    if means.max() > 1e-9 * scale:
        raise ValidationError(f"mass incompatibility: source mean {means.max():.3e} (path mass not constant)")
    # round-off in the frames, amplified by inverting the step weight
    _, weight = etd_factors(grid, path.dt)
    floor = 1e3 * np.finfo(float).eps * max(1.0, np.abs(frames).max()) / weight.min()
    steps = frames.shape[0] - 1
    g = np.zeros((steps, grid.d) + grid.shape)
    residuals = np.zeros(steps)
    iterations = np.zeros(steps, dtype=int)
    value = 0.0
    kappa_part = 0.0
    reason = ""
    for n in range(steps):
        sn = s(frames[n])
        w = sn * sn + kappa
        phi, res, its, stray = solve_weighted_poisson(grid, w, sources[n], rtol, maxiter, floor)
        residuals[n] = max(res, stray)
        iterations[n] = its
        grad = grid.gradient(phi)
        g[n] = sn * grad
        sq = np.sum(grad * grad, axis=0)
        value += 0.5 * path.dt * float(grid.integrate(sn * sn * sq))
        kappa_part += 0.5 * path.dt * float(grid.integrate(kappa * sq))
        if residuals[n] > residual_tol and not reason:
            reason = f"elliptic residual {residuals[n]:.3e} at step {n}"
    if not reason and kappa_part > kappa_tol * max(1.0, value):
        reason = f"kappa contribution {kappa_part:.3e}: flux demanded where s(rho) vanishes"
    result = RateResult(value, ControlPath(grid, path.dt, g), residuals, iterations, kappa_part, path, reason)
    if reason:
        result.value = float("inf")
    return result


def helmholtz_remainder(control: ControlPath, path: DensityPath, kappa: float = KAPPA) -> float:
    """L2 norm of the part of ``g`` orthogonal to weighted gradients ``s grad psi``.

    ``psi`` solves ``-div(s^2 grad psi) = -div(s g)``; the remainder
    ``g - s grad psi`` is what no gradient of that form can account for.
    """
    grid = path.grid
    total = 0.0
    for n in range(control.frames.shape[0]):
        sn = s(path.frames[n])
        gn = control.frames[n]
        src = -grid.divergence_hat(sn * gn)
        psi, _, _, _ = solve_weighted_poisson(grid, sn * sn + kappa, src)
        r = gn - sn * grid.gradient(psi)
        total += control.dt * float(grid.integrate(np.sum(r * r, axis=0)))
    return float(np.sqrt(total))


# -- endpoint formulation ---------------------------------------------------


def _perturbation_basis(grid: TorusGrid, modes: int) -> np.ndarray:
    """Zero-mean real Fourier functions with ``0 < |k| <= modes``."""
    x = grid.points()
    out = []
    for k in enumerate_half_lattice(grid.d, modes):
        if any(k):
            out.append(basis_eval(k, "cos", x))
            out.append(basis_eval(k, "sin", x))
    return np.array(out) if out else np.zeros((0,) + grid.shape)


class PathFamily:
    """Paths from ``rho0`` to ``target`` on ``[0, T]`` with a few free parameters.

    ``theta[0]`` mixes the straight line with the heat-corrected path
    ``H(t) = e^{t Lap} rho0 + (t/T)(target - e^{T Lap} rho0)``; the remaining
    entries weight ``sin(pi p t / T) psi_q(x)`` bumps, which vanish at both
    ends and carry no mass.
    """

    def __init__(self, rho0, target, T, dt, time_modes: int = 2, space_modes: int = 2):
        self.grid = grid_of(rho0)
        self.rho0 = np.asarray(rho0, float)
        self.target = np.asarray(target, float)
        self.steps = int(round(T / dt))
        self.T, self.dt = T, dt
        t = dt * np.arange(self.steps + 1)
        self.t = t
        shp = (-1,) + (1,) * self.grid.d
        lam = t.reshape(shp) / T
        self.linear = (1 - lam) * self.rho0 + lam * self.target
        heat_T = heat_flow(self.rho0, T, self.grid)
        self.heat = np.array([heat_flow(self.rho0, ti, self.grid) for ti in t]) + lam * (self.target - heat_T)
        self.psi = _perturbation_basis(self.grid, space_modes)
        self.bumps = np.array([np.sin(np.pi * p * t / T) for p in range(1, time_modes + 1)])
        self.dim = 1 + self.bumps.shape[0] * self.psi.shape[0]

    def frames(self, theta: np.ndarray) -> np.ndarray:
        a = theta[0]
        f = (1 - a) * self.linear + a * self.heat
        c = theta[1:].reshape(self.bumps.shape[0], self.psi.shape[0])
        if c.size:
            f = f + np.tensordot(self.bumps.T @ c, self.psi, axes=1)
        return f

    def path(self, theta: np.ndarray) -> DensityPath:
        return DensityPath(self.grid, self.dt, self.frames(theta))


def rate_of_target(rho0, target, T: float, dt: float | None = None, time_modes: int = 2, space_modes: int = 2,
                   max_evals: int = 300, step0: float = 0.25, min_step: float = 1e-4, floor: float = 1e-14,
                   **solver) -> RateResult:
    """Upper bound for the cost of steering ``rho0`` to ``target`` in time ``T``.

    Compass search over :class:`PathFamily`, started from whichever of the
    straight line and the heat-corrected path is cheaper.  The returned value
    is the cost of the best path found, hence only an upper bound for the
    infimum over all paths.
    """
    rho0 = np.asarray(rho0, float)
    target = np.asarray(target, float)
    if rho0.shape != target.shape:
        raise ValidationError("rho0 and target live on different grids")
    for f in (rho0, target):
        if f.min() < 0 or f.max() > 1:
            raise ValidationError("endpoints must take values in [0, 1]")
    if abs(rho0.mean() - target.mean()) > 1e-12:
        raise ValidationError(f"mass mismatch {rho0.mean() - target.mean():.3e}")
    dt = T / 50 if dt is None else dt
    fam = PathFamily(rho0, target, T, dt, time_modes, space_modes)
    cache: dict[bytes, RateResult] = {}

    def cost(theta: np.ndarray) -> RateResult:
        key = np.round(theta, 12).tobytes()
        if key not in cache:
            frames = fam.frames(theta)
            if frames.min() < 0 or frames.max() > 1:
                cache[key] = RateResult(float("inf"), None, np.zeros(0), reason="path leaves [0, 1]")
            else:
                cache[key] = minimal_control(DensityPath(fam.grid, dt, frames), **solver)
        return cache[key]

    starts = []
    for a in (0.0, 1.0):
        th = np.zeros(fam.dim)
        th[0] = a
        starts.append((cost(th).value, a, th))
    best_val, _, theta = min(starts, key=lambda z: (z[0], z[1]))
    best = cost(theta)
    step = step0
    while step >= min_step and len(cache) < max_evals and best.value > floor:
        improved = False
        for i in range(fam.dim):
            for sign in (1.0, -1.0):
                trial = theta.copy()
                trial[i] += sign * step
                r = cost(trial)
                if r.value < best.value:
                    theta, best, improved = trial, r, True
                    break
            if len(cache) >= max_evals:
                break
        if not improved:
            step *= 0.5
    return best
