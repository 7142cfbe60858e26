"""Pseudo-spectral solver for the projected conservative SPDE in Ito form

    d rho = Lap(rho) dt - sqrt(eps) div(s(rho) dxi^K) - div(s(rho) P_K g) dt
            + (eps N_K / 2) div(s'(rho)^2 grad rho) dt,

with ``s`` the mollified square root, ``xi^K`` the truncated vector white
noise and ``N_K`` the basis-identity constant.  After each step the density
is projected onto ``|k| <= M``.

Time stepping is exponential Euler-Maruyama.  The heat part is exact. The
drift terms are frozen at the left point and weighted by
``(1 - e^{-lam dt})/lam``. The noise term is frozen at the left point too,
and mode ``k`` of it is scaled by

    q_k = sqrt((1 - e^{-2 lam dt}) / (2 lam dt)),

which makes the stochastic convolution exact whenever ``s`` is constant.
Every term except the heat propagator is a spectral divergence whose zero
mode is dropped, so the mean of ``rho`` is never touched.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import NumericalError, ValidationError
from .mollifier import MollifiedSqrt, mollified, sup_deriv
from .noise import ReplicaNoise, ScalingParams, correction_constant, replica_rng
from .skeleton import ControlPath, DensityPath, etd_factors, grid_of, solve_skeleton
from .torus import SpectralCoeffs, TorusGrid, half_lattice_array, slots_for, transform

BLOWUP = 1e6


def stability_limit(grid: TorusGrid, params: ScalingParams, nonlinearity=None) -> float:
    """Largest ``dt`` allowed by the explicit correction term: ``c dt <= h^2 / 4``."""
    if nonlinearity is None:
        sd = sup_deriv(params.eta)
    else:
        x = np.linspace(-0.1, 1.1, 20001)
        sd = float(np.max(np.abs(nonlinearity.deriv(x))))
    coef = params.epsilon * correction_constant(grid.d, params.K) * sd**2 / 2.0
    return np.inf if coef == 0 else 0.25 * grid.h**2 / coef


class SpdeStepper:
    """Precomputed operators for one ``(grid, params, dt)``; advances batches of replicas."""

    def __init__(self, grid: TorusGrid, params: ScalingParams, dt: float, nonlinearity=None,
                 dt_cap: float | None = None):
        params.validate(grid)
        if dt <= 0:
            raise ValidationError("dt must be positive")
        self.grid, self.params, self.dt = grid, params, dt
        self.s = nonlinearity if nonlinearity is not None else mollified(params.eta)
        limit = stability_limit(grid, params, None if isinstance(self.s, MollifiedSqrt) else self.s)
        if dt_cap is not None:
            limit = min(limit, dt_cap)
        if dt > limit:
            raise ValidationError(f"dt={dt:.3e} exceeds the stability limit {limit:.3e}")
        self.prop, self.weight = etd_factors(grid, dt)
        lam = grid.eigenvalues
        with np.errstate(divide="ignore", invalid="ignore"):
            q2 = np.where(lam > 0, -np.expm1(-2 * lam * dt) / (2 * lam * dt), 1.0)
        self.q = np.sqrt(q2)
        self.mask_M = grid.spectral_mask(params.M)
        self.mask_K = grid.spectral_mask(params.K)
        self.slots = slots_for(grid, float(params.K))
        self.noise_shape = (2, grid.d, half_lattice_array(grid.d, params.K).shape[0])
        self.n_eff = correction_constant(grid.d, params.K)
        self.sqrt_eps = np.sqrt(params.epsilon)
        self.sqrt_dt = np.sqrt(dt)

    def correction_hat(self, rho: np.ndarray) -> np.ndarray:
        """Spectrum of ``(eps N_K / 2) div(s'(rho)^2 grad rho)``."""
        sp = self.s.deriv(rho)
        coef = 0.5 * self.params.epsilon * self.n_eff
        return coef * self.grid.divergence_hat(np.expand_dims(sp * sp, -self.grid.d - 1) * self.grid.gradient(rho))

    def noise_hat(self, sv: np.ndarray, z: np.ndarray) -> np.ndarray:
        """Spectrum of ``-sqrt(eps) div(s dxi)`` over one step, from standard normals ``z``."""
        dB, dW = z[..., 0, :, :] * self.sqrt_dt, z[..., 1, :, :] * self.sqrt_dt
        xi = self.grid.ifft(self.slots.scatter(dW, dB))
        return -self.sqrt_eps * self.grid.divergence_hat(np.expand_dims(sv, -self.grid.d - 1) * xi)

    def control_hat(self, sv: np.ndarray, g_frame: np.ndarray) -> np.ndarray:
        """Spectrum of ``-div(s P_K g)``."""
        gK = self.grid.ifft(self.grid.fft(g_frame) * self.mask_K)
        return -self.grid.divergence_hat(np.expand_dims(sv, -self.grid.d - 1) * gK)

    def advance(self, rho_hat: np.ndarray, z: np.ndarray | None, g_frame: np.ndarray | None = None) -> np.ndarray:
        """One step for a batch ``rho_hat`` of shape ``(..., rfft shape)``."""
        rho = self.grid.ifft(rho_hat)
        drift = self.correction_hat(rho) if self.params.epsilon > 0 else 0.0
        sv = None
        if g_frame is not None:
            sv = self.s.value(rho)
            drift = drift + self.control_hat(sv, g_frame)
        out = self.prop * rho_hat
        if g_frame is not None or self.params.epsilon > 0:
            out = out + self.weight * drift
        if self.params.epsilon > 0 and z is not None:
            if sv is None:
                sv = self.s.value(rho)
            out = out + self.q * self.noise_hat(sv, z)
        return out * self.mask_M


@dataclass
class SpdeState:
    grid: TorusGrid
    params: ScalingParams
    rho_hat: np.ndarray
    t: float = 0.0
    rng: np.random.Generator | None = None

    @property
    def density(self) -> np.ndarray:
        return self.grid.ifft(self.rho_hat)

    @property
    def coeffs(self) -> SpectralCoeffs:
        return transform(self.density, self.grid, self.params.M)

    @property
    def mass(self) -> float:
        return float(self.rho_hat[(0,) * self.grid.d].real)


def initial_state(rho0: np.ndarray, params: ScalingParams, rng: np.random.Generator | None = None) -> SpdeState:
    grid = grid_of(rho0)
    params.validate(grid)
    return SpdeState(grid, params, grid.fft(np.asarray(rho0, float)) * grid.spectral_mask(params.M), 0.0, rng)


def step(state: SpdeState, g_frame: np.ndarray | None, dt: float, stepper: SpdeStepper | None = None) -> SpdeState:
    """Single-replica step drawing its increment from ``state.rng``."""
    stepper = stepper or SpdeStepper(state.grid, state.params, dt)
    z = None
    if state.params.epsilon > 0:
        if state.rng is None:
            raise ValidationError("a noisy step needs a generator")
        z = state.rng.standard_normal(stepper.noise_shape)
    new = stepper.advance(state.rho_hat, z, g_frame)
    if not np.all(np.isfinite(new)) or np.abs(new).max() > BLOWUP:
        raise NumericalError(f"blow-up at t={state.t + dt:.6g}")
    return SpdeState(state.grid, state.params, new, state.t + dt, state.rng)


@dataclass
class SpdeRunRecord:
    path: DensityPath
    diagnostics: dict[str, np.ndarray]
    seed: int
    params: ScalingParams
    replica: int = 0


@dataclass
class EnsembleResult:
    replicas: np.ndarray
    alive: np.ndarray
    failures: list[tuple[int, int, float]]
    times: np.ndarray
    diagnostics: dict[str, np.ndarray] = field(default_factory=dict)
    energy: np.ndarray | None = None
    final: np.ndarray | None = None
    frames: np.ndarray | None = None

    @property
    def failure_rate(self) -> float:
        return len(self.failures) / max(1, self.replicas.size)


def _control_at(g, i: int, t: float):
    if g is None:
        return None
    if isinstance(g, ControlPath):
        return g.frames[min(i, g.frames.shape[0] - 1)]
    return np.asarray(g(t), float)


Observer = Callable[[int, float, np.ndarray, np.ndarray], None]


def run_ensemble(rho0: np.ndarray, params: ScalingParams, g, T: float, dt: float, seed: int,
                 replicas, stride: int = 1, batch: int = 512, keep_frames: bool = False,
                 observer: Observer | None = None, nonlinearity=None, dt_cap: float | None = None,
                 max_failure_rate: float = 0.01) -> EnsembleResult:
    """Run replicas ``r`` with generators keyed by ``(seed, r)``.

    Replicas are advanced together in batches; each keeps its own stream, so
    a replica's trajectory does not depend on the batch layout.  At every
    step ``n = 0..steps`` (before advancing) ``observer(n, t, rho, ids)`` sees
    the densities of the live replicas in the batch.  A replica whose
    coefficients leave ``[-1e6, 1e6]`` is recorded as failed and dropped.
    """
    rho0 = np.asarray(rho0, float)
    grid = grid_of(rho0)
    stepper = SpdeStepper(grid, params, dt, nonlinearity, dt_cap)
    steps = int(round(T / dt))
    if steps < 1 or abs(steps * dt - T) > 1e-9 * T:
        raise ValidationError(f"T={T} is not a positive multiple of dt={dt}")
    if isinstance(g, ControlPath) and g.frames.shape[0] < steps:
        raise ValidationError("control path shorter than the run")
    ids_all = np.asarray(list(replicas) if not isinstance(replicas, int) else range(replicas), dtype=np.int64)
    R = ids_all.size
    out_idx = list(range(0, steps + 1, stride))
    if out_idx[-1] != steps:
        out_idx.append(steps)
    n_out = len(out_idx)
    slot_of = {n: i for i, n in enumerate(out_idx)}
    diag = {k: np.full((R, n_out), np.nan) for k in ("mass", "l2", "h1")}
    energy = np.full(R, np.nan)
    final = np.full((R,) + grid.shape, np.nan)
    frames = np.full((R, n_out) + grid.shape, np.nan) if keep_frames else None
    alive_all = np.ones(R, dtype=bool)
    failures: list[tuple[int, int, float]] = []
    hat0 = grid.fft(rho0) * stepper.mask_M

    for b0 in range(0, R, batch):
        rows = np.arange(b0, min(R, b0 + batch))
        noise = ReplicaNoise([replica_rng(seed, int(r)) for r in ids_all[rows]], stepper.noise_shape) \
            if params.epsilon > 0 else None
        rho_hat = np.broadcast_to(hat0, (rows.size,) + hat0.shape).copy()
        live = np.ones(rows.size, dtype=bool)
        en = np.zeros(rows.size)
        for n in range(steps + 1):
            t = n * dt
            rho = grid.ifft(rho_hat)
            if observer is not None:
                observer(n, t, rho[live], ids_all[rows][live])
            if n in slot_of:
                j = slot_of[n]
                h1 = grid.h1_seminorm(rho)
                diag["mass"][rows[live], j] = rho_hat[(live,) + (0,) * grid.d].real
                diag["l2"][rows[live], j] = grid.l2_norm(rho)[live]
                diag["h1"][rows[live], j] = h1[live]
                if keep_frames:
                    frames[rows[live], j] = rho[live]
            if n == steps:
                break
            en += dt * grid.h1_seminorm(rho) ** 2
            z = noise.next(steps - n) if noise is not None else None
            new = stepper.advance(rho_hat, z, _control_at(g, n, t))
            bad = live & ~np.all(np.isfinite(new.reshape(rows.size, -1)) &
                                 (np.abs(new.reshape(rows.size, -1)) <= BLOWUP), axis=1)
            for i in np.flatnonzero(bad):
                failures.append((int(ids_all[rows[i]]), n + 1, (n + 1) * dt))
                live[i] = False
            new[~live] = 0.0
            rho_hat = new
        final[rows[live]] = grid.ifft(rho_hat)[live]
        energy[rows[live]] = en[live]
        alive_all[rows] = live
        if len(failures) > max_failure_rate * R:
            raise NumericalError(f"{len(failures)} of {R} replicas blew up (first: {failures[0]})")
    times = dt * np.array(out_idx, dtype=float)
    return EnsembleResult(ids_all, alive_all, failures, times, diag, energy, final, frames)


def run(rho0: np.ndarray, params: ScalingParams, g, T: float, dt: float, seed: int, stride: int = 1,
        replica: int = 0, **kw) -> SpdeRunRecord:
    """One replica with full strided path and diagnostics."""
    steps = int(round(T / dt))
    if steps % stride:
        raise ValidationError(f"stride {stride} does not divide the {steps} steps")
    res = run_ensemble(rho0, params, g, T, dt, seed, [replica], stride, keep_frames=True,
                       max_failure_rate=0.0, **kw)
    path = DensityPath(grid_of(rho0), dt * stride, res.frames[0])
    diagnostics = {"t": res.times, **{k: v[0] for k, v in res.diagnostics.items()}, "energy": res.energy[0]}
    return SpdeRunRecord(path, diagnostics, seed, params, replica)


def energy_bound_rhs(rho0: np.ndarray, params: ScalingParams, T: float) -> float:
    """``||rho0||^2 + eps T K^{d+2}``, the right side of the energy estimate."""
    grid = grid_of(rho0)
    return float(grid.l2_norm(np.asarray(rho0, float)) ** 2 + params.epsilon * T * params.K ** (grid.d + 2))


@dataclass
class CollapseRow:
    epsilon: float
    eta: float
    K: int
    M: int
    mean: float
    se: float
    replicas: int
    failures: int


def collapse_experiment(rho0: np.ndarray, g, schedule, T: float, dt: float, replicas: int, seed: int,
                        skeleton_path: DensityPath | None = None, batch: int = 512) -> list[CollapseRow]:
    """Mean ``||rho^eps - rho_skeleton||_{L2 L2}`` for each ``(eps, eta, K, M)`` entry.

    The skeleton reference is solved once on the same time mesh.  Distances
    use the left-point rule over steps, as :func:`skeleton.l2l2_distance`.
    """
    rho0 = np.asarray(rho0, float)
    grid = grid_of(rho0)
    if skeleton_path is None:
        skeleton_path = solve_skeleton(rho0, g, T, dt)
    steps = int(round(T / dt))
    rows = []
    for entry in schedule:
        eps, eta, K, M = (entry.epsilon, entry.eta, entry.K, entry.M) if hasattr(entry, "epsilon") else entry
        params = ScalingParams(float(eps), float(eta), int(K), int(M))
        acc = np.zeros(replicas)

        def observe(n, t, rho, ids):
            if n < steps:
                diff = rho - skeleton_path.frames[n]
                acc[ids] += dt * grid.integrate(diff * diff)

        res = run_ensemble(rho0, params, g, T, dt, seed, replicas, stride=steps, batch=batch, observer=observe)
        dist = np.sqrt(acc[res.alive])
        m = dist.size
        rows.append(CollapseRow(params.epsilon, params.eta, params.K, params.M, float(dist.mean()),
                                float(dist.std(ddof=1) / np.sqrt(m)) if m > 1 else 0.0, m, len(res.failures)))
    return rows
