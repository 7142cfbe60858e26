"""Experiment drivers behind the command line: compute, then write tables.

Every driver takes a config dataclass and returns plain rows, writing CSV
tables and a JSON sidecar (config, config hash, seed) when ``out`` is set.
Replica ``r`` always draws from ``replica_rng(seed, r)``; experiments that need
independent ensembles for different sides use disjoint replica ranges.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ValidationError
from ..noise import ScalingParams, replica_rng
from ..ou import ModeVector, analytic_mode_variance, modes_of, neg_sobolev_norm, simulate_ou_ensemble
from ..rate import minimal_control
from ..skeleton import ControlPath, DensityPath, path_diagnostics, solve_skeleton
from ..spde import run_ensemble
from ..ssep import (
    _box_mean,
    advance,
    discrete_heat_mean,
    fluctuation_modes,
    init_bernoulli,
    init_quenched,
)
from ..torus import TorusGrid, half_lattice_array, vector_basis_eval, write_snapshot
from .config import (
    CltConfig,
    OuConfig,
    RateConfig,
    ScheduleConfig,
    SkeletonConfig,
    SpdeConfig,
    SsepConfig,
    SsepVsSpdeConfig,
    make_profile,
)
from .io import read_control_dir, read_path_dir, write_csv, write_path_dir, write_sidecar
from .schedule import build_schedule, report_for
from .stats import ensemble_stats, jackknife_se, z_score


def _label(k) -> str:
    return ";".join(str(int(c)) for c in np.atleast_1d(k))


def _mode_labels(waves: np.ndarray) -> list[tuple[str, str, float]]:
    """``(k, kind, |k|)`` for the cos block followed by the sin block."""
    norms = np.sqrt((waves.astype(float) ** 2).sum(axis=1))
    return [(_label(k), kind, float(nk)) for kind in ("cos", "sin") for k, nk in zip(waves, norms)]


def _stack_modes(cos: np.ndarray, sin: np.ndarray) -> np.ndarray:
    return np.concatenate([cos, sin], axis=-1)


def _is_constant(spec) -> bool:
    return isinstance(spec, (int, float))


# -- skeleton ---------------------------------------------------------------


def _steady_control(spec: dict, grid: TorusGrid) -> np.ndarray:
    g = np.zeros((grid.d,) + grid.shape)
    x = grid.points()
    for m in spec.get("modes", []):
        *k, axis, kind, amp = m
        try:
            g = g + float(amp) * vector_basis_eval(k, int(axis), kind, x)
        except ValueError as exc:
            raise ValidationError(str(exc)) from exc
    return g


def solve_skeleton_cmd(cfg: SkeletonConfig, out: str | None = None):
    grid = TorusGrid(cfg.d, cfg.n)
    rho0 = make_profile(cfg.rho0, grid)
    if cfg.control == "none" or cfg.control is None:
        g = None
    elif isinstance(cfg.control, dict):
        steady = _steady_control(cfg.control, grid)
        g = lambda t: steady  # noqa: E731
    else:
        g = read_control_dir(cfg.control)
    path = solve_skeleton(rho0, g, cfg.T, cfg.dt, stride=cfg.stride, range_tol=cfg.range_tol)
    diag = path_diagnostics(path)
    cols = ["t", "mass", "min", "max", "l2", "h1"]
    rows = [[diag[c][i] for c in cols] for i in range(path.frames.shape[0])]
    if out:
        o = Path(out)
        write_path_dir(path, o / "frames")
        write_csv(o / "timeseries.csv", cols, rows)
        write_sidecar(o / "run.json", cfg, cfg.seed, in_range=path.check_range(cfg.range_tol))
    return path, rows


# -- spde -------------------------------------------------------------------


def simulate_spde_cmd(cfg: SpdeConfig, out: str | None = None):
    grid = TorusGrid(cfg.d, cfg.n)
    rho0 = make_profile(cfg.rho0, grid)
    M = grid.nyquist if cfg.M is None else cfg.M
    params = ScalingParams(cfg.epsilon, cfg.eta, cfg.K, M)
    params.validate(grid)
    g = None if cfg.control in ("none", None) else read_control_dir(cfg.control)
    if isinstance(g, ControlPath) and (g.grid != grid or abs(g.dt - cfg.dt) > 1e-15):
        raise ValidationError("control path lives on a different mesh")
    steps = int(round(cfg.T / cfg.dt))
    first: list[np.ndarray] = []

    def keep_first(n, t, rho, ids):
        if (n % cfg.stride == 0 or n == steps) and ids.size and ids[0] == 0:
            first.append(rho[0].copy())

    res = run_ensemble(rho0, params, g, cfg.T, cfg.dt, cfg.seed, cfg.replicas, cfg.stride, observer=keep_first)
    rows = []
    for i, r in enumerate(res.replicas):
        for j, t in enumerate(res.times):
            rows.append([int(r), t] + [res.diagnostics[k][i, j] for k in ("mass", "l2", "h1")])
    summary = [[int(r), res.energy[i], bool(res.alive[i])] for i, r in enumerate(res.replicas)]
    if out:
        o = Path(out)
        write_csv(o / "diagnostics.csv", ["replica", "t", "mass", "l2", "h1"], rows)
        write_csv(o / "replicas.csv", ["replica", "energy", "alive"], summary)
        if first and len(first) == len(res.times):
            write_path_dir(DensityPath(grid, cfg.dt * cfg.stride, np.array(first)), o / "frames")
        write_sidecar(o / "run.json", cfg, cfg.seed, failures=res.failures)
    return res, rows


# -- ssep -------------------------------------------------------------------


def simulate_ssep_cmd(cfg: SsepConfig, out: str | None = None):
    if cfg.N % cfg.n:
        raise ValidationError(f"coarse grid n={cfg.n} does not divide N={cfg.N}")
    times = sorted(set(float(t) for t in cfg.snapshot_times) | {float(cfg.T)})
    if times[0] < 0 or times[-1] > cfg.T:
        raise ValidationError("snapshot times must lie in [0, T]")
    lattice = TorusGrid(cfg.d, cfg.N)
    coarse = TorusGrid(cfg.d, cfg.n)
    if cfg.init == "quenched":
        if cfg.d != 1 or not _is_constant(cfg.rho0):
            raise ValidationError("quenched start needs d = 1 and a constant density")
        start = init_quenched(float(cfg.rho0), cfg.N)
        mean0 = start.occupations.astype(float)
    elif cfg.init == "bernoulli":
        start = None
        mean0 = make_profile(cfg.rho0, lattice)
    else:
        raise ValidationError(f"unknown init {cfg.init!r}")
    means = [discrete_heat_mean(mean0, t) for t in times]
    waves = half_lattice_array(cfg.d, cfg.modes)
    waves = waves[waves.any(axis=1)]
    modes = np.zeros((cfg.replicas, len(times), 2 * waves.shape[0]))
    dens = np.zeros((cfg.replicas, len(times)) + coarse.shape)
    counts = np.zeros(cfg.replicas, dtype=np.int64)
    for r in range(cfg.replicas):
        rng = replica_rng(cfg.seed, r)
        c = start.copy() if start is not None else init_bernoulli(mean0, cfg.N, rng, cfg.d)
        n0 = c.particle_count
        t_prev = 0.0
        for j, t in enumerate(times):
            advance(c, t - t_prev, rng, inplace=True)
            t_prev = t
            cs, sn = fluctuation_modes(c.occupations, means[j], cfg.modes)
            nz = half_lattice_array(cfg.d, cfg.modes).any(axis=1)
            modes[r, j] = _stack_modes(cs[nz], sn[nz])
            dens[r, j] = _box_mean(c.occupations.astype(float), cfg.N, cfg.n, cfg.d)
        if int(c.occupations.sum()) != n0:
            raise RuntimeError("particle number changed")
        counts[r] = n0
    labels = _mode_labels(waves)
    const = _is_constant(cfg.rho0)
    mode_rows = []
    for j, t in enumerate(times):
        st = ensemble_stats(modes[:, j]) if cfg.replicas > 1 else None
        for i, (k, kind, _) in enumerate(labels):
            eq = float(cfg.rho0) * (1 - float(cfg.rho0)) if const and cfg.init == "bernoulli" else ""
            mode_rows.append([t, k, kind, st.mean[i], st.var[i], st.se_var[i], eq] if st else
                             [t, k, kind, modes[0, j, i], "", "", eq])
    density_rows = []
    for j, t in enumerate(times):
        expected = _box_mean(means[j], cfg.N, cfg.n, cfg.d).ravel()
        flat = dens[:, j].reshape(cfg.replicas, -1)
        m = flat.mean(axis=0)
        se = flat.std(axis=0, ddof=1) / np.sqrt(cfg.replicas) if cfg.replicas > 1 else np.zeros_like(m)
        for cell in range(flat.shape[1]):
            density_rows.append([t, cell, m[cell], se[cell], expected[cell]])
    if out:
        o = Path(out)
        write_csv(o / "modes.csv", ["t", "k", "kind", "mean", "var", "se_var", "equilibrium"], mode_rows)
        write_csv(o / "density.csv", ["t", "cell", "mean", "se", "heat_mean"], density_rows)
        (o / "frames").mkdir(parents=True, exist_ok=True)
        for j in range(len(times)):
            write_snapshot(o / "frames" / f"density_{j:06d}.bin", dens[0, j], cfg.d)
        write_sidecar(o / "run.json", cfg, cfg.seed, snapshot_times=times, particle_counts=counts.tolist())
    return mode_rows, density_rows


# -- ou ---------------------------------------------------------------------


def _rho_bar(spec, grid: TorusGrid, T: float, dt: float):
    if _is_constant(spec):
        return float(spec)
    return solve_skeleton(make_profile(spec, grid), None, T, dt)


def simulate_ou_cmd(cfg: OuConfig, out: str | None = None):
    grid = TorusGrid(cfg.d, cfg.n)
    rho_bar = _rho_bar(cfg.rho0, grid, cfg.T, cfg.dt)
    res = simulate_ou_ensemble(rho_bar, grid, cfg.m_sim, cfg.K_noise, cfg.T, cfg.dt, cfg.seed, cfg.replicas)
    m = res.modes
    final = _stack_modes(m.cos[:, -1], m.sin[:, -1])
    st = ensemble_stats(final)
    rows = []
    for i, (k, kind, nk) in enumerate(_mode_labels(m.waves)):
        if _is_constant(cfg.rho0):
            target = analytic_mode_variance(float(cfg.rho0), [nk], cfg.T)
            z = float(z_score(st.var[i], target, st.se_var[i]))
        else:
            target, z = "", ""
        rows.append([k, kind, st.var[i], st.se_var[i], target, z])
    norms = neg_sobolev_norm(ModeVector(m.waves, m.cos[:, -1], m.sin[:, -1]), cfg.delta) ** 2
    if out:
        o = Path(out)
        write_csv(o / "variances.csv", ["k", "kind", "var", "se_var", "analytic", "z"], rows)
        write_sidecar(o / "run.json", cfg, cfg.seed, neg_sobolev_sq_mean=float(norms.mean()),
                      neg_sobolev_sq_se=float(norms.std(ddof=1) / np.sqrt(norms.size)))
    return rows


# -- rate / schedule --------------------------------------------------------


def rate_cmd(path_dir, cfg: RateConfig, out: str | None = None) -> dict:
    path = read_path_dir(path_dir)
    res = minimal_control(path, kappa=cfg.kappa, rtol=cfg.rtol, maxiter=cfg.maxiter, range_tol=cfg.range_tol)
    summary = res.summary()
    if out:
        o = Path(out)
        o.parent.mkdir(parents=True, exist_ok=True)
        o.write_text(res.to_json() + "\n")
    return summary


def schedule_cmd(cfg: ScheduleConfig, out: str | None = None):
    rep = build_schedule(cfg.epsilons, cfg.a, cfg.b, cfg.d, cfg.n)
    cols = ["epsilon", "eta", "K", "M", "eps_K", "eps_N_deriv2", "eps_N2_deriv4"]
    rows = [[r[c] if r[c] is not None else "" for c in cols] for r in rep.rows()]
    if out:
        o = Path(out)
        write_csv(o / "schedule.csv", cols, rows)
        write_sidecar(o / "run.json", cfg, None, ldp=rep.ldp, clt=rep.clt)
    return rep, rows


# -- CLT --------------------------------------------------------------------


@dataclass
class CltResult:
    mode_rows: list
    distance_rows: list


MODE_COLUMNS = ["epsilon", "eta", "K", "t", "k", "kind", "var", "se_var", "target", "se_target", "z"]
DISTANCE_COLUMNS = ["epsilon", "eta", "K", "distance", "se_distance", "ou_norm", "se_ou_norm", "replicas", "failures"]


def _paired_var_diff_se(a: np.ndarray, b: np.ndarray) -> float:
    ab = np.stack([a, b], axis=1)
    return jackknife_se(ab, lambda x: x[:, 0].var(ddof=1) - x[:, 1].var(ddof=1))


def clt_experiment(cfg: CltConfig, out: str | None = None) -> CltResult:
    """``v^eps = (rho^eps - rho_bar)/sqrt(eps)`` against the OU limit.

    The OU ensemble is driven by the same generators as the SPDE (noise
    cutoff ``K``), so the two are coupled pathwise and the reported
    ``H^{-(d+delta)/2}`` distance estimates the strong error.
    """
    grid = TorusGrid(cfg.d, cfg.n)
    report = report_for(cfg.entries, cfg.d, grid.nyquist)
    if not report.clt:
        raise ValidationError("schedule does not satisfy the CLT regime (eps N_K^2 sup|s'|^4 not decreasing)")
    rho0 = make_profile(cfg.rho0, grid)
    const = _is_constant(cfg.rho0)
    steps = int(round(cfg.T / cfg.dt))
    if steps < 1 or abs(steps * cfg.dt - cfg.T) > 1e-9 * cfg.T:
        raise ValidationError("T must be a multiple of dt")
    stride = max(1, steps // max(1, cfg.outputs))
    out_steps = list(range(0, steps + 1, stride))
    if out_steps[-1] != steps:
        out_steps.append(steps)
    skel = solve_skeleton(rho0, None, cfg.T, cfg.dt)
    rho_bar = float(cfg.rho0) if const else skel
    mode_rows, dist_rows = [], []
    for e in report.entries:
        m_sim = cfg.m_sim if cfg.m_sim is not None else e.K
        if cfg.modes > m_sim:
            raise ValidationError("modes must not exceed m_sim")
        ou = simulate_ou_ensemble(rho_bar, grid, m_sim, e.K, cfg.T, cfg.dt, cfg.seed, cfg.replicas, stride)
        v = ou.modes
        failures = 0
        if e.epsilon > 0:
            params = ScalingParams(e.epsilon, e.eta, e.K, grid.nyquist)
            ve_cos = np.zeros_like(v.cos)
            ve_sin = np.zeros_like(v.sin)
            slot = {n: j for j, n in enumerate(out_steps)}
            scale = 1.0 / np.sqrt(e.epsilon)

            def observe(n, t, rho, ids):
                if n in slot:
                    mv = modes_of((rho - skel.frames[n]) * scale, grid, m_sim)
                    ve_cos[ids, slot[n]] = mv.cos
                    ve_sin[ids, slot[n]] = mv.sin

            res = run_ensemble(rho0, params, None, cfg.T, cfg.dt, cfg.seed, cfg.replicas, stride=steps,
                               observer=observe)
            alive = res.alive
            failures = len(res.failures)
        else:
            ve_cos = np.zeros_like(v.cos)
            ve_sin = np.zeros_like(v.sin)
            alive = np.ones(cfg.replicas, dtype=bool)
        ve = ModeVector(v.waves, ve_cos[alive], ve_sin[alive])
        vo = ModeVector(v.waves, v.cos[alive], v.sin[alive])
        keep = ve.norms <= cfg.modes + 1e-9
        labels = _mode_labels(v.waves[keep])
        fin_e = _stack_modes(ve.cos[:, -1][:, keep], ve.sin[:, -1][:, keep])
        fin_o = _stack_modes(vo.cos[:, -1][:, keep], vo.sin[:, -1][:, keep])
        st_e = ensemble_stats(fin_e) if e.epsilon > 0 else None
        for i, (k, kind, nk) in enumerate(labels):
            var = st_e.var[i] if st_e else 0.0
            se = st_e.se_var[i] if st_e else 0.0
            if const:
                target, se_t = analytic_mode_variance(float(cfg.rho0), [nk], cfg.T), 0.0
                z = float(z_score(var, target, se)) if se > 0 else ""
            else:
                target = float(fin_o[:, i].var(ddof=1))
                se_t = _paired_var_diff_se(fin_e[:, i], fin_o[:, i]) if st_e else 0.0
                z = (var - target) / se_t if se_t > 0 else ""
            mode_rows.append([e.epsilon, e.eta, e.K, cfg.T, k, kind, var, se, target, se_t, z])
        dts = np.diff(ou.times)
        diff = ModeVector(v.waves, ve.cos - vo.cos, ve.sin - vo.sin)
        dist_sq = np.sum(neg_sobolev_norm(diff, cfg.delta)[:, :-1] ** 2 * dts, axis=1)
        ou_sq = np.sum(neg_sobolev_norm(vo, cfg.delta)[:, :-1] ** 2 * dts, axis=1)
        d_mean, ou_mean = dist_sq.mean(), ou_sq.mean()
        d_se = dist_sq.std(ddof=1) / np.sqrt(dist_sq.size)
        o_se = ou_sq.std(ddof=1) / np.sqrt(ou_sq.size)
        dist = np.sqrt(d_mean)
        ou_norm = np.sqrt(ou_mean)
        dist_rows.append([e.epsilon, e.eta, e.K, dist, d_se / (2 * dist) if dist > 0 else 0.0, ou_norm,
                          o_se / (2 * ou_norm) if ou_norm > 0 else 0.0, int(alive.sum()), failures])
    if out:
        o = Path(out)
        write_csv(o / "modes.csv", MODE_COLUMNS, mode_rows)
        write_csv(o / "distance.csv", DISTANCE_COLUMNS, dist_rows)
        write_sidecar(o / "run.json", cfg, cfg.seed, clt_flag=report.clt, ldp_flag=report.ldp)
    return CltResult(mode_rows, dist_rows)


# -- SSEP vs SPDE vs OU -----------------------------------------------------


THREE_WAY_COLUMNS = ["k", "kind", "ssep_var", "ssep_se", "ssep_raw_var", "spde_var", "spde_se", "ou_var", "ou_se",
                     "analytic", "z_ssep_spde", "z_ssep_ou", "z_spde_ou", "z_ssep_analytic", "z_spde_analytic",
                     "z_ou_analytic"]


def _safe_z(a, sa, b, sb):
    den = np.sqrt(sa**2 + sb**2)
    return float((a - b) / den) if den > 0 else (0.0 if a == b else float("inf"))


def ssep_vs_spde_experiment(cfg: SsepVsSpdeConfig, out: str | None = None) -> list:
    """Fluctuation-mode variances at time ``T`` from three sides, all started with zero fluctuation.

    * SSEP from the deterministic configuration of density ``rho``; modes of
      ``eta - E eta`` with the lattice-heat mean.  Exclusion fluctuations
      carry mobility ``2 rho(1-rho)`` at unit diffusivity against
      ``rho(1-rho)`` in the SPDE, so its variances are reported halved
      (the raw value is kept in ``ssep_raw_var``).
    * SPDE with ``eps = 1/N`` from ``rho0 = rho``; modes of ``(rho - rho_bar)/sqrt(eps)``.
    * OU by Monte Carlo, plus the closed form.

    The three ensembles use disjoint replica ranges, hence are independent.
    """
    if cfg.N % cfg.n:
        raise ValidationError(f"coarse grid n={cfg.n} does not divide N={cfg.N}")
    if not 0.0 <= cfg.rho <= 1.0:
        raise ValidationError("rho must lie in [0, 1]")
    R = cfg.replicas
    grid = TorusGrid(1, cfg.n)
    eps = 1.0 / cfg.N if cfg.epsilon is None else cfg.epsilon
    waves = half_lattice_array(1, cfg.modes)
    waves = waves[waves.any(axis=1)]
    labels = _mode_labels(waves)

    # SSEP
    start = init_quenched(cfg.rho, cfg.N)
    mean = discrete_heat_mean(start.occupations.astype(float), cfg.T)
    nz = half_lattice_array(1, cfg.modes).any(axis=1)
    ssep = np.zeros((R, len(labels)))
    for i in range(R):
        rng = replica_rng(cfg.seed, 2 * R + i)
        c = advance(start, cfg.T, rng)
        cs, sn = fluctuation_modes(c.occupations, mean, cfg.modes)
        ssep[i] = _stack_modes(cs[nz], sn[nz])
    st_ssep = ensemble_stats(ssep)

    # SPDE
    params = ScalingParams(eps, cfg.eta, cfg.K, grid.nyquist)
    res = run_ensemble(np.full(grid.shape, cfg.rho), params, None, cfg.T, cfg.dt, cfg.seed, R,
                       stride=int(round(cfg.T / cfg.dt)))
    fin = res.final[res.alive]
    mv = modes_of((fin - cfg.rho) / np.sqrt(eps), grid, cfg.modes)
    st_spde = ensemble_stats(_stack_modes(mv.cos, mv.sin))

    # OU
    ou = simulate_ou_ensemble(cfg.rho, grid, cfg.modes, cfg.K, cfg.T, cfg.dt, cfg.seed, range(R, 2 * R))
    st_ou = ensemble_stats(_stack_modes(ou.modes.cos[:, -1], ou.modes.sin[:, -1]))

    rows = []
    for i, (k, kind, nk) in enumerate(labels):
        a = analytic_mode_variance(cfg.rho, [nk], cfg.T)
        sv, ss = 0.5 * st_ssep.var[i], 0.5 * st_ssep.se_var[i]
        pv, ps = st_spde.var[i], st_spde.se_var[i]
        ov, os_ = st_ou.var[i], st_ou.se_var[i]
        rows.append([k, kind, sv, ss, st_ssep.var[i], pv, ps, ov, os_, a,
                     _safe_z(sv, ss, pv, ps), _safe_z(sv, ss, ov, os_), _safe_z(pv, ps, ov, os_),
                     _safe_z(sv, ss, a, 0.0), _safe_z(pv, ps, a, 0.0), _safe_z(ov, os_, a, 0.0)])
    if out:
        o = Path(out)
        write_csv(o / "three_way.csv", THREE_WAY_COLUMNS, rows)
        write_sidecar(o / "run.json", cfg, cfg.seed, epsilon=eps, spde_failures=res.failures)
    return rows
