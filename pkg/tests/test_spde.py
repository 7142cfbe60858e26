import numpy as np
import pytest

from ssep_spde.errors import NumericalError, ValidationError
from ssep_spde.mollifier import ConstantNonlinearity
from ssep_spde.noise import ScalingParams, replica_rng
from ssep_spde.ou import analytic_mode_variance, modes_of
from ssep_spde.skeleton import heat_flow, solve_skeleton
from ssep_spde.spde import (
    SpdeStepper,
    collapse_experiment,
    initial_state,
    run,
    run_ensemble,
    stability_limit,
    step,
)
from ssep_spde.torus import TorusGrid, random_band_limited


def smooth_profile(g, amp=0.2):
    x = g.points()
    return 0.5 + amp * np.cos(2 * np.pi * x[0]) * (np.cos(2 * np.pi * x[1]) if g.d == 2 else 1.0)


def epsilon_zero_gap(n=64, T=0.05, dt=1e-3):
    g = TorusGrid(1, n)
    rho0 = smooth_profile(g)
    rec = run(rho0, ScalingParams(0.0, 0.1, 8, g.nyquist), None, T, dt, seed=1)
    ref = solve_skeleton(rho0, None, T, dt)
    return float(np.abs(rec.path.frames - ref.frames).max())


def test_epsilon_zero_is_skeleton():
    assert epsilon_zero_gap() < 1e-10


MASS_CASES = [
    (1, 32, ScalingParams(1e-2, 0.1, 4, 15), None),
    (1, 64, ScalingParams(1e-3, 0.05, 8, 31), "control"),
    (2, 16, ScalingParams(1e-2, 0.1, 2, 7), None),
]


def mass_drift(d, n, params, control, steps=10_000, dt=1e-5, seed=3):
    g = TorusGrid(d, n)
    rho0 = smooth_profile(g)
    ctrl = None
    if control:
        gfield = random_band_limited(g, 3, np.random.default_rng(1), 0.5, batch=(d,))
        ctrl = lambda t: gfield
    res = run_ensemble(rho0, params, ctrl, steps * dt, dt, seed, 2, stride=steps)
    m = res.diagnostics["mass"]
    return float(np.abs(m - g.integrate(rho0)).max())


@pytest.mark.parametrize("d,n,params,control", MASS_CASES)
def test_mass_conservation(d, n, params, control):
    assert mass_drift(d, n, params, control, steps=2000) < 1e-12


def test_bitwise_determinism_and_batch_independence():
    g = TorusGrid(1, 32)
    rho0 = smooth_profile(g)
    p = ScalingParams(1e-2, 0.1, 4, 15)
    a = run(rho0, p, None, 0.01, 1e-4, seed=11, stride=10, replica=3)
    b = run(rho0, p, None, 0.01, 1e-4, seed=11, stride=10, replica=3)
    assert np.array_equal(a.path.frames, b.path.frames)
    ens = run_ensemble(rho0, p, None, 0.01, 1e-4, 11, 6, stride=10, keep_frames=True, batch=4)
    assert np.array_equal(ens.frames[3], a.path.frames)
    c = run(rho0, p, None, 0.01, 1e-4, seed=12, stride=10, replica=3)
    assert not np.array_equal(a.path.frames, c.path.frames)


def test_step_matches_ensemble():
    g = TorusGrid(1, 32)
    rho0 = smooth_profile(g)
    p = ScalingParams(1e-2, 0.1, 4, 15)
    dt = 1e-4
    state = initial_state(rho0, p, replica_rng(5, 2))
    stepper = SpdeStepper(g, p, dt)
    for _ in range(20):
        state = step(state, None, dt, stepper)
    ens = run_ensemble(rho0, p, None, 20 * dt, dt, 5, [2], stride=20)
    assert np.array_equal(state.density, ens.final[0])
    assert state.t == pytest.approx(20 * dt)
    assert abs(state.mass - 0.5) < 1e-15
    assert state.coeffs.cos[0] == pytest.approx(0.5)


def test_noisy_step_needs_generator():
    state = initial_state(np.full(32, 0.5), ScalingParams(1e-2, 0.1, 4, 15))
    with pytest.raises(ValidationError):
        step(state, None, 1e-4)


def test_constant_nonlinearity_has_no_correction():
    g = TorusGrid(1, 64)
    p = ScalingParams(0.5, 0.1, 8, 31)
    st = SpdeStepper(g, p, 1e-5, nonlinearity=ConstantNonlinearity(0.4))
    rho = np.clip(0.5 + random_band_limited(g, 10, np.random.default_rng(0), 0.2), 0, 1)
    assert np.abs(st.correction_hat(rho)).max() < 1e-14


def test_stability_rule_enforced():
    g = TorusGrid(1, 128)
    p = ScalingParams(1e-2, 0.1, 8, 63)
    limit = stability_limit(g, p)
    SpdeStepper(g, p, 0.9 * limit)
    with pytest.raises(ValidationError):
        SpdeStepper(g, p, 1.1 * limit)
    with pytest.raises(ValidationError):
        SpdeStepper(g, p, 0.5 * limit, dt_cap=0.1 * limit)
    assert stability_limit(g, ScalingParams(0.0, 0.1, 8, 63)) == np.inf


def test_blowup_is_recorded_and_excluded():
    p = ScalingParams(1.0, 0.1, 4, 15)
    loud = ConstantNonlinearity(1e7)
    res = run_ensemble(np.full(32, 0.5), p, None, 1e-3, 1e-4, 0, 4, nonlinearity=loud, max_failure_rate=1.0)
    assert len(res.failures) == 4 and not res.alive.any()
    assert np.isnan(res.final).all()
    with pytest.raises(NumericalError):
        run_ensemble(np.full(32, 0.5), p, None, 1e-3, 1e-4, 0, 4, nonlinearity=loud)


def test_ensemble_mean_follows_heat_flow():
    g = TorusGrid(1, 32)
    rho0 = smooth_profile(g, 0.15)
    p = ScalingParams(1e-3, 0.1, 4, 15)
    T, dt, R = 0.02, 5e-4, 300
    res = run_ensemble(rho0, p, None, T, dt, 8, R, stride=40)
    m = modes_of(res.final, g, 3)
    ref = modes_of(heat_flow(rho0, T), g, 3)
    for ours, want in ((m.cos, ref.cos), (m.sin, ref.sin)):
        se = ours.std(axis=0, ddof=1) / np.sqrt(R)
        assert np.all(np.abs(ours.mean(axis=0) - want) < 3 * se + 1e-12)


def test_linearized_mode_variance():
    g = TorusGrid(1, 32)
    eps, T, dt, R = 1e-4, 0.02, 1e-3, 400
    p = ScalingParams(eps, 0.05, 7, 15)
    res = run_ensemble(np.full(32, 0.5), p, None, T, dt, 21, R, stride=20)
    v = modes_of((res.final - 0.5) / np.sqrt(eps), g, 1)
    x = v.sin[:, 0]
    var = x.var(ddof=1)
    se = ((x - x.mean()) ** 2).std(ddof=1) / np.sqrt(R)
    assert abs(var - analytic_mode_variance(0.5, (1,), T)) < 3 * se


def test_collapse_epsilon_zero_and_se_scaling():
    g = TorusGrid(1, 32)
    rho0 = smooth_profile(g)
    rows = collapse_experiment(rho0, None, [(0.0, 0.1, 4, 15), (1e-2, 0.1, 4, 15)], 0.01, 5e-4, 16, 2)
    assert rows[0].mean < 1e-10
    assert rows[1].mean > 1e-4
    small = collapse_experiment(rho0, None, [(1e-2, 0.1, 4, 15)], 0.01, 5e-4, 50, 2)[0]
    large = collapse_experiment(rho0, None, [(1e-2, 0.1, 4, 15)], 0.01, 5e-4, 200, 2)[0]
    assert 1.4 < small.se / large.se < 2.8


def test_run_rejects_bad_stride():
    with pytest.raises(ValidationError):
        run(np.full(32, 0.5), ScalingParams(1e-2, 0.1, 4, 15), None, 1e-3, 1e-4, 0, stride=3)
