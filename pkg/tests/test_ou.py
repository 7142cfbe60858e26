import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ssep_spde.errors import ValidationError
from ssep_spde.mollifier import s
from ssep_spde.ou import (
    ModeVector,
    analytic_mode_variance,
    mode_waves,
    neg_sobolev_norm,
    simulate_ou,
    simulate_ou_ensemble,
    tail_fraction,
)
from ssep_spde.skeleton import solve_skeleton
from ssep_spde.torus import TorusGrid, basis_eval, enumerate_half_lattice, vector_basis_eval


def frozen_weight_variance(grid, rho_bar, k, kind, K_noise, t):
    """Exact variance for a time-independent rho_bar: drift stays diagonal, noise is correlated.

    The coefficient of noise mode j in d<v, e_k> is <s(rho_bar) E_j, grad e_k>
    (grid quadrature, which is what the solver integrates exactly).
    """
    x = grid.points()
    sw = s(rho_bar)
    e = basis_eval(k, kind, x)
    grad = grid.gradient(e)
    total = 0.0
    for j in enumerate_half_lattice(grid.d, K_noise):
        for axis in range(grid.d):
            for nk in ("sin", "cos"):
                E = vector_basis_eval(j, axis, nk, x)
                total += grid.integrate(sw * np.sum(E * grad, axis=0)) ** 2
    lam = 4 * np.pi**2 * float(np.dot(k, k))
    return total * (-np.expm1(-2 * lam * t)) / (2 * lam)


def mc_var(x):
    c = x - x.mean(axis=0)
    n = x.shape[0]
    return (c**2).sum(axis=0) / (n - 1), (c**2).std(axis=0, ddof=1) / np.sqrt(n)


def test_analytic_variance_examples():
    for rho in (0.0, 1.0):
        assert analytic_mode_variance(rho, (1,), 0.3) == 0.0
    assert analytic_mode_variance(0.5, (1,), 50.0) == pytest.approx(1 / 8)
    for rho in np.linspace(0, 1, 11):
        for t in (0.001, 0.01, 1.0):
            lam = 4 * np.pi**2
            assert analytic_mode_variance(rho, (1,), t) <= 0.25 * (1 - np.exp(-2 * lam * t)) + 1e-15
    with pytest.raises(ValidationError):
        analytic_mode_variance(1.2, (1,), 0.1)


def test_neg_sobolev_examples():
    w = mode_waves(1, 3)
    zero = ModeVector(w, np.zeros(3), np.zeros(3))
    assert neg_sobolev_norm(zero, 1.0) == 0.0
    one = ModeVector(w, np.zeros(3), np.array([1.0, 0.0, 0.0]))
    assert neg_sobolev_norm(one, 1.0) == pytest.approx(1.0)
    rng = np.random.default_rng(0)
    v = ModeVector(w, rng.standard_normal(3), rng.standard_normal(3))
    twice = ModeVector(w, 2 * v.cos, 2 * v.sin)
    assert neg_sobolev_norm(twice, 0.5) ** 2 == pytest.approx(4 * neg_sobolev_norm(v, 0.5) ** 2)
    with pytest.raises(ValidationError):
        neg_sobolev_norm(v, 0.0)


@settings(max_examples=30)
@given(c=st.lists(st.floats(-10, 10), min_size=4, max_size=4), delta=st.floats(0.1, 3))
def test_neg_sobolev_matches_formula(c, delta):
    w = mode_waves(2, 1.5)
    v = ModeVector(w, np.array(c), np.array(c[::-1]))
    want = sum((a * a + b * b) / np.linalg.norm(k) ** (2 + delta) for a, b, k in zip(c, c[::-1], w))
    assert neg_sobolev_norm(v, delta) ** 2 == pytest.approx(want, rel=1e-12, abs=1e-12)


def test_start_at_zero_and_determinism():
    g = TorusGrid(1, 128)
    a = simulate_ou(0.5, g, 4, None, 0.01, 1e-3, seed=3, stride=5)
    assert not a.cos[0].any() and not a.sin[0].any()
    b = simulate_ou(0.5, g, 4, None, 0.01, 1e-3, seed=3, stride=5)
    assert np.array_equal(a.cos, b.cos) and np.array_equal(a.sin, b.sin)
    assert a.cos.shape == (3, 4)
    assert np.allclose(a.t, [0.0, 0.005, 0.01])


def test_cutoff_ordering_enforced():
    g = TorusGrid(1, 64)
    with pytest.raises(ValidationError):
        simulate_ou(0.5, g, 8, 4, 0.01, 1e-3, seed=0)
    with pytest.raises(ValidationError):
        simulate_ou(0.5, g, 8, 32, 0.01, 1e-3, seed=0)
    with pytest.raises(ValidationError):
        simulate_ou(0.5, g, 4, 16, 0.0105, 1e-3, seed=0)


def constant_ensemble(R=10_000, T=0.01, seed=1):
    g = TorusGrid(1, 64)
    res = simulate_ou_ensemble(0.5, g, 3, 12, T, T / 2, seed, R)
    return res.modes, T


def test_constant_density_mode_variance_and_independence():
    modes, T = constant_ensemble()
    x = np.concatenate([modes.cos[:, -1], modes.sin[:, -1]], axis=1)
    ks = np.concatenate([modes.waves, modes.waves])
    var, se = mc_var(x)
    want = np.array([analytic_mode_variance(0.5, k, T) for k in ks])
    assert np.all(np.abs(var - want) < 3 * se)
    bound = 0.5 * (1 - np.exp(-2 * 4 * np.pi**2 * (ks[:, 0] ** 2) * T))
    assert np.all(var <= bound + 3 * se)
    c = x - x.mean(axis=0)
    n = x.shape[0]
    for i in range(x.shape[1]):
        for j in range(i + 1, x.shape[1]):
            prod = c[:, i] * c[:, j]
            assert abs(prod.mean()) < 3 * prod.std(ddof=1) / np.sqrt(n)


def test_nonconstant_weight_against_coefficient_oracle():
    g = TorusGrid(1, 64)
    rho_bar = 0.5 + 0.35 * np.cos(2 * np.pi * g.points()[0])
    T, R = 0.01, 4000
    res = simulate_ou_ensemble(rho_bar, g, 3, 12, T, T, 2, R)
    for i, k in enumerate(res.modes.waves):
        for kind, arr in (("cos", res.modes.cos), ("sin", res.modes.sin)):
            var, se = mc_var(arr[:, -1, i])
            assert abs(var - frozen_weight_variance(g, rho_bar, k, kind, 12, T)) < 3 * se


def test_noise_cutoff_doubling_within_one_se():
    g = TorusGrid(1, 128)
    rho_bar = 0.5 + 0.35 * np.cos(2 * np.pi * g.points()[0])
    T, R = 0.01, 10_000
    m_sim = 3
    for k in mode_waves(1, m_sim):
        for kind in ("cos", "sin"):
            base = frozen_weight_variance(g, rho_bar, k, kind, 4 * m_sim, T)
            doubled = frozen_weight_variance(g, rho_bar, k, kind, 8 * m_sim, T)
            se = base * np.sqrt(2 / (R - 1))
            assert abs(doubled - base) < se


def test_path_weight_matches_constant_when_flat():
    g = TorusGrid(1, 64)
    path = solve_skeleton(np.full(64, 0.5), None, 0.01, 1e-3)
    a = simulate_ou(path, g, 3, 12, 0.01, 1e-3, seed=5)
    b = simulate_ou(0.5, g, 3, 12, 0.01, 1e-3, seed=5)
    assert np.array_equal(a.cos, b.cos)
    short = solve_skeleton(np.full(64, 0.5), None, 0.005, 1e-3)
    with pytest.raises(ValidationError):
        simulate_ou(short, g, 3, 12, 0.01, 1e-3, seed=5)


def test_tail_fraction_is_small():
    g = TorusGrid(1, 1040)
    res = simulate_ou_ensemble(0.5, g, 256, 256, 0.5, 0.5, 4, 40)
    modes = ModeVector(res.modes.waves, res.modes.cos[:, -1], res.modes.sin[:, -1])
    assert tail_fraction(modes, 0.5, 128) < 0.05
    assert tail_fraction(modes, 1.0, 128) < tail_fraction(modes, 0.5, 128)


def test_restrict():
    w = mode_waves(2, 2)
    v = ModeVector(w, np.ones(w.shape[0]), np.ones(w.shape[0]))
    r = v.restrict(1)
    assert r.waves.tolist() == [[0, 1], [1, 0]]
