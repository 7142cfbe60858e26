import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ssep_spde.errors import ValidationError
from ssep_spde.noise import replica_rng
from ssep_spde.skeleton import heat_flow
from ssep_spde.ssep import (
    SsepConfiguration,
    _box_mean,
    advance,
    discrete_heat_mean,
    empirical_density,
    equilibrium_mode_variance,
    fluctuation_field,
    fluctuation_modes,
    init_bernoulli,
    init_quenched,
    lattice_points,
)
from ssep_spde.torus import TorusGrid


def test_init_examples():
    rng = np.random.default_rng(0)
    assert init_bernoulli(1.0, 64, rng).occupations.all()
    assert not init_bernoulli(0.0, 64, rng).occupations.any()
    c = init_bernoulli(0.5, 512, rng)
    assert abs(c.particle_count - 256) < 3 * np.sqrt(512 * 0.25)
    assert c.particle_count == int(c.occupations.sum())


def test_init_profile_forms():
    rng = np.random.default_rng(1)
    c = init_bernoulli(lambda x: (x[0] < 0.5).astype(float), 32, rng)
    assert c.occupations[:16].all() and not c.occupations[16:].any()
    c2 = init_bernoulli(np.full((8, 8), 1.0), 8, rng, d=2)
    assert c2.occupations.shape == (8, 8) and c2.occupations.all()
    with pytest.raises(ValidationError):
        init_bernoulli(1.5, 8, rng)
    with pytest.raises(ValidationError):
        init_bernoulli(np.zeros(7), 8, rng)


def test_quenched_density():
    c = init_quenched(0.5, 64)
    assert c.particle_count == 32 and set(np.unique(c.occupations)) == {0, 1}
    assert init_quenched(0.25, 64).particle_count == 16


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31), rho=st.floats(0, 1), d=st.integers(1, 2))
def test_particle_number_conserved(seed, rho, d):
    rng = np.random.default_rng(seed)
    N = 32 if d == 1 else 16
    c = init_bernoulli(rho, N, rng, d=d)
    after = advance(c, 0.01, rng)
    assert int(after.occupations.sum()) == c.particle_count == after.particle_count
    assert set(np.unique(after.occupations)) <= {0, 1}
    assert after.t_macro == pytest.approx(0.01)


def test_full_lattice_is_frozen_and_advance_copies():
    rng = np.random.default_rng(0)
    c = SsepConfiguration(np.ones(16, np.uint8), 16)
    assert advance(c, 1.0, rng).occupations.all()
    c = init_bernoulli(0.5, 64, rng)
    before = c.occupations.copy()
    advance(c, 0.01, rng)
    assert np.array_equal(c.occupations, before) and c.t_macro == 0.0
    advance(c, 0.01, rng, inplace=True)
    assert c.t_macro == pytest.approx(0.01)
    with pytest.raises(ValidationError):
        advance(c, -1.0, rng)


def test_advance_is_deterministic():
    c = init_bernoulli(0.5, 128, np.random.default_rng(0))
    a = advance(c, 0.01, replica_rng(4, 0))
    b = advance(c, 0.01, replica_rng(4, 0))
    assert np.array_equal(a.occupations, b.occupations)


def single_particle_variance(N=64, t=0.01, replicas=10_000, seed=0, d=1):
    disp = np.empty((replicas, d))
    start = (N // 2,) * d
    for r in range(replicas):
        occ = np.zeros((N,) * d, np.uint8)
        occ[start] = 1
        c = advance(SsepConfiguration(occ, N), t, replica_rng(seed, r), inplace=True)
        pos = np.array(np.unravel_index(int(np.argmax(c.occupations)), c.occupations.shape))
        disp[r] = ((pos - N // 2 + N // 2) % N - N // 2) / N
    var = disp.var(axis=0, ddof=1)
    se = ((disp - disp.mean(axis=0)) ** 2).std(axis=0, ddof=1) / np.sqrt(replicas)
    return var, se


@pytest.mark.parametrize("d", [1, 2])
def test_single_particle_diffusion(d):
    t = 0.01
    var, se = single_particle_variance(N=64 if d == 1 else 32, t=t, replicas=4000, d=d)
    assert np.all(np.abs(var - 2 * t) < 3 * se)


def test_product_measure_correlations_vanish():
    N, R, rho = 64, 1000, 0.3
    occ = np.empty((R, N))
    for r in range(R):
        rng = replica_rng(17, r)
        occ[r] = advance(init_bernoulli(rho, N, rng), 0.1, rng).occupations
    mean = occ.mean(axis=0)
    for dist in (1, 2, 5):
        prod = (occ[:, 0] - rho) * (occ[:, dist] - rho)
        assert abs(prod.mean()) < 3 * prod.std(ddof=1) / np.sqrt(R)
    assert abs(mean.mean() - rho) < 3 * np.sqrt(rho * (1 - rho) / (N * R))


def test_empty_configuration_gives_zero_field():
    g = TorusGrid(1, 16)
    empty = SsepConfiguration(np.zeros(64, np.uint8), 64)
    assert not empirical_density(empty, g).values.any()
    assert not fluctuation_field([empty, empty], g, np.zeros(64)).any()
    cos, sin = fluctuation_modes(np.zeros((3, 64)), np.zeros(64), 3)
    assert not cos.any() and not sin.any()


def test_empirical_density_box_average():
    g = TorusGrid(1, 4)
    occ = np.array([1, 1, 0, 0, 1, 0, 1, 0, 0, 0, 0, 0, 1, 1, 1, 1], np.uint8)
    f = empirical_density(SsepConfiguration(occ, 16), g)
    assert f.values.tolist() == [0.5, 0.5, 0.0, 1.0]
    assert f.values.mean() == pytest.approx(occ.sum() / 16)
    with pytest.raises(ValidationError):
        empirical_density(SsepConfiguration(occ, 16), TorusGrid(1, 5))
    with pytest.raises(ValidationError):
        _box_mean(np.zeros(16), 16, 3, 1)


def test_half_filling_mean_density():
    N, R = 128, 400
    g = TorusGrid(1, 8)
    vals = np.array([empirical_density(init_bernoulli(0.5, N, replica_rng(2, r)), g).values for r in range(R)])
    se = vals.std(axis=0, ddof=1) / np.sqrt(R)
    assert np.all(np.abs(vals.mean(axis=0) - 0.5) < 3 * se)


def equilibrium_structure(N=512, R=1000, rho=0.5, m=4, seed=0, t=0.0):
    mean = np.full(N, rho)
    occ = np.empty((R, N), np.uint8)
    for r in range(R):
        rng = replica_rng(seed, r)
        c = init_bernoulli(rho, N, rng)
        occ[r] = advance(c, t, rng).occupations if t > 0 else c.occupations
    cos, sin = fluctuation_modes(occ, mean, m)
    x = np.concatenate([cos[:, 1:], sin[:, 1:]], axis=1)
    var = x.var(axis=0, ddof=1)
    se = ((x - x.mean(axis=0)) ** 2).std(axis=0, ddof=1) / np.sqrt(R)
    return var, se, equilibrium_mode_variance(rho)


def structure_function(N=512, R=1000, rho=0.5, m=4, seed=0):
    """S(k) = E|eta_hat(k)|^2 / N per wave number, pooling the cos and sin components."""
    mean = np.full(N, rho)
    occ = np.array([init_bernoulli(rho, N, replica_rng(seed, r)).occupations for r in range(R)])
    cos, sin = fluctuation_modes(occ, mean, m)
    c, s_ = cos[:, 1:], sin[:, 1:]
    q = 0.5 * ((c - c.mean(axis=0)) ** 2 + (s_ - s_.mean(axis=0)) ** 2) * R / (R - 1)
    return q.mean(axis=0), q.std(axis=0, ddof=1) / np.sqrt(R), equilibrium_mode_variance(rho)


def test_equilibrium_structure_function():
    var, se, want = equilibrium_structure(N=256, R=1000, rho=0.3)
    assert np.all(np.abs(var - want) < 3 * se)
    S, se, want = structure_function(N=256, R=1000, rho=0.3)
    assert np.all(np.abs(S - want) < 3 * se)


def test_discrete_heat_mean():
    N = 256
    x = lattice_points(N, 1)[0]
    prof = 0.5 + 0.2 * np.cos(2 * np.pi * x)
    assert np.allclose(discrete_heat_mean(prof, 0.0), prof, atol=1e-14)
    lattice = discrete_heat_mean(prof, 0.05)
    continuum = heat_flow(prof, 0.05)
    assert np.abs(lattice - continuum).max() < 1e-3
    assert lattice.mean() == pytest.approx(0.5)


def hydrodynamic_mean(N=128, R=400, t=0.01, n=8, seed=5):
    g = TorusGrid(1, n)
    prof = lambda x: 0.5 + 0.25 * np.cos(2 * np.pi * x[0])
    start = prof(lattice_points(N, 1))
    vals = np.empty((R, n))
    for r in range(R):
        rng = replica_rng(seed, r)
        c = advance(init_bernoulli(prof, N, rng), t, rng, inplace=True)
        vals[r] = empirical_density(c, g).values
    want = _box_mean(discrete_heat_mean(start, t), N, n, 1)
    se = vals.std(axis=0, ddof=1) / np.sqrt(R)
    return vals.mean(axis=0), se, want


def test_hydrodynamic_mean():
    mean, se, want = hydrodynamic_mean()
    assert np.all(np.abs(mean - want) < 3 * se)


def test_fluctuation_field_normalization():
    N, n = 64, 8
    g = TorusGrid(1, n)
    occ = np.zeros(N, np.uint8)
    occ[:8] = 1
    mean = np.full(N, 0.125)
    f = fluctuation_field([SsepConfiguration(occ, N)], g, mean)
    assert f.shape == (1, n)
    assert f[0, 0] == pytest.approx(np.sqrt(N) * 0.875)
    assert f[0].mean() == pytest.approx(0.0, abs=1e-14)
