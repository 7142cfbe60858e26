import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from ssep_spde.mollifier import (
    ConstantNonlinearity,
    MollifiedSqrt,
    s,
    s_eta,
    s_eta_prime,
    sup_deriv,
    sup_error,
)

ETAS = [2.0**-p for p in range(3, 11)]


def quad_oracle(x, eta):
    """Direct adaptive quadrature of the convolution (independent of the table)."""
    def bump(u):
        return np.exp(-1.0 / (1.0 - u * u)) if abs(u) < 1 else 0.0

    mass = integrate.quad(bump, -1, 1, epsabs=1e-14)[0]
    lo, hi = max(0.0, x - eta), min(1.0, x + eta)
    if hi <= lo:
        return 0.0
    f = lambda y: bump((x - y) / eta) * np.sqrt(y * (1 - y)) / (eta * mass)
    return integrate.quad(f, lo, hi, epsabs=1e-13, limit=200)[0]


def test_s_examples():
    assert s(0.5) == 0.5
    for x in (0.0, 1.0, -0.3, 1.7):
        assert s(x) == 0.0
    assert s(0.25) == pytest.approx(np.sqrt(0.1875), abs=1e-15)


def test_s_eta_examples():
    eta = 0.1
    assert s_eta(eta, -0.1001) == 0.0
    assert s_eta(eta, -0.5) == 0.0
    v = float(s_eta(eta, 0.5))
    assert 0.5 - 0.1 < v <= 0.5
    assert abs(float(s_eta_prime(eta, 0.5))) < 1e-8


@pytest.mark.parametrize("eta", [0.2, 0.05])
def test_table_matches_quadrature_oracle(eta):
    xs = np.array([-0.9 * eta, -0.3 * eta, 0.0, 0.3 * eta, 0.17, 0.5, 0.83, 1.0 - 0.5 * eta, 1.0 + 0.5 * eta])
    ours = s_eta(eta, xs)
    ref = np.array([quad_oracle(x, eta) for x in xs])
    assert np.abs(ours - ref).max() < 1e-9


def test_bounds_support_and_finite_difference():
    eta = 0.05
    rng = np.random.default_rng(0)
    x = rng.uniform(-0.2, 1.2, 1000)
    v = s_eta(eta, x)
    assert v.min() >= 0.0 and v.max() <= 0.5
    outside = (x <= -eta) | (x >= 1 + eta)
    assert np.all(v[outside] == 0.0)
    h = 1e-6
    fd = (s_eta(eta, x + h) - s_eta(eta, x - h)) / (2 * h)
    assert np.abs(fd - s_eta_prime(eta, x)).max() < 1e-6


@settings(max_examples=50, deadline=None)
@given(x=st.floats(-1, 2))
def test_symmetry_about_half(x):
    eta = 0.1
    assert float(s_eta(eta, x)) == pytest.approx(float(s_eta(eta, 1 - x)), abs=1e-12)
    assert float(s_eta_prime(eta, x)) == pytest.approx(-float(s_eta_prime(eta, 1 - x)), abs=1e-8)


def test_sup_error_monotone_and_rates():
    err = np.array([sup_error(e) for e in ETAS])
    der = np.array([sup_deriv(e) for e in ETAS])
    assert np.all(np.diff(err) <= 0)
    slope_err = np.polyfit(np.log(ETAS), np.log(err), 1)[0]
    slope_der = np.polyfit(np.log(ETAS), np.log(der), 1)[0]
    assert 0.4 <= slope_err <= 0.6
    assert -0.6 <= slope_der <= -0.4


def test_rejects_bad_eta():
    with pytest.raises(ValueError):
        MollifiedSqrt(0.0)
    with pytest.raises(ValueError):
        MollifiedSqrt(1.0)


def test_constant_nonlinearity():
    c = ConstantNonlinearity(0.3)
    x = np.linspace(-1, 2, 7)
    assert np.all(c.value(x) == 0.3) and not c.deriv(x).any()
