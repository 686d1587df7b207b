import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nonsmooth_control.heaviside import h_eps, h_eps_field, h_eps_prime, h_eps_prime_field


@pytest.mark.parametrize("v,expected", [(-1.0, 0.0), (0.05, 0.5), (0.1, 1.0)])
def test_h_eps_examples(v, expected):
    assert h_eps(v, 0.1) == pytest.approx(expected, abs=1e-14)


@pytest.mark.parametrize("v,expected", [(0.0, 0.0), (0.05, 15.0), (0.1, 0.0)])
def test_h_eps_prime_examples(v, expected):
    assert h_eps_prime(v, 0.1) == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("eps", [0.0, -0.1])
def test_nonpositive_eps(eps):
    with pytest.raises(ValueError):
        h_eps(0.1, eps)
    with pytest.raises(ValueError):
        h_eps_prime(0.1, eps)


def test_field_versions():
    eps = 0.1
    assert np.all(h_eps_field(np.full(9, -1.0), eps) == 0)
    assert np.all(h_eps_field(np.full(9, eps), eps) == 1)
    g = np.linspace(-0.3, 0.3, 31)
    H = h_eps_field(g, eps)
    assert np.all((H >= 0) & (H <= 1))
    assert np.all(h_eps_prime_field(g, eps) >= 0)


def test_gluing_at_ends():
    eps = 0.1
    for tau in (1e-4, 1e-6, 1e-8):
        assert abs(h_eps(tau, eps)) <= 3 * tau**2 / eps**2 + 1e-16
        assert abs(h_eps(eps - tau, eps) - 1.0) <= 3 * tau**2 / eps**2 + 1e-15
    assert h_eps(1e-12, eps) <= 1e-12


@given(st.floats(-1, 1), st.floats(-1, 1), st.floats(1e-3, 1))
@settings(max_examples=300, deadline=None)
def test_range_monotone_lipschitz(v1, v2, eps):
    a, b = h_eps(v1, eps), h_eps(v2, eps)
    assert 0 <= a <= 1 and h_eps_prime(v1, eps) >= 0
    if v1 <= v2:
        assert a <= b + 1e-15
    assert abs(a - b) <= 1.5 / eps * abs(v1 - v2) * (1 + 1e-12) + 1e-15


def test_l2_continuity(rng):
    eps = 0.1
    for _ in range(20):
        g1, g2 = rng.normal(0, 0.1, (2, 500))
        lhs = np.linalg.norm(h_eps_field(g1, eps) - h_eps_field(g2, eps))
        assert lhs <= 1.5 / eps * np.linalg.norm(g1 - g2) + 1e-14


def test_derivative_matches_difference_quotients():
    eps = 0.1
    v = np.linspace(-0.05, 0.15, 41)
    for tau in (1e-4, 1e-5):
        fd = (h_eps(v + tau, eps) - h_eps(v - tau, eps)) / (2 * tau)
        assert np.max(np.abs(fd - h_eps_prime(v, eps))) <= 10 * tau / eps**2
