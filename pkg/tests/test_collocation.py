import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import ndtri

from sevenleague.collocation import MAX_NODES, empirical_collocation, gauss_hermite_grid, normal_cdf


def hermite_e_roots(m, dps=40):
    """Roots of He_m from its coefficients, in high precision (independent of the eigen solver)."""
    mpmath.mp.dps = dps
    coeffs = [0] * (m + 1)  # highest degree first
    # He_m(x) = sum_k (-1)^k m! / (k! (m-2k)! 2^k) x^(m-2k)
    for k in range(m // 2 + 1):
        coeffs[2 * k] = (-1) ** k * mpmath.factorial(m) / (mpmath.factorial(k) * mpmath.factorial(m - 2 * k) * 2**k)
    roots = mpmath.polyroots(coeffs, maxsteps=200, extraprec=200)
    return sorted(float(mpmath.re(r)) for r in roots)


def test_small_grids():
    np.testing.assert_allclose(gauss_hermite_grid(1).nodes, [0.0], atol=1e-15)
    np.testing.assert_allclose(gauss_hermite_grid(2).nodes, [-1.0, 1.0], atol=1e-14)


def test_five_nodes_closed_form():
    # He_5 = x (x^4 - 10 x^2 + 15): roots 0, +-sqrt(5 -+ sqrt(10))
    a, b = math.sqrt(5 - math.sqrt(10)), math.sqrt(5 + math.sqrt(10))
    np.testing.assert_allclose(gauss_hermite_grid(5).nodes, [-b, -a, 0.0, a, b], rtol=0, atol=1e-12)


@pytest.mark.parametrize("m", range(1, MAX_NODES + 1))
def test_nodes_match_polynomial_roots(m):
    nodes = gauss_hermite_grid(m).nodes
    ref = hermite_e_roots(m)
    assert np.max(np.abs(nodes - ref)) < 1e-12 * max(1.0, np.max(np.abs(ref)))
    # also agrees with numpy's probabilists' Gauss-Hermite routine
    np.testing.assert_allclose(nodes, np.polynomial.hermite_e.hermegauss(m)[0], atol=1e-12)


@pytest.mark.parametrize("m", range(1, MAX_NODES + 1))
def test_grid_symmetry(m):
    g = gauss_hermite_grid(m)
    assert np.all(np.diff(g.nodes) > 0)
    assert np.all(np.diff(g.levels) > 0)
    np.testing.assert_allclose(g.nodes, -g.nodes[::-1], atol=1e-12)
    np.testing.assert_allclose(g.levels + g.levels[::-1], 1.0, atol=1e-12)
    assert np.all((g.levels > 0) & (g.levels < 1))


@pytest.mark.parametrize("m", [0, 21, -1, 2.5])
def test_grid_rejects_out_of_range(m):
    with pytest.raises(ValueError):
        gauss_hermite_grid(m)


def test_normal_cdf():
    assert normal_cdf(0.0) == 0.5
    # quadrature of the density as an independent reference
    mpmath.mp.dps = 30
    ref = float(mpmath.quad(lambda t: mpmath.exp(-t * t / 2), [-mpmath.inf, 0, 1.959963985]) / mpmath.sqrt(2 * mpmath.pi))
    assert abs(normal_cdf(1.959963985) - ref) < 1e-12
    assert abs(normal_cdf(1.959963985) - 0.975) < 1e-8


@settings(max_examples=200)
@given(st.floats(-30, 30))
def test_normal_cdf_symmetry(x):
    assert abs(normal_cdf(x) + normal_cdf(-x) - 1.0) < 1e-14


def test_empirical_constant(grid5):
    np.testing.assert_array_equal(empirical_collocation(np.full(100, 2.5), grid5), [2.5] * 5)


def test_empirical_reproduces_nodes_on_stratified_normal(grid5):
    n = 10**6
    samples = ndtri((np.arange(1, n + 1) - 0.5) / n)
    np.testing.assert_allclose(empirical_collocation(samples, grid5), grid5.nodes, atol=5e-3)


def test_empirical_hazen_rule_by_hand():
    grid = gauss_hermite_grid(3)  # levels Phi(-sqrt3), 1/2, Phi(sqrt3)
    s = np.array([4.0, 1.0, 3.0, 2.0])  # sorted 1..4 at positions 1/8, 3/8, 5/8, 7/8
    p = grid.levels
    def by_hand(q):
        h = 4 * q + 0.5  # 1-based fractional order statistic
        h = min(max(h, 1.0), 4.0)
        lo = int(math.floor(h))
        hi = min(lo + 1, 4)
        return lo + (h - lo) * (hi - lo)
    np.testing.assert_allclose(empirical_collocation(s, grid), [by_hand(q) for q in p], rtol=1e-15)


def test_empirical_needs_enough_samples(grid5):
    with pytest.raises(ValueError):
        empirical_collocation([1.0, 2.0], grid5)
    with pytest.raises(ValueError):
        empirical_collocation([1.0, 2.0, np.nan, 3.0, 4.0], grid5)


@settings(max_examples=100, deadline=None)
@given(a=st.floats(0.01, 100), b=st.floats(-100, 100), seed=st.integers(0, 2**32 - 1))
def test_empirical_affine_equivariance(a, b, seed):
    grid = gauss_hermite_grid(5)
    s = np.random.default_rng(seed).standard_normal(257)
    lhs = empirical_collocation(a * s + b, grid)
    rhs = a * empirical_collocation(s, grid) + b
    np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-12 * (abs(b) + a))


def test_empirical_monotone_map(grid5, rng):
    s = rng.standard_normal(10**5)
    lhs = empirical_collocation(np.exp(s), grid5)
    rhs = np.exp(empirical_collocation(s, grid5))
    # interpolation between neighbouring order statistics; spacing ~ 1e-4 near the nodes
    np.testing.assert_allclose(lhs, rhs, rtol=1e-3)
