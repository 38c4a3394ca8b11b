import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special as sps

from coaldual.errors import DomainError, PoleError
from coaldual.special import (
    DirichletParams,
    ModelParams,
    beta_density,
    beta_moment,
    classical_jacobi_c,
    compositions,
    dirichlet_density,
    gauss_jacobi,
    h_norm,
    hyp2f1_terminating,
    jacobi_orthonormal,
    jacobi_orthonormal_table,
    jacobi_R,
    jacobi_R_hyp,
    jacobi_R_table,
    log_rising,
    n_compositions,
    rising,
)

positive = st.floats(0.25, 10.0)


@given(st.floats(-12.5, 12.5), st.integers(0, 25))
def test_rising_matches_mpmath(a, n):
    expected = float(mpmath.rf(a, n))
    got = rising(a, n)
    assert got == pytest.approx(expected, rel=1e-12, abs=1e-300)


def test_rising_hits_zero_factor():
    assert log_rising(-3.0, 5) == (-math.inf, 0)
    assert rising(-3.0, 3) == pytest.approx(-6.0)
    assert rising(-3.0, 4) == 0.0


def _term_magnitude(n, b, c, z):
    return float(sum(abs(mpmath.rf(-n, k) * mpmath.rf(b, k) / (mpmath.rf(c, k) * mpmath.factorial(k)) * mpmath.mpf(z) ** k)
                     for k in range(n + 1)))


@pytest.mark.parametrize("n,b,c,z", [(0, 2.0, 3.0, 0.4), (5, 2.5, 1.5, 0.3), (12, -7.5, 4.0, -0.8), (30, 3.0, 2.0, 0.9)])
def test_terminating_2f1_against_mpmath(n, b, c, z):
    expected = float(mpmath.hyp2f1(-n, b, c, z))
    # float accuracy is relative to the largest terms, not to the (possibly tiny) result
    scale = _term_magnitude(n, b, c, z)
    assert abs(hyp2f1_terminating(-n, b, c, z) - expected) <= 8 * np.finfo(float).eps * scale
    assert abs(hyp2f1_terminating(-n, b, c, z, dps=40) - expected) <= 1e-30 * scale + 1e-15 * abs(expected)


def test_terminating_2f1_hand_values():
    assert hyp2f1_terminating(0, 2.0, 3.0, 0.7) == 1.0
    assert hyp2f1_terminating(-1, 2.0, 1.0, 0.5) == 0.0
    # 1 - 2*3/2 + (-2)(-1)*3*4/(2*3*2) = 1 - 3 + 2
    assert hyp2f1_terminating(-2, 3.0, 2.0, 1.0) == pytest.approx(0.0, abs=1e-15)


def test_terminating_2f1_complex_argument():
    z = complex(0.3, 0.4)
    expected = complex(mpmath.hyp2f1(-6, 2.5, 3.5, z))
    got = hyp2f1_terminating(-6, 2.5, 3.5, z)
    assert abs(got - expected) < 1e-13


def test_terminating_2f1_rejects_poles_and_non_integers():
    with pytest.raises(PoleError):
        hyp2f1_terminating(-5, 1.0, -2.0, 0.5)
    # c = -7 lies past the termination point, so it is harmless
    assert math.isfinite(hyp2f1_terminating(-5, 1.0, -7.0, 0.5))
    with pytest.raises(DomainError):
        hyp2f1_terminating(-2.5, 1.0, 1.0, 0.5)


def test_recurrence_matches_hypergeometric_oracle():
    grid = np.linspace(0.0, 1.0, 21)
    worst = 0.0
    for a in (0.25, 1.0, 3.7, 10.0):
        for b in (0.25, 2.5, 10.0):
            p = ModelParams(a, b)
            table = jacobi_R_table(50, p, grid)
            for n in (1, 2, 7, 20, 50):
                ref = np.array([jacobi_R_hyp(n, p, x, dps=50) for x in grid])
                worst = max(worst, np.max(np.abs(table[n] - ref)) / np.max(np.abs(ref)))
    assert worst < 1e-11


@given(positive, positive, st.integers(0, 40))
@settings(max_examples=40, deadline=None)
def test_R_is_one_at_one(a, b, n):
    assert jacobi_R(n, ModelParams(a, b), 1.0) == 1.0


def test_h_norm_is_reciprocal_second_moment():
    p = ModelParams(1.0, 1.0)
    # R_1(y) = 2y - 1 under the uniform law: E[R_1^2] = 1/3
    assert h_norm(1, p) == pytest.approx(3.0, rel=1e-15)
    assert 1.0 / h_norm(1, p) == pytest.approx(1.0 / 3.0, rel=1e-15)
    assert h_norm(0, p) == 1.0
    for p in (ModelParams(0.5, 2.0), ModelParams(3.0, 1.5)):
        quad = gauss_jacobi(40, p)
        for n in (1, 4, 11):
            second = quad.integrate(jacobi_R(n, p, quad.nodes) ** 2)
            assert h_norm(n, p) * second == pytest.approx(1.0, rel=1e-12)


@pytest.mark.parametrize("params", [ModelParams(1, 1), ModelParams(2, 3), ModelParams(0.5, 0.5)])
def test_orthonormality(params):
    quad = gauss_jacobi(64, params)
    table = jacobi_orthonormal_table(20, params, quad.nodes)
    gram = (table * quad.weights) @ table.T
    assert np.max(np.abs(gram - np.eye(21))) < 1e-10


def test_classical_constant_links_to_scipy_jacobi():
    for p in (ModelParams(1.0, 1.0), ModelParams(2.0, 0.7), ModelParams(0.4, 3.0)):
        xs = np.linspace(0.05, 0.95, 7)
        for n in range(0, 9):
            classical = sps.eval_jacobi(n, p.beta - 1.0, p.alpha - 1.0, 2 * xs - 1)
            got = classical_jacobi_c(n, p) * classical
            assert np.allclose(got, jacobi_orthonormal(n, p, xs), rtol=1e-12, atol=1e-12)


def test_gauss_jacobi_exactness():
    p = ModelParams(2.5, 0.8)
    quad = gauss_jacobi(10, p)
    assert quad.weights.sum() == pytest.approx(1.0, abs=1e-15)
    for j in range(0, 20):
        assert quad.integrate(quad.nodes**j) == pytest.approx(beta_moment(p, j), rel=1e-12)


def test_beta_density_integrates_to_one():
    from scipy.integrate import quad

    for p in (ModelParams(2.0, 3.0), ModelParams(0.5, 0.5)):
        total, _ = quad(lambda y: beta_density(p, y), 0, 1, limit=200)
        assert total == pytest.approx(1.0, abs=1e-8)


def test_dirichlet_density_reduces_to_beta():
    y = 0.3
    dp = DirichletParams((2.0, 3.0))
    assert dirichlet_density(dp, (y, 1 - y)) == pytest.approx(beta_density(ModelParams(2.0, 3.0), y), rel=1e-13)


@given(st.integers(0, 9), st.integers(1, 4))
def test_composition_count(m, d):
    items = list(compositions(m, d))
    assert len(items) == n_compositions(m, d) == len(set(items))
    assert all(sum(c) == m and len(c) == d for c in items)
    pos = list(compositions(m, d, positive=True))
    assert len(pos) == n_compositions(m, d, positive=True)
    assert all(min(c) >= 1 for c in pos)


def test_parameter_validation():
    with pytest.raises(DomainError):
        ModelParams(-1.0, 1.0)
    with pytest.raises(DomainError):
        ModelParams(float("nan"), 1.0)
    with pytest.raises(DomainError):
        DirichletParams((1.0,))
    with pytest.raises(DomainError):
        h_norm(2, ModelParams(0.0, 1.0))
    with pytest.raises(DomainError):
        beta_density(ModelParams(1.0, 1.0), 1.0)


def test_terminating_2f1_large_coefficients_use_log_form():
    # intermediate coefficients exceed 1e290, so the log-magnitude path is taken
    expected = float(mpmath.hyp2f1(-400, 400, 0.5, -0.5))
    assert hyp2f1_terminating(-400, 400.0, 0.5, -0.5) == pytest.approx(expected, rel=1e-12)
