import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from coaldual.errors import DomainError, TruncationError
from coaldual.jacobi import (
    density_1d_dual,
    density_1d_eigen,
    density_ddim_dual,
    density_ddim_eigen,
    density_ddim_zero,
    generator_eigen_check,
    kernel_Q,
)
from coaldual.series import SeriesControl
from coaldual.special import DirichletParams, ModelParams, beta_density, jacobi_orthonormal

PARAMS = [ModelParams(1.0, 1.0), ModelParams(2.0, 0.5), ModelParams(0.7, 3.0)]


@pytest.mark.parametrize("params", PARAMS)
@pytest.mark.parametrize("t", [0.1, 0.5, 2.0])
def test_eigen_and_dual_forms_agree(params, t):
    for x, y in [(0.1, 0.2), (0.5, 0.5), (0.85, 0.3), (0.02, 0.97)]:
        e = density_1d_eigen(x, y, t, params).value
        d = density_1d_dual(x, y, t, params).value
        assert e == pytest.approx(d, rel=1e-8, abs=1e-10)


@given(st.floats(0.3, 5.0), st.floats(0.3, 5.0), st.floats(0.05, 0.95), st.floats(0.05, 0.95), st.floats(0.05, 3.0))
@settings(max_examples=25, deadline=None)
def test_eigen_and_dual_agree_random(a, b, x, y, t):
    p = ModelParams(a, b)
    e = density_1d_eigen(x, y, t, p).value
    d = density_1d_dual(x, y, t, p).value
    assert e == pytest.approx(d, rel=1e-7, abs=1e-9)


@pytest.mark.parametrize("params", PARAMS)
def test_density_integrates_to_one(params):
    total, _ = quad(lambda y: density_1d_dual(0.3, y, 0.4, params).value, 0, 1, limit=200)
    assert total == pytest.approx(1.0, abs=1e-7)


def test_reversibility():
    p = ModelParams(2.0, 0.5)
    for x, y in [(0.2, 0.7), (0.05, 0.4)]:
        lhs = beta_density(p, x) * density_1d_eigen(x, y, 0.3, p).value
        rhs = beta_density(p, y) * density_1d_eigen(y, x, 0.3, p).value
        assert lhs == pytest.approx(rhs, rel=1e-10)


def test_chapman_kolmogorov():
    p = ModelParams(1.5, 2.5)
    x, y, s, t = 0.3, 0.6, 0.2, 0.35
    inner, _ = quad(lambda z: density_1d_dual(x, z, s, p).value * density_1d_dual(z, y, t, p).value, 0, 1, limit=200)
    assert inner == pytest.approx(density_1d_dual(x, y, s + t, p).value, rel=1e-7)


def test_large_t_tends_to_stationary():
    p = ModelParams(2.0, 3.0)
    assert density_1d_eigen(0.1, 0.4, 40.0, p).value == pytest.approx(beta_density(p, 0.4), rel=1e-12)


def test_small_t_flagged_unreliable():
    p = ModelParams(1.0, 1.0)
    assert density_1d_dual(0.4, 0.45, 0.01, p).unreliable
    assert not density_1d_dual(0.4, 0.45, 0.5, p).unreliable


def test_truncation_error_when_terms_capped():
    with pytest.raises(TruncationError):
        density_1d_eigen(0.4, 0.5, 0.001, ModelParams(1.0, 1.0), SeriesControl(max_terms=50))


def test_domain_errors():
    p = ModelParams(1.0, 1.0)
    with pytest.raises(DomainError):
        density_1d_eigen(0.0, 0.5, 1.0, p)
    with pytest.raises(DomainError):
        density_1d_dual(0.4, 0.5, -1.0, p)


@pytest.mark.parametrize("n", [1, 2, 5, 12])
def test_generator_eigen_identity_exact(n):
    assert generator_eigen_check(n, ModelParams(1.5, 0.5)) == 0.0
    assert generator_eigen_check(n, ModelParams(3.0, 2.0)) == 0.0


def test_kernel_polynomial_two_types_is_product():
    dp = DirichletParams((1.5, 2.5))
    p = ModelParams(1.5, 2.5)
    x, y = 0.3, 0.8
    for n in (1, 2, 5):
        expected = jacobi_orthonormal(n, p, x) * jacobi_orthonormal(n, p, y)
        assert kernel_Q(n, (x, 1 - x), (y, 1 - y), dp) == pytest.approx(expected, rel=1e-10)


def test_two_types_reduce_to_one_dimension():
    dp = DirichletParams((0.8, 2.0))
    p = ModelParams(0.8, 2.0)
    x, y, t = 0.35, 0.6, 0.3
    one = density_1d_dual(x, y, t, p).value
    # the simplex density is with respect to the first coordinate
    assert density_ddim_dual((x, 1 - x), (y, 1 - y), t, dp).value == pytest.approx(one, rel=1e-10)
    assert density_ddim_eigen((x, 1 - x), (y, 1 - y), t, dp).value == pytest.approx(one, rel=1e-8)


@pytest.mark.parametrize("eps", [(1.0, 1.0, 1.0), (0.5, 1.0, 2.0)])
def test_three_types_eigen_matches_dual(eps):
    dp = DirichletParams(eps)
    x, y = (0.2, 0.3, 0.5), (0.6, 0.1, 0.3)
    for t in (0.3, 1.0):
        e = density_ddim_eigen(x, y, t, dp).value
        d = density_ddim_dual(x, y, t, dp).value
        assert e == pytest.approx(d, rel=1e-7)


def test_zero_mutation_kernel_matches_dual():
    x, y = (0.2, 0.3, 0.5), (0.4, 0.4, 0.2)
    for t in (0.5, 1.5):
        z = density_ddim_zero(x, y, t, 3).value
        d = density_ddim_dual(x, y, t, DirichletParams((0.0, 0.0, 0.0))).value
        assert z == pytest.approx(d, rel=1e-9)
        assert z > 0


def test_zero_mutation_mass_is_defective():
    # with no mutation, fixation leaves the open simplex: interior mass < 1
    from scipy.integrate import dblquad

    f = lambda y2, y1: density_ddim_zero((0.3, 0.3, 0.4), (y1, y2, 1 - y1 - y2), 1.0, 3).value
    mass, _ = dblquad(f, 0, 1, 0, lambda y1: 1 - y1, epsabs=1e-6)
    assert 0.0 < mass < 1.0
    assert math.isfinite(mass)
