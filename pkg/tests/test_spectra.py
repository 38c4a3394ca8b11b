import math
import warnings

import numpy as np
import pytest

from coaldual.errors import DomainError, NonTerminatingSeries
from coaldual.jacobi import density_1d_eigen
from coaldual.spectra import (
    CorrelationSequence,
    DiscreteMeasure,
    bivariate_scan,
    bochner_consistency,
    classical_poisson_series,
    cm_probe,
    cm_roots,
    dn_atom_limit,
    exponential_correlations,
    gasper_domain,
    jacobi_poisson_bilinear,
    jacobi_poisson_kernel,
    kernel_K,
    poisson_dn,
    poisson_kernel_scale,
    rho_from_mixing,
    search_K_negative,
    spectrum_array,
    spectrum_dn,
)
from coaldual.special import ModelParams, beta_density, gauss_jacobi, jacobi_R, jacobi_R_table


def diffusion_spectrum(nmax, params):
    n = np.arange(nmax + 1)
    return 0.5 * n * (n + params.theta - 1)


@pytest.mark.parametrize(
    "a,b,inside",
    [(1.0, 2.0, True), (2.0, 1.0, False), (1.0, 1.0, False), (0.3, 1.5, False), (0.3, 2.0, True), (0.5, 0.7, True)],
)
def test_gasper_domain(a, b, inside):
    assert gasper_domain(ModelParams(a, b)) is inside


def test_measure_validation_and_csv(tmp_path):
    with pytest.raises(DomainError):
        DiscreteMeasure([0.1, 0.2], [1.0])
    with pytest.raises(DomainError):
        DiscreteMeasure([0.1], [-1.0])
    with pytest.raises(DomainError):
        DiscreteMeasure([0.1, 0.2], [0.5, 0.6], is_probability=True)
    nu = DiscreteMeasure([0.1, 0.45], [0.25, 0.75])
    path = tmp_path / "nu.csv"
    nu.to_csv(path)
    back = DiscreteMeasure.from_csv(path)
    assert np.array_equal(back.atoms, nu.atoms) and np.array_equal(back.masses, nu.masses)
    (tmp_path / "bad.csv").write_text("x,y\n1,2\n")
    with pytest.raises(DomainError):
        DiscreteMeasure.from_csv(tmp_path / "bad.csv")


def test_correlation_sequence_validation():
    with pytest.raises(DomainError):
        CorrelationSequence([0.9, 0.5])
    with pytest.raises(DomainError):
        CorrelationSequence([1.0, 1.5])


def test_mixing_law_correlations():
    p = ModelParams(1.0, 2.0)
    seq = rho_from_mixing(6, DiscreteMeasure.point(1.0), p)
    assert np.allclose(seq.values, 1.0)
    law = DiscreteMeasure([0.2, 0.9], [0.3, 0.7], is_probability=True)
    seq = rho_from_mixing(6, law, p)
    assert seq[3] == pytest.approx(0.3 * jacobi_R(3, p, 0.2) + 0.7 * jacobi_R(3, p, 0.9), rel=1e-13)
    with pytest.raises(DomainError):
        rho_from_mixing(3, DiscreteMeasure([0.5], [0.5]), p)


def test_bivariate_scan_on_diffusion_spectrum():
    p = ModelParams(1.5, 2.5)
    t = 0.5
    rho = np.exp(-diffusion_spectrum(60, p) * t)
    val, x, y = bivariate_scan(rho, p)
    assert val >= 0.0
    x, y = min(max(x, 0.05), 0.95), min(max(y, 0.05), 0.95)
    full = density_1d_eigen(x, y, t, p).value / beta_density(p, y)
    scan_here, _, _ = bivariate_scan(rho, p, grid=[x, y])
    assert bivariate_scan(rho, p, grid=[x])[0] == pytest.approx(density_1d_eigen(x, x, t, p).value / beta_density(p, x), rel=1e-10)
    assert scan_here <= full + 1e-10


def test_product_kernel_reproduces_polynomials():
    p = ModelParams(1.0, 2.0)
    quad = gauss_jacobi(80, p)
    x, y, r = 0.3, 0.75, 0.8
    K = np.array([kernel_K(x, y, z, p, r=r).smoothed for z in quad.nodes])
    assert quad.integrate(K) == pytest.approx(1.0, abs=1e-10)
    for m in (1, 3):
        got = quad.integrate(K * jacobi_R(m, p, quad.nodes))
        assert got == pytest.approx(r**m * jacobi_R(m, p, x) * jacobi_R(m, p, y), abs=1e-10)


def test_product_kernel_symmetry_and_truncation():
    p = ModelParams(1.0, 2.0)
    a = kernel_K(0.2, 0.5, 0.9, p, n_terms=20)
    b = kernel_K(0.9, 0.2, 0.5, p, n_terms=20)
    assert a.truncated == pytest.approx(b.truncated, rel=1e-12)
    assert a.smoothed == pytest.approx(b.smoothed, rel=1e-12)
    assert kernel_K(0.2, 0.5, 0.9, p, r=0.0).smoothed == 1.0
    with pytest.warns(UserWarning):
        kernel_K(0.2, 0.5, 0.9, ModelParams(2.0, 1.0))


def test_negative_kernel_search_is_reproducible():
    p = ModelParams(2.0, 0.5)
    grid = np.linspace(0.0, 1.0, 5)
    first = search_K_negative(p, grid=grid, r=0.9)
    second = search_K_negative(p, grid=grid, r=0.9)
    assert first == second
    assert math.isfinite(first[0])
    assert all(v in grid for v in first[1])


def test_spectrum_of_pure_diffusion():
    p = ModelParams(0.7, 1.3)
    for n in (0, 1, 4, 9):
        assert spectrum_dn(n, 0.5, DiscreteMeasure.empty(), p) == pytest.approx(0.5 * n * (n + p.theta - 1))


def test_spectrum_array_matches_pointwise():
    p = ModelParams(1.0, 2.0)
    nu = DiscreteMeasure([0.0, 0.3, 0.8], [0.2, 1.0, 0.5])
    arr = spectrum_array(10, 0.25, nu, p)
    assert np.allclose(arr, [spectrum_dn(n, 0.25, nu, p) for n in range(11)], rtol=1e-13)
    assert np.all(np.diff(arr) > 0)


def test_atom_at_one_limit():
    p = ModelParams(1.5, 0.8)
    for n in (1, 3, 6):
        near = spectrum_dn(n, 0.0, DiscreteMeasure.point(1.0 - 1e-7), p)
        assert near == pytest.approx(dn_atom_limit(n, p), rel=1e-5)
    with pytest.raises(DomainError):
        spectrum_dn(2, 0.0, DiscreteMeasure.point(1.0), p)


def test_poisson_chain_spectrum():
    p = ModelParams(1.0, 2.0)
    assert poisson_dn(3, 2.0, DiscreteMeasure.point(1.0), p) == 0.0
    mu = DiscreteMeasure([0.0, 0.5], [0.5, 0.5], is_probability=True)
    expected = 2.0 * (0.5 * (1 - jacobi_R(4, p, 0.0)) + 0.5 * (1 - jacobi_R(4, p, 0.5)))
    assert poisson_dn(4, 2.0, mu, p) == pytest.approx(expected, rel=1e-13)


def test_bochner_checks_accept_diffusion_spectrum():
    p = ModelParams(1.0, 2.0)
    c = exponential_correlations(diffusion_spectrum(30, p))
    report = bochner_consistency(c, [0.2, 0.5, 1.0], params=p)
    assert report.ok and report.positive_definite
    assert report.failures == []


def test_bochner_checks_flag_malformed_candidates():
    dn = diffusion_spectrum(10, ModelParams(1.0, 2.0))
    squared = bochner_consistency(lambda t: np.exp(-dn * t * t), [0.3, 0.6])
    assert not squared.semigroup and squared.continuity and squared.normalization
    shifted = bochner_consistency(lambda t: 0.9 * np.exp(-dn * t), [0.3])
    assert not shifted.normalization
    jumpy = bochner_consistency(lambda t: np.exp(-dn * t) * (1.0 if t < 0.5 else 0.5 ** (dn > 0)), [0.5 - 5e-9])
    assert not jumpy.continuity
    assert squared.positive_definite is None and not squared.ok


def test_poisson_kernel_three_ways():
    p = ModelParams(1.0, 2.0)
    scale = poisson_kernel_scale(p)
    for r, x, y in [(0.6, 0.3, 0.8), (0.9, 0.1, 0.15), (0.2, 0.95, 0.5)]:
        direct = jacobi_poisson_kernel(r, x, y, p)
        classical = scale * classical_poisson_series(r, 2 * x - 1, 2 * y - 1, p.beta - 1, p.alpha - 1)
        closed = scale * jacobi_poisson_bilinear(r, 2 * x - 1, 2 * y - 1, p.beta - 1, p.alpha - 1)
        assert direct == pytest.approx(classical, rel=1e-11)
        assert direct == pytest.approx(closed, rel=1e-11)


def test_poisson_kernel_is_a_density():
    p = ModelParams(2.5, 1.5)
    quad = gauss_jacobi(60, p)
    vals = np.array([jacobi_poisson_kernel(0.5, 0.3, y, p) for y in quad.nodes])
    assert quad.integrate(vals) == pytest.approx(1.0, abs=1e-12)
    assert vals.min() > 0


def test_cm_roots_vieta():
    theta = 2.7
    lam = np.array([0.1, 1.0, 7.5])
    r1, r2 = cm_roots(lam, theta)
    assert np.allclose(r1 + r2, theta - 1)
    assert np.allclose(r1 * r2, -2 * lam)
    n = 4
    a, b = cm_roots(n * (n + theta - 1) / 2, theta)
    assert a == pytest.approx(n + theta - 1) and b == pytest.approx(-n)


def test_cm_function_interpolates_jump_spectrum():
    p = ModelParams(1.0, 2.0)
    nu = DiscreteMeasure([0.2, 0.7], [0.5, 0.5])
    lam = [n * (n + p.theta - 1) / 2 for n in (1, 2, 5)]
    report = cm_probe(lam, nu, p, max_order=0)
    assert np.allclose(report.values, [spectrum_dn(n, 0.0, nu, p) for n in (1, 2, 5)], rtol=1e-12)


def test_cm_probe_outcomes():
    p = ModelParams(1.0, 2.0)
    grid = np.linspace(0.1, 20, 60)
    report = cm_probe(grid, DiscreteMeasure([0.2, 0.7], [0.5, 0.5]), p)
    assert not report.passed and report.failed_order == 1
    assert cm_probe(grid, DiscreteMeasure.empty(), p).passed
    with pytest.raises(NonTerminatingSeries):
        cm_probe(grid, DiscreteMeasure.point(0.0), p)
    with pytest.raises(DomainError):
        cm_probe([0.0, 1.0], DiscreteMeasure.empty(), p)
