"""Transition densities of the Jacobi (Wright-Fisher) diffusion.

One-dimensional: generator

    L = 1/2 x(1-x) d^2/dx^2 + 1/2 (alpha (1-x) - beta x) d/dx

with Beta(alpha, beta) stationary law. The density is available two ways:

* spectrally, ``f_ab(y) {1 + sum_n rho_n(t) P~_n(x) P~_n(y)}``;
* as a mixture over the number of non-mutant lines of descent,
  ``sum_k q_k(t) sum_l Bin(l; k, x) f_{alpha+l, beta+k-l}(y)``.

The d-type analogues use kernel polynomials on the Dirichlet law and a
multinomial/Dirichlet mixture.
"""
from __future__ import annotations

import math
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy import special as sps

from .errors import CombinatorialLimit, DomainError, TruncationError
from .lod import cached_entrance_probs, log_rho
from .series import DEFAULT_CONTROL, DensityValue, SeriesControl
from .special import (
    DirichletParams,
    ModelParams,
    _check_simplex,
    beta_density,
    compositions,
    h_norm_array,
    jacobi_R_table,
    log_dirichlet_density,
    n_compositions,
)

SMALL_T = 0.02
COMPOSITION_CAP = 10**6


def _finish(raw: float, order: int, last: float, ctl: SeriesControl, t: float) -> DensityValue:
    clipped = False
    value = raw
    if raw < 0 and abs(raw) <= 10 * ctl.tail_tol:
        value, clipped = 0.0, True
    return DensityValue(value, order, last, clipped, unreliable=t < SMALL_T)


def _eigen_order(theta: float, t: float, ctl: SeriesControl) -> int:
    """Smallest n with n(n + theta - 1) t / 2 > log(1 / tail_tol)."""
    target = math.log(1.0 / ctl.tail_tol)
    b = theta - 1.0
    n = (-b + math.sqrt(b * b + 8.0 * target / t)) / 2.0
    return max(1, int(math.ceil(n)))


def _spectral_sum(coeffs: np.ndarray, ctl: SeriesControl, theta: float, t: float):
    """Sum ``coeffs[0] + coeffs[1] + ...`` with the two-part stopping rule.

    Returns ``(sum, order, last_term_magnitude)``.
    """
    n_min = _eigen_order(theta, t, ctl)
    small = 0
    for n in range(1, len(coeffs)):
        if abs(coeffs[n]) < ctl.tail_tol:
            small += 1
        else:
            small = 0
        if small >= ctl.consecutive_small and n >= n_min:
            return math.fsum(coeffs[: n + 1]), n, abs(coeffs[n])
    raise TruncationError(
        f"spectral series not settled after {len(coeffs) - 1} terms (t={t}, theta={theta})"
    )


def _n_terms(theta: float, t: float, ctl: SeriesControl) -> int:
    n = _eigen_order(theta, t, ctl) + 4 * ctl.consecutive_small + 8
    if n > ctl.max_terms:
        raise TruncationError(f"need about {n} terms, max_terms={ctl.max_terms}")
    return n


def density_1d_eigen(x: float, y: float, t: float, params: ModelParams, ctl: SeriesControl = DEFAULT_CONTROL) -> DensityValue:
    """Spectral expansion of the transition density from ``x`` to ``y`` over time ``t``."""
    params.require_stationary()
    if not (0 < x < 1 and 0 < y < 1):
        raise DomainError("x and y must lie in (0, 1)")
    if t <= 0:
        raise DomainError("t must be positive")
    th = params.theta
    nmax = _n_terms(th, t, ctl)
    table = jacobi_R_table(nmax, params, np.array([x, y]))
    h = h_norm_array(nmax, params)
    coeffs = np.exp(log_rho(np.arange(nmax + 1), th, t)) * h * table[:, 0] * table[:, 1]
    total, order, last = _spectral_sum(coeffs, ctl, th, t)
    return _finish(beta_density(params, y) * total, order, last, ctl, t)


def _binomial_window(k: int, x: float) -> tuple[int, int]:
    """Range of ``l`` holding all but a negligible part of Binomial(k, x)."""
    if k <= 400:
        return 0, k
    # Bernstein-type tail beyond 14 standard deviations (plus slack for skew)
    sd = math.sqrt(k * x * (1 - x))
    half = int(14 * sd + 40)
    centre = int(round(k * x))
    return max(0, centre - half), min(k, centre + half)


def _log_binom_row(k: int, x: float, l=None) -> np.ndarray:
    if l is None:
        l = np.arange(k + 1)
    with np.errstate(divide="ignore"):
        lx = np.log(x) if x > 0 else -np.inf
        l1x = np.log1p(-x) if x < 1 else -np.inf
    out = sps.gammaln(k + 1) - sps.gammaln(l + 1) - sps.gammaln(k - l + 1)
    out = out + np.where(l > 0, l * lx, 0.0) + np.where(k - l > 0, (k - l) * l1x, 0.0)
    return out


def density_1d_dual(x: float, y: float, t: float, params: ModelParams, ctl: SeriesControl = DEFAULT_CONTROL) -> DensityValue:
    """Lines-of-descent mixture form of the transition density."""
    params.require_stationary()
    if not (0 <= x <= 1 and 0 < y < 1):
        raise DomainError("need x in [0, 1] and y in (0, 1)")
    if t <= 0:
        raise DomainError("t must be positive")
    q = cached_entrance_probs(params.theta, t)
    return _dual_mixture_1d(q, x, y, params, ctl, t)


def _dual_mixture_1d(q: np.ndarray, x: float, y: float, params: ModelParams, ctl: SeriesControl, t: float) -> DensityValue:
    a, b = params.alpha, params.beta
    ly, l1y = math.log(y), math.log1p(-y)
    parts = []
    order = 0
    last = 0.0
    for k, qk in enumerate(q):
        if qk <= 0:
            continue
        lo, hi = _binomial_window(k, x)
        l = np.arange(lo, hi + 1)
        aa, bb = a + l, b + k - l
        log_f = (aa - 1) * ly + (bb - 1) * l1y - sps.betaln(aa, bb)
        term = qk * math.fsum(np.exp(_log_binom_row(k, x, l) + log_f))
        parts.append(term)
        order, last = k, abs(term)
    return _finish(math.fsum(parts), order, last, ctl, t)


# ---------------------------------------------------------------------------
# generator eigen-identity


def _exact_R_coeffs(n: int, params: ModelParams) -> list[Fraction]:
    """Monomial coefficients in ``y`` of ``R_n``, built by the production recurrence in exact arithmetic."""
    a, b = Fraction(params.alpha), Fraction(params.beta)
    th = a + b
    prev = [Fraction(1)]
    if n == 0:
        return prev
    # R_1 = 1 + (theta/beta)(y - 1)
    cur = [1 - th / b, th / b]
    for m in range(1, n):
        s = (2 * m + th - 1) * (2 * m + th) / ((m + th - 1) * (m + b))
        g = m * (m + a - 1) * (2 * m + th) / ((m + b) * (m + th - 1) * (2 * m + th - 2))
        nxt = [Fraction(0)] * (m + 2)
        for i, c in enumerate(cur):
            nxt[i] += c * (1 + g) - s * c
            nxt[i + 1] += s * c
        for i, c in enumerate(prev):
            nxt[i] -= g * c
        prev, cur = cur, nxt
    return cur


def generator_eigen_check(n: int, params: ModelParams, grid=None) -> float:
    """Max over ``grid`` of ``|L P~_n + n(n+theta-1)/2 P~_n|``.

    The generator acts on the coefficient vector: ``y(1-y) d^2`` and
    ``(alpha - theta y) d`` map ``y^k`` to ``k(k-1)(y^{k-1} - y^k)`` and
    ``k (alpha y^{k-1} - theta y^k)``.
    """
    params.require_stationary()
    if grid is None:
        grid = np.linspace(0.0, 1.0, 41)
    coeffs = _exact_R_coeffs(n, params)
    a, th = Fraction(params.alpha), Fraction(params.alpha) + Fraction(params.beta)
    lam = Fraction(n) * (n + th - 1) / 2
    resid = [lam * c for c in coeffs]
    for k, c in enumerate(coeffs):
        if k == 0:
            continue
        down = Fraction(k * (k - 1)) + a * k
        stay = Fraction(k * (k - 1)) + th * k
        resid[k - 1] += c * down / 2
        resid[k] -= c * stay / 2
    scale = math.sqrt(h_norm_array(n, params)[n])
    worst = 0.0
    for y in grid:
        yf = Fraction(float(y))
        val = sum(r * yf**k for k, r in enumerate(resid))
        worst = max(worst, abs(float(val)) * scale)
    return worst


# ---------------------------------------------------------------------------
# d types


def _composition_array(m: int, d: int, positive: bool = False, cap: int = COMPOSITION_CAP) -> np.ndarray:
    count = n_compositions(m, d, positive)
    if count > cap:
        raise CombinatorialLimit(f"{count} compositions of {m} into {d} parts exceed cap {cap}")
    return _cached_compositions(m, d, positive)


@lru_cache(maxsize=2048)
def _cached_compositions(m: int, d: int, positive: bool) -> np.ndarray:
    if n_compositions(m, d, positive) == 0:
        arr = np.zeros((0, d), dtype=np.int64)
    else:
        arr = np.array(list(compositions(m, d, positive)), dtype=np.int64)
    arr.setflags(write=False)
    return arr


def _log_xy(x, y):
    with np.errstate(divide="ignore"):
        return np.log(np.asarray(x, float) * np.asarray(y, float))


def _xi_all(mmax: int, x, y, dp: DirichletParams, cap: int = COMPOSITION_CAP) -> np.ndarray:
    eps = np.asarray(dp.eps)
    th = dp.theta
    lxy = _log_xy(x, y)
    out = np.empty(mmax + 1)
    for m in range(mmax + 1):
        ls = _composition_array(m, dp.d, cap=cap)
        log_terms = (
            math.lgamma(m + 1) - sps.gammaln(ls + 1).sum(axis=1)
            + (math.lgamma(th + m) - math.lgamma(th))
            - (sps.gammaln(eps + ls) - sps.gammaln(eps)).sum(axis=1)
            + np.where(ls > 0, ls * lxy, 0.0).sum(axis=1)
        )
        out[m] = math.fsum(np.exp(log_terms))
    return out


def xi_m(m: int, x, y, dp: DirichletParams, cap: int = COMPOSITION_CAP) -> float:
    """``sum_{|l|=m} C(m; l) theta_(m) / prod eps_i(l_i) prod (x_i y_i)^{l_i}``."""
    dp.require_stationary()
    x = _check_simplex(x, dp.d, open_=False)
    y = _check_simplex(y, dp.d, open_=False)
    return float(_xi_all(m, x, y, dp, cap)[m])


def _kernel_weights(N: int, theta: float) -> np.ndarray:
    """Signed weights ``(theta+2N-1)(-1)^{N-m}(theta+m)_(N-1)/(m!(N-m)!)`` for m = 0..N."""
    m = np.arange(N + 1)
    out = np.empty(N + 1)
    for i in m:
        a = theta + i
        if a > 0:
            lr = math.lgamma(a + N - 1) - math.lgamma(a)
            r = math.exp(lr - math.lgamma(i + 1) - math.lgamma(N - i + 1))
        else:
            # a = 0 (theta = 0, m = 0): (0)_(N-1) is 1 for N = 1, else 0
            r = 1.0 / math.factorial(N) if N == 1 else 0.0
        out[i] = (-1) ** (N - i) * r
    return (theta + 2 * N - 1) * out


def kernel_Q(nabs: int, x, y, dp: DirichletParams, cap: int = COMPOSITION_CAP) -> float:
    """Kernel polynomial of total degree ``nabs`` on Dirichlet(eps)."""
    if nabs < 1:
        raise DomainError("degree must be >= 1")
    dp.require_stationary()
    x = _check_simplex(x, dp.d, open_=False)
    y = _check_simplex(y, dp.d, open_=False)
    xi = _xi_all(nabs, x, y, dp, cap)
    return math.fsum(_kernel_weights(nabs, dp.theta) * xi)


def density_ddim_eigen(x, y, t: float, dp: DirichletParams, ctl: SeriesControl = DEFAULT_CONTROL) -> DensityValue:
    """``D(y, eps) {1 + sum_N rho_N(t) Q_N(x, y)}``."""
    dp.require_stationary()
    x = _check_simplex(x, dp.d, open_=False)
    y = _check_simplex(y, dp.d)
    if t <= 0:
        raise DomainError("t must be positive")
    th = dp.theta
    nmax = _n_terms(th, t, ctl)
    xi = _xi_all(nmax, x, y, dp)
    coeffs = np.empty(nmax + 1)
    coeffs[0] = 1.0
    for N in range(1, nmax + 1):
        coeffs[N] = math.exp(float(log_rho(N, th, t))) * math.fsum(_kernel_weights(N, th) * xi[: N + 1])
    total, order, last = _spectral_sum(coeffs, ctl, th, t)
    return _finish(math.exp(log_dirichlet_density(dp.eps, y)) * total, order, last, ctl, t)


def _xi0_all(mmax: int, x, y, d: int) -> np.ndarray:
    lxy = _log_xy(x, y)
    out = np.zeros(mmax + 1)
    for m in range(d, mmax + 1):
        ls = _composition_array(m, d, positive=True)
        log_terms = (
            math.lgamma(m + 1) - sps.gammaln(ls + 1).sum(axis=1)
            + math.lgamma(m) - sps.gammaln(ls).sum(axis=1)
            + (ls * lxy).sum(axis=1)
        )
        out[m] = math.fsum(np.exp(log_terms))
    return out


def _kernel0_weights(N: int) -> np.ndarray:
    out = np.zeros(N + 1)
    for m in range(1, N + 1):
        lr = math.lgamma(m + N - 1) - math.lgamma(m) - math.lgamma(m + 1) - math.lgamma(N - m + 1)
        out[m] = (-1) ** (N - m) * math.exp(lr)
    return (2 * N - 1) * out


def kernel_Q0(nabs: int, x, y, d: int) -> float:
    """Transient kernel for zero mutation; needs ``nabs >= d``."""
    if nabs < d:
        raise DomainError(f"kernel Q0 needs |n| >= d = {d}")
    x = _check_simplex(x, d)
    y = _check_simplex(y, d)
    xi = _xi0_all(nabs, x, y, d)
    return math.fsum(_kernel0_weights(nabs) * xi)


def density_ddim_zero(x, y, t: float, d: int, ctl: SeriesControl = DEFAULT_CONTROL) -> DensityValue:
    """Density on the open simplex when every mutation rate is zero (sub-probability)."""
    x = _check_simplex(x, d)
    y = _check_simplex(y, d)
    if t <= 0:
        raise DomainError("t must be positive")
    nmax = max(_n_terms(0.0, t, ctl), d + 2 * ctl.consecutive_small)
    xi = _xi0_all(nmax, x, y, d)
    coeffs = np.zeros(nmax + 1)
    for N in range(d, nmax + 1):
        coeffs[N] = math.exp(float(log_rho(N, 0.0, t))) * math.fsum(_kernel0_weights(N) * xi[: N + 1])
    total, order, last = _spectral_sum(coeffs, ctl, 0.0, t)
    return _finish(total / float(np.prod(y)), order, last, ctl, t)


def density_ddim_dual(x, y, t: float, dp: DirichletParams, ctl: SeriesControl = DEFAULT_CONTROL) -> DensityValue:
    """Coalescent mixture ``sum_L q_L(t) sum_{|l|=L} M(l, x) D(y, eps + l)``.

    Zero rates follow the generalized Dirichlet convention: a component with
    ``eps_i + l_i = 0`` is identically zero, so such terms put no mass on the
    open simplex and are dropped.
    """
    x = _check_simplex(x, dp.d, open_=False)
    y = _check_simplex(y, dp.d)
    if t <= 0:
        raise DomainError("t must be positive")
    eps = np.asarray(dp.eps)
    with np.errstate(divide="ignore"):
        lx = np.log(x)
    ly = np.log(y)
    q = cached_entrance_probs(dp.theta, t)
    parts = []
    order, last = 0, 0.0
    peak = int(np.argmax(q))
    run = 0
    for L, qL in enumerate(q):
        if run >= ctl.consecutive_small:
            break
        if qL <= 0:
            continue
        ls = _composition_array(L, dp.d)
        par = eps + ls
        keep = np.all(par > 0, axis=1) & np.all((ls == 0) | (x > 0), axis=1)
        if not np.any(keep):
            continue
        ls, par = ls[keep], par[keep]
        log_m = math.lgamma(L + 1) - sps.gammaln(ls + 1).sum(axis=1) + np.where(ls > 0, ls * lx, 0.0).sum(axis=1)
        log_d = sps.gammaln(par.sum(axis=1)) - sps.gammaln(par).sum(axis=1) + ((par - 1) * ly).sum(axis=1)
        term = qL * math.fsum(np.exp(log_m + log_d))
        parts.append(term)
        order, last = L, abs(term)
        # past the mode of q the terms decay; stop once they are negligible
        small = L > peak and abs(term) < ctl.tail_tol * abs(math.fsum(parts))
        run = run + 1 if small else 0
    return _finish(math.fsum(parts), order, last, ctl, t)
