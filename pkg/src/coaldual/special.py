"""Special functions on the Beta(alpha, beta) law.

Jacobi polynomials appear here in three normalizations:

* ``R_n(y) = 2F1(-n, n + theta - 1; beta; 1 - y)``, scaled so ``R_n(1) = 1``;
* the orthonormal ``P~_n(y) = sqrt(h_n) R_n(y)`` with ``E[P~_m P~_n] = delta_mn``
  under Beta(alpha, beta);
* the classical ``P_n^{(a, b)}`` on [-1, 1] (used only through scipy for the
  quadrature oracle and in :mod:`coaldual.spectra`).

The recurrence in :func:`jacobi_R_table` is the production path. The
terminating hypergeometric sum in :func:`jacobi_R_hyp` is kept as an
independent oracle; in float arithmetic it loses accuracy for large ``n``, so
it accepts an ``mpmath`` working precision.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import mpmath
import numpy as np
from scipy import special as sps

from .errors import ConvergenceError, DomainError, PoleError

DEFAULT_QUADRATURE_NODES = 64


@dataclass(frozen=True)
class ModelParams:
    """Mutation parameters of the two-allele diffusion.

    ``alpha`` drives the frequency of type ``a`` upward (rate ``alpha / 2``
    for ``A -> a``), ``beta`` drives it downward. The stationary law of the
    frequency of ``a`` is Beta(alpha, beta).
    """

    alpha: float
    beta: float

    def __post_init__(self):
        if not (self.alpha >= 0 and self.beta >= 0):
            raise DomainError(f"mutation parameters must be nonnegative, got {self}")
        if not (math.isfinite(self.alpha) and math.isfinite(self.beta)):
            raise DomainError(f"mutation parameters must be finite, got {self}")

    @property
    def theta(self) -> float:
        return self.alpha + self.beta

    def require_stationary(self):
        if self.alpha <= 0 or self.beta <= 0:
            raise DomainError(
                f"a stationary density needs alpha, beta > 0, got {self.alpha}, {self.beta}"
            )


@dataclass(frozen=True)
class DirichletParams:
    """Parent-independent mutation rates of a d-type diffusion."""

    eps: tuple[float, ...]

    def __init__(self, eps: Sequence[float]):
        eps = tuple(float(e) for e in eps)
        if len(eps) < 2:
            raise DomainError("need at least two types")
        if any(e < 0 or not math.isfinite(e) for e in eps):
            raise DomainError(f"mutation rates must be finite and nonnegative, got {eps}")
        object.__setattr__(self, "eps", eps)

    @property
    def d(self) -> int:
        return len(self.eps)

    @property
    def theta(self) -> float:
        return math.fsum(self.eps)

    def require_stationary(self):
        if min(self.eps) <= 0:
            raise DomainError("a stationary Dirichlet density needs every eps_i > 0")


@dataclass(frozen=True)
class Quadrature:
    """Nodes on (0, 1) and probability weights."""

    nodes: np.ndarray
    weights: np.ndarray

    def integrate(self, values) -> float:
        return math.fsum(np.asarray(values, dtype=float) * self.weights)


# ---------------------------------------------------------------------------
# Pochhammer symbols and terminating 2F1


def log_rising(a: float, n: int) -> tuple[float, int]:
    """Log-magnitude and sign of the rising factorial ``a (a+1) ... (a+n-1)``.

    Returns ``(-inf, 0)`` when a factor is exactly zero.
    """
    if n < 0:
        raise DomainError("n must be nonnegative")
    if n == 0:
        return 0.0, 1
    top = a + n - 1
    if a > 0:
        return math.lgamma(a + n) - math.lgamma(a), 1
    if a == int(a) and top >= 0:
        return -math.inf, 0
    if top < 0:
        # every factor negative: |(a)_n| = (|top|)_n
        sign = -1 if n % 2 else 1
        return math.lgamma(-a + 1) - math.lgamma(-top), sign
    # factors straddle zero without hitting it
    log_abs = math.lgamma(a + n) - math.lgamma(a)
    sign = int(sps.gammasgn(a + n) * sps.gammasgn(a))
    return log_abs, sign


def rising(a: float, n: int) -> float:
    log_abs, sign = log_rising(a, n)
    return sign * math.exp(log_abs) if sign else 0.0


def _check_terminating(a, c):
    if a != int(a) or a > 0:
        raise DomainError(f"first parameter must be a nonpositive integer, got {a}")
    if c == int(c) and c <= 0 and c > a:
        raise PoleError(f"c = {c} is a pole reached before the series terminates (a = {a})")


def hyp2f1_terminating(a: int, b: float, c: float, z, dps: int | None = None):
    """Terminating Gauss series ``sum_{k=0}^{-a} (a)_k (b)_k / ((c)_k k!) z^k``.

    ``z`` may be real or complex. Coefficients come from a running product of
    term ratios (exact for small integer arguments), falling back to
    log-magnitude/sign form when that would overflow; the terms are then
    accumulated with exact float summation. With ``dps``
    set, the sum is instead carried out in ``mpmath`` at that many digits and
    returned as a float (or complex).
    """
    _check_terminating(a, c)
    n = int(-a)
    if dps is not None:
        with mpmath.workdps(dps):
            b_, c_, z_ = mpmath.mpf(b), mpmath.mpf(c), mpmath.mpmathify(z)
            term = mpmath.mpf(1)
            total = mpmath.mpf(1)
            for k in range(n):
                term = term * (k - n) * (b_ + k) / ((c_ + k) * (k + 1)) * z_
                total += term
            return complex(total) if isinstance(z, complex) else float(total)
    if n == 0:
        return complex(1.0) if isinstance(z, complex) else 1.0
    k = np.arange(n + 1)
    coef = _ratio_product_coefficients(n, float(b), float(c))
    if coef is None:
        coef = _log_form_coefficients(a, b, c, n)
    if isinstance(z, complex) or np.iscomplexobj(z):
        powers = np.asarray(z, dtype=complex) ** k
        terms = coef * powers
        return complex(math.fsum(terms.real), math.fsum(terms.imag))
    terms = coef * float(z) ** k
    return math.fsum(terms)


def _ratio_product_coefficients(n: int, b: float, c: float):
    """Coefficients by running product of term ratios; ``None`` if out of range."""
    coef = np.empty(n + 1)
    cur = 1.0
    coef[0] = cur
    for i in range(n):
        cur = cur * ((i - n) * (b + i)) / ((c + i) * (i + 1))
        if not math.isfinite(cur) or (cur != 0.0 and not 1e-290 < abs(cur) < 1e290):
            return None
        coef[i + 1] = cur
    return coef


def _log_form_coefficients(a, b, c, n: int) -> np.ndarray:
    log_coef = np.empty(n + 1)
    sign = np.empty(n + 1)
    for i in range(n + 1):
        la, sa = log_rising(float(a), i)
        lb, sb = log_rising(float(b), i)
        lc, sc = log_rising(float(c), i)
        log_coef[i] = la + lb - lc - math.lgamma(i + 1)
        sign[i] = sa * sb * sc
    return sign * np.exp(log_coef)


# ---------------------------------------------------------------------------
# Jacobi polynomials


def _require_poly_params(params: ModelParams):
    if params.beta <= 0 or params.theta <= 0:
        raise DomainError("Jacobi polynomials R_n need beta > 0 and theta > 0")


def jacobi_R_table(nmax: int, params: ModelParams, x) -> np.ndarray:
    """All ``R_0 .. R_nmax`` at ``x``; shape ``(nmax + 1,) + shape(x)``.

    Uses the three-term recurrence rewritten around ``y = 1``:

        R_{n+1} = R_n + s_n (y - 1) R_n + g_n (R_n - R_{n-1}),

    which leaves ``R_n(1) = 1`` exact in floating point.
    """
    _require_poly_params(params)
    a, b, th = params.alpha, params.beta, params.theta
    y = np.asarray(x, dtype=float)
    out = np.empty((nmax + 1,) + y.shape)
    out[0] = 1.0
    if nmax == 0:
        return out
    ym1 = y - 1.0
    out[1] = 1.0 + (th / b) * ym1
    for n in range(1, nmax):
        s = (2 * n + th - 1) * (2 * n + th) / ((n + th - 1) * (n + b))
        g = n * (n + a - 1) * (2 * n + th) / ((n + b) * (n + th - 1) * (2 * n + th - 2))
        out[n + 1] = out[n] + s * ym1 * out[n] + g * (out[n] - out[n - 1])
    return out


def jacobi_R(n: int, params: ModelParams, x):
    """``R_n`` normalized so that ``R_n(1) = 1``."""
    if n < 0:
        raise DomainError("degree must be nonnegative")
    val = jacobi_R_table(n, params, x)[n]
    return float(val) if np.ndim(val) == 0 else val


def jacobi_R_hyp(n: int, params: ModelParams, x: float, dps: int | None = None) -> float:
    """Oracle evaluation of ``R_n`` by its terminating 2F1 form."""
    _require_poly_params(params)
    return hyp2f1_terminating(-n, n + params.theta - 1, params.beta, 1.0 - x, dps=dps)


def log_h_norm(n: int, params: ModelParams) -> float:
    if n == 0:
        return 0.0
    a, b, th = params.alpha, params.beta, params.theta
    # (theta)_{(n-1)} (2n + theta - 1) = Gamma(theta + n - 1)(2n + theta - 1) / Gamma(theta)
    return (
        math.log(2 * n + th - 1)
        + math.lgamma(th + n - 1) - math.lgamma(th)
        + math.lgamma(b + n) - math.lgamma(b)
        - math.lgamma(a + n) + math.lgamma(a)
        - math.lgamma(n + 1)
    )


def h_norm(n: int, params: ModelParams) -> float:
    """Reciprocal squared norm ``h_n = 1 / E[R_n(Y)^2]`` under Beta(alpha, beta)."""
    params.require_stationary()
    if n < 0:
        raise DomainError("degree must be nonnegative")
    return math.exp(log_h_norm(n, params))


def h_norm_array(nmax: int, params: ModelParams) -> np.ndarray:
    params.require_stationary()
    return np.exp([log_h_norm(n, params) for n in range(nmax + 1)])


def jacobi_orthonormal_table(nmax: int, params: ModelParams, x) -> np.ndarray:
    params.require_stationary()
    table = jacobi_R_table(nmax, params, x)
    scale = np.sqrt(h_norm_array(nmax, params))
    return table * scale.reshape((-1,) + (1,) * (table.ndim - 1))


def jacobi_orthonormal(n: int, params: ModelParams, x):
    """Orthonormal Jacobi polynomial on Beta(alpha, beta), positive at ``x = 1``."""
    params.require_stationary()
    val = math.sqrt(h_norm(n, params)) * np.asarray(jacobi_R(n, params, x))
    return float(val) if np.ndim(val) == 0 else val


def classical_jacobi_c(n: int, params: ModelParams) -> float:
    """Constant with ``P~_n(x) = c_n P_n^{(beta-1, alpha-1)}(2x - 1)``."""
    params.require_stationary()
    a, b, th = params.alpha, params.beta, params.theta
    if n == 0:
        return 1.0
    log_c2 = (
        math.log(2 * n + th - 1)
        + math.lgamma(th + n - 1) - math.lgamma(th)
        + math.lgamma(n + 1)
        - (math.lgamma(a + n) - math.lgamma(a))
        - (math.lgamma(b + n) - math.lgamma(b))
    )
    return math.exp(0.5 * log_c2)


# ---------------------------------------------------------------------------
# Densities


def log_beta_density(params: ModelParams, y):
    params.require_stationary()
    y = np.asarray(y, dtype=float)
    if np.any((y <= 0) | (y >= 1)):
        raise DomainError("Beta density is evaluated on the open interval (0, 1)")
    a, b = params.alpha, params.beta
    return (a - 1) * np.log(y) + (b - 1) * np.log1p(-y) - sps.betaln(a, b)


def beta_density(params: ModelParams, y):
    val = np.exp(log_beta_density(params, y))
    return float(val) if np.ndim(val) == 0 else val


def _check_simplex(x, d=None, open_=True):
    x = np.asarray(x, dtype=float)
    if d is not None and x.shape[-1] != d:
        raise DomainError(f"simplex point must have {d} coordinates")
    if np.any(np.abs(x.sum(axis=-1) - 1.0) > 1e-10):
        raise DomainError("simplex coordinates must sum to 1")
    if open_ and np.any(x <= 0):
        raise DomainError("point must lie in the open simplex")
    if np.any(x < 0):
        raise DomainError("simplex coordinates must be nonnegative")
    return x


def log_dirichlet_density(eps: Sequence[float], x) -> float:
    eps = np.asarray(eps, dtype=float)
    if np.any(eps <= 0):
        raise DomainError("Dirichlet parameters must be positive")
    x = _check_simplex(x, len(eps))
    return float(
        math.lgamma(eps.sum()) - sum(math.lgamma(e) for e in eps) + np.sum((eps - 1) * np.log(x))
    )


def dirichlet_density(dp: DirichletParams, x) -> float:
    """Dirichlet(eps) density with respect to Lebesgue measure on the first d-1 coordinates."""
    dp.require_stationary()
    return math.exp(log_dirichlet_density(dp.eps, x))


# ---------------------------------------------------------------------------
# Quadrature


def gauss_jacobi(m: int = DEFAULT_QUADRATURE_NODES, params: ModelParams | None = None) -> Quadrature:
    """m-point Gauss rule for Beta(alpha, beta) on (0, 1), weights summing to one.

    Exact for polynomials of degree up to ``2m - 1``. Nodes come from scipy's
    Golub-Welsch solver for the classical weight ``(1-x)^(beta-1) (1+x)^(alpha-1)``.
    """
    if m < 1:
        raise DomainError("need at least one node")
    if params is None:
        params = ModelParams(1.0, 1.0)
    params.require_stationary()
    try:
        x, w = sps.roots_jacobi(m, params.beta - 1.0, params.alpha - 1.0)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise ConvergenceError(f"Gauss-Jacobi node solver failed: {exc}") from exc
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(w)) and np.all(w > 0)):
        raise ConvergenceError("Gauss-Jacobi node solver returned non-finite nodes or weights")
    order = np.argsort(x)
    nodes = (x[order] + 1.0) / 2.0
    w = w[order]
    return Quadrature(nodes=nodes, weights=w / math.fsum(w))


def beta_moment(params: ModelParams, j: int, k: int = 0) -> float:
    """``E[Y^j (1-Y)^k]`` under Beta(alpha, beta)."""
    a, b = params.alpha, params.beta
    return math.exp(sps.betaln(a + j, b + k) - sps.betaln(a, b))


def compositions(m: int, d: int, positive: bool = False):
    """Yield all tuples of ``d`` nonnegative (or positive) integers summing to ``m``."""
    if positive:
        if m < d:
            return
        for c in compositions(m - d, d):
            yield tuple(ci + 1 for ci in c)
        return
    if d == 1:
        yield (m,)
        return
    for cut in itertools.combinations(range(m + d - 1), d - 1):
        prev = -1
        parts = []
        for c in cut:
            parts.append(c - prev - 1)
            prev = c
        parts.append(m + d - 2 - prev)
        yield tuple(parts)


def n_compositions(m: int, d: int, positive: bool = False) -> int:
    if positive:
        return math.comb(m - 1, d - 1) if m >= d else 0
    return math.comb(m + d - 1, d - 1)
