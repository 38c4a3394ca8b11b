"""Correlation sequences and spectra of reversible Beta-stationary processes
with Jacobi polynomial eigenfunctions.

A reversible process of this kind has transition density

    f(x, y; t) = f_ab(y) {1 + sum_n c_n(t) h_n R_n(x) R_n(y)}

with ``c_n(t) = exp(-d_n t)``. This module builds ``d_n`` from a diffusion
coefficient and a jump measure, checks candidate ``c_n(t)`` for the semigroup
and positivity conditions, and evaluates the product kernel ``K(x, y, z)`` and
the Jacobi-Poisson kernel.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import special as sps

from .errors import DomainError, NonTerminatingSeries, TruncationError
from .series import SeriesControl
from .special import ModelParams, h_norm_array, jacobi_R_table

KERNEL_CONTROL = SeriesControl(max_terms=20000, tail_tol=1e-13)


@dataclass
class DiscreteMeasure:
    """Finite measure as a list of atoms and nonnegative masses."""

    atoms: np.ndarray
    masses: np.ndarray
    is_probability: bool = False

    def __post_init__(self):
        self.atoms = np.atleast_1d(np.asarray(self.atoms, dtype=float))
        self.masses = np.atleast_1d(np.asarray(self.masses, dtype=float))
        if self.atoms.shape != self.masses.shape or self.atoms.ndim != 1:
            raise DomainError("atoms and masses must be 1-d and of equal length")
        if not np.all(np.isfinite(self.masses)) or not np.all(np.isfinite(self.atoms)):
            raise DomainError("atoms and masses must be finite")
        if np.any(self.masses < 0):
            raise DomainError("masses must be nonnegative")
        if self.is_probability and abs(self.total() - 1.0) > 1e-12:
            raise DomainError(f"probability measure has total mass {self.total()}")

    @classmethod
    def empty(cls) -> "DiscreteMeasure":
        return cls(np.zeros(0), np.zeros(0))

    @classmethod
    def point(cls, atom: float, mass: float = 1.0) -> "DiscreteMeasure":
        return cls([atom], [mass], is_probability=(mass == 1.0))

    def __len__(self):
        return len(self.atoms)

    def total(self) -> float:
        return math.fsum(self.masses)

    def check_support(self, lo: float, hi: float, hi_open: bool = False):
        if len(self) == 0:
            return
        bad = (self.atoms < lo) | (self.atoms >= hi if hi_open else self.atoms > hi)
        if np.any(bad):
            bracket = ")" if hi_open else "]"
            raise DomainError(f"atoms {self.atoms[bad]} outside [{lo}, {hi}{bracket}")

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["atom", "mass"])
            for a, m in zip(self.atoms, self.masses):
                w.writerow([repr(float(a)), repr(float(m))])

    @classmethod
    def from_csv(cls, path, is_probability: bool = False) -> "DiscreteMeasure":
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["atom", "mass"]:
                raise DomainError(f"{path}: expected header 'atom,mass'")
            atoms, masses = [], []
            for row in reader:
                try:
                    atoms.append(float(row["atom"]))
                    masses.append(float(row["mass"]))
                except (TypeError, ValueError) as exc:
                    raise DomainError(f"{path}: bad row {row}") from exc
        return cls(np.array(atoms), np.array(masses), is_probability=is_probability)


@dataclass
class CorrelationSequence:
    values: np.ndarray
    origin: str = "user"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.origin not in ("mixing", "spectrum", "subordinated", "user"):
            raise DomainError(f"unknown origin {self.origin!r}")
        if self.values.size == 0 or abs(self.values[0] - 1.0) > 1e-12:
            raise DomainError("a correlation sequence starts at 1")
        if np.any(np.abs(self.values) > 1 + 1e-12):
            raise DomainError("correlation sequence entries must lie in [-1, 1]")

    def __len__(self):
        return len(self.values)

    def __getitem__(self, n):
        return self.values[n]


def gasper_domain(params: ModelParams) -> bool:
    """Parameter region where every positive-definite sequence is a mixture of ``R_n(z)``."""
    a, b = params.alpha, params.beta
    if a <= 0 or b <= 0:
        raise DomainError("alpha and beta must be positive")
    return a < b and (a >= 0.5 or a + b >= 2)


def rho_from_mixing(nmax: int, zlaw: DiscreteMeasure, params: ModelParams) -> CorrelationSequence:
    """``rho_n = E[R_n(Z)]`` for ``Z`` distributed as ``zlaw`` on [0, 1]."""
    if not zlaw.is_probability:
        raise DomainError("mixing law must be a probability measure")
    zlaw.check_support(0.0, 1.0)
    table = jacobi_R_table(nmax, params, zlaw.atoms)
    vals = np.array([math.fsum(row * zlaw.masses) for row in table])
    vals[0] = 1.0
    # mixtures of R_n(z) stay in [-1, 1] only up to rounding
    return CorrelationSequence(np.clip(vals, -1.0, 1.0), origin="mixing")


def bivariate_scan(rho, params: ModelParams, grid=None) -> tuple[float, float, float]:
    """Minimum over ``grid x grid`` of ``1 + sum_n rho_n h_n R_n(x) R_n(y)``.

    The series is truncated at ``len(rho) - 1``. Returns ``(min, x, y)``.
    """
    values = np.asarray(getattr(rho, "values", rho), dtype=float)
    if grid is None:
        grid = np.linspace(0.0, 1.0, 21)
    grid = np.asarray(grid, dtype=float)
    nmax = len(values) - 1
    table = jacobi_R_table(nmax, params, grid)
    w = values * h_norm_array(nmax, params)
    dens = np.einsum("n,ni,nj->ij", w, table, table)
    i, j = np.unravel_index(np.argmin(dens), dens.shape)
    return float(dens[i, j]), float(grid[i]), float(grid[j])


# ---------------------------------------------------------------------------
# product kernel


@dataclass
class KernelValue:
    truncated: float
    smoothed: float
    n_terms: int
    smoothed_order: int
    r: float


def _adaptive_series(weights_fn, points, params: ModelParams, ctl: SeriesControl):
    """Sum ``sum_n weights_fn(n) prod_p R_n(p)`` until the terms settle.

    ``weights_fn`` takes an index array and returns the (already log-safe)
    weights. Returns ``(sum, order, last)``.
    """
    nmax = 64
    while True:
        nmax = min(nmax, ctl.max_terms)
        table = jacobi_R_table(nmax, params, np.asarray(points, dtype=float))
        terms = weights_fn(np.arange(nmax + 1)) * np.prod(table, axis=1)
        small = np.abs(terms) < ctl.tail_tol
        run = 0
        for n in range(1, nmax + 1):
            run = run + 1 if small[n] else 0
            if run >= ctl.consecutive_small:
                return math.fsum(terms[: n + 1]), n, float(abs(terms[n]))
        if nmax >= ctl.max_terms:
            raise TruncationError(f"series not settled after {nmax} terms")
        nmax *= 2


def _log_h(nmax: int, params: ModelParams) -> np.ndarray:
    a, b, th = params.alpha, params.beta, params.theta
    n = np.arange(1, nmax + 1)
    rest = (
        np.log(2 * n + th - 1)
        + sps.gammaln(th + n - 1) - sps.gammaln(th)
        + sps.gammaln(b + n) - sps.gammaln(b)
        - sps.gammaln(a + n) + sps.gammaln(a)
        - sps.gammaln(n + 1)
    )
    return np.concatenate([[0.0], rest])


def kernel_K(
    x: float,
    y: float,
    z: float,
    params: ModelParams,
    n_terms: int = 50,
    r: float = 0.99,
    ctl: SeriesControl = KERNEL_CONTROL,
) -> KernelValue:
    """Product kernel ``sum_n h_n R_n(x) R_n(y) R_n(z)``.

    The full series diverges (at ``z = 1`` it is a point mass), so two
    surrogates are returned: the partial sum through ``n_terms`` and the
    Abel-smoothed sum with weights ``r^n``, summed to convergence.
    """
    params.require_stationary()
    for v in (x, y, z):
        if not 0.0 <= v <= 1.0:
            raise DomainError("x, y, z must lie in [0, 1]")
    if not 0.0 <= r < 1.0:
        raise DomainError("r must lie in [0, 1)")
    if n_terms < 0:
        raise DomainError("n_terms must be nonnegative")
    if not gasper_domain(params):
        warnings.warn(f"{params} lies outside the region where K is known to be nonnegative", stacklevel=2)
    pts = [x, y, z]
    table = jacobi_R_table(n_terms, params, pts)
    truncated = math.fsum(h_norm_array(n_terms, params) * np.prod(table, axis=1))
    if r == 0.0:
        smoothed, order = 1.0, 0
    else:
        lr = math.log(r)

        def weights(n):
            return np.exp(_log_h(int(n[-1]), params) + n * lr)

        smoothed, order, _ = _adaptive_series(weights, pts, params, ctl)
    return KernelValue(truncated, smoothed, n_terms, order, r)


def search_K_negative(params: ModelParams, grid=None, r: float = 0.99, n_terms: int = 50):
    """Grid search for the most negative smoothed ``K(x, y, z)``.

    Returns ``(value, (x, y, z))``. Finding a negative value is evidence, not
    proof, that positivity fails for these parameters.
    """
    if grid is None:
        grid = np.linspace(0.0, 1.0, 11)
    best = (math.inf, None)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for i, x in enumerate(grid):
            for j, y in enumerate(grid[i:], start=i):
                for z in grid[j:]:
                    v = kernel_K(x, y, z, params, n_terms=n_terms, r=r).smoothed
                    if v < best[0]:
                        best = (v, (float(x), float(y), float(z)))
    return best


# ---------------------------------------------------------------------------
# spectra


def spectrum_dn(n: int, sigma: float, nu: DiscreteMeasure, params: ModelParams) -> float:
    """``sigma n(n+theta-1) + sum nu(z) (1 - R_n(z)) / (1 - z)`` over atoms in [0, 1)."""
    if n < 0:
        raise DomainError("n must be nonnegative")
    if sigma < 0:
        raise DomainError("sigma must be nonnegative")
    nu.check_support(0.0, 1.0, hi_open=True)
    if n == 0:
        return 0.0
    diff = sigma * n * (n + params.theta - 1)
    if len(nu) == 0:
        return diff
    rn = jacobi_R_table(n, params, nu.atoms)[n]
    return diff + math.fsum(nu.masses * (1.0 - rn) / (1.0 - nu.atoms))


def spectrum_array(nmax: int, sigma: float, nu: DiscreteMeasure, params: ModelParams) -> np.ndarray:
    nu.check_support(0.0, 1.0, hi_open=True)
    n = np.arange(nmax + 1)
    out = sigma * n * (n + params.theta - 1.0)
    if len(nu):
        table = jacobi_R_table(nmax, params, nu.atoms)
        out = out + ((1.0 - table) / (1.0 - nu.atoms)) @ nu.masses
    out[0] = 0.0
    return out


def dn_atom_limit(n: int, params: ModelParams) -> float:
    """``lim_{z -> 1} (1 - R_n(z)) / (1 - z)``, i.e. ``R_n'(1)``.

    Only the linear term of the terminating series in ``1 - z`` survives,
    which gives ``n (n + theta - 1) / beta``.
    """
    if n < 0:
        raise DomainError("n must be nonnegative")
    if params.beta <= 0:
        raise DomainError("beta must be positive")
    if n == 0:
        return 0.0
    # first coefficient: -(-n)(n + theta - 1) / beta
    return n * (n + params.theta - 1) / params.beta


def poisson_dn(n: int, lam: float, mu: DiscreteMeasure, params: ModelParams) -> float:
    """Spectrum of a Markov chain run at the jumps of a rate ``lam`` Poisson process."""
    if lam <= 0:
        raise DomainError("rate must be positive")
    if not mu.is_probability:
        raise DomainError("mu must be a probability measure")
    mu.check_support(0.0, 1.0)
    if n == 0:
        return 0.0
    rn = jacobi_R_table(n, params, mu.atoms)[n]
    return lam * math.fsum(mu.masses * (1.0 - rn))


def exponential_correlations(dn: np.ndarray) -> Callable[[float], CorrelationSequence]:
    """``t -> exp(-d_n t)`` as a correlation-sequence valued function."""
    dn = np.asarray(dn, dtype=float)
    return lambda t: CorrelationSequence(np.exp(-dn * t), origin="spectrum")


@dataclass
class BochnerReport:
    continuity: bool
    normalization: bool
    semigroup: bool
    positive_definite: bool | None
    failures: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return (
            self.continuity
            and self.normalization
            and self.semigroup
            and self.positive_definite is not False
        )


def _values(c, t):
    v = c(t)
    return np.asarray(getattr(v, "values", v), dtype=float)


def bochner_consistency(
    c: Callable[[float], object],
    tgrid,
    params: ModelParams | None = None,
    tol: float = 1e-10,
    continuity_step: float = 1e-8,
    continuity_tol: float = 1e-4,
    scan_grid=None,
) -> BochnerReport:
    """Check a family ``c_n(t)`` for the four conditions on a transition spectrum.

    Continuity compares ``c(t)`` with ``c(t + step)``; normalization needs
    ``c_n(0) = c_0(t) = 1``; the semigroup law is checked on all pairs of grid
    times. Positive-definiteness is probed with :func:`bivariate_scan` when
    ``params`` is given, and left as ``None`` otherwise. ``c`` may return
    plain arrays so that malformed candidates can be examined.
    """
    tgrid = [float(t) for t in tgrid]
    failures = []
    cont = True
    for t in tgrid:
        gap = float(np.max(np.abs(_values(c, t + continuity_step) - _values(c, t))))
        if not gap <= continuity_tol:
            cont = False
            failures.append(("continuity", t, gap))
    norm = True
    at0 = _values(c, 0.0)
    if np.max(np.abs(at0 - 1.0)) > tol:
        norm = False
        failures.append(("normalization", 0.0, float(np.max(np.abs(at0 - 1.0)))))
    for t in tgrid:
        v0 = _values(c, t)[0]
        if abs(v0 - 1.0) > tol:
            norm = False
            failures.append(("normalization", t, float(abs(v0 - 1.0))))
    semi = True
    for i, s in enumerate(tgrid):
        for t in tgrid[i:]:
            gap = float(np.max(np.abs(_values(c, s + t) - _values(c, s) * _values(c, t))))
            if gap > tol:
                semi = False
                failures.append(("semigroup", (s, t), gap))
    pd = None
    if params is not None:
        pd = True
        for t in tgrid:
            if t <= 0:
                continue
            val, x, y = bivariate_scan(_values(c, t), params, scan_grid)
            if val < -1e-8:
                pd = False
                failures.append(("positive_definite", t, (val, x, y)))
    return BochnerReport(cont, norm, semi, pd, failures)


# ---------------------------------------------------------------------------
# Jacobi-Poisson kernel


def jacobi_poisson_kernel(r: float, x: float, y: float, params: ModelParams, ctl: SeriesControl = KERNEL_CONTROL) -> float:
    """``1 + sum_{n>=1} r^n h_n R_n(x) R_n(y)`` for ``0 <= r < 1``."""
    params.require_stationary()
    if not 0.0 <= r < 1.0:
        raise DomainError("r must lie in [0, 1)")
    if not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0):
        raise DomainError("x and y must lie in [0, 1]")
    if r == 0.0:
        return 1.0
    lr = math.log(r)

    def weights(n):
        return np.exp(_log_h(int(n[-1]), params) + n * lr)

    value, _, _ = _adaptive_series(weights, [x, y], params, ctl)
    return value


def classical_poisson_series(r: float, x: float, y: float, a: float, b: float, n_terms: int = 400) -> float:
    """Truncated ``sum_n r^n phi_n P_n^{(a,b)}(x) P_n^{(a,b)}(y)`` for classical Jacobi polynomials on [-1, 1].

    ``phi_n`` is the reciprocal of ``int P_n^2 (1-x)^a (1+x)^b dx``.
    """
    n = np.arange(n_terms + 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_norm = (
            (a + b + 1) * math.log(2.0)
            - np.log(2 * n + a + b + 1)
            + sps.gammaln(n + a + 1) + sps.gammaln(n + b + 1)
            - sps.gammaln(n + 1) - sps.gammaln(n + a + b + 1)
        )
    if a + b + 1 == 0:
        # n = 0 term: 2n + a + b + 1 and Gamma(n + a + b + 1) both vanish
        log_norm[0] = (a + b + 1) * math.log(2.0) + sps.gammaln(a + 1) + sps.gammaln(b + 1) - sps.gammaln(a + b + 2)
    px = sps.eval_jacobi(n, a, b, x)
    py = sps.eval_jacobi(n, a, b, y)
    if r == 0.0:
        return float(np.exp(-log_norm[0]))
    terms = np.exp(n * math.log(r) - log_norm) * px * py
    return math.fsum(terms)


def jacobi_poisson_bilinear(
    r: float, x: float, y: float, a: float, b: float, ctl: SeriesControl = KERNEL_CONTROL
) -> float:
    """Closed double-series form of the classical Jacobi-Poisson kernel.

    With ``x = cos 2u``, ``y = cos 2v``, ``A = sin u sin v``, ``B = cos u cos v``
    and ``k = (r^{1/2} + r^{-1/2}) / 2``,

        prefactor * sum_{m,n} ((a+b+2)/2)_{m+n} ((a+b+3)/2)_{m+n}
                    / ((a+1)_m (b+1)_n m! n!) (A/k)^{2m} (B/k)^{2n}.

    All terms are positive, so the sum is accumulated by total degree
    ``m + n`` until a whole diagonal, and a geometric estimate of the
    diagonals after it, fall below ``tail_tol`` relative to the running total.
    """
    if not (a > -1 and b > -1):
        raise DomainError("exponents must exceed -1")
    if not 0.0 <= r < 1.0:
        raise DomainError("r must lie in [0, 1)")
    if not (-1.0 <= x <= 1.0 and -1.0 <= y <= 1.0):
        raise DomainError("x and y must lie in [-1, 1]")
    log_pref = (
        sps.gammaln(a + b + 2) + math.log1p(-r)
        - (a + b + 1) * math.log(2.0) - sps.gammaln(a + 1) - sps.gammaln(b + 1)
        - (a + b + 2) * math.log1p(r)
    )
    if r == 0.0:
        return math.exp(log_pref)
    u, v = math.acos(x) / 2.0, math.acos(y) / 2.0
    k = (math.sqrt(r) + 1.0 / math.sqrt(r)) / 2.0
    A2 = (math.sin(u) * math.sin(v) / k) ** 2
    B2 = (math.cos(u) * math.cos(v) / k) ** 2
    with np.errstate(divide="ignore"):
        lA, lB = np.log(A2), np.log(B2)
    c1, c2 = (a + b + 2) / 2.0, (a + b + 3) / 2.0
    diag_sums = []
    run = 0
    for s in range(ctl.max_terms + 1):
        m = np.arange(s + 1)
        nn = s - m
        logs = (
            sps.gammaln(c1 + s) - sps.gammaln(c1) + sps.gammaln(c2 + s) - sps.gammaln(c2)
            - (sps.gammaln(a + 1 + m) - sps.gammaln(a + 1))
            - (sps.gammaln(b + 1 + nn) - sps.gammaln(b + 1))
            - sps.gammaln(m + 1) - sps.gammaln(nn + 1)
            + np.where(m > 0, m * lA, 0.0) + np.where(nn > 0, nn * lB, 0.0)
        )
        d = math.fsum(np.exp(logs))
        diag_sums.append(d)
        total = math.fsum(diag_sums)
        # geometric estimate of everything beyond this diagonal
        ratio = d / diag_sums[-2] if s > 0 and diag_sums[-2] > 0 else 1.0
        tail = d * ratio / (1.0 - ratio) if ratio < 1.0 else math.inf
        run = run + 1 if d < ctl.tail_tol * total and tail < ctl.tail_tol * total else 0
        if run >= ctl.consecutive_small:
            return math.exp(log_pref) * total
    raise TruncationError(f"double series not settled after {ctl.max_terms} diagonals")


def poisson_kernel_scale(params: ModelParams) -> float:
    """Factor mapping the classical series to :func:`jacobi_poisson_kernel`.

    ``jacobi_poisson_kernel(r, x, y) = scale * classical(r, 2x-1, 2y-1; beta-1, alpha-1)``.
    """
    a, b = params.beta - 1.0, params.alpha - 1.0
    return math.exp(
        (a + b + 1) * math.log(2.0) + sps.gammaln(a + 1) + sps.gammaln(b + 1) - sps.gammaln(a + b + 2)
    )


# ---------------------------------------------------------------------------
# complete monotonicity probe


def cm_roots(lam, theta: float):
    """``r1, r2`` with ``(j + r1)(j + r2) = j(j + theta - 1) - 2 lam``.

    At ``lam = n(n + theta - 1)/2`` they are ``n + theta - 1`` and ``-n``.
    """
    lam = np.asarray(lam, dtype=float)
    half = (theta - 1.0) / 2.0
    rad = np.sqrt(2.0 * lam + half * half)
    return half + rad, half - rad


@dataclass
class CMReport:
    lam: np.ndarray
    values: np.ndarray
    passed: bool
    failed_order: int | None
    max_order: int


def _cm_function(lam, nu: DiscreteMeasure, params: ModelParams) -> np.ndarray:
    r1, r2 = cm_roots(lam, params.theta)
    out = np.zeros(len(r1))
    for z, m in zip(nu.atoms, nu.masses):
        with np.errstate(all="ignore"):
            f = sps.hyp2f1(r1, r2, params.beta, 1.0 - z)
        if not np.all(np.isfinite(f)):
            raise NonTerminatingSeries(
                f"2F1 diverges at atom {z} (beta={params.beta}, theta={params.theta})"
            )
        out -= m * (f - 1.0) / (1.0 - z)
    return out


def cm_probe(lam_grid, nu: DiscreteMeasure, params: ModelParams, max_order: int = 6, tol: float = 1e-12) -> CMReport:
    """Heuristic test that the rate function has a completely monotone derivative.

    Evaluates ``F(lam) = -sum nu(y) [2F1(.., ..; beta; 1 - y) - 1] / (1 - y)``
    and checks that the finite differences ``(-1)^{k-1} Delta^k F`` are
    nonnegative for ``k = 1 .. max_order`` on the given (sorted) grid.
    This is a probe and proves nothing.
    """
    lam = np.sort(np.asarray(lam_grid, dtype=float))
    if np.any(lam <= 0):
        raise DomainError("lambda grid must be positive")
    nu.check_support(0.0, 1.0, hi_open=True)
    vals = _cm_function(lam, nu, params)
    scale = max(1.0, float(np.max(np.abs(vals))))
    diff = vals.copy()
    xs = lam.copy()
    for k in range(1, max_order + 1):
        if len(diff) < 2:
            break
        # divided differences keep the sign pattern of derivatives on uneven grids
        diff = (diff[1:] - diff[:-1]) / (xs[k:] - xs[:-k])
        if np.any((-1) ** (k - 1) * diff < -tol * scale):
            return CMReport(lam, vals, False, k, max_order)
    return CMReport(lam, vals, True, None, max_order)
