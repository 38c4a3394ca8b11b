"""Lines-of-descent death process: the coalescent dual of the Jacobi diffusion.

While ``k`` non-mutant lineages remain, one is lost at rate
``k (k + theta - 1) / 2`` (coalescence ``k(k-1)/2`` plus mutation
``k theta / 2``). This module evaluates its transition functions from the
entrance boundary at infinity and from a finite start, the Monte Carlo
complex-variable representations of both, and the two-type dual.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import mpmath
import numpy as np
from scipy import special as sps

from .errors import DomainError, PrecisionLoss, TruncationError
from .series import (
    CANCELLATION_BUDGET,
    DEFAULT_CONTROL,
    MCEstimate,
    ProbVector,
    RunningMoments,
    SeriesControl,
    block_rngs,
    signed_sum,
)
from .special import ModelParams, hyp2f1_terminating, rising

ABS_BUDGET = 1e-11
# finite-start float sums accepted below this rounding bound
FINITE_BUDGET = 1e-13


def log_rho(j, theta: float, t: float):
    j = np.asarray(j, dtype=float)
    return -0.5 * j * (j + theta - 1.0) * t


def rho(n: int, theta: float, t: float) -> float:
    """Diffusion eigenvalue ``exp(-n (n + theta - 1) t / 2)``."""
    if t < 0:
        raise DomainError("time must be nonnegative")
    return math.exp(float(log_rho(n, theta, t)))


def _coef_logs(k: int, theta: float, j: np.ndarray):
    """log|c| and sign of ``(-1)^{j-k} (2j+theta-1) (k+theta)_{(j-1)} / (k! (j-k)!)``."""
    j = np.asarray(j, dtype=np.int64)
    log_abs = np.empty(j.shape)
    sign = np.where((j - k) % 2 == 0, 1.0, -1.0)
    base = -sps.gammaln(k + 1) - sps.gammaln(j - k + 1)
    zero_j = j == 0
    if k + theta > 0:
        jj = np.where(zero_j, 1, j)
        log_abs[:] = np.log(2 * jj + theta - 1) + sps.gammaln(theta + (k + jj - 1)) - sps.gammaln(k + theta) + base
    else:
        # k = 0, theta = 0: (0)_{(j-1)} is 1 at j = 1 and 0 beyond
        log_abs[:] = np.where(j == 1, base, -np.inf)
    # j = 0 (only when k = 0): (theta - 1)(theta)_{(-1)} = 1
    log_abs[zero_j] = 0.0
    return log_abs, sign


def _coef_scale(k: int, theta: float, j: np.ndarray) -> np.ndarray:
    """Total magnitude of the log pieces in :func:`_coef_logs` (sets its rounding error)."""
    j = np.asarray(j, dtype=float)
    out = sps.gammaln(k + 1) + sps.gammaln(j - k + 1)
    if k + theta > 0:
        jj = np.maximum(j, 1.0)
        out = out + np.abs(np.log(2 * jj + theta - 1)) + np.abs(sps.gammaln(theta + (k + jj - 1)))
        out = out + abs(float(sps.gammaln(k + theta)))
    return out


def _entrance_scale(k: int, theta: float, t: float, n_terms: int) -> np.ndarray:
    j = np.arange(k, k + n_terms)
    return _coef_scale(k, theta, j) + np.abs(log_rho(j, theta, t))


def _entrance_terms(k: int, theta: float, t: float, max_terms: int):
    """Log-magnitudes and signs of the entrance series, truncated once negligible."""
    chunk = 64
    logs, signs = [], []
    start = k
    best = -np.inf
    while True:
        j = np.arange(start, start + chunk)
        la, sg = _coef_logs(k, theta, j)
        la = la + log_rho(j, theta, t)
        logs.append(la)
        signs.append(sg)
        best = max(best, float(la.max()))
        tail = la[-4:]
        # past the peak, 40 e-folds below the largest term and absolutely
        # negligible (the sum is a probability, however large the terms)
        if np.all(np.diff(tail) < 0) and tail[-1] < min(best - 40.0, -60.0):
            break
        if tail[-1] < -745.0 and np.all(np.diff(tail) < 0):
            break
        start += chunk
        if start - k > max_terms:
            raise TruncationError(f"entrance series did not settle within {max_terms} terms")
    return np.concatenate(logs), np.concatenate(signs)


def _check_args(theta, t):
    if theta < 0:
        raise DomainError("theta must be nonnegative")
    if t <= 0:
        raise DomainError("time must be positive")


def q_entrance(k: int, theta: float, t: float, ctl: SeriesControl = DEFAULT_CONTROL) -> float:
    """``P(A(t) = k)`` for the death process started from infinity.

    Raises :class:`PrecisionLoss` when the alternating sum cancels by more
    than twelve orders of magnitude or its rounding bound exceeds ``1e-11``;
    :func:`q_entrance_precise` or :func:`q_entrance_mc` are then the
    fallbacks.
    """
    _check_args(theta, t)
    if k < 0:
        raise DomainError("k must be nonnegative")
    if theta == 0 and k == 0:
        return 0.0
    la, sg = _entrance_terms(k, theta, t, ctl.max_terms)
    if la.max() < -745.0:
        return 0.0
    value, cancel, err = signed_sum(la, sg, _entrance_scale(k, theta, t, len(la)))
    if cancel > CANCELLATION_BUDGET or err > ABS_BUDGET:
        raise PrecisionLoss(
            f"q_entrance(k={k}, theta={theta}, t={t}): cancellation {cancel:.2e}, rounding bound {err:.1e}"
        )
    return value


def q_entrance_precise(k: int, theta: float, t: float, dps: int | None = None) -> float:
    """Entrance transition function summed in ``mpmath`` at elevated precision."""
    _check_args(theta, t)
    if theta == 0 and k == 0:
        return 0.0
    la, sg = _entrance_terms(k, theta, t, 100_000)
    if dps is None:
        dps = 20 + int(max(0.0, la.max()) / math.log(10))
    with mpmath.workdps(dps):
        th = mpmath.mpf(theta)
        tt = mpmath.mpf(t)
        total = mpmath.mpf(0)
        for j in range(k, k + len(la)):
            if j == 0:
                c = mpmath.mpf(1)
            else:
                c = (2 * j + th - 1) * mpmath.rf(k + th, j - 1) / (
                    mpmath.factorial(k) * mpmath.factorial(j - k)
                )
            total += (-1) ** (j - k) * c * mpmath.exp(-j * (j + th - 1) * tt / 2)
        return float(total)


def entrance_kmax(theta: float, t: float, tol: float = 1e-16) -> int:
    """Index beyond which the entrance law carries less than ``tol`` mass (heuristic bound)."""
    # E[A(t)] is about 2/t for small t; the law has sub-Gaussian right tail
    mean = 2.0 / t + 1.0
    return int(mean + 12.0 * math.sqrt(mean) + math.log(1 / tol) / max(t, 1e-3) ** 0.5 + 10)


def q_entrance_vector(
    theta: float,
    t: float,
    kmax: int | None = None,
    ctl: SeriesControl = DEFAULT_CONTROL,
    precise: bool = False,
) -> ProbVector:
    """``(q_0(t), ..., q_kmax(t))`` from the entrance boundary.

    Entries are accepted when their absolute rounding bound stays below
    ``1e-11`` even if their relative cancellation is large; otherwise the
    entry is recomputed in ``mpmath`` when ``precise`` is set, or
    :class:`PrecisionLoss` is raised.
    """
    _check_args(theta, t)
    if kmax is None:
        kmax = entrance_kmax(theta, t)
    probs = np.zeros(kmax + 1)
    worst = 0.0
    for k in range(kmax + 1):
        if theta == 0 and k == 0:
            continue
        la, sg = _entrance_terms(k, theta, t, ctl.max_terms)
        if la.max() < -745.0:
            # later k only get smaller
            if k > 2.0 / t:
                break
            continue
        value, _, err = signed_sum(la, sg, _entrance_scale(k, theta, t, len(la)))
        if err > ABS_BUDGET:
            if not precise:
                raise PrecisionLoss(
                    f"entrance vector at t={t}: rounding bound {err:.1e} at k={k}"
                )
            value, err = q_entrance_precise(k, theta, t), 0.0
        probs[k] = value
        worst = max(worst, err)
    probs[np.abs(probs) < 1e-300] = 0.0
    probs[(probs < 0) & (probs > -max(worst, 1e-15) * 4)] = 0.0
    return ProbVector(probs, abs_error=worst)


def _descent_log_bound(k: int, theta: float, times: np.ndarray) -> np.ndarray:
    """Log of a Chernoff bound on ``P(A(t) <= k)`` from infinity.

    ``A(t) <= k`` means the passage time ``T`` from infinity to ``k`` (a sum of
    independent exponentials with rates ``m(m+theta-1)/2``, ``m > k``) is at
    most ``t``, and ``P(T <= t) <= exp(s t) E[exp(-s T)]`` for every ``s > 0``.
    """
    # without mutation the count never drops below 1
    m = np.arange(max(k, 1) + 1 if theta == 0 else k + 1, 200_001, dtype=float)
    lam = 0.5 * m * (m + theta - 1.0)
    s = np.logspace(-1, 7, 161)
    # log E[exp(-sT)], with the tail beyond the last m approximated by its integral
    log_mgf = -np.log1p(s[:, None] / lam[None, :]).sum(axis=1) - 2.0 * s / m[-1]
    return np.min(s[None, :] * np.asarray(times, dtype=float).ravel()[:, None] + log_mgf[None, :], axis=1)


def q_entrance_at_times(k: int, theta: float, times, ctl: SeriesControl = DEFAULT_CONTROL) -> np.ndarray:
    """``q_k(t)`` for every entry of ``times``, vectorized over times.

    Entries whose rounding bound exceeds ``1e-11`` are recomputed with
    :func:`q_entrance_precise`.
    """
    times = np.asarray(times, dtype=float)
    if k < 0:
        raise DomainError("k must be nonnegative")
    if theta < 0:
        raise DomainError("theta must be nonnegative")
    if np.any(times <= 0):
        raise DomainError("times must be positive")
    out = np.zeros(times.shape)
    if theta == 0 and k == 0 or times.size == 0:
        return out
    flat = times.ravel()
    # the smallest time needs the longest series; cap it so the matrix stays small
    t_floor = max(float(flat.min()), 0.02)
    la, sg = _entrance_terms(k, theta, t_floor, ctl.max_terms)
    j = np.arange(k, k + len(la))
    coef, _ = _coef_logs(k, theta, j)
    cscale = _coef_scale(k, theta, j)
    res = np.zeros(flat.size)
    easy = flat >= t_floor
    idx = np.nonzero(easy)[0]
    hard = []
    for start in range(0, idx.size, 4096):
        part = idx[start : start + 4096]
        lr = log_rho(j[:, None], theta, flat[None, part])
        terms = sg[:, None] * np.exp(coef[:, None] + lr)
        vals = terms.sum(axis=0)
        # rounding scale per time: coefficient pieces plus |log rho|
        bound = 4 * np.finfo(float).eps * (np.abs(terms) * (1.0 + cscale[:, None] + np.abs(lr))).sum(axis=0)
        res[part] = vals
        hard.extend(part[bound > ABS_BUDGET])
    hard.extend(np.nonzero(~easy)[0])
    hard = np.array(hard, dtype=np.int64)
    if hard.size:
        # tiny times leave almost no chance of having come down to k lineages
        negligible = _descent_log_bound(k, theta, flat[hard]) < math.log(1e-17)
        res[hard[negligible]] = 0.0
        rest = hard[~negligible]
        if rest.size > 64:
            res[rest] = _precise_interpolated(k, theta, flat[rest])
        else:
            for i in rest:
                res[i] = q_entrance_precise(k, theta, float(flat[i]))
    return res.reshape(times.shape)


def _precise_interpolated(k: int, theta: float, times: np.ndarray) -> np.ndarray:
    """High-precision ``q_k`` at many times via a checked Chebyshev interpolant."""
    lo, hi = float(times.min()), float(times.max())
    if hi - lo < 1e-12:
        return np.full(times.shape, q_entrance_precise(k, theta, lo))

    def exact(ts):
        return np.array([q_entrance_precise(k, theta, float(v)) for v in np.atleast_1d(ts)])

    for deg in (32, 64, 128):
        fit = np.polynomial.Chebyshev.interpolate(exact, deg, domain=[lo, hi])
        # check between interpolation nodes
        probe = np.polynomial.chebyshev.chebpts1(deg + 1)[:: max(1, deg // 8)]
        probe = lo + (hi - lo) * (np.sort(probe) + 1) / 2 * 0.999 + (hi - lo) * 0.0005
        if np.max(np.abs(fit(probe) - exact(probe))) < ABS_BUDGET / 10:
            return fit(times)
    return exact(times)


@functools.lru_cache(maxsize=256)
def _entrance_probs_tuple(theta: float, t: float) -> tuple:
    return tuple(q_entrance_vector(theta, t, precise=True).probs)


def cached_entrance_probs(theta: float, t: float) -> np.ndarray:
    """Memoized entrance law, for evaluating densities on grids at a fixed time."""
    return np.array(_entrance_probs_tuple(float(theta), float(t)))


# ---------------------------------------------------------------------------
# finite start


def _finite_logs(n: int, k: int, theta: float, t: float):
    j = np.arange(k, n + 1)
    la, sg = _coef_logs(k, theta, j)
    # n_{[j]} / (n + theta)_{(j)}
    la = la + sps.gammaln(n + 1) - sps.gammaln(n - j + 1) - (sps.gammaln(n + theta + j) - sps.gammaln(n + theta))
    return la + log_rho(j, theta, t), sg


def _finite_scale(n: int, k: int, theta: float, t: float) -> np.ndarray:
    j = np.arange(k, n + 1)
    extra = sps.gammaln(n + 1) + sps.gammaln(n - j + 1) + np.abs(sps.gammaln(n + theta + j)) + abs(float(sps.gammaln(n + theta)))
    return _coef_scale(k, theta, j) + extra + np.abs(log_rho(j, theta, t))


def q_finite_precise(n: int, k: int, theta: float, t: float, dps: int | None = None) -> float:
    """Finite-start transition summed in ``mpmath``, terms built by their ratios."""
    if n < 0 or not 0 <= k <= n:
        raise DomainError("need 0 <= k <= n")
    if t == 0:
        return 1.0 if k == n else 0.0
    if n == 0:
        return 1.0
    if theta == 0 and k == 0:
        return 0.0
    la, _ = _finite_logs(n, k, theta, t)
    if dps is None:
        dps = 25 + int(max(0.0, float(la.max())) / math.log(10))
    with mpmath.workdps(dps):
        th, tt = mpmath.mpf(theta), mpmath.mpf(t)
        j0 = max(k, 1)
        # first term with j >= 1 in closed form, then the ratio recurrence
        term = (
            (-1) ** (j0 - k) * (2 * j0 + th - 1) * mpmath.rf(k + th, j0 - 1)
            / (mpmath.factorial(k) * mpmath.factorial(j0 - k))
            * mpmath.ff(n, j0) / mpmath.rf(n + th, j0)
            * mpmath.exp(-j0 * (j0 + th - 1) * tt / 2)
        )
        total = mpmath.mpf(1) if k == 0 else mpmath.mpf(0)
        for j in range(j0, n + 1):
            total += term
            if j == n:
                break
            term *= -(2 * j + th + 1) / (2 * j + th - 1) * (k + th + j - 1) / (j - k + 1)
            term *= mpmath.mpf(n - j) / (n + th + j) * mpmath.exp(-(2 * j + th) * tt / 2)
        return float(total)


def q_finite(n: int, k: int, theta: float, t: float) -> float:
    """``P(A(t) = k | A(0) = n)``.

    The alternating series is summed in floating point when its rounding
    bound is below ``1e-13`` and in ``mpmath`` otherwise.
    """
    if n < 0 or not 0 <= k <= n:
        raise DomainError("need 0 <= k <= n")
    if theta < 0:
        raise DomainError("theta must be nonnegative")
    if t < 0:
        raise DomainError("time must be nonnegative")
    if t == 0:
        return 1.0 if k == n else 0.0
    if n == 0:
        return 1.0
    if theta == 0 and k == 0:
        return 0.0
    la, sg = _finite_logs(n, k, theta, t)
    if la.max() < -745.0:
        return 0.0
    value, _, err = signed_sum(la, sg, _finite_scale(n, k, theta, t))
    if err <= FINITE_BUDGET:
        return value
    return q_finite_precise(n, k, theta, t)


def q_finite_vector(n: int, theta: float, t: float) -> ProbVector:
    probs = np.array([q_finite(n, k, theta, t) for k in range(n + 1)])
    probs[(probs < 0) & (probs > -1e-13)] = 0.0
    return ProbVector(probs)


def q_finite_matrix(nmax: int, theta: float, t: float) -> np.ndarray:
    """Lower-triangular matrix ``P[n, k] = q_{nk}(t)`` for ``0 <= k <= n <= nmax``."""
    out = np.zeros((nmax + 1, nmax + 1))
    for n in range(nmax + 1):
        out[n, : n + 1] = q_finite_vector(n, theta, t).probs
    return out


def death_rate(k: int, theta: float) -> float:
    return 0.5 * k * (k + theta - 1.0)


# ---------------------------------------------------------------------------
# complex-variable Monte Carlo representations


def _log_gamma_ratio(k: int, theta: float) -> float:
    """log of Gamma(2k + theta) / (Gamma(k + theta) k!), equal to 0 at k = 0."""
    if k == 0:
        return 0.0
    return math.lgamma(2 * k + theta) - math.lgamma(k + theta) - math.lgamma(k + 1)


def q_entrance_mc(k: int, theta: float, t: float, replicates: int = 10**6, seed: int = 0) -> MCEstimate:
    """Monte Carlo estimate of ``q_k(t)`` through Brownian motion on the circle.

    With ``X ~ N(0, t)``, ``Z = exp(iX)`` and ``w = exp(-theta t / 2)``,

        q_k(t) = e^{t/8} G E[(wZ)^k (1 - wZ) Z^{-1/2} (1 + wZ)^{-(2k+theta)}],

    ``G = Gamma(2k+theta) / (Gamma(k+theta) k!)`` and ``Z^{-1/2} = exp(-iX/2)``.
    """
    _check_args(theta, t)
    if theta == 0:
        raise DomainError("the entrance representation needs theta > 0")
    pref = math.exp(t / 8.0 + _log_gamma_ratio(k, theta))
    omega = math.exp(-0.5 * theta * t)
    re, im = RunningMoments(), RunningMoments()
    for rng, size in block_rngs(seed, replicates):
        x = rng.normal(0.0, math.sqrt(t), size)
        wz = omega * np.exp(1j * x)
        val = pref * wz**k * (1.0 - wz) * np.exp(-0.5j * x) / (1.0 + wz) ** (2 * k + theta)
        re.add(val.real)
        im.add(val.imag)
    m, se = re.result()
    mi, sei = im.result()
    return MCEstimate(m, se, replicates, seed, imag_mean=mi, imag_std_error=sei)


def hyp2f1_poly_coeffs(a: int, b: float, c: float) -> np.ndarray:
    """Coefficients (ascending powers) of the terminating 2F1(a, b; c; z)."""
    n = int(-a)
    coef = np.empty(n + 1)
    coef[0] = 1.0
    for i in range(n):
        coef[i + 1] = coef[i] * (i + a) * (b + i) / ((c + i) * (i + 1))
    return coef


def q_finite_mc(n: int, k: int, theta: float, t: float, replicates: int = 10**6, seed: int = 0) -> MCEstimate:
    """Monte Carlo estimate of ``q_{nk}(t)`` through Brownian motion on the circle.

    Uses ``Z^a = exp(i a X)`` with ``X ~ N(0, t)`` and the terminating
    ``2F1(-n+k+1, theta+2k; n+k+theta; Z)``; at ``k = n`` the functional
    collapses to ``Z^{n + (theta-1)/2}``.
    """
    if not 0 <= k <= n:
        raise DomainError("need 0 <= k <= n")
    _check_args(theta, t)
    if theta == 0 and k == 0:
        return MCEstimate(0.0, 0.0, replicates, seed, 0.0, 0.0)
    shift = k + 0.5 * (theta - 1.0)
    if k == n:
        log_pref = 0.0
        coeffs = None
    else:
        log_pref = (
            math.lgamma(n + theta) - math.lgamma(n + k + theta)
            + _log_gamma_ratio(k, theta) + math.lgamma(k + 1)
            + math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)
        )
        coeffs = hyp2f1_poly_coeffs(-n + k + 1, theta + 2 * k, n + k + theta)
    pref = math.exp(log_pref + (theta - 1.0) ** 2 * t / 8.0)
    re, im = RunningMoments(), RunningMoments()
    for rng, size in block_rngs(seed, replicates):
        x = rng.normal(0.0, math.sqrt(t), size)
        z = np.exp(1j * x)
        val = np.exp(1j * shift * x)
        if coeffs is not None:
            val = val * (1.0 - z) * np.polynomial.polynomial.polyval(z, coeffs)
        val = pref * val
        re.add(val.real)
        im.add(val.imag)
    m, se = re.result()
    mi, sei = im.result()
    return MCEstimate(m, se, replicates, seed, imag_mean=mi, imag_std_error=sei)


# ---------------------------------------------------------------------------
# two-type dual


def dual2d_transition(m, l, params: ModelParams, t: float) -> float:
    """``P(L(t) = l | L(0) = m)``: total-count death process with hypergeometric thinning."""
    m1, m2 = (int(v) for v in m)
    l1, l2 = (int(v) for v in l)
    if min(m1, m2, l1, l2) < 0 or l1 > m1 or l2 > m2:
        raise DomainError("need 0 <= l <= m componentwise")
    M, L = m1 + m2, l1 + l2
    q = q_finite(M, L, params.theta, t)
    return q * math.comb(m1, l1) * math.comb(m2, l2) / math.comb(M, L)


def g_dual_rates(k, params: ModelParams):
    """Outgoing transitions ``k -> k - e_i`` at rate ``k_i (|k| + theta - 1) / 2``."""
    k1, k2 = (int(v) for v in k)
    total = k1 + k2
    if total < 1:
        raise DomainError("the dual has no transitions out of (0, 0)")
    out = []
    if k1 > 0:
        out.append(((k1 - 1, k2), 0.5 * k1 * (total + params.theta - 1)))
    if k2 > 0:
        out.append(((k1, k2 - 1), 0.5 * k2 * (total + params.theta - 1)))
    return out


def duality_moment_rhs(m, x: float, params: ModelParams, t: float) -> float:
    """``E_x[C(|m|, m1) X(t)^{m1} (1 - X(t))^{m2}]`` computed from the dual."""
    params.require_stationary()
    m1, m2 = (int(v) for v in m)
    a, b, th = params.alpha, params.beta, params.theta
    M = m1 + m2
    if M == 0:
        return 1.0
    x1, x2 = x, 1.0 - x
    lead = math.comb(M, m1) * rising(a, m1) * rising(b, m2) / rising(th, M)
    terms = []
    for l1 in range(m1 + 1):
        for l2 in range(m2 + 1):
            L = l1 + l2
            g = rising(th, L) / (rising(a, l1) * rising(b, l2)) * x1**l1 * x2**l2
            terms.append(g * dual2d_transition((m1, m2), (l1, l2), params, t))
    return lead * math.fsum(terms)


@dataclass
class DualityCheck:
    lhs: MCEstimate
    rhs: float
    allowance: float

    @property
    def ok(self) -> bool:
        return self.lhs.agrees(self.rhs, 3.0, self.allowance)


def duality_moment_check(
    m, x: float, params: ModelParams, t: float, replicates: int = 10**5, seed: int = 0, dt: float = 1e-3
) -> DualityCheck:
    """Compare a simulated diffusion moment with its dual finite sum.

    The allowance for Euler-Maruyama bias is ``2 * dt``, first order in the
    step. That rate needs ``alpha, beta >= 1`` so the boundaries are not
    reached; below 1 the clipped scheme converges more slowly than ``dt``.
    """
    from .simulation import PathConfig, simulate_wf_terminal

    m1, m2 = (int(v) for v in m)
    rhs = duality_moment_rhs((m1, m2), x, params, t)
    if m1 + m2 == 0:
        return DualityCheck(MCEstimate(1.0, 0.0, replicates, seed), rhs, 0.0)
    cfg = PathConfig(x0=x, t_end=t, dt=dt)
    xt = simulate_wf_terminal(cfg, params, replicates, seed)
    vals = math.comb(m1 + m2, m1) * xt**m1 * (1.0 - xt) ** m2
    acc = RunningMoments()
    acc.add(vals)
    mean, se = acc.result()
    return DualityCheck(MCEstimate(mean, se, replicates, seed), rhs, 2.0 * dt)
