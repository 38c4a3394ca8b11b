"""Time-changing the Jacobi diffusion and its coalescent dual by a subordinator.

The main subordinator is the tilted stable-1/2 process with

    E[exp(-lam Z(t))] = exp(-t [sqrt(2 lam + (theta-1)^2/4) - |theta-1|/2]),

whose marginals are inverse Gaussian. Under it the diffusion eigenvalue
``exp(-n(n+theta-1)t/2)`` becomes ``exp(-nt)`` when ``theta >= 1``. For
``theta < 1`` the subordinator is killed (sent to infinity) at rate
``1 - theta`` to obtain ``exp(-nt)``; the dual count is then absorbed at 0
(at 1 when ``theta = 0``).

The subordinated count of non-mutant lineages from infinity has the closed
form

    P(k) = C(2k+theta-1, k) (z/(1+z))^k (1/(1+z))^{k+theta} (1-z),  z = e^{-t}.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import mpmath
import numpy as np
from scipy import special as sps

from .errors import BranchError, DivergentLambda, DomainError, TruncationError
from .jacobi import _dual_mixture_1d
from .lod import _coef_logs, _finite_logs, _finite_scale, log_rho, q_entrance_at_times
from .series import (
    DEFAULT_CONTROL,
    DensityValue,
    MCEstimate,
    ProbVector,
    RunningMoments,
    SeriesControl,
    block_rngs,
    signed_sum,
)
from .spectra import DiscreteMeasure
from .special import ModelParams, beta_density, gauss_jacobi, h_norm_array, jacobi_R_table


class Start(enum.Enum):
    """Initial state token for the entrance boundary."""

    INFINITY = "inf"


INF = Start.INFINITY


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


# ---------------------------------------------------------------------------
# inverse Gaussian subordinator


def ig_laplace(theta: float, t: float, lam) -> np.ndarray | float:
    """``E[exp(-lam Z(t))]`` for the tilted stable-1/2 subordinator."""
    if theta < 0 or t < 0:
        raise DomainError("theta and t must be nonnegative")
    lam_arr = np.asarray(lam, dtype=float)
    if np.any(lam_arr < 0):
        raise DomainError("lambda must be nonnegative")
    half = (theta - 1.0) ** 2 / 4.0
    out = np.exp(-t * (np.sqrt(2.0 * lam_arr + half) - math.sqrt(half)))
    return float(out) if out.ndim == 0 else out


def ig_sample(theta: float, t: float, seed=None, size=None):
    """Draws of ``Z(t)``: IG(mean ``2t/|theta-1|``, shape ``t^2``), or ``t^2/N^2`` at ``theta = 1``."""
    if theta < 0:
        raise DomainError("theta must be nonnegative")
    if t <= 0:
        raise DomainError("t must be positive")
    rng = _rng(seed)
    if theta == 1.0:
        n = rng.standard_normal(size)
        return t * t / (n * n)
    return rng.wald(2.0 * t / abs(theta - 1.0), t * t, size)


def kill_rate(theta: float) -> float:
    """Rate at which the subordinator jumps to infinity (0 for ``theta >= 1``)."""
    return max(0.0, 1.0 - theta)


def subordinated_eigenvalue(n: int, theta: float, t: float, killed: bool = False) -> float:
    """``E[exp(-n(n+theta-1) Z(t)/2)]``, optionally for the killed subordinator.

    Unkilled this is ``exp(-t[|n + (theta-1)/2| - |theta-1|/2])``; killing at
    rate ``1 - theta`` (only when ``theta < 1``) brings it to ``exp(-nt)`` for
    ``n >= 1``.
    """
    if n < 0:
        raise DomainError("n must be nonnegative")
    if t < 0 or theta < 0:
        raise DomainError("theta and t must be nonnegative")
    if n == 0:
        return 1.0
    raw = math.exp(-t * (abs(n + (theta - 1.0) / 2.0) - abs(theta - 1.0) / 2.0))
    if killed:
        raw *= math.exp(-kill_rate(theta) * t)
    return raw


@dataclass(frozen=True)
class SubordinatorSpec:
    """Which subordinator drives the time change.

    ``inverse_gaussian`` needs ``theta != 1``; ``stable_half`` is the
    ``theta = 1`` case; ``killed_ig`` adds killing at rate ``1 - theta`` for
    ``0 <= theta < 1``; ``general_levy`` is the compound Poisson subordinator
    with Levy measure ``H(dy)/y`` for a discrete ``H``.
    """

    kind: str
    theta: float = 1.0
    H: DiscreteMeasure | None = None

    def __post_init__(self):
        kinds = ("inverse_gaussian", "stable_half", "killed_ig", "general_levy")
        if self.kind not in kinds:
            raise DomainError(f"kind must be one of {kinds}")
        if self.theta < 0:
            raise DomainError("theta must be nonnegative")
        if self.kind == "inverse_gaussian" and self.theta == 1.0:
            raise DomainError("inverse_gaussian needs theta != 1; use stable_half")
        if self.kind == "stable_half" and self.theta != 1.0:
            raise DomainError("stable_half is the theta = 1 subordinator")
        if self.kind == "killed_ig" and not self.theta < 1.0:
            raise DomainError("killed_ig needs theta < 1")
        if self.kind == "general_levy":
            if self.H is None:
                raise DomainError("general_levy needs a measure H")
            self.H.check_support(0.0, math.inf)
            if np.any((self.H.atoms == 0) & (self.H.masses > 0)):
                raise DivergentLambda("H has mass at 0")

    @classmethod
    def for_theta(cls, theta: float, killed: bool = True) -> "SubordinatorSpec":
        if theta == 1.0:
            return cls("stable_half", 1.0)
        if theta < 1.0 and killed:
            return cls("killed_ig", theta)
        return cls("inverse_gaussian", theta)

    @property
    def kill_rate(self) -> float:
        return kill_rate(self.theta) if self.kind == "killed_ig" else 0.0

    def laplace_exponent(self, lam) -> np.ndarray:
        """``-log E[exp(-lam Z(1))]``, including the killing rate."""
        lam = np.asarray(lam, dtype=float)
        if self.kind == "general_levy":
            y, m = self.H.atoms, self.H.masses
            out = ((m / y)[None, :] * -np.expm1(-np.outer(lam.ravel(), y))).sum(axis=1)
            return out.reshape(lam.shape)
        half = (self.theta - 1.0) ** 2 / 4.0
        return np.sqrt(2.0 * lam + half) - math.sqrt(half) + self.kill_rate * (lam > 0)

    def sample(self, t: float, seed=None, size=None):
        """Draws of ``Z(t)``; killed draws are ``inf``."""
        rng = _rng(seed)
        if self.kind == "general_levy":
            lam_tot, g = _lambda_and_g(self.H)
            shape = () if size is None else (size if isinstance(size, tuple) else (size,))
            count = int(np.prod(shape)) if shape else 1
            jumps = rng.poisson(lam_tot * t, count)
            out = np.array([rng.multinomial(c, g) @ self.H.atoms for c in jumps])
            return float(out[0]) if not shape else out.reshape(shape)
        z = ig_sample(self.theta, t, rng, size)
        if self.kill_rate:
            dead = rng.random(np.shape(z)) > math.exp(-self.kill_rate * t)
            z = np.where(dead, np.inf, z)
            if np.ndim(z) == 0:
                z = float(z)
        return z


# ---------------------------------------------------------------------------
# general subordinators and the induced jump measure


def _lambda_and_g(H: DiscreteMeasure):
    if len(H) == 0:
        return 0.0, np.zeros(0)
    if np.any((H.atoms <= 0) & (H.masses > 0)):
        raise DivergentLambda("H has mass at or below 0; sum H(dy)/y diverges")
    keep = H.masses > 0
    with np.errstate(over="ignore"):
        per = np.where(keep, H.masses / np.where(keep, H.atoms, 1.0), 0.0)
        lam = float(np.sum(per))
    if not math.isfinite(lam):
        raise DivergentLambda("sum H(dy)/y overflows")
    return lam, per / lam if lam > 0 else per


def subordinated_dn(n: int, H: DiscreteMeasure, params: ModelParams) -> float:
    """``int (1 - exp(-d_n y)) / y H(dy)`` with diffusion rate ``d_n = n(n+theta-1)/2``."""
    if n == 0:
        return 0.0
    _lambda_and_g(H)
    dn = 0.5 * n * (n + params.theta - 1.0)
    return math.fsum(H.masses * -np.expm1(-dn * H.atoms) / H.atoms)


def nu_tilde_from_H(
    H: DiscreteMeasure, params: ModelParams, nmax: int = 20, tol: float = 1e-16, max_degree: int = 4000
) -> tuple[float, DiscreteMeasure]:
    """Jump measure ``nu~`` reproducing the subordinated spectrum.

    With ``lam = sum H(dy)/y`` and ``G = H/(lam y)``, the probability density

        K(z) = f_ab(z) {1 + sum_n h_n R_n(z) sum_i G_i exp(-d_n y_i)}

    gives ``nu~(dz) = lam (1 - z) K(dz)``. ``K`` is discretized on
    Gauss-Jacobi nodes for Beta(alpha, beta): with the series summed to
    degree ``N`` and at least ``(N + nmax + 1)/2`` nodes, the quadrature
    integrates ``(1 - R_n) K`` exactly for ``n <= nmax``.
    """
    params.require_stationary()
    lam, g = _lambda_and_g(H)
    if lam == 0:
        return 0.0, DiscreteMeasure.empty()
    y = H.atoms[H.masses > 0]
    g = g[H.masses > 0]
    th = params.theta
    # degree where the slowest-decaying exp(-d_n y) is below tol
    need = math.log(1.0 / tol) / float(y.min())
    degree = max(nmax, int(math.ceil((-(th - 1) + math.sqrt((th - 1) ** 2 + 8 * need)) / 2)) + 1)
    if degree > max_degree:
        raise TruncationError(f"smallest atom {y.min()} needs degree {degree} > {max_degree}")
    n = np.arange(degree + 1)
    dn = 0.5 * n * (n + th - 1.0)
    coef = np.exp(-np.outer(dn, y)) @ g
    coef[0] = 1.0
    m = max(64, (degree + nmax) // 2 + 2)
    quad = gauss_jacobi(m, params)
    series = (h_norm_array(degree, params) * coef) @ jacobi_R_table(degree, params, quad.nodes)
    masses = lam * (1.0 - quad.nodes) * quad.weights * series
    # K is a probability density; negative entries can only be rounding
    masses[masses < 0] = 0.0
    return lam, DiscreteMeasure(quad.nodes, masses)


# ---------------------------------------------------------------------------
# subordinated forest from infinity


def _check_forest(theta, t):
    if theta < 0:
        raise DomainError("theta must be nonnegative")
    if t <= 0:
        raise DomainError("t must be positive")


def _log_forest_pmf(k, theta: float, t: float):
    k = np.asarray(k, dtype=float)
    z = math.exp(-t)
    l1z = math.log1p(z)
    return (
        sps.gammaln(2 * k + theta) - sps.gammaln(k + 1) - sps.gammaln(k + theta)
        + k * (-t - l1z) - (k + theta) * l1z + math.log(-math.expm1(-t))
    )


def forest_pmf(k, theta: float, t: float):
    """``P(A~(t) = k)`` for the subordinated lineage count, ``theta > 0``."""
    _check_forest(theta, t)
    if theta == 0:
        raise DomainError("use forest_pmf_theta0 for theta = 0")
    k_arr = np.asarray(k)
    if np.any(k_arr < 0):
        raise DomainError("k must be nonnegative")
    out = np.exp(_log_forest_pmf(k_arr, theta, t))
    return float(out) if out.ndim == 0 else out


def forest_pmf_theta0(k, t: float):
    """Subordinated Kingman coalescent (no mutation), killed at rate 1; ``k >= 1``."""
    _check_forest(0.0, t)
    k_arr = np.asarray(k)
    if np.any(k_arr < 1):
        raise DomainError("k must be at least 1 without mutation")
    kf = k_arr.astype(float)
    z = math.exp(-t)
    l1z = math.log1p(z)
    log_main = (
        sps.gammaln(2 * kf) - sps.gammaln(kf + 1) - sps.gammaln(kf)
        + kf * (-t - l1z) - kf * l1z + math.log(-math.expm1(-t))
    )
    out = np.exp(log_main) + np.where(k_arr == 1, -math.expm1(-t), 0.0)
    return float(out) if out.ndim == 0 else out


def forest_kmax(theta: float, t: float, tol: float = 1e-17) -> int:
    """Index past which the forest law has less than ``tol`` mass."""
    z = math.exp(-t)
    w = 4 * z / (1 + z) ** 2  # geometric decay ratio of the pmf
    if w >= 1:
        raise DomainError("t must be positive")
    base = max(1.0, theta)
    return int(math.ceil((math.log(1.0 / tol) + 2 * math.log(base + 1 / (1 - w))) / -math.log(w))) + int(theta) + 10


def forest_pmf_vector(theta: float, t: float, kmax: int | None = None) -> ProbVector:
    if kmax is None:
        kmax = forest_kmax(theta, t)
    if theta == 0:
        probs = np.concatenate([[0.0], forest_pmf_theta0(np.arange(1, kmax + 1), t)])
    else:
        probs = forest_pmf(np.arange(kmax + 1), theta, t)
    return ProbVector(probs)


def forest_pmf_series(k: int, theta: float, t: float) -> float:
    """Forest pmf as the entrance-law series with ``exp(-j(j+theta-1)t/2)`` replaced by ``e^{-jt}``.

    The terms grow like ``j^{k+theta} e^{-jt}`` before decaying, so the sum is
    carried out in ``mpmath`` at a precision matched to the largest term.
    Without mutation the killed mass ``1 - e^{-t}`` sits at ``k = 1``.
    """
    _check_forest(theta, t)
    if theta == 0 and k < 1:
        raise DomainError("k must be at least 1 without mutation")
    # log-magnitudes peak near j = (k + theta)/t and then decay geometrically;
    # the result can be far smaller than the peak, so the tail cut is absolute
    jmax = k + 64
    while True:
        j = np.arange(k, jmax)
        la, _ = _coef_logs(k, theta, j)
        la = la - j * t
        if la[-1] < -60.0 and la[-1] < la[-2]:
            break
        if jmax - k > 1_000_000:
            raise TruncationError("substituted series did not settle")
        jmax = k + 2 * (jmax - k)
    dps = 25 + int(max(0.0, la.max()) / math.log(10))
    with mpmath.workdps(dps):
        th, z = mpmath.mpf(theta), mpmath.exp(-mpmath.mpf(t))
        total = mpmath.mpf(0)
        j0 = k
        if k == 0:
            total += 1  # j = 0 term
            j0 = 1
        # ratio (k+theta)_{(j-1)} / (j-k)!, advanced term by term
        ratio = mpmath.rf(k + th, j0 - 1) / mpmath.factorial(j0 - k)
        zp = z**j0
        sign = 1 if (j0 - k) % 2 == 0 else -1
        for jj in range(j0, jmax):
            total += sign * (2 * jj + th - 1) * ratio * zp
            ratio = ratio * (k + th + jj - 1) / (jj + 1 - k)
            zp *= z
            sign = -sign
        total /= mpmath.factorial(k)
        if theta == 0 and k == 1:
            total += 1 - z
        return float(total)


def forest_pgf(s, theta: float, t: float):
    """Generating function ``E[s^A~(t)]``, in a form stable as ``s -> 0``.

    Uses ``(1 - sqrt(1-4pqs)) / (2ps) = 2q / (1 + sqrt(1-4pqs))`` and
    ``1 - 4pq = (q - p)^2``.
    """
    _check_forest(theta, t)
    if theta == 0:
        raise DomainError("theta must be positive")
    s_arr = np.asarray(s, dtype=float)
    z = math.exp(-t)
    p = z / (1 + z)
    q = 1 / (1 + z)
    disc = 1 - 4 * p * q * s_arr
    if np.any(disc < 0):
        raise BranchError("1 - 4pqs < 0: s beyond the radius of convergence")
    root = np.sqrt(disc)
    out = (q - p) / root * (2 * q / (1 + root)) ** (theta - 1)
    return float(out) if out.ndim == 0 else out


def pgf_series_identity(w, theta: float) -> tuple[np.ndarray, np.ndarray]:
    """Both sides of ``sum_k C(2k+theta-1, k) w^k = 2^{theta-1} (1+sqrt(1-4w))^{1-theta} / sqrt(1-4w)``."""
    w = np.atleast_1d(np.asarray(w, dtype=float))
    if np.any(w <= 0) or np.any(w >= 0.25):
        raise DomainError("w must lie in (0, 1/4)")
    root = np.sqrt(1 - 4 * w)
    closed = 2.0 ** (theta - 1) * (1 + root) ** (1 - theta) / root
    direct = np.empty_like(w)
    for i, wi in enumerate(w):
        # terms decay like (4w)^k k^{theta - 1}
        kmax = int(math.ceil(45.0 / -math.log(4 * wi))) + int(8 * theta) + 50
        k = np.arange(kmax + 1)
        with np.errstate(divide="ignore"):
            logs = sps.gammaln(2 * k + theta) - sps.gammaln(k + 1) - sps.gammaln(k + theta) + k * math.log(wi)
        if theta == 0:
            logs[0] = 0.0
        direct[i] = math.fsum(np.exp(logs))
    return direct, closed


def rw_hitting_pgf(s, theta: float, t: float):
    """``H(s)``: pgf of the steps a +1/-1 walk (up-probability ``p``) needs to hit ``-theta``."""
    s = np.asarray(s, dtype=float)
    z = math.exp(-t)
    p, q = z / (1 + z), 1 / (1 + z)
    disc = 1 - 4 * p * q * s * s
    if np.any(disc < 0):
        raise BranchError("1 - 4pqs^2 < 0")
    out = (2 * q * s / (1 + np.sqrt(disc))) ** theta
    return float(out) if out.ndim == 0 else out


def progeny_pgf(s, theta: float, t: float):
    """``K(s)``: pgf of ``(xi + theta)/2``, the total progeny of ``theta`` Galton-Watson ancestors."""
    s = np.asarray(s, dtype=float)
    z = math.exp(-t)
    p, q = z / (1 + z), 1 / (1 + z)
    disc = 1 - 4 * p * q * s
    if np.any(disc < 0):
        raise BranchError("1 - 4pqs < 0")
    out = (2 * q * s / (1 + np.sqrt(disc))) ** theta
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# transitions and rates


def _check_ij(i, j):
    if i is INF:
        if j < 0:
            raise DomainError("j must be nonnegative")
        return
    if not 0 <= j <= i:
        raise DomainError("need 0 <= j <= i")


def forest_transition(i, j: int, theta: float, t: float) -> float:
    """``P(A~(s+t) = j | A~(s) = i)``; ``i`` may be :data:`INF`."""
    _check_ij(i, j)
    if t < 0:
        raise DomainError("t must be nonnegative")
    if i is INF:
        return forest_pmf(j, theta, t) if theta > 0 else (forest_pmf_theta0(j, t) if j >= 1 else 0.0)
    if t == 0:
        return 1.0 if i == j else 0.0
    # without mutation, killing sends the count to its absorbing value 1
    killed = -math.expm1(-t) if theta == 0 and j == 1 else 0.0
    if j == i:
        return math.exp(-i * t) + killed
    if theta == 0 and j == 0:
        return 0.0
    z = math.exp(-t)
    log_pref = (
        math.lgamma(i + 1) - math.lgamma(j + 1) - math.lgamma(i - j + 1)
        + math.lgamma(i + theta) + math.lgamma(2 * j + theta)
        - math.lgamma(j + theta) - math.lgamma(i + j + theta)
        + j * -t + math.log(-math.expm1(-t))
    )
    # terminating 2F1(-N, 2j+theta; i+j+theta; z) with N = i-j-1 alternates in
    # sign; Pfaff's transformation (1-z)^N 2F1(-N, c-b; c; z/(z-1)) has c-b = i-j
    # and a negative argument, so every term is positive
    N = i - j - 1
    c = i + j + theta
    log_w = -t - math.log(-math.expm1(-t))  # log |z/(z-1)|
    log_terms = np.zeros(N + 1)
    m = np.arange(N)
    log_terms[1:] = np.cumsum(np.log((N - m) * (i - j + m) / ((c + m) * (m + 1))) + log_w)
    log_pref += N * math.log(-math.expm1(-t))
    return math.exp(log_pref + float(sps.logsumexp(log_terms))) + killed


def forest_transition_matrix(nmax: int, theta: float, t: float) -> np.ndarray:
    out = np.zeros((nmax + 1, nmax + 1))
    for i in range(nmax + 1):
        for j in range(i + 1):
            out[i, j] = forest_transition(i, j, theta, t)
    return out


def forest_transition_series(i: int, j: int, theta: float, t: float) -> float:
    """Finite-start death-process series with each eigenvalue replaced by ``e^{-lt}``."""
    _check_ij(i, j)
    la, sg = _finite_logs(i, j, theta, 0.0)
    l = np.arange(j, i + 1)
    killed = -math.expm1(-t) if theta == 0 and j == 1 else 0.0
    return math.fsum(sg * np.exp(la - l * t)) + killed


@dataclass
class TransitionScan:
    """Most negative generalized transition probability found by a scan."""

    minimum: float
    n: int
    k: int
    t: float
    # rounding bound of the alternating sum at the minimum
    abs_error: float

    @property
    def negative(self) -> bool:
        return self.minimum < -self.abs_error


def generalized_transition(n: int, k: int, theta: float, t: float, dn) -> float:
    """Finite-start death-process series with each ``rho_l(t)`` replaced by ``exp(-d_l t)``.

    ``dn`` holds ``d_0, ..., d_n`` (for example from
    :func:`~coaldual.spectra.spectrum_array`). With ``d_l = l(l+theta-1)/2``
    this is the death-process transition itself; for other spectra the
    value need not be a probability.
    """
    _check_ij(n, k)
    dn = np.asarray(dn, dtype=float)
    if len(dn) < n + 1:
        raise DomainError(f"need d_0..d_{n}, got {len(dn)} values")
    la, sg = _finite_logs(n, k, theta, 0.0)
    value, _, _ = signed_sum(la - dn[k : n + 1] * t, sg)
    return value


def scan_generalized_transitions(dn, theta: float, nmax: int = 20, tgrid=None) -> TransitionScan:
    """Search ``generalized_transition`` over ``k <= n <= nmax`` and ``tgrid`` for negative values.

    A negative value beyond the rounding bound shows that the spectrum does
    not give a transition function; a clean scan proves nothing.
    """
    dn = np.asarray(dn, dtype=float)
    if tgrid is None:
        tgrid = np.logspace(-2, 1, 31)
    best = TransitionScan(math.inf, 0, 0, 0.0, 0.0)
    for n in range(1, nmax + 1):
        for k in range(n + 1):
            la0, sg = _finite_logs(n, k, theta, 0.0)
            scale0 = _finite_scale(n, k, theta, 0.0)
            for t in tgrid:
                la = la0 - dn[k : n + 1] * t
                value, _, err = signed_sum(la, sg, scale0 + dn[k : n + 1] * t)
                if value < best.minimum:
                    best = TransitionScan(float(value), n, k, float(t), err)
    return best


def forest_jump_rate(i, j: int, theta: float) -> float:
    """Rate of the jump ``i -> j`` (``j < i``); ``i`` may be :data:`INF`.

    Without mutation the killing (rate 1) adds to the jump into 1.
    """
    kill = 1.0 if theta == 0 and j == 1 else 0.0
    if i is INF:
        if j < 0:
            raise DomainError("j must be nonnegative")
        if theta == 0 and j == 0:
            return 0.0
        return kill + math.exp(
            math.lgamma(2 * j + theta) - math.lgamma(j + theta) - math.lgamma(j + 1)
            - (2 * j + theta) * math.log(2.0)
        )
    if not 0 <= j < i:
        raise DomainError("need 0 <= j < i")
    if theta == 0 and j == 0:
        return 0.0
    return kill + math.exp(
        math.lgamma(i + 1) - math.lgamma(j + 1) - math.lgamma(i - j + 1)
        + math.lgamma(2 * i - 2 * j - 1) + math.lgamma(2 * j + theta) + math.lgamma(i + theta)
        - math.lgamma(i - j) - math.lgamma(j + theta) - math.lgamma(2 * i + theta - 1)
    )


# ---------------------------------------------------------------------------
# samplers


@dataclass(frozen=True)
class ForestState:
    k: int
    absorbed_at_infinity: bool = False

    def __post_init__(self):
        if self.k < 0:
            raise DomainError("edge count must be nonnegative")


def _gw_progeny(ancestors: np.ndarray, q: float, rng: np.random.Generator) -> np.ndarray:
    """Total progeny (ancestors included) of Galton-Watson trees with offspring law ``q p^k``."""
    total = ancestors.astype(np.int64).copy()
    gen = ancestors.astype(np.int64).copy()
    while True:
        alive = gen > 0
        if not alive.any():
            return total
        nxt = np.zeros_like(gen)
        nxt[alive] = rng.negative_binomial(gen[alive], q)
        total += nxt
        gen = nxt


def gw_forest_counts(theta: int, t: float, size: int, seed=None) -> np.ndarray:
    """Draws of the subordinated lineage count via the size-biased progeny.

    ``A~ + theta`` is the size-biased total progeny of ``theta`` ancestors.
    Size-biasing one tree of progeny ``T`` gives ``1 + M`` with ``M``
    negative binomial (shape 1/2, success probability ``1 - 4pq``); the other
    ``theta - 1`` trees are unchanged.
    """
    if theta != int(theta) or theta < 1:
        raise DomainError("the branching sampler needs a positive integer theta")
    if t <= 0:
        raise DomainError("t must be positive")
    rng = _rng(seed)
    z = math.exp(-t)
    p, q = z / (1 + z), 1 / (1 + z)
    succ = (q - p) ** 2
    if succ >= 1.0:
        # p underflowed: every tree is its root
        return np.zeros(size, dtype=np.int64)
    m = rng.negative_binomial(0.5, succ, size)
    others = _gw_progeny(np.full(size, int(theta) - 1), q, rng) - (int(theta) - 1)
    return m + others


def gw_forest_sampler(theta: int, t: float, seed=None) -> ForestState:
    return ForestState(int(gw_forest_counts(theta, t, 1, seed)[0]))


def forest_sample(theta: float, t: float, size: int, seed=None) -> np.ndarray:
    """Draws of the subordinated lineage count for any ``theta >= 0``.

    Integer ``theta >= 1`` uses the branching construction; otherwise the
    pmf is inverted from a cumulative table.
    """
    if theta >= 1 and theta == int(theta):
        return gw_forest_counts(int(theta), t, size, seed)
    rng = _rng(seed)
    pv = forest_pmf_vector(theta, t)
    cdf = np.cumsum(pv.probs)
    cdf /= cdf[-1]
    return np.searchsorted(cdf, rng.random(size), side="right").astype(np.int64)


def forest_pmf_mc(theta: float, t: float, kmax: int = 5, replicates: int = 10**5, seed: int = 0):
    """Monte Carlo ``E[q_k(Z°(t))]`` for ``k <= kmax`` from inverse Gaussian draws.

    Killed draws (probability ``1 - exp(-(1-theta)t)`` when ``theta < 1``)
    put the count at its absorbing value. Returns a list of
    :class:`MCEstimate`.
    """
    _check_forest(theta, t)
    spec = SubordinatorSpec.for_theta(theta, killed=True)
    absorbing = 1 if theta == 0 else 0
    acc = [RunningMoments() for _ in range(kmax + 1)]
    for rng, size in block_rngs(seed, replicates):
        z = spec.sample(t, rng, size)
        dead = ~np.isfinite(z)
        live_z = z[~dead]
        for k in range(kmax + 1):
            vals = np.zeros(size)
            if live_z.size:
                vals[~dead] = q_entrance_at_times(k, theta, live_z)
            vals[dead] = 1.0 if k == absorbing else 0.0
            acc[k].add(vals)
    out = []
    for a in acc:
        m, se = a.result()
        out.append(MCEstimate(m, se, replicates, seed))
    return out


# ---------------------------------------------------------------------------
# subordinated diffusion density


def subordinated_density_1d(
    x: float, y: float, t: float, params: ModelParams, killed: bool = True, ctl: SeriesControl = DEFAULT_CONTROL
) -> DensityValue:
    """Transition density of ``X(Z°(t))`` as a mixture over the subordinated lineage count.

    With ``killed`` (the default, only relevant for ``theta < 1``) the
    eigenvalues are ``e^{-nt}``; the killed mass sits at count 0, which is the
    same as restarting the diffusion from Beta(alpha, beta). Without killing
    the count law is ``E[q_k(Z(t))]``.
    """
    params.require_stationary()
    if not (0 <= x <= 1 and 0 < y < 1):
        raise DomainError("need x in [0, 1] and y in (0, 1)")
    if t <= 0:
        raise DomainError("t must be positive")
    th = params.theta
    q = forest_pmf_vector(th, t).probs
    if not killed and th < 1:
        keep = math.exp(-kill_rate(th) * t)
        q = q.copy()
        q[0] -= -math.expm1(-kill_rate(th) * t)
        q /= keep
        q[q < 0] = 0.0
    return _dual_mixture_1d(q, x, y, params, ctl, t)


def subordinated_density_eigen(
    x: float, y: float, t: float, params: ModelParams, killed: bool = True, ctl: SeriesControl = DEFAULT_CONTROL
) -> DensityValue:
    """Spectral form with eigenvalues from :func:`subordinated_eigenvalue`."""
    params.require_stationary()
    if t <= 0:
        raise DomainError("t must be positive")
    th = params.theta
    nmax = int(math.ceil(math.log(1.0 / ctl.tail_tol) / t)) + 60
    if nmax > ctl.max_terms:
        raise TruncationError(f"need {nmax} terms, max_terms={ctl.max_terms}")
    table = jacobi_R_table(nmax, params, np.array([x, y]))
    lam = np.array([subordinated_eigenvalue(n, th, t, killed) for n in range(nmax + 1)])
    terms = lam * h_norm_array(nmax, params) * table[:, 0] * table[:, 1]
    return DensityValue(beta_density(params, y) * math.fsum(terms), nmax, float(abs(terms[-1])))
