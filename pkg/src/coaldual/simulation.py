"""Simulators for the diffusion, the lines-of-descent process, the two-type
dual and the subordinated diffusion, plus empirical comparison helpers.

The diffusion is discretized by Euler-Maruyama,

    x <- x + (alpha (1-x) - beta x)/2 dt + sqrt(x (1-x) dt) N(0, 1),

so all moment checks against closed forms carry an O(dt) allowance.
Every simulator is a deterministic function of its seed.
"""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, StepSizeError
from .series import ProbVector, block_rngs
from .special import ModelParams
from .subordination import INF

CLIP_EPS = 1e-12
DEFAULT_CAP = 500
# subordinated horizons with theta * z / 2 beyond this are replaced by a stationary draw
MIX_EXPONENT = 40.0


class BoundaryPolicy(str, enum.Enum):
    REFLECT_CLIP = "reflect_clip"
    ABSORB_IF_NO_MUTATION = "absorb_if_no_mutation"


@dataclass(frozen=True)
class PathConfig:
    x0: float
    t_end: float
    dt: float = 1e-4
    boundary_policy: BoundaryPolicy = BoundaryPolicy.REFLECT_CLIP

    def __post_init__(self):
        if not 0.0 <= self.x0 <= 1.0:
            raise DomainError("x0 must lie in [0, 1]")
        if not self.t_end >= 0:
            raise DomainError("t_end must be nonnegative")
        if not self.dt > 0:
            raise StepSizeError("dt must be positive")
        if self.t_end > 0 and self.dt > self.t_end:
            raise StepSizeError(f"dt={self.dt} exceeds t_end={self.t_end}")
        object.__setattr__(self, "boundary_policy", BoundaryPolicy(self.boundary_policy))

    def check_step(self, params: ModelParams):
        """The largest drift increment must stay below 1/2."""
        worst = 0.5 * max(params.alpha, params.beta) * self.dt
        if worst >= 0.5:
            raise StepSizeError(f"drift step {worst:.3g} too large; reduce dt")

    def n_steps(self) -> int:
        return max(1, int(math.ceil(self.t_end / self.dt - 1e-9)))


def _bounds(cfg: PathConfig) -> tuple[float, float]:
    if cfg.boundary_policy is BoundaryPolicy.ABSORB_IF_NO_MUTATION:
        return 0.0, 1.0
    return CLIP_EPS, 1.0 - CLIP_EPS


def _em_step(x, h, params: ModelParams, noise, lo, hi):
    drift = 0.5 * (params.alpha * (1.0 - x) - params.beta * x)
    x = x + drift * h + np.sqrt(np.maximum(x * (1.0 - x), 0.0) * h) * noise
    return np.clip(x, lo, hi)


def _start(cfg: PathConfig) -> float:
    lo, hi = _bounds(cfg)
    return min(max(cfg.x0, lo), hi)


def simulate_wf_path(cfg: PathConfig, params: ModelParams, seed=None, record: bool = False):
    """One Euler-Maruyama path. Returns ``(terminal, path)``; ``path`` is ``None`` unless recorded.

    With ``absorb_if_no_mutation`` the state is confined to [0, 1] and a
    boundary without inward mutation pressure is absorbing.
    """
    cfg.check_step(params)
    rng = np.random.default_rng(seed)
    lo, hi = _bounds(cfg)
    x = _start(cfg) if cfg.boundary_policy is BoundaryPolicy.REFLECT_CLIP else cfg.x0
    if cfg.t_end == 0:
        return x, (np.array([x]) if record else None)
    n = cfg.n_steps()
    h = cfg.t_end / n
    noise = rng.standard_normal(n)
    path = np.empty(n + 1) if record else None
    if record:
        path[0] = x
    for i in range(n):
        x = float(_em_step(x, h, params, noise[i], lo, hi))
        if record:
            path[i + 1] = x
    return x, path


def simulate_wf_terminal(cfg: PathConfig, params: ModelParams, replicates: int, seed=0) -> np.ndarray:
    """Terminal values of ``replicates`` independent paths (vectorized)."""
    cfg.check_step(params)
    lo, hi = _bounds(cfg)
    x0 = _start(cfg) if cfg.boundary_policy is BoundaryPolicy.REFLECT_CLIP else cfg.x0
    if cfg.t_end == 0:
        return np.full(replicates, x0)
    n = cfg.n_steps()
    h = cfg.t_end / n
    out = []
    for rng, size in block_rngs(seed, replicates):
        x = np.full(size, x0)
        for _ in range(n):
            x = _em_step(x, h, params, rng.standard_normal(size), lo, hi)
        out.append(x)
    return np.concatenate(out)


def simulate_wf_until(x0, times: np.ndarray, params: ModelParams, dt: float, rng: np.random.Generator) -> np.ndarray:
    """Run one path per entry of ``times`` (and ``x0``) up to that entry's own horizon."""
    times = np.asarray(times, dtype=float)
    if np.any(times < 0):
        raise DomainError("times must be nonnegative")
    PathConfig(0.5, max(float(times.max(initial=0.0)), dt), dt).check_step(params)
    order = np.argsort(times)
    t_sorted = times[order]
    x = np.clip(np.broadcast_to(np.asarray(x0, dtype=float), times.shape)[order].copy(), CLIP_EPS, 1 - CLIP_EPS)
    now = 0.0
    first = int(np.searchsorted(t_sorted, now, side="right"))
    while first < len(t_sorted):
        nxt = now + dt
        last = int(np.searchsorted(t_sorted, nxt, side="right"))
        act = slice(first, len(t_sorted))
        h = np.full(len(t_sorted) - first, dt)
        # paths ending inside this step take a shortened final step
        h[: last - first] = t_sorted[first:last] - now
        x[act] = _em_step(x[act], h, params, rng.standard_normal(len(h)), CLIP_EPS, 1 - CLIP_EPS)
        now, first = nxt, last
    out = np.empty_like(x)
    out[order] = x
    return out


# ---------------------------------------------------------------------------
# lines of descent


@dataclass
class ForestEventLog:
    """Events of the lines-of-descent process; ``k_path`` holds counts after each event."""

    n0: int
    t_end: float
    times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    kinds: list = field(default_factory=list)
    k_path: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    @property
    def terminal(self) -> int:
        return int(self.k_path[-1]) if len(self.k_path) else self.n0

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["time", "kind", "k"])
            for t, kind, k in zip(self.times, self.kinds, self.k_path):
                w.writerow([repr(float(t)), kind, int(k)])


def _start_count(n0, cap: int) -> int:
    if n0 is INF:
        return cap
    if int(n0) != n0 or n0 < 1:
        raise DomainError("n0 must be a positive integer or INF")
    return int(n0)


def entrance_delay_moments(theta: float, cap: int) -> tuple[float, float]:
    """Mean and variance of the time the process needs to come down from
    infinitely many lineages to ``cap`` lineages.

    The time is a sum of independent exponentials with rates
    ``k(k+theta-1)/2`` over ``k > cap``; the mean has a digamma closed form
    and the variance (of order ``cap**-3``) is summed directly.
    """
    from scipy.special import polygamma, psi

    c = theta - 1.0
    a = cap + 1.0
    if abs(c) < 1e-6:
        mean = 2.0 * (polygamma(1, a) + 0.5 * c * polygamma(2, a))
    else:
        mean = 2.0 * (psi(a + c) - psi(a)) / c
    k = np.arange(cap + 1, cap + 200001, dtype=float)
    last = k[-1] + 0.5
    var = float(np.sum(4.0 / (k * (k + c)) ** 2)) + 4.0 / (3.0 * last**3)
    return float(mean), var


def _entrance_delays(theta: float, cap: int, size: int, rng: np.random.Generator) -> np.ndarray:
    # Gamma matched to the first two moments; the law is a sum of many small
    # exponentials so the match is tight.
    mean, var = entrance_delay_moments(theta, cap)
    return rng.gamma(mean * mean / var, var / mean, size)


def simulate_forest(n0, theta: float, t_end: float, seed=None, cap: int = DEFAULT_CAP) -> ForestEventLog:
    """Coalescence and mutation events among ``n0`` lineages up to ``t_end``.

    With ``k`` lineages the next event comes after an exponential time of
    rate ``k(k+theta-1)/2``; it is a mutation with probability
    ``theta/(k+theta-1)``. Stops at ``t_end``, at 0 lineages, or at 1 when
    ``theta = 0``. ``n0 = INF`` starts from ``cap`` lineages after a random
    delay standing in for the descent from infinity (events before reaching
    ``cap`` are not logged).
    """
    if theta < 0:
        raise DomainError("theta must be nonnegative")
    if t_end < 0:
        raise DomainError("t_end must be nonnegative")
    k = _start_count(n0, cap)
    rng = np.random.default_rng(seed)
    floor = 1 if theta == 0 else 0
    times, kinds, ks = [], [], []
    now = float(_entrance_delays(theta, cap, 1, rng)[0]) if n0 is INF else 0.0
    while k > floor:
        rate = 0.5 * k * (k + theta - 1.0)
        now += rng.exponential(1.0 / rate)
        if now > t_end:
            break
        mut = rng.random() < theta / (k + theta - 1.0)
        k -= 1
        times.append(now)
        kinds.append("mutation" if mut else "coalescence")
        ks.append(k)
    return ForestEventLog(
        n0 if n0 is not INF else cap, t_end, np.array(times), kinds, np.array(ks, dtype=np.int64)
    )


def forest_terminal_counts(n0, theta: float, t_end: float, replicates: int, seed=0, cap: int = DEFAULT_CAP) -> np.ndarray:
    """Terminal lineage counts of many independent runs (vectorized over runs).

    ``n0 = INF`` uses the same entrance delay as :func:`simulate_forest`.
    """
    if theta < 0:
        raise DomainError("theta must be nonnegative")
    start = _start_count(n0, cap)
    floor = 1 if theta == 0 else 0
    out = []
    for rng, size in block_rngs(seed, replicates):
        k = np.full(size, start, dtype=np.int64)
        clock = _entrance_delays(theta, cap, size, rng) if n0 is INF else np.zeros(size)
        alive = (k > floor) & (clock <= t_end)
        while alive.any():
            kk = k[alive].astype(float)
            clock[alive] += rng.exponential(1.0, alive.sum()) / (0.5 * kk * (kk + theta - 1.0))
            moved = alive.copy()
            moved[alive] = clock[alive] <= t_end
            k[moved] -= 1
            alive = moved & (k > floor)
        out.append(k)
    return np.concatenate(out)


def entrance_cap_diagnostic(theta: float, t_end: float, replicates: int = 4 * 10**5, seed=0, cap: int = DEFAULT_CAP) -> float:
    """TV distance between entrance-law samples truncated at ``cap`` and at ``cap // 2``.

    Two independent samples differ by a TV of about 0.003 at 10**5 runs from
    noise alone, so the default uses 4 * 10**5 runs (noise about 0.002).
    """
    a = empirical_pmf(forest_terminal_counts(INF, theta, t_end, replicates, seed, cap=cap))
    b = empirical_pmf(forest_terminal_counts(INF, theta, t_end, replicates, seed + 1, cap=cap // 2))
    return compare_pmf(a, b)


def simulate_dual2d(m0, params: ModelParams, t_end: float, replicates: int = 1, seed=0) -> np.ndarray:
    """Terminal states of the two-type dual; shape ``(replicates, 2)``.

    Events arrive at total rate ``|k|(|k|+theta-1)/2`` and remove a type-``i``
    lineage with probability ``k_i/|k|``.
    """
    m1, m2 = (int(v) for v in m0)
    if m1 < 0 or m2 < 0:
        raise DomainError("m0 must be componentwise nonnegative")
    th = params.theta
    floor = 1 if th == 0 else 0
    out = []
    for rng, size in block_rngs(seed, max(replicates, 2)):
        k = np.tile(np.array([m1, m2], dtype=np.int64), (size, 1))
        clock = np.zeros(size)
        alive = k.sum(axis=1) > floor
        while alive.any():
            tot = k[alive].sum(axis=1).astype(float)
            clock[alive] += rng.exponential(1.0, alive.sum()) / (0.5 * tot * (tot + th - 1.0))
            moved = alive.copy()
            moved[alive] = clock[alive] <= t_end
            idx = np.nonzero(moved)[0]
            tot_m = k[idx].sum(axis=1)
            first = rng.random(idx.size) * tot_m < k[idx, 0]
            k[idx[first], 0] -= 1
            k[idx[~first], 1] -= 1
            alive = moved & (k.sum(axis=1) > floor)
        out.append(k)
    return np.concatenate(out)[:replicates]


# ---------------------------------------------------------------------------
# subordinated diffusion


def _run_or_equilibrate(start, z, params: ModelParams, dt: float, rng: np.random.Generator) -> np.ndarray:
    """``X(z)`` from ``start``; horizons long enough that every eigenfunction has
    decayed below ``e**-MIX_EXPONENT`` are drawn from Beta(alpha, beta) instead."""
    long = z * 0.5 * params.theta > MIX_EXPONENT
    out = np.empty(z.shape)
    out[long] = rng.beta(params.alpha, params.beta, int(long.sum()))
    out[~long] = simulate_wf_until(start[~long], z[~long], params, dt, rng)
    return out


def _ig_times(theta: float, t: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Unkilled subordinator values ``Z(t_i)`` for an array of horizons."""
    if theta == 1.0:
        n = rng.standard_normal(t.shape)
        return t * t / (n * n)
    return rng.wald(2.0 * t / abs(theta - 1.0), t * t)


def simulate_subordinated_wf(
    x0: float,
    params: ModelParams,
    t: float,
    replicates: int,
    seed=0,
    dt: float = 1e-4,
    mode: str = "restart",
) -> np.ndarray:
    """Terminal values of ``X(Z(t))`` with ``Z`` the inverse Gaussian subordinator.

    For ``theta < 1`` the subordinator can be killed at rate ``1 - theta``:

    * ``mode="restart"``: at the kill time the state is replaced by a fresh
      Beta(alpha, beta) draw and the subordinated process continues for the
      remaining time (further kills are handled the same way);
    * ``mode="kill"``: a killed path ends at ``X(infinity)``, drawn from
      Beta(alpha, beta);
    * ``mode="none"``: no killing.

    For ``theta >= 1`` the modes coincide. Horizons ``Z`` so long that the
    slowest eigenfunction has decayed by ``e**-40`` are sampled from the
    stationary law instead of being stepped through.
    """
    params.require_stationary()
    if mode not in ("restart", "kill", "none"):
        raise DomainError("mode must be restart, kill or none")
    if not 0 <= x0 <= 1:
        raise DomainError("x0 must lie in [0, 1]")
    if t < 0:
        raise DomainError("t must be nonnegative")
    if t == 0:
        return np.full(replicates, float(x0))
    th = params.theta
    killing = th < 1 and mode != "none"
    rate = 1.0 - th if killing else 0.0
    out = []
    for rng, size in block_rngs(seed, replicates):
        start = np.full(size, float(x0))
        remaining = np.full(size, float(t))
        if killing:
            tau = rng.exponential(1.0 / rate, size)
            hit = tau < t
            if mode == "kill":
                res = np.empty(size)
                res[hit] = rng.beta(params.alpha, params.beta, hit.sum())
                live = ~hit
                z = _ig_times(th, remaining[live], rng)
                res[live] = _run_or_equilibrate(start[live], z, params, dt, rng)
                out.append(res)
                continue
            # restart: the last kill before t decides the fresh start
            while True:
                more = rng.exponential(1.0 / rate, size)
                later = hit & (tau + more < t)
                if not later.any():
                    break
                tau = np.where(later, tau + more, tau)
            start[hit] = rng.beta(params.alpha, params.beta, hit.sum())
            remaining[hit] = t - tau[hit]
        z = _ig_times(th, remaining, rng)
        out.append(_run_or_equilibrate(start, z, params, dt, rng))
    return np.concatenate(out)


# ---------------------------------------------------------------------------
# empirical comparison


def empirical_pmf(samples) -> ProbVector:
    s = np.asarray(samples)
    if s.size == 0:
        raise DomainError("samples must be nonempty")
    if np.any(s < 0) or np.any(s != np.round(s)):
        raise DomainError("samples must be nonnegative integers")
    counts = np.bincount(s.astype(np.int64).ravel())
    return ProbVector(counts / s.size)


def compare_pmf(a, b) -> float:
    """Total variation distance ``sum |a - b| / 2``, padding the shorter vector with zeros."""
    pa = np.asarray(getattr(a, "probs", a), dtype=float)
    pb = np.asarray(getattr(b, "probs", b), dtype=float)
    oa, ob = getattr(a, "offset", 0), getattr(b, "offset", 0)
    lo = min(oa, ob)
    hi = max(oa + len(pa), ob + len(pb))
    va = np.zeros(hi - lo)
    vb = np.zeros(hi - lo)
    va[oa - lo : oa - lo + len(pa)] = pa
    vb[ob - lo : ob - lo + len(pb)] = pb
    return 0.5 * math.fsum(np.abs(va - vb))


def write_samples_csv(path, samples, name: str = "value"):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([name])
        for v in np.asarray(samples).ravel():
            w.writerow([repr(v.item())])
