"""Truncation control, probability vectors, Monte Carlo estimates and
alternating-sum bookkeeping shared across modules."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

EPS = np.finfo(float).eps
# relative cancellation above which an alternating sum is refused
CANCELLATION_BUDGET = 1e12
MC_BLOCK = 1 << 17


@dataclass(frozen=True)
class SeriesControl:
    """How far to push an infinite series.

    A series stops once ``consecutive_small`` successive terms fall below
    ``tail_tol`` (plus any decay condition the caller adds); ``max_terms`` is
    a hard cap after which :class:`~coaldual.errors.TruncationError` is raised.
    """

    max_terms: int = 4000
    tail_tol: float = 1e-15
    consecutive_small: int = 3

    def __post_init__(self):
        if self.max_terms < 1:
            raise DomainError("max_terms must be >= 1")
        if not self.tail_tol > 0:
            raise DomainError("tail_tol must be positive")
        if self.consecutive_small < 2:
            raise DomainError("consecutive_small must be >= 2")


DEFAULT_CONTROL = SeriesControl()


@dataclass
class DensityValue:
    value: float
    truncation_order: int
    last_term_magnitude: float
    clipped: bool = False
    # set when the expansion is known to converge slowly (small t)
    unreliable: bool = False

    def __float__(self):
        return float(self.value)


@dataclass
class ProbVector:
    """Finite probability vector, indexed from ``offset``."""

    probs: np.ndarray
    norm_defect: float = field(init=False)
    abs_error: float = 0.0
    offset: int = 0

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float).copy()
        if np.any(p < -1e-12):
            raise DomainError(f"probability entry below -1e-12: {p.min()}")
        p[p < 0] = 0.0
        self.probs = p
        self.norm_defect = abs(1.0 - math.fsum(p))

    def __len__(self):
        return len(self.probs)

    def __getitem__(self, k):
        return self.probs[k - self.offset] if 0 <= k - self.offset < len(self.probs) else 0.0

    def mean(self) -> float:
        return math.fsum(self.probs * (np.arange(len(self.probs)) + self.offset))


@dataclass
class MCEstimate:
    mean: float
    std_error: float
    replicates: int
    seed: int
    # imaginary-part diagnostic for complex-valued estimators
    imag_mean: float | None = None
    imag_std_error: float | None = None

    def z_score(self, target: float) -> float:
        if self.std_error == 0:
            return 0.0 if self.mean == target else math.inf
        return (self.mean - target) / self.std_error

    def agrees(self, target: float, n_se: float = 3.0, allowance: float = 0.0) -> bool:
        return abs(self.mean - target) <= n_se * self.std_error + allowance


class RunningMoments:
    """Accumulate mean and standard error over blocks of samples."""

    def __init__(self):
        self.n = 0
        self._sums = []
        self._sq = []

    def add(self, values):
        values = np.asarray(values, dtype=float)
        self.n += values.size
        self._sums.append(math.fsum(values))
        self._sq.append(values)

    def result(self):
        mean = math.fsum(self._sums) / self.n
        ss = math.fsum(math.fsum((v - mean) ** 2) for v in self._sq)
        sd = math.sqrt(ss / (self.n - 1)) if self.n > 1 else 0.0
        return mean, sd / math.sqrt(self.n)


def block_rngs(seed: int, replicates: int, block: int = MC_BLOCK):
    """Yield ``(rng, size)`` pairs with generators derived from ``(seed, block index)``."""
    if replicates < 2:
        raise DomainError("need at least two replicates")
    done = 0
    b = 0
    while done < replicates:
        size = min(block, replicates - done)
        yield np.random.default_rng([int(seed) & (2**64 - 1), b]), size
        done += size
        b += 1


def signed_sum(log_abs: np.ndarray, signs: np.ndarray, log_scale=None):
    """Sum ``signs * exp(log_abs)`` with consecutive terms paired.

    Returns ``(value, cancellation, abs_error)`` where ``cancellation`` is the
    largest partial sum magnitude over the result magnitude and ``abs_error``
    is a rounding bound. Each log-magnitude carries an absolute error of
    about ``eps * log_scale`` (the total size of the pieces it was assembled
    from; ``|log_abs|`` by default), which ``exp`` turns into relative error.
    """
    log_abs = np.asarray(log_abs, dtype=float)
    signs = np.asarray(signs, dtype=float)
    if log_abs.size == 0:
        return 0.0, 1.0, 0.0
    terms = signs * np.exp(log_abs)
    if terms.size % 2:
        terms = np.append(terms, 0.0)
    pairs = terms[0::2] + terms[1::2]
    value = math.fsum(pairs)
    partial = np.abs(np.cumsum(terms))
    biggest = float(partial.max()) if partial.size else 0.0
    scale = np.abs(log_abs) if log_scale is None else np.asarray(log_scale, dtype=float)
    abs_error = float(4 * EPS * np.sum(np.exp(log_abs) * (1.0 + scale)))
    if value == 0.0:
        cancellation = math.inf if biggest > 0 else 1.0
    else:
        cancellation = biggest / abs(value)
    return value, cancellation, abs_error
