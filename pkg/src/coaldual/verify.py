"""Verification suites: closed forms checked against independent routes.

Each suite returns a list of :class:`CheckResult`. Reports are pure
functions of the seed (no timings, no host details), so two runs with the
same seed serialize to identical bytes.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .jacobi import (
    density_1d_dual,
    density_1d_eigen,
    density_ddim_dual,
    density_ddim_eigen,
    generator_eigen_check,
)
from .lod import (
    dual2d_transition,
    duality_moment_check,
    q_entrance,
    q_entrance_mc,
    q_entrance_vector,
    q_finite,
    q_finite_matrix,
    q_finite_mc,
    q_finite_vector,
)
from .series import ProbVector
from .simulation import (
    PathConfig,
    compare_pmf,
    empirical_pmf,
    forest_terminal_counts,
    simulate_dual2d,
    simulate_forest,
    simulate_wf_terminal,
)
from .special import DirichletParams, ModelParams, gauss_jacobi, jacobi_orthonormal_table
from .spectra import (
    classical_poisson_series,
    jacobi_poisson_bilinear,
    jacobi_poisson_kernel,
    kernel_K,
    poisson_kernel_scale,
)
from .subordination import (
    forest_jump_rate,
    forest_pgf,
    forest_pmf,
    forest_pmf_mc,
    forest_pmf_series,
    forest_pmf_theta0,
    forest_pmf_vector,
    forest_transition,
    forest_transition_matrix,
    ig_laplace,
    ig_sample,
    pgf_series_identity,
    subordinated_eigenvalue,
)

PARAM_SETS = (ModelParams(1.0, 1.0), ModelParams(2.0, 3.0), ModelParams(0.5, 0.5))
DENSITY_TIMES = (0.1, 0.5, 1.0, 2.0)
SIMPLEX_POINTS = (
    (0.2, 0.2, 0.6), (0.2, 0.4, 0.4), (0.2, 0.6, 0.2), (0.4, 0.2, 0.4),
    (0.4, 0.4, 0.2), (0.6, 0.2, 0.2), (0.1, 0.1, 0.8), (0.7, 0.2, 0.1),
)


@dataclass
class CheckResult:
    criterion: int
    name: str
    passed: bool
    metric: float
    tolerance: float
    detail: str = ""

    def __post_init__(self):
        # plain Python scalars keep reports JSON-serializable
        self.passed = bool(self.passed)
        self.metric = float(self.metric)
        self.tolerance = float(self.tolerance)

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"{tag}  [{self.criterion:2d}] {self.name:<44} {self.metric:.3e} (tol {self.tolerance:.1e}) {self.detail}".rstrip()


@dataclass
class VerificationReport:
    seed: int
    results: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def for_criterion(self, criterion: int) -> list:
        return [r for r in self.results if r.criterion == criterion]

    def criterion_passed(self, criterion: int) -> bool:
        rows = self.for_criterion(criterion)
        return bool(rows) and all(r.passed for r in rows)

    def to_rows(self) -> list[dict]:
        return [asdict(r) for r in self.results]

    def to_json(self) -> str:
        return json.dumps({"seed": self.seed, "rows": self.to_rows()}, sort_keys=True)

    def table(self) -> str:
        return "\n".join(r.line() for r in self.results)


def _sub_seed(seed: int, *tags: int) -> int:
    """Independent, reproducible seed for one case of a suite."""
    return int(np.random.SeedSequence([seed, *tags]).generate_state(1)[0])


def _max_check(criterion, name, values, tol, detail="", strict=True) -> CheckResult:
    worst = float(max(values)) if len(values) else 0.0
    ok = worst < tol if strict else worst <= tol
    return CheckResult(criterion, name, bool(ok and math.isfinite(worst)), worst, tol, detail)


def _z_check(criterion, name, zs, detail="") -> CheckResult:
    """All estimates within 3 standard errors; the metric is the largest |z|."""
    worst = float(max(abs(z) for z in zs))
    return CheckResult(criterion, name, worst <= 3.0, worst, 3.0, f"{len(zs)} estimates {detail}".rstrip())


# ---------------------------------------------------------------------------
# 1. spectral expansion vs lines-of-descent mixture


def suite_expansion(seed: int) -> list[CheckResult]:
    grid = np.round(np.arange(1, 10) / 10.0, 10)
    out = []
    for p in PARAM_SETS:
        worst = 0.0
        for t in DENSITY_TIMES:
            for x in grid:
                for y in grid:
                    e = density_1d_eigen(x, y, t, p).value
                    d = density_1d_dual(x, y, t, p).value
                    worst = max(worst, abs(e - d))
        out.append(CheckResult(1, f"1-d eigen vs dual a={p.alpha:g} b={p.beta:g}", worst < 1e-6, worst, 1e-6))
    for eps in ((1.0, 1.0, 1.0), (0.5, 1.0, 2.0)):
        dp = DirichletParams(eps)
        worst = 0.0
        for t in DENSITY_TIMES:
            for x in SIMPLEX_POINTS:
                for y in SIMPLEX_POINTS:
                    worst = max(worst, abs(density_ddim_eigen(x, y, t, dp).value - density_ddim_dual(x, y, t, dp).value))
        label = ",".join(f"{e:g}" for e in eps)
        out.append(CheckResult(1, f"3-simplex eigen vs dual eps=({label})", worst < 1e-5, worst, 1e-5))
    return out


# ---------------------------------------------------------------------------
# 2. orthonormality and the eigenfunction identity


def suite_orthonormality(seed: int) -> list[CheckResult]:
    out = []
    for p in PARAM_SETS:
        quad = gauss_jacobi(64, p)
        table = jacobi_orthonormal_table(20, p, quad.nodes)
        gram = (table * quad.weights[None, :]) @ table.T
        err = float(np.max(np.abs(gram - np.eye(21))))
        out.append(CheckResult(2, f"Gram matrix n<=20 a={p.alpha:g} b={p.beta:g}", err <= 1e-10, err, 1e-10))
        resid = [generator_eigen_check(n, p) for n in range(1, 21)]
        out.append(_max_check(2, f"generator residual n<=20 a={p.alpha:g} b={p.beta:g}", resid, 1e-9))
    return out


# ---------------------------------------------------------------------------
# 3. death-process calculus


def suite_death_process(seed: int) -> list[CheckResult]:
    defects = []
    for theta in (0.0, 0.5, 1.0, 2.0, 5.0):
        for t in (0.1, 0.5, 1.0, 2.0):
            if theta > 0:
                defects.append(q_entrance_vector(theta, t, precise=True).norm_defect)
            for n in (1, 5, 15, 50):
                defects.append(q_finite_vector(n, theta, t).norm_defect)
    out = [_max_check(3, "normalization of q vectors", defects, 1e-8, strict=False)]
    ck = []
    for theta in (0.0, 0.5, 2.0):
        for s, t in ((0.2, 0.3), (0.5, 1.0), (1.0, 0.1)):
            lhs = q_finite_matrix(15, theta, s) @ q_finite_matrix(15, theta, t)
            ck.append(float(np.max(np.abs(lhs - q_finite_matrix(15, theta, s + t)))))
    out.append(_max_check(3, "Chapman-Kolmogorov for q_finite n<=15", ck, 1e-8, strict=False))
    gaps = []
    for theta in (1.0, 2.0):
        for t in (0.5, 1.0, 2.0):
            ent = q_entrance_vector(theta, t, precise=True)
            fin = q_finite_vector(200, theta, t)
            m = max(len(ent), len(fin))
            gaps.append(max(abs(fin[k] - ent[k]) for k in range(m)))
    out.append(_max_check(3, "q_finite(200) vs entrance law, t>=0.5", gaps, 1e-6))
    return out


# ---------------------------------------------------------------------------
# 4. complex-variable Monte Carlo representations


def suite_complex_mc(seed: int, replicates: int = 10**6) -> list[CheckResult]:
    zs_ent, zs_fin = [], []
    for a, theta in enumerate((1.0, 2.0)):
        for b, t in enumerate((0.5, 1.0)):
            for k in range(6):
                est = q_entrance_mc(k, theta, t, replicates, _sub_seed(seed, 4, 0, a, b, k))
                zs_ent.append(est.z_score(q_entrance(k, theta, t)))
                est = q_finite_mc(10, k, theta, t, replicates, _sub_seed(seed, 4, 1, a, b, k))
                zs_fin.append(est.z_score(q_finite(10, k, theta, t)))
    return [
        _z_check(4, "entrance law: series vs circle MC", zs_ent, f"at {replicates} paths"),
        _z_check(4, "finite start n=10: series vs circle MC", zs_fin, f"at {replicates} paths"),
    ]


# ---------------------------------------------------------------------------
# 5. simulators against closed forms


def suite_simulators(seed: int) -> list[CheckResult]:
    out = []
    counts = forest_terminal_counts(20, 2.0, 0.5, 10**5, _sub_seed(seed, 5, 0))
    tv = compare_pmf(empirical_pmf(counts), q_finite_vector(20, 2.0, 0.5))
    out.append(CheckResult(5, "forest terminal pmf vs q_finite (n=20)", tv < 0.01, tv, 0.01))

    params = ModelParams(1.0, 1.0)
    pairs = simulate_dual2d((3, 2), params, 0.8, 10**5, _sub_seed(seed, 5, 1))
    exact = {(i, j): dual2d_transition((3, 2), (i, j), params, 0.8) for i in range(4) for j in range(3)}
    freq = {key: 0 for key in exact}
    keys, cnt = np.unique(pairs, axis=0, return_counts=True)
    for key, c in zip(map(tuple, keys), cnt):
        freq[(int(key[0]), int(key[1]))] = c / len(pairs)
    tv = 0.5 * sum(abs(freq[key] - exact[key]) for key in exact)
    out.append(CheckResult(5, "two-type dual vs closed transition", tv < 0.02, tv, 0.02))

    worst, ok = 0.0, True
    cases = (((2, 1), 0.3, ModelParams(1.0, 2.0), 0.5), ((1, 2), 0.6, ModelParams(2.0, 1.5), 1.0))
    for c, (m, x, p, t) in enumerate(cases):
        chk = duality_moment_check(m, x, p, t, 10**5, _sub_seed(seed, 5, 2, c), dt=1e-3)
        excess = abs(chk.lhs.mean - chk.rhs) / (3.0 * chk.lhs.std_error + chk.allowance)
        worst = max(worst, excess)
        ok = ok and chk.ok
    out.append(CheckResult(5, "duality moment identity (|diff| / (3SE+dt allowance))", ok, worst, 1.0))
    return out


# ---------------------------------------------------------------------------
# 6. subordinated forest law


def suite_subordinated_forest(seed: int) -> list[CheckResult]:
    diffs, defects = [], []
    for theta in (0.0, 0.5, 1.0, 2.0, 5.0):
        for t in (0.2, 0.6931, 1.5):
            for k in range(1 if theta == 0 else 0, 9):
                closed = forest_pmf_theta0(k, t) if theta == 0 else forest_pmf(k, theta, t)
                diffs.append(abs(closed - forest_pmf_series(k, theta, t)))
            defects.append(forest_pmf_vector(theta, t).norm_defect)
    out = [
        _max_check(6, "closed form vs substituted series", diffs, 1e-10),
        _max_check(6, "normalization of forest pmf", defects, 1e-10, strict=False),
    ]
    zs = []
    for a, theta in enumerate((0.0, 0.5, 1.0, 2.0)):
        t = 0.5
        ests = forest_pmf_mc(theta, t, kmax=5, replicates=10**5, seed=_sub_seed(seed, 6, a))
        for k, est in enumerate(ests):
            if theta == 0:
                target = forest_pmf_theta0(k, t) if k >= 1 else 0.0
            else:
                target = forest_pmf(k, theta, t)
            if est.std_error == 0 and est.mean == target:
                continue
            zs.append(est.z_score(target))
    out.append(_z_check(6, "closed form vs inverse Gaussian MC", zs, "at 100000 draws"))
    return out


# ---------------------------------------------------------------------------
# 7. generating function


def suite_pgf(seed: int) -> list[CheckResult]:
    diffs = []
    for theta in (0.5, 1.0, 2.0, 5.0):
        for t in (0.3, 1.0):
            pv = forest_pmf_vector(theta, t)
            for s in (0.2, 0.5, 0.9):
                direct = math.fsum(pv.probs * s ** np.arange(len(pv)))
                diffs.append(abs(forest_pgf(s, theta, t) - direct))
    out = [_max_check(7, "pgf vs direct power series", diffs, 1e-10)]
    w = np.linspace(0.01, 0.24, 24)
    gaps = []
    for theta in (0.5, 1.0, 2.0, 5.0):
        direct, closed = pgf_series_identity(w, theta)
        gaps.append(float(np.max(np.abs(direct - closed))))
    out.append(_max_check(7, "series identity for w in (0, 1/4)", gaps, 1e-10))
    return out


# ---------------------------------------------------------------------------
# 8. transition matrix and jump rates


def suite_transitions(seed: int) -> list[CheckResult]:
    rows, ck, rel = [], [], []
    for theta in (0.0, 0.5, 1.0, 2.0, 5.0):
        for t in (0.1, 0.7, 2.0):
            P = forest_transition_matrix(25, theta, t)
            rows.append(float(np.max(np.abs(P.sum(axis=1) - 1.0))))
        for s, t in ((0.2, 0.5), (1.0, 0.3)):
            lhs = forest_transition_matrix(25, theta, s) @ forest_transition_matrix(25, theta, t)
            ck.append(float(np.max(np.abs(lhs - forest_transition_matrix(25, theta, s + t)))))
        for s, t in ((0.5, 0.3), (1.0, 0.5)):
            # entrance row: P(INF -> j, s + t) = sum_i P(INF -> i, s) P(i -> j, t)
            start = forest_pmf_vector(theta, s).probs
            end = forest_pmf_vector(theta, s + t).probs
            tail = np.cumsum(start[::-1])[::-1]
            last = int(np.searchsorted(-tail, -1e-15))
            for j in range(6):
                mixed = math.fsum(start[i] * forest_transition(i, j, theta, t) for i in range(j, last + 1))
                ck.append(abs(mixed - end[j]))
        h = 1e-4
        for i in range(1, 7):
            for j in range(i):
                rate = forest_jump_rate(i, j, theta)
                d1 = forest_transition(i, j, theta, h) / h
                d2 = forest_transition(i, j, theta, h / 2) / (h / 2)
                fd = 2.0 * d2 - d1
                if rate == 0.0:
                    rel.append(abs(fd))
                else:
                    rel.append(abs(fd - rate) / rate)
    hand = abs(forest_jump_rate(1, 0, 2.0) - 1.0)
    return [
        _max_check(8, "rows stochastic (i <= 25)", rows, 1e-10, strict=False),
        _max_check(8, "Chapman-Kolmogorov incl. entrance row", ck, 1e-8, strict=False),
        _max_check(8, "finite difference vs jump rates, i <= 6", rel, 1e-4),
        CheckResult(8, "hand value rate(1 -> 0, theta=2) = 1", hand < 1e-14, hand, 1e-14),
    ]


# ---------------------------------------------------------------------------
# 9. inverse Gaussian subordinator


def _mean_z(draws: np.ndarray, target: float) -> float:
    se = draws.std(ddof=1) / math.sqrt(len(draws))
    return (draws.mean() - target) / se


def suite_ig_subordinator(seed: int, replicates: int = 10**5) -> list[CheckResult]:
    zs_mean, zs_lap, zs_eig, closed = [], [], [], []
    for a, theta in enumerate((0.5, 2.0, 3.0)):
        for b, t in enumerate((0.5, 1.0)):
            z = ig_sample(theta, t, _sub_seed(seed, 9, 0, a, b), replicates)
            zs_mean.append(_mean_z(z, 2.0 * t / abs(theta - 1.0)))
    for a, theta in enumerate((0.5, 1.0, 2.0)):
        z = ig_sample(theta, 0.7, _sub_seed(seed, 9, 1, a), replicates)
        for lam in (0.5, 1.0, 3.0):
            zs_lap.append(_mean_z(np.exp(-lam * z), ig_laplace(theta, 0.7, lam)))
    for a, theta in enumerate((1.0, 2.0, 3.5)):
        t = 0.5
        z = ig_sample(theta, t, _sub_seed(seed, 9, 2, a), replicates)
        for n in (1, 2, 3):
            target = math.exp(-n * t)
            closed.append(abs(subordinated_eigenvalue(n, theta, t) - target))
            zs_eig.append(_mean_z(np.exp(-0.5 * n * (n + theta - 1.0) * z), target))
    return [
        _z_check(9, "sample mean vs 2t/|theta-1|", zs_mean, f"at {replicates} draws"),
        _z_check(9, "MC Laplace transform vs closed form", zs_lap, f"at {replicates} draws"),
        _z_check(9, "subordinated eigenvalue exp(-nt) by MC", zs_eig, f"at {replicates} draws"),
        _max_check(9, "subordinated eigenvalue formula = exp(-nt)", closed, 1e-14),
    ]


# ---------------------------------------------------------------------------
# 10. positivity scans


def suite_positivity(seed: int) -> list[CheckResult]:
    grid = np.round(np.arange(1, 20) * 0.05, 10)
    lows = []
    for p in (ModelParams(0.5, 0.5), ModelParams(1.0, 2.0), ModelParams(3.0, 3.0)):
        for r in (0.3, 0.7, 0.95):
            for i, x in enumerate(grid):
                for y in grid[i:]:
                    lows.append(jacobi_poisson_kernel(r, x, y, p))
    low = float(min(lows))
    out = [CheckResult(10, "Jacobi-Poisson kernel minimum on grid", low >= -1e-10, low, -1e-10)]

    gaps = []
    spots = ((0.1, 0.9), (0.3, 0.3), (0.5, 0.8), (0.95, 0.05))
    for p in (ModelParams(0.5, 0.5), ModelParams(1.0, 2.0), ModelParams(3.0, 3.0)):
        a, b = p.beta - 1.0, p.alpha - 1.0
        for r in (0.3, 0.7):
            for x, y in spots:
                X, Y = 2 * x - 1, 2 * y - 1
                closed = jacobi_poisson_bilinear(r, X, Y, a, b)
                series = classical_poisson_series(r, X, Y, a, b, n_terms=600)
                gaps.append(abs(closed - series) / max(1.0, abs(series)))
                kern = jacobi_poisson_kernel(r, x, y, p)
                gaps.append(abs(kern - poisson_kernel_scale(p) * closed) / max(1.0, abs(kern)))
    out.append(_max_check(10, "bilinear closed form vs series (spot points)", gaps, 1e-8))

    p = ModelParams(1.0, 2.0)
    kgrid = np.round(np.linspace(0.05, 0.95, 10), 10)
    kmin = math.inf
    for i, x in enumerate(kgrid):
        for j, y in enumerate(kgrid[i:], start=i):
            for z in kgrid[j:]:
                kmin = min(kmin, kernel_K(x, y, z, p, r=0.95).smoothed)
    out.append(CheckResult(10, "smoothed K minimum (a=1, b=2, r=0.95)", kmin >= -1e-8, float(kmin), -1e-8))
    return out


# ---------------------------------------------------------------------------
# 11. determinism of the seeded generators


def suite_determinism(seed: int) -> list[CheckResult]:
    """Replay every seeded generator twice and compare the raw bytes."""

    def draws(s):
        cfg = PathConfig(x0=0.3, t_end=0.2, dt=1e-3)
        log = simulate_forest(30, 1.5, 0.4, seed=s)
        return [
            forest_terminal_counts(40, 2.0, 0.3, 2000, s).tobytes(),
            simulate_dual2d((3, 2), ModelParams(1.0, 1.0), 0.5, 2000, s).tobytes(),
            simulate_wf_terminal(cfg, ModelParams(1.0, 2.0), 2000, s).tobytes(),
            np.asarray(ig_sample(0.5, 1.0, s, 2000)).tobytes(),
            json.dumps(asdict(q_entrance_mc(2, 2.0, 0.5, 20000, s)), sort_keys=True).encode(),
            log.times.tobytes() + log.k_path.tobytes() + ",".join(log.kinds).encode(),
        ]

    first, second = draws(seed), draws(seed)
    mismatches = sum(a != b for a, b in zip(first, second))
    return [CheckResult(11, "seeded generators replay bit-identically", mismatches == 0, float(mismatches), 0.0)]


SUITES = {
    "expansion": (1, suite_expansion),
    "orthonormality": (2, suite_orthonormality),
    "death_process": (3, suite_death_process),
    "complex_mc": (4, suite_complex_mc),
    "simulators": (5, suite_simulators),
    "subordinated_forest": (6, suite_subordinated_forest),
    "pgf": (7, suite_pgf),
    "transitions": (8, suite_transitions),
    "ig_subordinator": (9, suite_ig_subordinator),
    "positivity": (10, suite_positivity),
    "determinism": (11, suite_determinism),
}


def resolve_suites(names) -> list[str]:
    """Map ``"all"``, suite names or criterion numbers to suite names."""
    if names is None or names == "all" or names == ["all"]:
        return list(SUITES)
    if isinstance(names, str):
        names = [n for n in names.split(",") if n]
    by_number = {str(num): name for name, (num, _) in SUITES.items()}
    out = []
    for n in names:
        n = str(n).strip()
        if n == "all":
            return list(SUITES)
        name = by_number.get(n, n)
        if name not in SUITES:
            raise KeyError(f"unknown suite {n!r}; choose from {', '.join(SUITES)} or 1-11")
        out.append(name)
    return out


def run_verification(suites=None, seed: int = 42) -> VerificationReport:
    report = VerificationReport(seed=int(seed))
    for name in resolve_suites(suites):
        _, fn = SUITES[name]
        report.results.extend(fn(int(seed)))
    return report
