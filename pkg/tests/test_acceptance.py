"""Acceptance gate: one test per criterion, each printing a single PASS/FAIL line.

The suites live in ``coaldual.verify``; every one runs once with seed 42 and
the runtime of the timed criteria is measured around its own suite.
"""
import time

import pytest

from coaldual.verify import SUITES, VerificationReport, run_verification

SEED = 42
RUNTIME_LIMITS = {1: 60.0, 4: 120.0}


@pytest.fixture(scope="module")
def outcome():
    report = VerificationReport(seed=SEED)
    elapsed = {}
    for name, (criterion, fn) in SUITES.items():
        start = time.perf_counter()
        report.results.extend(fn(SEED))
        elapsed[criterion] = time.perf_counter() - start
    return report, elapsed


def check(outcome, capsys, criterion):
    report, elapsed = outcome
    rows = report.for_criterion(criterion)
    ok = report.criterion_passed(criterion)
    limit = RUNTIME_LIMITS.get(criterion)
    fast = limit is None or elapsed[criterion] < limit
    timing = f" runtime {elapsed[criterion]:.1f}s" + (f" (limit {limit:.0f}s)" if limit else "")
    worst = [r for r in rows if not r.passed]
    note = "; ".join(f"{r.name}: {r.metric:.3e} vs tol {r.tolerance:.1e}" for r in worst)
    with capsys.disabled():
        print(f"\ncriterion {criterion:2d}: {'PASS' if ok and fast else 'FAIL'} ({len(rows)} checks){timing} {note}".rstrip())
    assert rows, f"no checks recorded for criterion {criterion}"
    assert ok, "\n".join(r.line() for r in rows)
    assert fast, f"criterion {criterion} took {elapsed[criterion]:.1f}s"


def test_criterion_01_expansion_equivalence(outcome, capsys):
    check(outcome, capsys, 1)


def test_criterion_02_orthonormality_and_eigen_identity(outcome, capsys):
    check(outcome, capsys, 2)


def test_criterion_03_death_process_calculus(outcome, capsys):
    check(outcome, capsys, 3)


def test_criterion_04_complex_representation_mc(outcome, capsys):
    check(outcome, capsys, 4)


def test_criterion_05_simulators_vs_oracles(outcome, capsys):
    check(outcome, capsys, 5)


def test_criterion_06_subordinated_forest(outcome, capsys):
    check(outcome, capsys, 6)


def test_criterion_07_generating_function(outcome, capsys):
    check(outcome, capsys, 7)


def test_criterion_08_transitions_and_rates(outcome, capsys):
    check(outcome, capsys, 8)


def test_criterion_09_inverse_gaussian_subordinator(outcome, capsys):
    check(outcome, capsys, 9)


def test_criterion_10_positivity_scans(outcome, capsys):
    check(outcome, capsys, 10)


def test_criterion_11_determinism(outcome, capsys):
    # replaying the generators is one check; rerunning the whole verification is the other
    report, _ = outcome
    same = report.to_json() == run_verification(seed=SEED).to_json()
    if not same:
        with capsys.disabled():
            print("\ncriterion 11: FAIL (full verification reports differ between runs)")
    assert same
    check(outcome, capsys, 11)
