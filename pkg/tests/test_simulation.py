import math

import numpy as np
import pytest
from scipy import stats

from coaldual.errors import DomainError, StepSizeError
from coaldual.lod import dual2d_transition, q_entrance_vector, q_finite_vector
from coaldual.simulation import (
    BoundaryPolicy,
    ForestEventLog,
    PathConfig,
    compare_pmf,
    empirical_pmf,
    entrance_cap_diagnostic,
    entrance_delay_moments,
    forest_terminal_counts,
    simulate_dual2d,
    simulate_forest,
    simulate_subordinated_wf,
    simulate_wf_path,
    simulate_wf_terminal,
    write_samples_csv,
)
from coaldual.special import ModelParams, jacobi_orthonormal
from coaldual.subordination import INF, subordinated_eigenvalue


def z_score(samples, expected):
    s = np.asarray(samples, dtype=float)
    return (s.mean() - expected) / (s.std(ddof=1) / math.sqrt(s.size))


def test_path_config_validation():
    with pytest.raises(StepSizeError):
        PathConfig(0.5, 0.1, dt=0.2)
    with pytest.raises(StepSizeError):
        PathConfig(0.5, 1.0, dt=0.0)
    with pytest.raises(DomainError):
        PathConfig(1.5, 1.0)
    with pytest.raises(StepSizeError):
        PathConfig(0.5, 1.0, dt=0.5).check_step(ModelParams(3.0, 1.0))
    assert PathConfig(0.5, 1.0, dt=0.3).n_steps() == 4


def test_absorbing_boundaries_without_mutation():
    p = ModelParams(0.0, 0.0)
    cfg = PathConfig(0.0, 0.5, dt=1e-3, boundary_policy="absorb_if_no_mutation")
    terminal, path = simulate_wf_path(cfg, p, seed=1, record=True)
    assert terminal == 0.0 and np.all(path == 0.0)
    cfg = PathConfig(1.0, 0.5, dt=1e-3, boundary_policy=BoundaryPolicy.ABSORB_IF_NO_MUTATION)
    terminal, path = simulate_wf_path(cfg, ModelParams(1.0, 0.0), seed=1, record=True)
    assert terminal == 1.0 and np.all(path == 1.0)


def test_paths_stay_in_unit_interval_and_replay():
    p = ModelParams(0.3, 0.4)
    cfg = PathConfig(0.05, 1.0, dt=1e-3)
    for seed in range(5):
        _, path = simulate_wf_path(cfg, p, seed=seed, record=True)
        assert path.min() >= 0.0 and path.max() <= 1.0
        assert len(path) == cfg.n_steps() + 1
        again = simulate_wf_path(cfg, p, seed=seed, record=True)[1]
        assert np.array_equal(path, again)


def test_mean_follows_first_eigenfunction():
    p = ModelParams(2.0, 1.0)
    x0, t = 0.2, 0.6
    x = simulate_wf_terminal(PathConfig(x0, t, dt=1e-3), p, 100_000, seed=4)
    mean = p.alpha / p.theta + (x0 - p.alpha / p.theta) * math.exp(-p.theta * t / 2)
    se = x.std(ddof=1) / math.sqrt(x.size)
    assert abs(x.mean() - mean) < 3 * se + 1e-3


def test_long_run_marginal_is_beta():
    p = ModelParams(2.0, 3.0)
    x = simulate_wf_terminal(PathConfig(0.9, 4.0, dt=1e-3), p, 10_000, seed=8)
    ks = stats.kstest(x, stats.beta(p.alpha, p.beta).cdf)
    assert ks.statistic < 1.628 / math.sqrt(x.size)


def test_terminal_sampler_is_reproducible():
    p = ModelParams(1.0, 2.0)
    cfg = PathConfig(0.4, 0.3, dt=1e-3)
    assert np.array_equal(simulate_wf_terminal(cfg, p, 5000, seed=3), simulate_wf_terminal(cfg, p, 5000, seed=3))


def test_forest_terminal_pmf_matches_closed_form():
    counts = forest_terminal_counts(20, 2.0, 0.5, 100_000, seed=1)
    assert compare_pmf(empirical_pmf(counts), q_finite_vector(20, 2.0, 0.5)) < 0.01


def test_single_run_sampler_agrees_with_vectorized_sampler():
    single = [simulate_forest(8, 1.5, 0.4, seed=s).terminal for s in range(20_000)]
    many = forest_terminal_counts(8, 1.5, 0.4, 20_000, seed=2)
    assert compare_pmf(empirical_pmf(single), empirical_pmf(many)) < 0.03


def test_zero_mutation_forest_stops_at_one():
    for seed in range(20):
        log = simulate_forest(10, 0.0, 50.0, seed=seed)
        assert log.terminal == 1
        assert set(log.kinds) == {"coalescence"}
    assert forest_terminal_counts(10, 0.0, 50.0, 2000, seed=1).min() == 1


def test_event_log_invariants(tmp_path):
    log = simulate_forest(30, 2.0, 1.0, seed=5)
    assert np.all(np.diff(log.times) > 0)
    assert np.array_equal(log.k_path, np.arange(29, 29 - len(log.k_path), -1))
    assert set(log.kinds) <= {"coalescence", "mutation"}
    path = tmp_path / "events.csv"
    log.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "time,kind,k" and len(lines) == len(log.times) + 1
    first = lines[1].split(",")
    assert float(first[0]) == log.times[0] and int(first[2]) == log.k_path[0]
    assert ForestEventLog(4, 1.0).terminal == 4


def test_replayed_forest_is_identical():
    a = simulate_forest(INF, 1.0, 0.3, seed=9)
    b = simulate_forest(INF, 1.0, 0.3, seed=9)
    assert np.array_equal(a.times, b.times) and a.kinds == b.kinds and np.array_equal(a.k_path, b.k_path)


def test_mutation_fraction_per_edge_count():
    theta = 2.0
    muts, totals = np.zeros(21), np.zeros(21)
    for seed in range(3000):
        log = simulate_forest(20, theta, 5.0, seed=seed)
        before = log.k_path + 1
        np.add.at(totals, before, 1)
        np.add.at(muts, before, [k == "mutation" for k in log.kinds])
    for k in range(1, 21):
        p = theta / (k + theta - 1)
        se = math.sqrt(p * (1 - p) / totals[k])
        assert abs(muts[k] / totals[k] - p) < 3 * se + 1e-12


def test_entrance_delay_moments_match_direct_sums():
    for theta, cap in [(2.0, 500), (1.0, 250), (0.5, 100), (1.0 + 1e-8, 50)]:
        c = theta - 1.0
        k = np.arange(cap + 1, 20_000_001, dtype=float)
        rates = 0.5 * k * (k + c)
        # tails beyond the last term: sum 2/k^2 ~ 2/K and sum 4/k^4 ~ 4/(3K^3)
        mean = math.fsum(1.0 / rates) + 2.0 / (k[-1] + 0.5)
        var = math.fsum(1.0 / rates**2) + 4.0 / (3.0 * (k[-1] + 0.5) ** 3)
        got_mean, got_var = entrance_delay_moments(theta, cap)
        assert got_mean == pytest.approx(mean, rel=1e-9)
        assert got_var == pytest.approx(var, rel=1e-6)


def test_entrance_start_matches_entrance_law():
    counts = forest_terminal_counts(INF, 2.0, 0.5, 100_000, seed=6)
    assert compare_pmf(empirical_pmf(counts), q_entrance_vector(2.0, 0.5, precise=True)) < 0.01


def test_cap_halving_diagnostic():
    assert entrance_cap_diagnostic(2.0, 0.5, seed=3) < 0.005


def test_two_type_dual_matches_closed_form():
    p = ModelParams(1.0, 1.0)
    m0, t = (3, 2), 0.8
    ends = simulate_dual2d(m0, p, t, replicates=100_000, seed=2)
    assert ends.shape == (100_000, 2)
    emp = {}
    for pair, c in zip(*np.unique(ends, axis=0, return_counts=True)):
        emp[tuple(int(v) for v in pair)] = c / len(ends)
    tv = 0.5 * sum(
        abs(emp.get((a, b), 0.0) - dual2d_transition(m0, (a, b), p, t)) for a in range(4) for b in range(3)
    )
    assert tv < 0.02
    totals = empirical_pmf(ends.sum(axis=1))
    assert compare_pmf(totals, q_finite_vector(5, p.theta, t)) < 0.01


def test_two_type_dual_edge_cases():
    p = ModelParams(1.0, 1.0)
    assert np.all(simulate_dual2d((0, 0), p, 1.0, replicates=10, seed=1) == 0)
    assert simulate_dual2d((2, 1), p, 1.0, replicates=1, seed=1).shape == (1, 2)
    with pytest.raises(DomainError):
        simulate_dual2d((-1, 2), p, 1.0)


@pytest.mark.parametrize("n", [1, 2])
def test_subordinated_eigenvalue_by_simulation(n):
    p = ModelParams(1.5, 1.5)
    x0, t = 0.3, 0.5
    x = simulate_subordinated_wf(x0, p, t, 40_000, seed=1, dt=1e-3)
    expected = subordinated_eigenvalue(n, p.theta, t) * jacobi_orthonormal(n, p, x0)
    values = jacobi_orthonormal(n, p, x)
    se = values.std(ddof=1) / math.sqrt(values.size)
    assert abs(values.mean() - expected) < 3 * se + 5e-3


def test_stable_half_subordinator_case():
    p = ModelParams(0.5, 0.5)
    x = simulate_subordinated_wf(0.3, p, 0.4, 40_000, seed=2, dt=1e-3)
    expected = subordinated_eigenvalue(1, 1.0, 0.4) * jacobi_orthonormal(1, p, 0.3)
    assert abs(z_score(jacobi_orthonormal(1, p, x), expected)) < 4.0


def test_killing_scales_eigenfunction_means():
    # the Euler bias is shared by both modes, the killing factor is exact
    p = ModelParams(0.2, 0.3)
    t = 0.5
    kill = jacobi_orthonormal(1, p, simulate_subordinated_wf(0.3, p, t, 40_000, seed=3, dt=1e-3, mode="kill"))
    free = jacobi_orthonormal(1, p, simulate_subordinated_wf(0.3, p, t, 40_000, seed=4, dt=1e-3, mode="none"))
    factor = math.exp(-(1 - p.theta) * t)
    diff = kill.mean() - factor * free.mean()
    se = math.sqrt(kill.var(ddof=1) / kill.size + factor**2 * free.var(ddof=1) / free.size)
    assert abs(diff) < 4 * se


def test_restart_and_kill_agree_in_law():
    p = ModelParams(0.2, 0.3)
    a = simulate_subordinated_wf(0.3, p, 0.5, 20_000, seed=5, dt=1e-3, mode="kill")
    b = simulate_subordinated_wf(0.3, p, 0.5, 20_000, seed=6, dt=1e-3, mode="restart")
    assert stats.ks_2samp(a, b).pvalue > 0.001


def test_subordinated_long_run_is_beta():
    p = ModelParams(2.0, 1.5)
    x = simulate_subordinated_wf(0.9, p, 8.0, 10_000, seed=7, dt=2e-3)
    ks = stats.kstest(x, stats.beta(p.alpha, p.beta).cdf)
    assert ks.statistic < 1.628 / math.sqrt(x.size)


def test_subordinated_trivial_cases():
    p = ModelParams(1.0, 2.0)
    assert np.all(simulate_subordinated_wf(0.35, p, 0.0, 5, seed=1) == 0.35)
    with pytest.raises(DomainError):
        simulate_subordinated_wf(0.3, p, 1.0, 5, mode="bogus")


def test_pmf_comparison_basics(tmp_path):
    x = empirical_pmf([0, 1, 1, 2])
    assert compare_pmf(x, x) == 0.0
    assert compare_pmf([1.0, 0.0], [0.0, 0.0, 1.0]) == 1.0
    draws = np.random.default_rng(0).binomial(10, 0.5, 100_000)
    exact = stats.binom(10, 0.5).pmf(np.arange(11))
    assert compare_pmf(empirical_pmf(draws), exact) < 0.01
    with pytest.raises(DomainError):
        empirical_pmf([])
    with pytest.raises(DomainError):
        empirical_pmf([0.5])
    path = tmp_path / "s.csv"
    write_samples_csv(path, np.array([0.25, 0.5]))
    assert path.read_text().splitlines() == ["value", "0.25", "0.5"]
