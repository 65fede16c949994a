"""Acceptance gate: one test per criterion, each recording a PASS/FAIL line."""

import math
import time

import numpy as np
import pytest

from pricelab import cli, kernels
from pricelab.env import (
    GRANULAR_ACTIONS,
    GRANULAR_STATES,
    SPARSE_ACTIONS,
    SPARSE_STATES,
    CustomerState,
    EnvConfig,
    PricingEnv,
    purchase_probability,
)
from pricelab.harness import (
    RunConfig,
    compare_totals,
    draw_streams,
    run_factorial,
    run_illustrative,
    trajectory_spread,
)
from pricelab.oracle import (
    benchmark_closed_form,
    benchmark_monte_carlo,
    expected_reward_table,
    optimal_discount_continuous,
)
from pricelab.qlearn import BatchBuffer, QTable, record_and_maybe_flush, update_single
from pricelab.env import Observation

N_SEEDS = 20
SEEDS = list(range(N_SEEDS))
ALPHA = 0.05  # sign-test significance level


@pytest.fixture(scope="module")
def factorial():
    start = time.perf_counter()
    rows = run_factorial(RunConfig(iterations=100_000), SEEDS)
    return rows, time.perf_counter() - start


@pytest.fixture(scope="module")
def illustrative():
    return [run_illustrative(s) for s in SEEDS]


def test_1_oracle_correctness(verdict):
    start = time.perf_counter()
    d_star = optimal_discount_continuous(-35.0)
    report = benchmark_closed_form(EnvConfig())
    best = [SPARSE_ACTIONS[a] for a in report.best_actions()]
    elapsed = time.perf_counter() - start
    ok = abs(d_star - 0.0995) <= 0.0005 and all(d == 0.1 for d in best) and elapsed < 1.0
    verdict(
        "1 oracle correctness",
        ok,
        f"d*={d_star:.6f} (0.0995+-0.0005), sparse argmax={sorted(set(best))}, {elapsed:.3f}s (<1s)",
    )
    assert ok


@pytest.mark.parametrize(
    "grid", [(SPARSE_STATES, SPARSE_ACTIONS), (GRANULAR_STATES, GRANULAR_ACTIONS)], ids=["sparse", "granular"]
)
def test_2_monte_carlo_agrees_with_closed_form(grid, verdict):
    env = EnvConfig(*grid)
    start = time.perf_counter()
    mc = benchmark_monte_carlo(env, 10**5, seed=0)
    elapsed = time.perf_counter() - start
    closed = expected_reward_table(env)
    z = np.zeros_like(closed)
    live = mc.cell_std_errors > 0
    z[live] = np.abs(mc.cell_means - closed)[live] / mc.cell_std_errors[live]
    # zero-SE cells (d = 0) must match exactly
    exact = np.all(mc.cell_means[~live] == closed[~live])
    bad = int(np.sum(z > 4)) + int(not exact)
    ok = bad == 0 and elapsed < 60
    verdict(
        f"2 MC vs closed form ({env.n_states}x{env.n_actions})",
        ok,
        f"{bad} of {closed.size} cells beyond 4 SE (max {z.max():.2f} SE), {elapsed:.2f}s (<60s)",
    )
    assert ok


def test_3_update_rule_identities(verdict):
    start = time.perf_counter()
    rng = np.random.default_rng(123)
    n_s, n_a = 7, 10
    stream = [
        Observation(int(s), int(a), float(r), r > 0)
        for s, a, r in zip(
            rng.integers(n_s, size=20_000), rng.integers(n_a, size=20_000), rng.choice([0.0, 50.0, 90.0], 20_000)
        )
    ]

    # (a) batch with B=1 is the single rule, at the op level and in every kernel backend
    single, batch = QTable.zeros(n_s, n_a), QTable.zeros(n_s, n_a)
    buf = BatchBuffer(1)
    for obs in stream:
        update_single(single, obs, 0.1)
        record_and_maybe_flush(batch, buf, obs, 0.1)
    ident_a = np.array_equal(single.values, batch.values) and np.array_equal(single.visits, batch.visits)
    env = PricingEnv(EnvConfig())
    s = draw_streams(env.config, 50_000, 7, "single")
    for simulate in kernels.BACKENDS.values():
        outs = []
        for b in (0, 1):
            q = QTable.zeros(n_s, n_a)
            simulate(s.states, s.u_consider, s.u_convert, s.u_explore, s.explore_actions,
                     env.betas, env.conversion, env.prices, q.values, q.visits,
                     0.1, 0.1, b, False, -1, -1)  # fmt: skip
            outs.append(q)
        ident_a &= np.array_equal(outs[0].values, outs[1].values)

    # (b) repeated same-cell rewards follow the closed-form exponential average
    worst = 0.0
    for n in (1, 10, 100, 1000):
        q = QTable.zeros(1, 1)
        for _ in range(n):
            update_single(q, Observation(0, 0, 90.0, True), 0.1)
        exact = 90.0 * (1 - 0.9**n)
        worst = max(worst, abs(q.values[0, 0] - exact) / exact)
    ident_b = worst < 1e-12

    # (c) floor(N/B) flushes
    ident_c = True
    for b in (1, 3, 64, 1000, 25_000):
        q = QTable.zeros(n_s, n_a)
        buf = BatchBuffer(b)
        flushes = sum(record_and_maybe_flush(q, buf, obs, 0.1) for obs in stream)
        ident_c &= flushes == len(stream) // b and len(buf) == len(stream) % b
    elapsed = time.perf_counter() - start
    ok = ident_a and ident_b and ident_c and elapsed < 10
    verdict(
        "3 update-rule identities",
        ok,
        f"B=1 bit-identical={ident_a}, max rel err={worst:.1e} (<1e-12), flush count exact={ident_c}, {elapsed:.2f}s",
    )
    assert ok


ENV_CELLS = [(10, 7), (10, 40), (80, 7), (80, 40)]


@pytest.mark.parametrize("cell", ENV_CELLS, ids=[f"{a}x{s}" for a, s in ENV_CELLS])
def test_4_factorial_direction(cell, factorial, verdict):
    rows, elapsed = factorial
    by_key = {(r.action_space_size, r.state_space_size, r.update_method): r for r in rows}
    single, batch = by_key[(*cell, "single")], by_key[(*cell, "batch")]
    total = compare_totals(single.total_rewards, batch.total_rewards)
    total_ok = batch.mean_total_reward > single.mean_total_reward and total.p_value < ALPHA
    final_required = cell != (80, 40)
    final_ok = batch.mean_final_reward >= single.mean_final_reward
    ok = total_ok and (final_ok or not final_required) and elapsed < 600
    verdict(
        f"4 factorial direction {cell[0]}x{cell[1]}",
        ok,
        f"total batch {batch.mean_total_reward:,.0f} vs single {single.mean_total_reward:,.0f} "
        f"({total.mean_relative_improvement:+.2%}, {total.n_positive}/{N_SEEDS} seeds, sign p={total.p_value:.2g}); "
        f"final batch {batch.mean_final_reward:.2f} vs single {single.mean_final_reward:.2f}"
        f"{'' if final_required else ' (not gated)'}; suite {elapsed:.1f}s",
    )
    assert ok


def test_5_illustrative_improvement(illustrative, verdict):
    rep = compare_totals([r.single for r in illustrative], [r.batch for r in illustrative])
    ok = rep.mean_relative_improvement > 0 and rep.p_value < ALPHA
    in_band = 0.005 <= rep.mean_relative_improvement <= 0.05
    verdict(
        "5 illustrative improvement",
        ok,
        f"batch over single {rep.mean_relative_improvement:+.2%} ({rep.n_positive}/{N_SEEDS} seeds, "
        f"sign p={rep.p_value:.2g}); informational 0.5%-5% band: {'inside' if in_band else 'outside'}",
    )
    assert ok


def test_6_stability_direction(illustrative, verdict):
    spreads = [(trajectory_spread(r.single), trajectory_spread(r.batch)) for r in illustrative]
    narrower = sum(b < s for s, b in spreads)  # NaN (never converged) counts as a miss
    ok = narrower >= math.ceil(0.9 * N_SEEDS)
    s_med = np.nanmedian([s for s, _ in spreads])
    b_med = np.nanmedian([b for _, b in spreads])
    verdict(
        "6 stability direction",
        ok,
        f"batch Q(0.6, 0.17) spread narrower in {narrower}/{N_SEEDS} seeds (need >=90%); "
        f"median sd single {s_med:.2f} vs batch {b_med:.2f}",
    )
    assert ok


def _sparse_rows(factorial):
    rows, _ = factorial
    by_key = {(r.action_space_size, r.state_space_size, r.update_method): r for r in rows}
    return by_key[(10, 7, "single")], by_key[(10, 7, "batch")]


def test_7a_convergence_slower_for_batch(factorial, verdict):
    single, batch = _sparse_rows(factorial)
    ok = batch.mean_convergence_iteration >= single.mean_convergence_iteration
    verdict(
        "7a convergence direction (sparse/sparse)",
        ok,
        f"mean convergence iteration batch {batch.mean_convergence_iteration:,.0f} "
        f"vs single {single.mean_convergence_iteration:,.0f} (need batch >= single)",
    )
    assert ok


def test_7b_both_modes_converge(factorial, verdict):
    single, batch = _sparse_rows(factorial)
    need = math.ceil(0.9 * N_SEEDS)
    ok = single.n_converged >= need and batch.n_converged >= need
    verdict(
        "7b both modes reach 95% (sparse/sparse)",
        ok,
        f"converged within 100k: single {single.n_converged}/{N_SEEDS}, batch {batch.n_converged}/{N_SEEDS}",
    )
    assert ok


def test_8_subcommands_reproducible(tmp_path, verdict):
    light = tmp_path / "light.yaml"
    light.write_text("run:\n  iterations: 10000\nreplication:\n  seeds: 3\n")
    plans = {
        "run": [],
        "oracle": [],
        "histogram": [],
        "factorial": ["--config", str(light)],
        "illustrate": ["--config", str(light)],
    }
    mismatched = []
    for command, extra in plans.items():
        outputs = []
        for rep in ("a", "b"):
            out = tmp_path / command / rep
            assert cli.main([command, "--out", str(out), "--seed", "31", "--quiet", *extra]) == 0
            outputs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
        if outputs[0] != outputs[1] or not outputs[0]:
            mismatched.append(command)
    ok = not mismatched
    verdict("8 determinism", ok, f"byte-identical reruns for {', '.join(plans)}; mismatched: {mismatched or 'none'}")
    assert ok


def test_9_environment_laws(verdict):
    env_sparse = PricingEnv(EnvConfig())
    rng = np.random.default_rng(909)
    n = 10**5
    pairs = [(b, a) for b in (0, 3, 6) for a in (1, 2, 5, 9)]
    worst = 0.0
    freq_ok = True
    for s, a in pairs:
        state = CustomerState(s, SPARSE_STATES[s])
        hits = sum(env_sparse.step(state, a, rng).purchased for _ in range(n))
        p = purchase_probability(SPARSE_STATES[s], SPARSE_ACTIONS[a], -35.0)
        tol = 4 * math.sqrt(p * (1 - p) / n)
        worst = max(worst, abs(hits / n - p) / tol)
        freq_ok &= abs(hits / n - p) <= tol

    support_ok = True
    for grids in ((SPARSE_STATES, SPARSE_ACTIONS), (GRANULAR_STATES, GRANULAR_ACTIONS)):
        env = PricingEnv(EnvConfig(*grids))
        for s, beta in enumerate(grids[0]):
            state = CustomerState(s, beta)
            for a, d in enumerate(grids[1]):
                seen = {env.step(state, a, rng).reward for _ in range(400)}
                # at d = 0 a purchase has probability zero, so only the zero mode is reachable
                expected = {0.0} if d == 0.0 else {0.0, 100.0 * (1 - d)}
                support_ok &= seen == expected
    ok = freq_ok and support_ok
    verdict(
        "9 environment laws",
        ok,
        f"{len(pairs)} (beta, d) pairs at N=1e5, worst deviation {worst:.2f} of the 4-sigma band; "
        f"reward support {{0, pi(1-d)}} on every cell: {support_ok}",
    )
    assert ok
