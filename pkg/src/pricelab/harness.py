"""Deterministic experiment runner.

A run draws all of its randomness up front from named substreams of the
master seed:

* ``customers`` and ``purchases`` drive the environment.  They do not depend on
  the agent, so a single-update and a batch agent run on the same seed see the
  same customers and the same purchase coin flips.
* ``explore/<mode>`` drives epsilon-greedy exploration, separately per agent.

The arrays are then handed to the simulation kernel (compiled or pure Python,
see :mod:`pricelab.kernels`).
"""

from __future__ import annotations

import dataclasses
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

import numpy as np
from scipy.stats import binomtest

from . import kernels
from .env import (
    ACTION_PRESETS,
    GRANULAR_ACTIONS,
    STATE_PRESETS,
    EnvConfig,
    PricingEnv,
)
from .oracle import (
    benchmark_closed_form,
    benchmark_monte_carlo,
    expected_reward,
    greedy_policy_value,
)
from .qlearn import AgentConfig, QTable, greedy_policy
from .rng import MAX_SEED, substream

log = logging.getLogger(__name__)

MAX_CURVE_POINTS = 100_000


@dataclass(frozen=True)
class RunConfig:
    env: EnvConfig = field(default_factory=EnvConfig)
    agent: AgentConfig = field(default_factory=AgentConfig)
    iterations: int = 100_000
    seed: int = 0
    rolling_window: int = 1000
    convergence_fraction: float = 0.95
    tracked_cell: tuple[int, int] | None = None

    def __post_init__(self) -> None:
        if not self.iterations >= self.rolling_window >= 1:
            raise ValueError("need iterations >= rolling_window >= 1")
        if not 0.0 < self.convergence_fraction <= 1.0:
            raise ValueError("convergence_fraction must lie in (0, 1]")
        if not 0 <= self.seed <= MAX_SEED:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.tracked_cell is not None:
            s, a = self.tracked_cell
            if not (0 <= s < self.env.n_states and 0 <= a < self.env.n_actions):
                raise ValueError(f"tracked_cell {self.tracked_cell} outside the grids")
            object.__setattr__(self, "tracked_cell", (int(s), int(a)))

    def with_mode(self, mode: str) -> "RunConfig":
        return dataclasses.replace(self, agent=dataclasses.replace(self.agent, update_mode=mode))


@dataclass
class Trajectory:
    iterations: np.ndarray
    q_values: np.ndarray
    rewards: np.ndarray

    def __len__(self) -> int:
        return len(self.iterations)


@dataclass
class RunResult:
    config: RunConfig
    total_reward: float
    final_reward: float
    greedy_eval_reward: float
    convergence_iteration: int | None
    benchmark_mean: float
    curve_iterations: np.ndarray
    curve_values: np.ndarray
    q: QTable
    n_flushes: int
    residual_buffer: int
    tracked_trajectory: Trajectory | None = None
    rewards: np.ndarray | None = field(default=None, repr=False)
    actions: np.ndarray | None = field(default=None, repr=False)

    def summary(self) -> dict[str, Any]:
        return {
            "total_reward": self.total_reward,
            "final_reward": self.final_reward,
            "greedy_eval_reward": self.greedy_eval_reward,
            "convergence_iteration": self.convergence_iteration,
            "benchmark_mean_optimum": self.benchmark_mean,
            "n_flushes": self.n_flushes,
            "residual_buffer": self.residual_buffer,
            "iterations": self.config.iterations,
            "seed": self.config.seed,
        }


@dataclass
class RandomStreams:
    states: np.ndarray
    u_consider: np.ndarray
    u_convert: np.ndarray
    u_explore: np.ndarray
    explore_actions: np.ndarray


def draw_streams(env: EnvConfig, n: int, seed: int, mode: str) -> RandomStreams:
    customers = substream(seed, "customers")
    purchases = substream(seed, "purchases")
    explore = substream(seed, "explore", mode)
    u = purchases.random((2, n))
    return RandomStreams(
        states=customers.integers(env.n_states, size=n, dtype=np.int64),
        u_consider=np.ascontiguousarray(u[0]),
        u_convert=np.ascontiguousarray(u[1]),
        u_explore=explore.random(n),
        explore_actions=explore.integers(env.n_actions, size=n, dtype=np.int64),
    )


def rolling_mean(values: np.ndarray, window: int) -> np.ndarray:
    """Mean of each full window: entry ``i`` averages ``values[i : i + window]``."""
    if window < 1 or window > len(values):
        raise ValueError("window must lie in [1, len(values)]")
    csum = np.concatenate(([0.0], np.cumsum(values, dtype=np.float64)))
    return (csum[window:] - csum[:-window]) / window


def detect_convergence(
    curve: Sequence[float] | np.ndarray,
    benchmark_mean: float,
    fraction: float,
    iterations: Sequence[int] | np.ndarray | None = None,
) -> int | None:
    """First point with ``curve >= fraction * benchmark_mean``.

    Returns the matching entry of ``iterations`` when given, else the index.
    """
    values = np.asarray(curve, dtype=np.float64)
    if values.size == 0:
        raise ValueError("curve must be non-empty")
    hits = np.flatnonzero(values >= fraction * benchmark_mean)
    if hits.size == 0:
        return None
    idx = int(hits[0])
    return int(iterations[idx]) if iterations is not None else idx


def run(
    config: RunConfig,
    initial_q: QTable | None = None,
    backend: str | None = None,
    keep_rewards: bool = True,
) -> RunResult:
    env = PricingEnv(config.env)
    agent = config.agent
    n = config.iterations
    streams = draw_streams(config.env, n, config.seed, agent.update_mode)

    q = QTable.zeros(config.env.n_states, config.env.n_actions) if initial_q is None else initial_q.copy()
    if q.shape != (config.env.n_states, config.env.n_actions):
        raise ValueError("initial_q shape does not match the grids")
    tracked = config.tracked_cell or (-1, -1)

    simulate = kernels.get(backend)
    rewards, actions, n_flushes, residual, t_iter, t_q, t_r = simulate(
        streams.states,
        streams.u_consider,
        streams.u_convert,
        streams.u_explore,
        streams.explore_actions,
        env.betas,
        env.conversion,
        env.prices,
        q.values,
        q.visits,
        float(agent.learning_rate),
        float(agent.explore_prob),
        int(agent.batch_size) if agent.update_mode == "batch" else 0,
        bool(agent.flush_residual),
        int(tracked[0]),
        int(tracked[1]),
    )

    window = config.rolling_window
    roll = rolling_mean(rewards, window)
    roll_iters = np.arange(window, n + 1, dtype=np.int64)
    benchmark = benchmark_closed_form(config.env)
    converged = detect_convergence(roll, benchmark.mean_optimum, config.convergence_fraction, roll_iters)

    stride = max(1, math.ceil(len(roll) / MAX_CURVE_POINTS))
    policy = greedy_policy(q)
    return RunResult(
        config=config,
        total_reward=float(np.sum(rewards)),
        final_reward=float(roll[-1]),
        greedy_eval_reward=greedy_policy_value(config.env, [policy[s] for s in range(len(policy))]),
        convergence_iteration=converged,
        benchmark_mean=benchmark.mean_optimum,
        curve_iterations=roll_iters[::stride],
        curve_values=roll[::stride],
        q=q,
        n_flushes=int(n_flushes),
        residual_buffer=int(residual),
        tracked_trajectory=Trajectory(t_iter, t_q, t_r) if config.tracked_cell else None,
        rewards=rewards if keep_rewards else None,
        actions=actions if keep_rewards else None,
    )


# -- factorial suite ---------------------------------------------------------

FACTORIAL_GRIDS = ("sparse", "granular")
UPDATE_MODES = ("single", "batch")


@dataclass
class FactorialRow:
    action_grid: str
    state_grid: str
    update_method: str
    action_space_size: int
    state_space_size: int
    seeds: list[int]
    total_rewards: list[float]
    final_rewards: list[float]
    greedy_eval_rewards: list[float]
    convergence_iterations: list[int | None]
    benchmark_closed_form: float
    benchmark_monte_carlo: float | None = None
    benchmark_mc_std_error: float | None = None
    errors: dict[int, str] = field(default_factory=dict)

    @property
    def n_seeds(self) -> int:
        return len(self.total_rewards)

    @staticmethod
    def _mean(xs: Sequence[float]) -> float:
        return float(np.mean(xs)) if len(xs) else math.nan

    @staticmethod
    def _std(xs: Sequence[float]) -> float:
        return float(np.std(xs, ddof=1)) if len(xs) > 1 else 0.0 if len(xs) else math.nan

    @property
    def mean_total_reward(self) -> float:
        return self._mean(self.total_rewards)

    @property
    def std_total_reward(self) -> float:
        return self._std(self.total_rewards)

    @property
    def mean_final_reward(self) -> float:
        return self._mean(self.final_rewards)

    @property
    def std_final_reward(self) -> float:
        return self._std(self.final_rewards)

    @property
    def mean_greedy_eval_reward(self) -> float:
        return self._mean(self.greedy_eval_rewards)

    @property
    def mean_convergence_iteration(self) -> float:
        hits = [c for c in self.convergence_iterations if c is not None]
        return self._mean(hits)

    @property
    def n_converged(self) -> int:
        return sum(c is not None for c in self.convergence_iterations)


def factorial_cells(base: RunConfig) -> list[tuple[str, str, str, RunConfig]]:
    cells = []
    for action_name in FACTORIAL_GRIDS:
        for state_name in FACTORIAL_GRIDS:
            env = dataclasses.replace(
                base.env,
                state_grid=STATE_PRESETS[state_name],
                action_grid=ACTION_PRESETS[action_name],
            )
            for mode in UPDATE_MODES:
                cfg = dataclasses.replace(base, env=env, tracked_cell=None).with_mode(mode)
                cells.append((action_name, state_name, mode, cfg))
    return cells


def _run_summary(cfg: RunConfig, backend: str | None) -> tuple[float, float, float, int | None]:
    res = run(cfg, backend=backend, keep_rewards=False)
    return res.total_reward, res.final_reward, res.greedy_eval_reward, res.convergence_iteration


def _safe_run_summary(args):
    cfg, backend = args
    try:
        return _run_summary(cfg, backend), None
    except Exception as exc:  # reported per seed, aborts the cell
        return None, f"{type(exc).__name__}: {exc}"


def run_factorial(
    base: RunConfig,
    seeds: Iterable[int],
    workers: int = 1,
    backend: str | None = None,
    mc_samples_per_cell: int = 10_000,
) -> list[FactorialRow]:
    """Run all 8 (action grid, state grid, update rule) cells over ``seeds``.

    Row order: action grid, then state grid (sparse before granular), then
    single before batch.  Results do not depend on ``workers``.
    """
    seeds = [int(s) for s in seeds]
    if not seeds:
        raise ValueError("seeds must be non-empty")
    cells = factorial_cells(base)
    jobs = [(dataclasses.replace(cfg, seed=s), backend) for *_, cfg in cells for s in seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_safe_run_summary, jobs, chunksize=1))
    else:
        outcomes = [_safe_run_summary(job) for job in jobs]

    rows = []
    for c, (action_name, state_name, mode, cfg) in enumerate(cells):
        chunk = outcomes[c * len(seeds) : (c + 1) * len(seeds)]
        errors = {s: err for s, (_, err) in zip(seeds, chunk) if err is not None}
        ok = [] if errors else [out for out, _ in chunk]
        closed = benchmark_closed_form(cfg.env)
        row = FactorialRow(
            action_grid=action_name,
            state_grid=state_name,
            update_method=mode,
            action_space_size=cfg.env.n_actions,
            state_space_size=cfg.env.n_states,
            seeds=seeds,
            total_rewards=[o[0] for o in ok],
            final_rewards=[o[1] for o in ok],
            greedy_eval_rewards=[o[2] for o in ok],
            convergence_iterations=[o[3] for o in ok],
            benchmark_closed_form=closed.mean_optimum,
            errors=errors,
        )
        if state_name == "granular" and mc_samples_per_cell > 0:
            mc = benchmark_monte_carlo(cfg.env, mc_samples_per_cell, seed=base.seed)
            row.benchmark_monte_carlo = mc.mean_optimum
            row.benchmark_mc_std_error = mc.mc_std_error
        for s, err in errors.items():
            log.error("cell %s/%s/%s seed %d failed: %s", action_name, state_name, mode, s, err)
        rows.append(row)
    return rows


# -- illustrative fixed-beta experiment -------------------------------------

ILLUSTRATIVE_BETA = 0.6
ILLUSTRATIVE_DISCOUNT = 0.17


@dataclass
class IllustrativeResult:
    single: RunResult
    batch: RunResult
    oracle_expectation: float


def illustrative_config(seed: int = 0, overrides: dict[str, Any] | None = None) -> RunConfig:
    """Single customer state beta=0.6, 80 discounts, tracking the d=0.17 cell.

    ``overrides`` may name any RunConfig, AgentConfig or EnvConfig field except
    the grids and the tracked cell, which define the experiment.
    """
    overrides = dict(overrides or {})
    env_fields = {f.name for f in dataclasses.fields(EnvConfig)} - {"state_grid", "action_grid"}
    agent_fields = {f.name for f in dataclasses.fields(AgentConfig)}
    run_fields = {f.name for f in dataclasses.fields(RunConfig)} - {"env", "agent", "tracked_cell"}
    env_kw = {k: overrides.pop(k) for k in list(overrides) if k in env_fields}
    agent_kw = {k: overrides.pop(k) for k in list(overrides) if k in agent_fields}
    run_kw = {k: overrides.pop(k) for k in list(overrides) if k in run_fields}
    if overrides:
        raise ValueError(f"unknown illustrative overrides: {sorted(overrides)}")

    env = EnvConfig(state_grid=(ILLUSTRATIVE_BETA,), action_grid=GRANULAR_ACTIONS, **env_kw)
    tracked = (0, env.action_grid.index(ILLUSTRATIVE_DISCOUNT))
    run_kw.setdefault("seed", seed)
    return RunConfig(env=env, agent=AgentConfig(**agent_kw), tracked_cell=tracked, **run_kw)


def run_illustrative(
    seed: int = 0, overrides: dict[str, Any] | None = None, backend: str | None = None
) -> IllustrativeResult:
    cfg = illustrative_config(seed, overrides)
    env = cfg.env
    oracle = expected_reward(
        ILLUSTRATIVE_BETA, ILLUSTRATIVE_DISCOUNT, env.base_price, env.steepness
    )
    return IllustrativeResult(
        single=run(cfg.with_mode("single"), backend=backend),
        batch=run(cfg.with_mode("batch"), backend=backend),
        oracle_expectation=oracle,
    )


def trajectory_spread(result: RunResult) -> float:
    """Standard deviation of the tracked Q value once it has converged.

    The tracked value counts as converged from the first recorded event where
    it reaches ``convergence_fraction`` of the cell's true expected reward.
    The run-level convergence point is not used: a rarely played cell can
    still be climbing from its zero start long after the run has converged.
    Returns NaN when the value never converges or fewer than two events follow.
    """
    traj = result.tracked_trajectory
    if traj is None:
        raise ValueError("run has no tracked trajectory")
    cfg = result.config
    s, a = cfg.tracked_cell
    target = cfg.convergence_fraction * expected_reward(
        cfg.env.state_grid[s], cfg.env.action_grid[a], cfg.env.base_price, cfg.env.steepness
    )
    hits = np.flatnonzero(traj.q_values >= target)
    if hits.size == 0 or traj.q_values.size - hits[0] < 2:
        return math.nan
    return float(np.std(traj.q_values[hits[0] :]))


# -- paired comparison -------------------------------------------------------


@dataclass
class ComparisonReport:
    mean_relative_improvement: float
    p_value: float
    deltas: list[float]
    relative_improvements: list[float]
    n_positive: int
    n_negative: int

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


def _total(x) -> float:
    return float(getattr(x, "total_reward", x))


def sign_test_greater(n_positive: int, n_negative: int) -> float:
    """One-sided sign-test p-value for "positive deltas dominate"; ties dropped."""
    n = n_positive + n_negative
    if n == 0:
        return 1.0
    return float(binomtest(n_positive, n, 0.5, alternative="greater").pvalue)


def compare_totals(results_a: Sequence, results_b: Sequence) -> ComparisonReport:
    """Paired comparison of total reward, ``b`` relative to ``a``.

    Entries may be :class:`RunResult` objects or plain totals.
    """
    if len(results_a) != len(results_b):
        raise ValueError("paired result lists must have equal length")
    if not results_a:
        raise ValueError("need at least one pair")
    a = [_total(x) for x in results_a]
    b = [_total(x) for x in results_b]
    deltas = [vb - va for va, vb in zip(a, b)]
    rel = []
    for va, vb in zip(a, b):
        if va == 0:
            rel.append(0.0 if vb == 0 else math.copysign(math.inf, vb))
        else:
            rel.append(vb / va - 1.0)
    n_pos = sum(d > 0 for d in deltas)
    n_neg = sum(d < 0 for d in deltas)
    return ComparisonReport(
        mean_relative_improvement=float(np.mean(rel)),
        p_value=sign_test_greater(n_pos, n_neg),
        deltas=deltas,
        relative_improvements=rel,
        n_positive=n_pos,
        n_negative=n_neg,
    )
