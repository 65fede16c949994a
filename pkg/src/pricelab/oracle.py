"""Ground-truth expected rewards and perfect-knowledge benchmarks."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy.optimize import brentq

from .env import EnvConfig, purchase_probability
from .rng import substream


def expected_reward(beta_prob: float, discount: float, pi: float, zeta: float) -> float:
    if not pi > 0:
        raise ValueError(f"pi must be positive, got {pi}")
    return purchase_probability(beta_prob, discount, zeta) * pi * (1.0 - discount)


def expected_reward_table(env: EnvConfig) -> np.ndarray:
    """``[n_states, n_actions]`` matrix of closed-form expected rewards."""
    return np.array(
        [
            [expected_reward(b, d, env.base_price, env.steepness) for d in env.action_grid]
            for b in env.state_grid
        ]
    )


def stationarity_residual(discount: float, zeta: float) -> float:
    return math.exp(zeta * discount) * (1.0 - zeta * (1.0 - discount)) - 1.0


def optimal_discount_continuous(zeta: float) -> float:
    """Discount maximising ``(1 - e^{zeta d}) (1 - d)`` on (0, 1).

    The maximiser does not depend on beta or the base price.  The residual is
    ``-zeta > 0`` at d=0 and ``e^zeta - 1 < 0`` at d=1, so the bracket is valid.
    """
    if not zeta < 0:
        raise ValueError(f"zeta must be negative, got {zeta}")
    return brentq(stationarity_residual, 0.0, 1.0, args=(zeta,), xtol=1e-12)


@dataclass
class BenchmarkReport:
    per_state_optimum: dict[int, tuple[int, float]]
    mean_optimum: float
    method: Literal["closed_form", "monte_carlo"]
    mc_std_error: float = 0.0
    cell_means: np.ndarray | None = field(default=None, repr=False)
    cell_std_errors: np.ndarray | None = field(default=None, repr=False)

    def best_actions(self) -> list[int]:
        return [self.per_state_optimum[s][0] for s in sorted(self.per_state_optimum)]

    def to_dict(self, include_cells: bool = False) -> dict:
        out = {
            "method": self.method,
            "mean_optimum": self.mean_optimum,
            "mc_std_error": self.mc_std_error,
            "per_state_optimum": [
                {"state_index": s, "best_action_index": a, "expected_reward": r}
                for s, (a, r) in sorted(self.per_state_optimum.items())
            ],
        }
        if include_cells and self.cell_means is not None:
            out["cell_means"] = self.cell_means.tolist()
            if self.cell_std_errors is not None:
                out["cell_std_errors"] = self.cell_std_errors.tolist()
        return out


def _report_from_cells(
    means: np.ndarray, method: str, std_errors: np.ndarray | None = None
) -> BenchmarkReport:
    # np.argmax returns the first maximum: lowest action index wins ties
    best = np.argmax(means, axis=1)
    per_state = {s: (int(a), float(means[s, a])) for s, a in enumerate(best)}
    mean_optimum = float(np.mean([r for _, r in per_state.values()]))
    return BenchmarkReport(
        per_state_optimum=per_state,
        mean_optimum=mean_optimum,
        method=method,
        mc_std_error=0.0 if std_errors is None else float(std_errors.max()),
        cell_means=means,
        cell_std_errors=std_errors,
    )


def benchmark_closed_form(env: EnvConfig) -> BenchmarkReport:
    return _report_from_cells(expected_reward_table(env), "closed_form")


def _mc_state_row(
    env: EnvConfig, state_index: int, samples: int, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    beta = env.state_grid[state_index]
    means = np.empty(env.n_actions)
    ses = np.empty(env.n_actions)
    for a, d in enumerate(env.action_grid):
        rng = substream(seed, "oracle-mc", state_index, a)
        price = env.base_price * (1.0 - d)
        conv = -math.expm1(env.steepness * d)
        # two-stage Bernoulli draws summed over the cell, same law as step()
        considered = rng.binomial(samples, beta)
        bought = rng.binomial(considered, conv)
        p_hat = bought / samples
        means[a] = p_hat * price
        if samples > 1:
            ses[a] = price * math.sqrt(p_hat * (1.0 - p_hat) / (samples - 1))
        else:
            ses[a] = 0.0
    return means, ses


def benchmark_monte_carlo(
    env: EnvConfig, samples_per_cell: int, seed: int = 0, workers: int = 1
) -> BenchmarkReport:
    """Monte Carlo estimate of every cell's expected reward, then per-state argmax.

    Every cell draws from its own substream of ``seed``, so the report is the
    same for any ``workers`` count.
    """
    if samples_per_cell < 1:
        raise ValueError("samples_per_cell must be >= 1")
    rows = range(env.n_states)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(
                pool.map(
                    _mc_state_row,
                    [env] * env.n_states,
                    rows,
                    [samples_per_cell] * env.n_states,
                    [seed] * env.n_states,
                )
            )
    else:
        results = [_mc_state_row(env, s, samples_per_cell, seed) for s in rows]
    means = np.vstack([m for m, _ in results])
    ses = np.vstack([e for _, e in results])
    return _report_from_cells(means, "monte_carlo", ses)


def greedy_policy_value(env: EnvConfig, policy: list[int] | np.ndarray) -> float:
    """Uniform-over-states expected reward of a deterministic per-state policy."""
    table = expected_reward_table(env)
    return float(np.mean([table[s, int(a)] for s, a in enumerate(policy)]))
