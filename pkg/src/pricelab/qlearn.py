"""Tabular Q-learning with epsilon-greedy selection and single or batch updates.

Every interaction is a one-shot decision, so the Bellman target has no
successor term and an update is ``Q <- (1 - alpha) Q + alpha r``.  Batch mode
buffers observations and, once the buffer is full, applies that step once per
(state, action) group using the group's mean reward.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import IO, Literal

import numpy as np

from .env import EnvConfig, Observation

UpdateMode = Literal["single", "batch"]


@dataclass
class QTable:
    values: np.ndarray
    visits: np.ndarray

    @classmethod
    def zeros(cls, n_states: int, n_actions: int) -> "QTable":
        return cls(
            np.zeros((n_states, n_actions), dtype=np.float64),
            np.zeros((n_states, n_actions), dtype=np.int64),
        )

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def copy(self) -> "QTable":
        return QTable(self.values.copy(), self.visits.copy())

    def write_csv(self, fh: IO[str], env: EnvConfig) -> None:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["state_index", "beta_prob", "action_index", "discount", "q_value", "visits"])
        n_s, n_a = self.shape
        for s in range(n_s):
            for a in range(n_a):
                writer.writerow(
                    [
                        s,
                        f"{env.state_grid[s]:.6f}",
                        a,
                        f"{env.action_grid[a]:.6f}",
                        f"{self.values[s, a]:.6f}",
                        int(self.visits[s, a]),
                    ]
                )


@dataclass(frozen=True)
class AgentConfig:
    learning_rate: float = 0.1
    explore_prob: float = 0.1
    update_mode: UpdateMode = "single"
    batch_size: int = 1000
    flush_residual: bool = False

    def __post_init__(self) -> None:
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValueError("learning_rate must lie in (0, 1]")
        if not 0.0 <= self.explore_prob <= 1.0:
            raise ValueError("explore_prob must lie in [0, 1]")
        if self.update_mode not in ("single", "batch"):
            raise ValueError(f"update_mode must be 'single' or 'batch', got {self.update_mode!r}")
        if int(self.batch_size) != self.batch_size or self.batch_size < 1:
            raise ValueError("batch_size must be a positive integer")


@dataclass
class BatchBuffer:
    capacity: int
    entries: list[Observation] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.capacity < 1:
            raise ValueError("capacity must be >= 1")

    def __len__(self) -> int:
        return len(self.entries)


def greedy_action(row: np.ndarray) -> int:
    # first maximum wins, i.e. lowest index on ties
    return int(np.argmax(row))


def select_action(q: QTable, state_index: int, epsilon: float, rng) -> int:
    """Epsilon-greedy: a uniform random action with probability ``epsilon``.

    Consumes one uniform for the explore decision and one integer draw for the
    random action on every call, whether or not it explores.
    """
    n_actions = q.shape[1]
    explore = rng.random() < epsilon
    random_action = int(rng.integers(n_actions))
    if explore:
        return random_action
    return greedy_action(q.values[state_index])


def update_single(q: QTable, obs: Observation, alpha: float) -> None:
    s, a = obs.state_index, obs.action_index
    q.values[s, a] = (1.0 - alpha) * q.values[s, a] + alpha * obs.reward
    q.visits[s, a] += 1


def flush(q: QTable, buffer: BatchBuffer, alpha: float) -> None:
    """Apply one averaged update per (state, action) group and empty the buffer."""
    groups: dict[tuple[int, int], list[float]] = {}
    for obs in buffer.entries:
        groups.setdefault((obs.state_index, obs.action_index), []).append(obs.reward)
    for (s, a), rewards in groups.items():
        total = 0.0
        for r in rewards:
            total += r
        mean = total / len(rewards)
        q.values[s, a] = (1.0 - alpha) * q.values[s, a] + alpha * mean
        q.visits[s, a] += len(rewards)
    buffer.entries.clear()


def record_and_maybe_flush(
    q: QTable, buffer: BatchBuffer, obs: Observation, alpha: float
) -> bool:
    if len(buffer) >= buffer.capacity:
        raise ValueError("buffer is already full")
    buffer.entries.append(obs)
    if len(buffer) == buffer.capacity:
        flush(q, buffer, alpha)
        return True
    return False


def greedy_policy(q: QTable) -> dict[int, int]:
    return {s: greedy_action(q.values[s]) for s in range(q.shape[0])}
