"""Stochastic discount-pricing environment with bimodal rewards.

A customer state is the probability ``beta`` that the customer considers a
purchase at all.  Given consideration, a discount ``d`` converts with
probability ``1 - exp(steepness * d)``.  A purchase pays ``base_price * (1 - d)``,
anything else pays zero.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

DEFAULT_BASE_PRICE = 100.0
DEFAULT_STEEPNESS = -35.0


def _grid(start: float, step: float, count: int) -> tuple[float, ...]:
    # rounding keeps e.g. 0.30000000000000004 out of configs and CSV output
    return tuple(round(start + step * k, 10) for k in range(count))


SPARSE_STATES = _grid(0.2, 0.1, 7)
GRANULAR_STATES = _grid(0.2, 0.015, 40)
SPARSE_ACTIONS = _grid(0.0, 0.1, 10)
GRANULAR_ACTIONS = _grid(0.0, 0.01, 80)

STATE_PRESETS = {"sparse": SPARSE_STATES, "granular": GRANULAR_STATES}
ACTION_PRESETS = {"sparse": SPARSE_ACTIONS, "granular": GRANULAR_ACTIONS}


def _check_increasing(name: str, values: Sequence[float]) -> None:
    if len(values) == 0:
        raise ValueError(f"{name} must be non-empty")
    for lo, hi in zip(values, values[1:]):
        if not hi > lo:
            raise ValueError(f"{name} must be strictly increasing")


@dataclass(frozen=True)
class EnvConfig:
    state_grid: tuple[float, ...] = SPARSE_STATES
    action_grid: tuple[float, ...] = SPARSE_ACTIONS
    base_price: float = DEFAULT_BASE_PRICE
    steepness: float = DEFAULT_STEEPNESS

    def __post_init__(self) -> None:
        object.__setattr__(self, "state_grid", tuple(float(b) for b in self.state_grid))
        object.__setattr__(self, "action_grid", tuple(float(d) for d in self.action_grid))
        if not self.base_price > 0:
            raise ValueError("base_price must be positive")
        if not self.steepness < 0:
            raise ValueError("steepness must be negative")
        _check_increasing("state_grid", self.state_grid)
        _check_increasing("action_grid", self.action_grid)
        if not all(0.0 < b <= 1.0 for b in self.state_grid):
            raise ValueError("state_grid values must lie in (0, 1]")
        if not all(0.0 <= d < 1.0 for d in self.action_grid):
            raise ValueError("action_grid values must lie in [0, 1)")

    @property
    def n_states(self) -> int:
        return len(self.state_grid)

    @property
    def n_actions(self) -> int:
        return len(self.action_grid)


@dataclass(frozen=True)
class CustomerState:
    state_index: int
    beta_prob: float


@dataclass(frozen=True)
class Observation:
    state_index: int
    action_index: int
    reward: float
    purchased: bool


def purchase_probability(beta_prob: float, discount: float, steepness: float) -> float:
    """Overall probability that a customer with consideration ``beta_prob`` buys.

    Consideration and the discount-driven conversion are independent stages, so
    the result is ``beta_prob * (1 - exp(steepness * discount))``.
    """
    if not 0.0 <= beta_prob <= 1.0:
        raise ValueError(f"beta_prob must lie in [0, 1], got {beta_prob}")
    if not 0.0 <= discount < 1.0:
        raise ValueError(f"discount must lie in [0, 1), got {discount}")
    if not steepness < 0:
        raise ValueError(f"steepness must be negative, got {steepness}")
    return beta_prob * -math.expm1(steepness * discount)


@dataclass(frozen=True)
class PricingEnv:
    """Environment bound to one :class:`EnvConfig`.

    Per-action conversion probabilities and purchase prices are tabulated once
    so the compiled simulation kernel and the step-by-step path below use the
    exact same floating point values.
    """

    config: EnvConfig
    betas: np.ndarray = field(init=False, repr=False)
    conversion: np.ndarray = field(init=False, repr=False)
    prices: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        cfg = self.config
        discounts = np.asarray(cfg.action_grid, dtype=np.float64)
        betas = np.asarray(cfg.state_grid, dtype=np.float64)
        conversion = np.array(
            [-math.expm1(cfg.steepness * d) for d in cfg.action_grid], dtype=np.float64
        )
        prices = cfg.base_price * (1.0 - discounts)
        for arr in (betas, conversion, prices):
            arr.setflags(write=False)
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "conversion", conversion)
        object.__setattr__(self, "prices", prices)

    def sample_customer(self, rng: np.random.Generator) -> CustomerState:
        idx = int(rng.integers(self.config.n_states))
        return CustomerState(idx, self.config.state_grid[idx])

    def step(
        self, state: CustomerState, action_index: int, rng: np.random.Generator
    ) -> Observation:
        """Offer ``action_grid[action_index]`` to the customer and resolve the sale.

        Always consumes exactly two uniforms from ``rng`` (consideration, then
        conversion), so the stream position does not depend on the outcome.
        """
        if not 0 <= action_index < self.config.n_actions:
            raise ValueError(f"action_index {action_index} out of range")
        if not 0 <= state.state_index < self.config.n_states:
            raise ValueError(f"state_index {state.state_index} out of range")
        u_consider = rng.random()
        u_convert = rng.random()
        purchased = bool(
            u_consider < state.beta_prob and u_convert < self.conversion[action_index]
        )
        reward = float(self.prices[action_index]) if purchased else 0.0
        return Observation(state.state_index, action_index, reward, purchased)

    def purchase_probability(self, state_index: int, action_index: int) -> float:
        return purchase_probability(
            self.config.state_grid[state_index],
            self.config.action_grid[action_index],
            self.config.steepness,
        )


def reward_histogram(
    env: PricingEnv,
    state: CustomerState,
    action_policy: Sequence[float],
    n: int,
    rng: np.random.Generator,
) -> list[tuple[float, int]]:
    """Sample ``n`` rewards with actions drawn from ``action_policy``.

    Returns ``(reward, count)`` pairs sorted by reward.  The zero bin is always
    present, even with a zero count.
    """
    if n <= 0:
        raise ValueError("n must be positive")
    policy = np.asarray(action_policy, dtype=np.float64)
    if policy.shape != (env.config.n_actions,) or np.any(policy < 0):
        raise ValueError("action_policy must be a non-negative vector over actions")
    policy = policy / policy.sum()

    actions = rng.choice(env.config.n_actions, size=n, p=policy)
    u = rng.random((n, 2))
    purchased = (u[:, 0] < state.beta_prob) & (u[:, 1] < env.conversion[actions])
    rewards = np.where(purchased, env.prices[actions], 0.0)
    counts: Counter[float] = Counter({0.0: 0})
    values, freq = np.unique(rewards, return_counts=True)
    counts.update({float(v): int(c) for v, c in zip(values, freq)})
    return sorted(counts.items())
