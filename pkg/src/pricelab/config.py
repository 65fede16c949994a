"""YAML run-config files.

Every key is optional; missing keys take the defaults below.  Grids are either a
preset name (``sparse`` / ``granular``) or an explicit list of values.  The
exploration rate may be given as ``explore_prob`` (probability of a random
action) or as ``greedy_prob`` (probability of the greedy action), not both.

Defaults, in canonical form::

    env:
      state_grid: sparse
      action_grid: sparse
      base_price: 100.0
      steepness: -35.0
    agent:
      learning_rate: 0.1
      explore_prob: 0.1
      update_mode: single
      batch_size: 1000
      flush_residual: false
    run:
      iterations: 100000
      seed: 0
      rolling_window: 1000
      convergence_fraction: 0.95
      tracked_cell: null
    replication:
      seeds: 20
      workers: 1
    oracle:
      mc_samples_per_cell: 100000
    histogram:
      n: 100000
      state_index: 0
      policy: uniform
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .env import ACTION_PRESETS, STATE_PRESETS, EnvConfig
from .harness import RunConfig
from .qlearn import AgentConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Settings:
    run: RunConfig = field(default_factory=RunConfig)
    seeds: int = 20
    workers: int = 1
    mc_samples_per_cell: int = 100_000
    histogram_n: int = 100_000
    histogram_state_index: int = 0
    # "uniform", a single discount value, or one weight per action
    histogram_policy: str | float | tuple[float, ...] = "uniform"

    def __post_init__(self) -> None:
        if self.seeds < 1:
            raise ConfigError("replication.seeds must be >= 1")
        if self.workers < 1:
            raise ConfigError("replication.workers must be >= 1")
        if self.mc_samples_per_cell < 1:
            raise ConfigError("oracle.mc_samples_per_cell must be >= 1")
        if self.histogram_n < 1:
            raise ConfigError("histogram.n must be >= 1")
        if not 0 <= self.histogram_state_index < self.run.env.n_states:
            raise ConfigError("histogram.state_index outside the state grid")
        self.policy_weights()

    def policy_weights(self) -> list[float]:
        grid = self.run.env.action_grid
        p = self.histogram_policy
        if p == "uniform":
            return [1.0] * len(grid)
        if isinstance(p, (int, float)) and not isinstance(p, bool):
            if float(p) not in grid:
                raise ConfigError(f"histogram.policy discount {p} is not on the action grid")
            return [1.0 if d == float(p) else 0.0 for d in grid]
        if isinstance(p, (list, tuple)):
            if len(p) != len(grid) or any(w < 0 for w in p) or sum(p) <= 0:
                raise ConfigError("histogram.policy weights must be one non-negative weight per action")
            return [float(w) for w in p]
        raise ConfigError(f"unsupported histogram.policy {p!r}")


_SECTIONS = {
    "env": {"state_grid", "action_grid", "base_price", "steepness"},
    "agent": {"learning_rate", "explore_prob", "greedy_prob", "update_mode", "batch_size", "flush_residual"},
    "run": {"iterations", "seed", "rolling_window", "convergence_fraction", "tracked_cell"},
    "replication": {"seeds", "workers"},
    "oracle": {"mc_samples_per_cell"},
    "histogram": {"n", "state_index", "policy"},
}


def _grid(value: Any, presets: dict[str, tuple[float, ...]], key: str) -> tuple[float, ...]:
    if isinstance(value, str):
        if value not in presets:
            raise ConfigError(f"{key}: unknown preset {value!r} (expected one of {sorted(presets)})")
        return presets[value]
    if isinstance(value, list) and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
        return tuple(float(v) for v in value)
    raise ConfigError(f"{key} must be a preset name or a list of numbers")


def _expect(value: Any, kind: type | tuple[type, ...], key: str) -> Any:
    if isinstance(value, bool) and kind is not bool:
        raise ConfigError(f"{key} has the wrong type")
    if not isinstance(value, kind):
        raise ConfigError(f"{key} has the wrong type")
    return value


def settings_from_dict(data: dict[str, Any] | None) -> Settings:
    data = {} if data is None else data
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping of sections")
    unknown = set(data) - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    sec: dict[str, dict[str, Any]] = {}
    for name, keys in _SECTIONS.items():
        body = data.get(name) or {}
        if not isinstance(body, dict):
            raise ConfigError(f"section {name!r} must be a mapping")
        extra = set(body) - keys
        if extra:
            raise ConfigError(f"unknown keys in {name!r}: {sorted(extra)}")
        sec[name] = body

    num = (int, float)
    try:
        e = sec["env"]
        env = EnvConfig(
            state_grid=_grid(e.get("state_grid", "sparse"), STATE_PRESETS, "env.state_grid"),
            action_grid=_grid(e.get("action_grid", "sparse"), ACTION_PRESETS, "env.action_grid"),
            base_price=float(_expect(e.get("base_price", 100.0), num, "env.base_price")),
            steepness=float(_expect(e.get("steepness", -35.0), num, "env.steepness")),
        )

        a = sec["agent"]
        if "explore_prob" in a and "greedy_prob" in a:
            raise ConfigError("give agent.explore_prob or agent.greedy_prob, not both")
        if "greedy_prob" in a:
            explore = 1.0 - float(_expect(a["greedy_prob"], num, "agent.greedy_prob"))
        else:
            explore = float(_expect(a.get("explore_prob", 0.1), num, "agent.explore_prob"))
        agent = AgentConfig(
            learning_rate=float(_expect(a.get("learning_rate", 0.1), num, "agent.learning_rate")),
            explore_prob=explore,
            update_mode=_expect(a.get("update_mode", "single"), str, "agent.update_mode"),
            batch_size=_expect(a.get("batch_size", 1000), int, "agent.batch_size"),
            flush_residual=_expect(a.get("flush_residual", False), bool, "agent.flush_residual"),
        )

        r = sec["run"]
        tracked = r.get("tracked_cell")
        if tracked is not None:
            if not (isinstance(tracked, list) and len(tracked) == 2 and all(isinstance(i, int) for i in tracked)):
                raise ConfigError("run.tracked_cell must be [state_index, action_index] or null")
            tracked = tuple(tracked)
        run = RunConfig(
            env=env,
            agent=agent,
            iterations=_expect(r.get("iterations", 100_000), int, "run.iterations"),
            seed=_expect(r.get("seed", 0), int, "run.seed"),
            rolling_window=_expect(r.get("rolling_window", 1000), int, "run.rolling_window"),
            convergence_fraction=float(
                _expect(r.get("convergence_fraction", 0.95), num, "run.convergence_fraction")
            ),
            tracked_cell=tracked,
        )

        rep, orc, hist = sec["replication"], sec["oracle"], sec["histogram"]
        policy = hist.get("policy", "uniform")
        if isinstance(policy, list):
            policy = tuple(policy)
        return Settings(
            run=run,
            seeds=_expect(rep.get("seeds", 20), int, "replication.seeds"),
            workers=_expect(rep.get("workers", 1), int, "replication.workers"),
            mc_samples_per_cell=_expect(orc.get("mc_samples_per_cell", 100_000), int, "oracle.mc_samples_per_cell"),
            histogram_n=_expect(hist.get("n", 100_000), int, "histogram.n"),
            histogram_state_index=_expect(hist.get("state_index", 0), int, "histogram.state_index"),
            histogram_policy=policy,
        )
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


def _grid_out(values: tuple[float, ...], presets: dict[str, tuple[float, ...]]) -> str | list[float]:
    for name, preset in presets.items():
        if values == preset:
            return name
    return list(values)


def settings_to_dict(s: Settings) -> dict[str, Any]:
    """Canonical form: every key present, grids collapsed to preset names."""
    run = s.run
    policy = s.histogram_policy
    return {
        "env": {
            "state_grid": _grid_out(run.env.state_grid, STATE_PRESETS),
            "action_grid": _grid_out(run.env.action_grid, ACTION_PRESETS),
            "base_price": run.env.base_price,
            "steepness": run.env.steepness,
        },
        "agent": dataclasses.asdict(run.agent),
        "run": {
            "iterations": run.iterations,
            "seed": run.seed,
            "rolling_window": run.rolling_window,
            "convergence_fraction": run.convergence_fraction,
            "tracked_cell": list(run.tracked_cell) if run.tracked_cell else None,
        },
        "replication": {"seeds": s.seeds, "workers": s.workers},
        "oracle": {"mc_samples_per_cell": s.mc_samples_per_cell},
        "histogram": {
            "n": s.histogram_n,
            "state_index": s.histogram_state_index,
            "policy": list(policy) if isinstance(policy, tuple) else policy,
        },
    }


def dump_settings(s: Settings) -> str:
    return yaml.safe_dump(settings_to_dict(s), sort_keys=False, default_flow_style=False)


def load_settings(path: str | Path | None) -> Settings:
    if path is None:
        return Settings()
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed YAML in {path}: {exc}") from exc
    return settings_from_dict(data)
