"""Command-line entry point: ``pricelab {run,factorial,illustrate,oracle,histogram}``."""

from __future__ import annotations

import argparse
import contextlib
import csv
import dataclasses
import io
import json
import logging
import os
import shutil
import sys
import tempfile
from pathlib import Path
from typing import Any, Callable, Iterator

from . import kernels
from .config import ConfigError, Settings, load_settings, settings_to_dict
from .env import CustomerState, PricingEnv, reward_histogram
from .harness import (
    compare_totals,
    run,
    run_factorial,
    run_illustrative,
    sign_test_greater,
    trajectory_spread,
)
from .oracle import (
    benchmark_closed_form,
    benchmark_monte_carlo,
    expected_reward,
    optimal_discount_continuous,
)
from .rng import MAX_SEED, substream

log = logging.getLogger("pricelab")


def money(x: float) -> str:
    return f"{x:.6f}"


def _round6(x: float | None) -> float | None:
    return None if x is None else round(float(x), 6)


class Staging:
    """Collects output files in a temp dir and moves them into place on commit."""

    def __init__(self, out_dir: Path) -> None:
        self.out_dir = out_dir
        self.tmp = Path(tempfile.mkdtemp(prefix=".pricelab-", dir=out_dir))
        self.names: list[str] = []

    def write_text(self, name: str, text: str) -> None:
        (self.tmp / name).write_text(text, encoding="utf-8", newline="")
        self.names.append(name)

    def write_csv(self, name: str, header: list[str], rows) -> None:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
        self.write_text(name, buf.getvalue())

    def write_json(self, name: str, payload: Any) -> None:
        self.write_text(name, json.dumps(payload, indent=2, sort_keys=False, allow_nan=False) + "\n")

    def commit(self) -> None:
        for name in self.names:
            os.replace(self.tmp / name, self.out_dir / name)

    def discard(self) -> None:
        shutil.rmtree(self.tmp, ignore_errors=True)


@contextlib.contextmanager
def staged(out_dir: Path) -> Iterator[Staging]:
    out_dir.mkdir(parents=True, exist_ok=True)
    stage = Staging(out_dir)
    try:
        yield stage
        stage.commit()
    finally:
        stage.discard()


def effective_settings(args: argparse.Namespace) -> Settings:
    settings = load_settings(args.config)
    run_cfg = settings.run
    if args.seed is not None:
        if not 0 <= args.seed <= MAX_SEED:
            raise ConfigError("--seed must be a 64-bit unsigned integer")
        run_cfg = dataclasses.replace(run_cfg, seed=args.seed)
    changes: dict[str, Any] = {"run": run_cfg}
    if getattr(args, "seeds", None) is not None:
        changes["seeds"] = args.seeds
    if getattr(args, "n", None) is not None:
        changes["histogram_n"] = args.n
    if getattr(args, "workers", None) is not None:
        changes["workers"] = args.workers
    try:
        return dataclasses.replace(settings, **changes)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def replicate_seeds(settings: Settings) -> list[int]:
    first = settings.run.seed
    if first + settings.seeds - 1 > MAX_SEED:
        raise ConfigError("seed range overflows 64 bits")
    return list(range(first, first + settings.seeds))


# -- subcommands -------------------------------------------------------------


def cmd_run(settings: Settings, out: Path) -> None:
    cfg = settings.run
    log.info("run: %s update, %d iterations, seed %d", cfg.agent.update_mode, cfg.iterations, cfg.seed)
    res = run(cfg)
    summary = res.summary()
    for key in ("total_reward", "final_reward", "greedy_eval_reward", "benchmark_mean_optimum"):
        summary[key] = _round6(summary[key])
    payload = {"result": summary, "config": settings_to_dict(settings)}
    if res.tracked_trajectory is not None:
        traj = res.tracked_trajectory
        payload["tracked_trajectory"] = [
            {"iteration": int(i), "q_value": _round6(q), "observed_reward": _round6(r)}
            for i, q, r in zip(traj.iterations, traj.q_values, traj.rewards)
        ]
    with staged(out) as stage:
        stage.write_csv(
            "curve.csv",
            ["iteration", "rolling_mean_reward"],
            ((int(i), money(v)) for i, v in zip(res.curve_iterations, res.curve_values)),
        )
        stage.write_json("result.json", payload)
        buf = io.StringIO()
        res.q.write_csv(buf, cfg.env)
        stage.write_text("qtable.csv", buf.getvalue())


FACTORIAL_COLUMNS = [
    "action_space_size",
    "state_space_size",
    "update_method",
    "mean_final_reward",
    "std_final_reward",
    "mean_total_reward",
    "std_total_reward",
    "mean_greedy_eval_reward",
    "mean_convergence_iteration",
    "n_seeds",
]


def _fmt_or_blank(x: float) -> str:
    return "" if x != x else money(x)  # NaN -> empty cell


def cmd_factorial(settings: Settings, out: Path) -> None:
    seeds = replicate_seeds(settings)
    log.info("factorial: 8 cells x %d seeds, %d iterations each", len(seeds), settings.run.iterations)
    rows = run_factorial(settings.run, seeds, workers=settings.workers)
    failed = [r for r in rows if r.errors]
    if failed:
        raise RuntimeError(
            "; ".join(f"{r.action_grid}/{r.state_grid}/{r.update_method}: {r.errors}" for r in failed)
        )
    csv_rows = [
        [
            r.action_space_size,
            r.state_space_size,
            r.update_method,
            money(r.mean_final_reward),
            money(r.std_final_reward),
            money(r.mean_total_reward),
            money(r.std_total_reward),
            money(r.mean_greedy_eval_reward),
            _fmt_or_blank(r.mean_convergence_iteration),
            r.n_seeds,
        ]
        for r in rows
    ]
    comparisons = []
    for single, batch in zip(rows[0::2], rows[1::2]):
        total = compare_totals(single.total_rewards, batch.total_rewards)
        final_pos = sum(b > s for s, b in zip(single.final_rewards, batch.final_rewards))
        final_neg = sum(b < s for s, b in zip(single.final_rewards, batch.final_rewards))
        comparisons.append(
            {
                "action_space_size": single.action_space_size,
                "state_space_size": single.state_space_size,
                "total_reward_mean_relative_improvement": total.mean_relative_improvement,
                "total_reward_sign_test_p": total.p_value,
                "total_reward_batch_wins": total.n_positive,
                "final_reward_batch_wins": final_pos,
                "final_reward_sign_test_p": sign_test_greater(final_pos, final_neg),
            }
        )
    detail = {
        "config": settings_to_dict(settings),
        "seeds": seeds,
        "cells": [
            {
                "action_space_size": r.action_space_size,
                "state_space_size": r.state_space_size,
                "update_method": r.update_method,
                "benchmark_closed_form": _round6(r.benchmark_closed_form),
                "benchmark_monte_carlo": _round6(r.benchmark_monte_carlo),
                "benchmark_mc_std_error": _round6(r.benchmark_mc_std_error),
                "total_rewards": [_round6(x) for x in r.total_rewards],
                "final_rewards": [_round6(x) for x in r.final_rewards],
                "greedy_eval_rewards": [_round6(x) for x in r.greedy_eval_rewards],
                "convergence_iterations": r.convergence_iterations,
            }
            for r in rows
        ],
        "batch_vs_single": comparisons,
    }
    with staged(out) as stage:
        stage.write_csv("factorial.csv", FACTORIAL_COLUMNS, csv_rows)
        stage.write_json("factorial.json", detail)


def cmd_illustrate(settings: Settings, out: Path) -> None:
    seeds = replicate_seeds(settings)
    overrides = {
        "base_price": settings.run.env.base_price,
        "steepness": settings.run.env.steepness,
        "learning_rate": settings.run.agent.learning_rate,
        "explore_prob": settings.run.agent.explore_prob,
        "batch_size": settings.run.agent.batch_size,
        "iterations": settings.run.iterations,
        "rolling_window": settings.run.rolling_window,
        "convergence_fraction": settings.run.convergence_fraction,
    }
    log.info("illustrate: %d paired seeds", len(seeds))
    results = [run_illustrative(s, overrides) for s in seeds]
    first = results[0]
    report = compare_totals([r.single for r in results], [r.batch for r in results])
    spreads = [(trajectory_spread(r.single), trajectory_spread(r.batch)) for r in results]
    narrower = sum(b < s for s, b in spreads)
    payload = report.to_dict()
    payload.update(
        {
            "seeds": seeds,
            "tracked_discount": 0.17,
            "oracle_expectation": _round6(first.oracle_expectation),
            "post_convergence_q_std_single": [None if s != s else _round6(s) for s, _ in spreads],
            "post_convergence_q_std_batch": [None if b != b else _round6(b) for _, b in spreads],
            "batch_narrower_fraction": narrower / len(spreads),
        }
    )
    payload["deltas"] = [_round6(d) for d in payload["deltas"]]

    def trace_rows(res):
        t = res.tracked_trajectory
        oracle = money(first.oracle_expectation)
        return [
            (int(i), money(q), money(r), oracle) for i, q, r in zip(t.iterations, t.q_values, t.rewards)
        ]

    header = ["iteration", "q_value", "observed_reward", "oracle_expectation"]
    with staged(out) as stage:
        stage.write_csv("trace_single.csv", header, trace_rows(first.single))
        stage.write_csv("trace_batch.csv", header, trace_rows(first.batch))
        stage.write_json("improvement.json", payload)


def cmd_oracle(settings: Settings, out: Path) -> None:
    env = settings.run.env
    closed = benchmark_closed_form(env)
    mc = benchmark_monte_carlo(
        env, settings.mc_samples_per_cell, seed=settings.run.seed, workers=settings.workers
    )

    def rounded(report):
        d = report.to_dict()
        d["mean_optimum"] = _round6(d["mean_optimum"])
        d["mc_std_error"] = _round6(d["mc_std_error"])
        for item in d["per_state_optimum"]:
            item["expected_reward"] = _round6(item["expected_reward"])
        return d

    payload = {
        "continuous_optimal_discount": optimal_discount_continuous(env.steepness),
        "closed_form": rounded(closed),
        "monte_carlo": dict(rounded(mc), samples_per_cell=settings.mc_samples_per_cell),
        "config": settings_to_dict(settings),
    }
    rows = [
        (f"{b:.6f}", f"{d:.6f}", money(expected_reward(b, d, env.base_price, env.steepness)))
        for b in env.state_grid
        for d in env.action_grid
    ]
    with staged(out) as stage:
        stage.write_json("oracle.json", payload)
        stage.write_csv("revenue_curves.csv", ["beta_prob", "discount", "expected_reward"], rows)


def cmd_histogram(settings: Settings, out: Path) -> None:
    env = PricingEnv(settings.run.env)
    s = settings.histogram_state_index
    state = CustomerState(s, env.config.state_grid[s])
    rng = substream(settings.run.seed, "histogram")
    hist = reward_histogram(env, state, settings.policy_weights(), settings.histogram_n, rng)
    with staged(out) as stage:
        stage.write_csv("histogram.csv", ["reward_value", "count"], ((money(v), c) for v, c in hist))


COMMANDS: dict[str, Callable[[Settings, Path], None]] = {
    "run": cmd_run,
    "factorial": cmd_factorial,
    "illustrate": cmd_illustrate,
    "oracle": cmd_oracle,
    "histogram": cmd_histogram,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pricelab", description="Batch vs single-update Q-learning on a discount pricing simulator."
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None, help="YAML run-config file (defaults if omitted)")
    common.add_argument("--out", type=Path, default=Path("."), help="output directory (default: .)")
    common.add_argument("--seed", type=int, default=None, help="master seed, overrides the config file")
    common.add_argument("--quiet", action="store_true", help="only report errors")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="single training run")
    for name, text in (("factorial", "2x2x2 factorial suite"), ("illustrate", "fixed-beta learning-dynamics trace")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--seeds", type=int, default=None, help="number of replicate seeds")
        p.add_argument("--workers", type=int, default=None, help="parallel worker processes")
    p = sub.add_parser("oracle", parents=[common], help="closed-form and Monte Carlo benchmarks")
    p.add_argument("--workers", type=int, default=None, help="parallel worker processes")
    p = sub.add_parser("histogram", parents=[common], help="reward histogram samples")
    p.add_argument("--n", type=int, default=None, help="number of sampled rewards")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    log.debug("simulation backend: %s", kernels.BACKEND)
    try:
        settings = effective_settings(args)
        COMMANDS[args.command](settings, args.out)
    except (ConfigError, OSError, RuntimeError, ValueError) as exc:
        print(f"pricelab {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
