"""Time the compiled simulation kernel against the pure-Python fallback.

Usage: python3 benchmarks/bench_kernels.py [--iterations N] [--repeats R]
"""

import argparse
import time

import numpy as np

from pricelab import kernels
from pricelab.env import GRANULAR_ACTIONS, GRANULAR_STATES, EnvConfig
from pricelab.harness import RunConfig, run


def time_run(cfg: RunConfig, backend: str, repeats: int) -> tuple[float, np.ndarray]:
    best = float("inf")
    q = None
    for _ in range(repeats):
        start = time.perf_counter()
        res = run(cfg, backend=backend, keep_rewards=False)
        best = min(best, time.perf_counter() - start)
        q = res.q.values
    return best, q


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--iterations", type=int, default=100_000)
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()

    envs = {"sparse": EnvConfig(), "granular": EnvConfig(GRANULAR_STATES, GRANULAR_ACTIONS)}
    backends = sorted(kernels.BACKENDS)
    print(f"backends available: {', '.join(backends)} (default: {kernels.BACKEND})")
    print(f"{'env':<9} {'mode':<7} " + " ".join(f"{b + ' s':>10}" for b in backends) + f" {'speedup':>8} identical")
    for env_name, env in envs.items():
        for mode in ("single", "batch"):
            cfg = RunConfig(env=env, iterations=args.iterations, seed=0).with_mode(mode)
            timings = {b: time_run(cfg, b, args.repeats) for b in backends}
            cells = " ".join(f"{timings[b][0]:>10.4f}" for b in backends)
            if len(backends) > 1:
                speedup = timings["python"][0] / timings["cython"][0]
                same = np.array_equal(timings["python"][1], timings["cython"][1])
                tail = f" {speedup:>7.1f}x {same}"
            else:
                tail = f" {'n/a':>8} n/a"
            print(f"{env_name:<9} {mode:<7} {cells}{tail}")


if __name__ == "__main__":
    main()
