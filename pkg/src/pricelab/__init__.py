"""Batch versus single-update tabular Q-learning on a discount pricing simulator."""

from pricelab.env import EnvConfig, PricingEnv, purchase_probability
from pricelab.harness import RunConfig, compare_totals, run, run_factorial, run_illustrative
from pricelab.kernels import BACKEND
from pricelab.oracle import benchmark_closed_form, benchmark_monte_carlo, optimal_discount_continuous
from pricelab.qlearn import AgentConfig, QTable

__version__ = "0.1.0"

__all__ = [
    "AgentConfig",
    "BACKEND",
    "EnvConfig",
    "PricingEnv",
    "QTable",
    "RunConfig",
    "benchmark_closed_form",
    "benchmark_monte_carlo",
    "compare_totals",
    "optimal_discount_continuous",
    "purchase_probability",
    "run",
    "run_factorial",
    "run_illustrative",
]
