"""End-to-end experiment helpers: single runs against a generated world and
paired multi-seed strategy comparisons."""

from __future__ import annotations

import csv
import dataclasses
import json
import os
from typing import Sequence

import numpy as np
from scipy import stats

from .core import BudgetSchedule, RoundState
from .loop import HtProvider, RunConfig, run_hat
from .simulator import WorldConfig, generate_world

__all__ = [
    "run_single",
    "compare_strategies",
    "write_comparison_report",
    "paired_one_sided_t",
]


def run_single(
    world_cfg: WorldConfig,
    run_cfg: RunConfig,
    run_dir: str,
    ht_provider: HtProvider | None = None,
) -> list[RoundState]:
    """Generate the world, snapshot its config, and run the full loop."""
    os.makedirs(run_dir, exist_ok=True)
    bundle, oracles = generate_world(world_cfg)
    with open(os.path.join(run_dir, "world.json"), "w", encoding="utf-8") as fh:
        json.dump(dataclasses.asdict(world_cfg), fh, indent=2, sort_keys=True)
    schedule = BudgetSchedule(
        pool_size=len(bundle.d_source), cumulative_fractions=run_cfg.fractions
    )
    return run_hat(bundle, schedule, run_cfg, oracles, run_dir, ht_provider=ht_provider)


def paired_one_sided_t(a: Sequence[float], b: Sequence[float]) -> float:
    """p-value for the one-sided paired test of mean(a) > mean(b)."""
    diffs = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    if np.allclose(diffs, diffs[0]):
        # degenerate distribution: constant difference decides directly
        return 0.0 if diffs[0] > 0 else 1.0
    result = stats.ttest_rel(a, b, alternative="greater")
    return float(result.pvalue)


def compare_strategies(
    world_cfg: WorldConfig,
    run_cfg: RunConfig,
    strategies: Sequence[str],
    seeds: Sequence[int],
    out_dir: str,
) -> dict:
    """Run every strategy on the same per-seed worlds and report final and
    initial target accuracies plus paired tests against the first strategy."""
    results: dict[str, dict] = {}
    for strategy in strategies:
        finals: list[float] = []
        initials: list[float] = []
        for seed in seeds:
            wc = dataclasses.replace(world_cfg, seed=int(seed))
            rc = dataclasses.replace(run_cfg, strategy=strategy, seed=int(seed))
            run_dir = os.path.join(out_dir, "runs", strategy, f"seed_{seed}")
            history = run_single(wc, rc, run_dir)
            finals.append(history[-1].metrics["accuracy_target"])
            initials.append(history[0].metrics["accuracy_target"])
        results[strategy] = {
            "final_accuracy": finals,
            "initial_accuracy": initials,
            "mean_final": float(np.mean(finals)),
            "mean_initial": float(np.mean(initials)),
        }
    primary = strategies[0]
    for strategy in strategies[1:]:
        results[strategy]["p_primary_greater"] = paired_one_sided_t(
            results[primary]["final_accuracy"], results[strategy]["final_accuracy"]
        )
        results[strategy]["mean_gap_to_primary"] = float(
            results[primary]["mean_final"] - results[strategy]["mean_final"]
        )
    report = {
        "seeds": [int(s) for s in seeds],
        "strategies": list(strategies),
        "results": results,
    }
    write_comparison_report(out_dir, report)
    return report


def write_comparison_report(out_dir: str, report: dict) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "report.json"), "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
    with open(os.path.join(out_dir, "report.csv"), "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["strategy", "seed", "initial_accuracy", "final_accuracy"])
        for strategy in report["strategies"]:
            r = report["results"][strategy]
            for seed, init, final in zip(
                report["seeds"], r["initial_accuracy"], r["final_accuracy"]
            ):
                writer.writerow([strategy, seed, repr(init), repr(final)])
