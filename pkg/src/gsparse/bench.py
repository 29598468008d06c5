"""Experiment harness: lambda grids, strategy comparisons, screening metrics, gain studies."""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from itertools import combinations

import numpy as np

from .core import GroupPartition, ProblemInstance, lambda_max
from .data import Dataset, SyntheticSpec, generate_synthetic, polynomial_group_expand
from .irl1 import Irl1Config, RunReport, init_x0, run

AGREEMENT_TOL = 1e-5

__all__ = [
    "GridSpec", "RunReport", "lambda_grid", "compare_strategies", "screening_metrics",
    "gain_study", "prepare_dataset", "prediction_error", "worker_count",
]


def worker_count() -> int:
    """Worker cap from ``GSPARSE_THREADS`` (default 1)."""
    raw = os.environ.get("GSPARSE_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ValueError(f"GSPARSE_THREADS must be an integer, got {raw!r}") from None


@dataclass(frozen=True)
class GridSpec:
    lambda_max: float
    Q: int = 20

    def __post_init__(self):
        if self.Q < 2:
            raise ValueError("grid needs Q >= 2")
        if not self.lambda_max > 0:
            raise ValueError("lambda_max must be positive")


def lambda_grid(spec: GridSpec) -> list[float]:
    """lambda_t = 10^-(1 + 2t/(Q-1)) * lambda_max for t = 0..Q-1."""
    return [10.0 ** -(1.0 + 2.0 * t / (spec.Q - 1)) * spec.lambda_max for t in range(spec.Q)]


def _rel_dist(a, b) -> float:
    den = float(np.linalg.norm(b))
    num = float(np.linalg.norm(a - b))
    if den == 0.0:
        return 0.0 if num == 0.0 else math.inf
    return num / den


def compare_strategies(instance: ProblemInstance, config: Irl1Config | None = None,
                       strategies=("none", "proposed", "strong"), repeat: int = 1) -> dict:
    """Run each strategy from one shared starting point and tabulate times and agreement.

    The starting point is computed once, timed on its own, and handed to every
    strategy, so the per-strategy times cover the reweighting loop only.
    Times are medians over ``repeat`` runs; normalization is against ``"none"``.
    """
    config = config or Irl1Config()
    if repeat < 1:
        raise ValueError("repeat must be >= 1")
    t0 = time.perf_counter()
    x0 = init_x0(instance, config)
    init_time = time.perf_counter() - t0
    shared = replace(config, init="given", x0=x0)

    solutions, reports, times = {}, {}, {}
    for strategy in strategies:
        ts = []
        for _ in range(repeat):
            x, rep = run(instance, replace(shared, strategy=strategy))
            ts.append(rep.solve_time_s)
        solutions[strategy], reports[strategy], times[strategy] = x, rep, float(np.median(ts))

    ref = "none" if "none" in strategies else None
    rows = []
    for strategy in strategies:
        rep = reports[strategy]
        rows.append({
            "strategy": strategy,
            "time_s": times[strategy],
            "normalized_time": times[strategy] / times[ref] if ref and times[ref] > 0 else None,
            "time_with_init_s": times[strategy] + init_time,
            "objective": rep.objective,
            "rel_dist_to_none": _rel_dist(solutions[strategy], solutions[ref]) if ref else None,
            "converged": rep.converged,
            "outer_iterations": rep.outer_iterations,
            "nonzero_groups": rep.nonzero_groups,
            "total_screened": sum(r.screened for r in rep.records),
            "total_wrongly_screened": sum(r.wrongly_screened for r in rep.records),
        })
    worst = max((_rel_dist(solutions[a], solutions[b]) for a, b in combinations(strategies, 2)),
                default=0.0)
    return {
        "lambda": instance.lam,
        "lambda_max": lambda_max(instance),
        "p": instance.p,
        "q": instance.q,
        "init_time_s": init_time,
        "repeat": repeat,
        "rows": rows,
        "max_pairwise_rel_dist": worst,
        "status": "OK" if worst <= AGREEMENT_TOL else "FAILURE",
        "reports": reports,
        "solutions": solutions,
    }


def screening_metrics(scr_report: RunReport, ori_report: RunReport, n_iters: int | None = 20):
    """Per-iteration RSN and RWN of a screened run against the unscreened solution.

    RSN is the number of groups screened by the a priori test over the number
    of null groups of the unscreened solution; RWN uses the groups the KKT
    check sent back. Entries are ``None`` when that solution has no null groups.
    """
    null = ori_report.n_groups - ori_report.nonzero_groups
    records = scr_report.records if n_iters is None else scr_report.records[:n_iters]
    if null == 0:
        return [None] * len(records), [None] * len(records)
    rsn = [r.screened / null for r in records]
    rwn = [r.wrongly_screened / null for r in records]
    return rsn, rwn


def _timed_pair(instance, config, repeat):
    out = compare_strategies(instance, config, ("none", "proposed"), repeat=repeat)
    t_ori, t_scr = out["rows"][0]["time_s"], out["rows"][1]["time_s"]
    return t_ori, t_scr, out["init_time_s"], out["max_pairwise_rel_dist"]


def gain_study(base_spec: SyntheticSpec, vary: str, values, p: float = 0.5, q: int = 2,
               lambda_frac: float = 0.01, config: Irl1Config | None = None,
               seeds=(0,), repeat: int = 1) -> list[dict]:
    """time(none) / time(proposed) on fresh synthetic instances as one knob varies.

    ``gain`` compares the reweighting loops from a shared starting point;
    ``gain_with_init`` adds the shared starting-point solve to both sides.

    ``vary`` is ``"lambda"`` (values are fractions of lambda_max), ``"noise"``
    (noise standard deviations) or ``"n"`` (feature counts). Instance ``seed``
    for offset ``s`` is ``base_spec.seed + s``, shared across values.
    """
    if vary not in ("lambda", "noise", "n"):
        raise ValueError(f"cannot vary {vary!r}")
    values = list(values)
    if not values:
        raise ValueError("values must be nonempty")
    config = config or Irl1Config()
    rows = []
    for value in values:
        for s in seeds:
            spec = replace(base_spec, seed=base_spec.seed + s)
            frac = lambda_frac
            if vary == "noise":
                spec = replace(spec, noise_std=float(value))
            elif vary == "n":
                spec = replace(spec, n=int(value))
            else:
                frac = float(value)
            A, y, _, part = generate_synthetic(spec)
            inst = ProblemInstance(A, y, part, 1.0, p, q)
            inst = inst.with_params(lam=frac * lambda_max(inst))
            t_ori, t_scr, t_init, dist = _timed_pair(inst, config, repeat)
            rows.append({"vary": vary, "value": value, "seed": spec.seed, "m": spec.m, "n": spec.n,
                         "noise_std": spec.noise_std, "lambda_frac": frac, "time_ori_s": t_ori,
                         "time_scr_s": t_scr, "gain": t_ori / t_scr if t_scr > 0 else math.inf,
                         "init_time_s": t_init, "gain_with_init": (t_ori + t_init) / (t_scr + t_init),
                         "rel_dist": dist})
    return rows


@dataclass
class PreparedData:
    A: np.ndarray
    y: np.ndarray
    partition: GroupPartition
    A_test: np.ndarray | None
    y_test: np.ndarray | None
    task: str
    y_offset: float = 0.0


def prepare_dataset(dataset: Dataset, expand: bool = True, degree: int = 3,
                    group_size: int = 1, test_frac: float = 0.0, seed: int = 0) -> PreparedData:
    """Turn a raw dataset into a design matrix, grouped features and an optional test split.

    Classification labels become -1/+1. Regression targets are centered by the
    training mean (the model has no intercept).
    """
    if expand:
        A, part = polynomial_group_expand(dataset, degree=degree)
    else:
        X = dataset.X - dataset.X.mean(axis=0)
        norms = np.linalg.norm(X, axis=0)
        A = X / np.where(norms == 0, 1.0, norms)
        part = GroupPartition.contiguous_blocks(A.shape[1], group_size)
    y = dataset.signed_labels() if dataset.task == "classification" else dataset.y.copy()
    if not 0 <= test_frac < 1:
        raise ValueError("test_frac must lie in [0, 1)")
    n_test = int(round(test_frac * y.size))
    if n_test:
        perm = np.random.default_rng(seed).permutation(y.size)
        te, tr = perm[:n_test], perm[n_test:]
        A_test, y_test, A, y = A[te], y[te], A[tr], y[tr]
    else:
        A_test = y_test = None
    offset = 0.0
    if dataset.task == "regression":
        offset = float(y.mean())
        y = y - offset
        if y_test is not None:
            y_test = y_test - offset
    return PreparedData(np.asfortranarray(A), y, part, A_test, y_test, dataset.task, offset)


def prediction_error(A, y, x, task: str = "regression") -> float:
    """Mean squared error, or accuracy of sign(Ax) for -1/+1 labels."""
    pred = np.asarray(A) @ x
    if task == "classification":
        return float(np.mean(np.where(pred >= 0, 1.0, -1.0) == y))
    return float(np.mean((pred - y) ** 2))


def run_grid(instance: ProblemInstance, config: Irl1Config, Q: int = 20,
             strategies=("proposed",), evaluate=None) -> dict:
    """Solve along the lambda grid; points run concurrently up to ``worker_count()``."""
    lam_max = lambda_max(instance)
    grid = lambda_grid(GridSpec(lam_max, Q))
    jobs = [(lam, s) for lam in grid for s in strategies]

    def one(job):
        lam, strategy = job
        x, rep = run(instance.with_params(lam=lam), replace(config, strategy=strategy))
        row = {"lambda": lam, "lambda_frac": lam / lam_max, "strategy": strategy,
               "time_s": rep.total_time_s, "objective": rep.objective,
               "nonzero_groups": rep.nonzero_groups, "converged": rep.converged,
               "outer_iterations": rep.outer_iterations}
        if evaluate is not None:
            row["prediction"] = evaluate(x)
        return row

    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        rows = list(pool.map(one, jobs))
    totals = {s: sum(r["time_s"] for r in rows if r["strategy"] == s) for s in strategies}
    return {"lambda_max": lam_max, "Q": Q, "rows": rows, "total_time_s": totals}
