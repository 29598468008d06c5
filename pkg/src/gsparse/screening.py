"""A priori group screening, the strong-rule baseline and the KKT repair loop."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import ProblemInstance
from .subsolver import (
    DEFAULT_MAX_ITERS,
    DEFAULT_TOL,
    SubproblemSpec,
    dual_gap_from,
    solve_subproblem,
)

STRATEGIES = ("proposed", "strong", "none")
DEFAULT_KKT_SLACK = 1e-6


@dataclass
class ScreenOutcome:
    """Group bookkeeping for one screen-solve pass.

    ``list`` holds the groups passed to the solver and ``scrlist`` the groups
    held at zero; together they partition ``0..d-1``. ``errlist`` collects the
    groups that were screened but then failed the KKT check and were moved
    back to ``list``.
    """

    list: np.ndarray
    scrlist: np.ndarray
    errlist: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.intp))


def _outcome(screened_mask: np.ndarray) -> ScreenOutcome:
    return ScreenOutcome(np.flatnonzero(~screened_mask), np.flatnonzero(screened_mask))


def priori_screen(c, lambdas) -> ScreenOutcome:
    """Screen group i whenever c_i <= lambda_i."""
    c = np.asarray(c, dtype=float)
    lambdas = np.asarray(lambdas, dtype=float)
    return _outcome(c <= lambdas)


def strong_rule_screen(c, lambdas, w) -> ScreenOutcome:
    """Strong-rule baseline: screen when c_i < 2 lambda_i - w_i max_j(c_j / w_j)."""
    c = np.asarray(c, dtype=float)
    lambdas = np.asarray(lambdas, dtype=float)
    w = np.asarray(w, dtype=float)
    if np.any(w <= 0):
        raise ValueError("strong rule needs strictly positive weights")
    top = float(np.max(c / w)) if c.size else 0.0
    return _outcome(c < 2.0 * lambdas - w * top)


def kkt_violations(grad, instance: ProblemInstance, lambdas, scrlist, slack: float = DEFAULT_KKT_SLACK):
    """Screened groups whose residual correlation exceeds lambda_i (1 + slack)."""
    scrlist = np.asarray(scrlist, dtype=np.intp)
    if scrlist.size == 0:
        return scrlist
    corr = instance.partition.dual_norms(grad, instance.q)[scrlist]
    return scrlist[corr > np.asarray(lambdas, dtype=float)[scrlist] * (1.0 + slack)]


def kkt_check(instance: ProblemInstance, x, lambdas, scrlist, slack: float = DEFAULT_KKT_SLACK) -> np.ndarray:
    """Return the screened groups that violate ||A_{G_i}^T (Ax - y)||_{q'} <= lambda_i."""
    x = np.asarray(x, dtype=float)
    grad = instance.A.T @ (instance.A @ x - instance.y)
    return kkt_violations(grad, instance, lambdas, scrlist, slack)


@dataclass
class ScreenStats:
    screened: int
    repair_rounds: int
    wrongly_screened: int
    active_cols: int
    inner_iterations: int
    inner_converged: bool
    dual_gap: float
    subproblem_objective: float
    subsolver_calls: int


def screen_solve(instance: ProblemInstance, lambdas, warm_x, strategy: str = "proposed",
                 w=None, tol: float = DEFAULT_TOL, max_iters: int = DEFAULT_MAX_ITERS,
                 kkt_slack: float = DEFAULT_KKT_SLACK):
    """Screen, solve the reduced subproblem, and repair until the KKT check passes.

    Returns ``(x, outcome, stats)``. With ``strategy="none"`` the full
    subproblem is solved directly. The repair loop re-adds every violating
    group at once and re-solves from the current solution; the re-added groups
    start at zero.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")
    lambdas = np.asarray(lambdas, dtype=float)
    d = instance.d
    part = instance.partition
    c = instance.correlations

    if strategy == "proposed":
        outcome = priori_screen(c, lambdas)
    elif strategy == "strong":
        if w is None:
            raise ValueError("strong rule needs the current weights w")
        outcome = strong_rule_screen(c, lambdas, w)
    else:
        outcome = ScreenOutcome(np.arange(d), np.empty(0, dtype=np.intp))
    n_screened = outcome.scrlist.size

    screened_mask = np.zeros(d, dtype=bool)
    screened_mask[outcome.scrlist] = True
    x = np.where(part.expand(screened_mask), 0.0, np.asarray(warm_x, dtype=float))
    errors: list[np.ndarray] = []
    rounds = calls = inner_iters = 0
    inner_ok = True
    while True:
        if outcome.list.size:
            spec = SubproblemSpec(instance, lambdas, outcome.list if outcome.scrlist.size else None,
                                  x, tol, max_iters)
            res = solve_subproblem(spec)
            x, r, grad = res.x, res.resid, res.grad
            calls += 1
            inner_iters += res.iterations
            inner_ok = inner_ok and res.converged
        else:
            x = np.zeros(instance.n)
            r = -instance.y
            grad = None
        if grad is None:
            grad = instance.A.T @ r
        if strategy == "none":
            break
        bad = kkt_violations(grad, instance, lambdas, outcome.scrlist, kkt_slack)
        if bad.size == 0:
            break
        rounds += 1
        if rounds > d:
            raise RuntimeError("KKT repair did not terminate within d rounds")
        errors.append(bad)
        screened_mask[bad] = False
        outcome = _outcome(screened_mask)

    outcome.errlist = np.unique(np.concatenate(errors)) if errors else np.empty(0, dtype=np.intp)
    gap = dual_gap_from(instance, lambdas, x, r, grad)
    P = 0.5 * float(r @ r) + float(lambdas @ part.norms(x, instance.q))
    stats = ScreenStats(
        screened=int(n_screened),
        repair_rounds=rounds,
        wrongly_screened=int(outcome.errlist.size),
        active_cols=int(part.sizes[outcome.list].sum()),
        inner_iterations=inner_iters,
        inner_converged=inner_ok,
        dual_gap=gap,
        subproblem_objective=P,
        subsolver_calls=calls,
    )
    return x, outcome, stats
