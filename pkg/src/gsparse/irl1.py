"""Iteratively reweighted l1 driver with optional screening of the subproblems."""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import GroupPartition, ProblemInstance, lambda_max, objective, perturbed_objective
from .screening import DEFAULT_KKT_SLACK, STRATEGIES, ScreenOutcome, screen_solve
from .subsolver import DEFAULT_MAX_ITERS, DEFAULT_TOL, SubproblemSpec, solve_subproblem

INIT_RULES = ("l_q1_early_stop", "zeros", "given")


@dataclass
class Irl1Config:
    mu: float = 0.9
    outer_tol: float = 1e-6
    max_outer: int = 500
    strategy: str = "proposed"
    # None selects (lambda_max / (2 p lambda))^(1 / (p - 1))
    eps0: float | None = None
    init: str = "l_q1_early_stop"
    x0: np.ndarray | None = None
    init_budget: int = 50
    inner_tol: float = DEFAULT_TOL
    inner_max_iters: int = DEFAULT_MAX_ITERS
    kkt_slack: float = DEFAULT_KKT_SLACK
    # also wait until every zero group passes c_i <= lambda_i before stopping
    identify: bool = True

    def __post_init__(self):
        if not 0 < self.mu < 1:
            raise ValueError(f"mu must lie in (0, 1), got {self.mu}")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.init not in INIT_RULES:
            raise ValueError(f"unknown init rule {self.init!r}")
        if self.init == "given" and self.x0 is None:
            raise ValueError("init='given' needs x0")
        if self.eps0 is not None and not self.eps0 > 0:
            raise ValueError("eps0 must be positive")
        if self.max_outer < 1 or self.outer_tol <= 0:
            raise ValueError("max_outer must be >= 1 and outer_tol > 0")


@dataclass
class IterationState:
    x: np.ndarray
    eps: np.ndarray
    w: np.ndarray
    lambdas: np.ndarray
    k: int = 0
    screen: ScreenOutcome | None = None


@dataclass
class IterationRecord:
    k: int
    time_s: float
    screened: int
    repaired: int
    wrongly_screened: int
    active_cols: int
    inner_iterations: int
    objective: float
    perturbed_before: float
    perturbed_after: float
    dual_gap: float
    subproblem_objective: float
    rel_change: float
    scrlist: list[int] = field(repr=False)
    zero_groups: list[int] = field(repr=False)


@dataclass
class RunReport:
    strategy: str
    lam: float
    lambda_max: float
    p: float
    q: int
    eps0: float
    converged: bool
    outer_iterations: int
    init_time_s: float
    solve_time_s: float
    total_time_s: float
    objective: float
    n_groups: int
    nonzero_groups: int
    final_scrlist: list[int]
    records: list[IterationRecord]
    settings: dict

    def to_dict(self, include_sets: bool = False) -> dict:
        out = asdict(self)
        if not include_sets:
            for rec in out["records"]:
                rec.pop("scrlist")
                rec.pop("zero_groups")
        return out

    def csv_rows(self):
        """Plot-data rows: iteration, time_s, screened, repaired, active_cols, objective."""
        return [(r.k, r.time_s, r.screened, r.repaired, r.active_cols, r.objective)
                for r in self.records]


def update_weights(x, eps, p: float, q: int, partition: GroupPartition) -> np.ndarray:
    """w_i = p (||x_{G_i}||_q + eps_i)^(p - 1)."""
    eps = np.asarray(eps, dtype=float)
    if np.any(eps <= 0):
        raise ValueError("perturbations must be strictly positive")
    return p * (partition.norms(np.asarray(x, dtype=float), q) + eps) ** (p - 1.0)


def initial_epsilon(lam_max: float, p: float, lam: float) -> float:
    if not lam_max > 0:
        raise ValueError("lambda_max must be positive")
    return (lam_max / (2.0 * p * lam)) ** (1.0 / (p - 1.0))


def decay_epsilon(eps, mu: float) -> np.ndarray:
    if not 0 < mu < 1:
        raise ValueError(f"mu must lie in (0, 1), got {mu}")
    # floor at the smallest normal float so eps never underflows to zero
    return np.maximum(mu * np.asarray(eps, dtype=float), np.finfo(float).tiny)


def init_x0(instance: ProblemInstance, config: Irl1Config) -> np.ndarray:
    """Starting point: an early-stopped solve of the unit-weight l_{q,1} problem."""
    if config.init == "zeros":
        return np.zeros(instance.n)
    if config.init == "given":
        x0 = np.asarray(config.x0, dtype=float).ravel()
        if x0.size != instance.n:
            raise ValueError(f"x0 has length {x0.size}, expected {instance.n}")
        return x0.copy()
    if config.init_budget == 0:
        return np.zeros(instance.n)
    spec = SubproblemSpec(instance, np.full(instance.d, instance.lam),
                          tol=config.inner_tol, max_iters=config.init_budget)
    return solve_subproblem(spec).x


def _rel_change(x_new, x_old) -> float:
    num = float(np.linalg.norm(x_new - x_old))
    den = float(np.linalg.norm(x_new))
    if den == 0.0:
        return 0.0 if num == 0.0 else np.inf
    return num / den


def run(instance: ProblemInstance, config: Irl1Config | None = None):
    """Run the reweighted l1 loop; returns ``(x_final, RunReport)``.

    The loop stops when ``||x+ - x|| / ||x+|| <= outer_tol`` (0/0 counts as
    converged). With ``config.identify`` it additionally requires every zero
    group of ``x+`` to satisfy ``c_i <= lambda_i`` at the current weights, so
    that the run ends only after the screening test has caught up with the
    support. The condition is checked the same way for every strategy.
    """
    config = config or Irl1Config()
    part = instance.partition
    p, q, lam = instance.p, instance.q, instance.lam
    # cached problem data, counted as construction rather than solve time
    lam_max = lambda_max(instance)
    c = instance.correlations
    _ = instance.lipschitz

    if config.eps0 is not None:
        eps0 = float(config.eps0)
    elif lam_max > 0:
        eps0 = initial_epsilon(lam_max, p, lam)
    else:
        eps0 = 1.0

    t0 = time.perf_counter()
    x = init_x0(instance, config)
    init_time = time.perf_counter() - t0

    state = IterationState(x=x, eps=np.full(instance.d, eps0), w=np.ones(instance.d),
                           lambdas=np.full(instance.d, lam))
    records: list[IterationRecord] = []
    converged = False
    f_before = perturbed_objective(instance, state.x, state.eps)
    for k in range(config.max_outer):
        t0 = time.perf_counter()
        state.w = update_weights(state.x, state.eps, p, q, part)
        state.lambdas = lam * state.w
        x_new, outcome, stats = screen_solve(
            instance, state.lambdas, state.x, config.strategy, w=state.w,
            tol=config.inner_tol, max_iters=config.inner_max_iters, kkt_slack=config.kkt_slack)
        eps_new = decay_epsilon(state.eps, config.mu)
        rel = _rel_change(x_new, state.x)
        elapsed = time.perf_counter() - t0

        f_after = perturbed_objective(instance, x_new, eps_new)
        zero = np.flatnonzero(part.norms(x_new, 1) == 0.0)
        records.append(IterationRecord(
            k=k, time_s=elapsed, screened=stats.screened, repaired=stats.repair_rounds,
            wrongly_screened=stats.wrongly_screened, active_cols=stats.active_cols,
            inner_iterations=stats.inner_iterations, objective=objective(instance, x_new),
            perturbed_before=f_before, perturbed_after=f_after, dual_gap=stats.dual_gap,
            subproblem_objective=stats.subproblem_objective, rel_change=rel,
            scrlist=outcome.scrlist.tolist(), zero_groups=zero.tolist()))
        state.x, state.eps, state.screen, state.k = x_new, eps_new, outcome, k + 1
        f_before = f_after
        if rel <= config.outer_tol and (
                not config.identify or np.all(c[zero] <= state.lambdas[zero])):
            converged = True
            break

    x = state.x
    solve_time = sum(r.time_s for r in records)
    report = RunReport(
        strategy=config.strategy, lam=lam, lambda_max=lam_max, p=p, q=q, eps0=eps0,
        converged=converged, outer_iterations=len(records), init_time_s=init_time,
        solve_time_s=solve_time, total_time_s=init_time + solve_time,
        objective=objective(instance, x), n_groups=instance.d,
        nonzero_groups=int(np.count_nonzero(part.norms(x, 1))),
        final_scrlist=records[-1].scrlist if records else [],
        records=records,
        settings={"mu": config.mu, "outer_tol": config.outer_tol, "max_outer": config.max_outer,
                  "inner_tol": config.inner_tol, "inner_max_iters": config.inner_max_iters,
                  "kkt_slack": config.kkt_slack, "init": config.init,
                  "init_budget": config.init_budget, "identify": config.identify},
    )
    return x, report
