"""Proximal gradient solver for the weighted group-lasso subproblem.

    min_x  0.5 ||Ax - y||^2 + sum_i lam_i ||x_{G_i}||_q

A solve stops once the fixed-point residual ||x - prox(x - grad/L)|| / max(1, ||x||)
and the relative duality gap are both below ``tol``. Steps use a Barzilai-Borwein
spectral length with monotone halving backtracking; the fallback length is 1/L
with L from power iteration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import GroupPartition, ProblemInstance

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITERS = 10_000
# columns are copied out of A only when fewer than this fraction stays active
COPY_THRESHOLD = 0.5
_SUFFICIENT_DECREASE = 1e-4
_MAX_HALVINGS = 60


class SubsolverDivergence(FloatingPointError):
    pass


def prox_group(v, tau: float, q: int) -> np.ndarray:
    """Proximal map of ``tau * ||.||_q`` on a single group segment."""
    v = np.asarray(v, dtype=float)
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    if q == 2:
        nv = np.linalg.norm(v)
        if nv <= tau:
            return np.zeros_like(v)
        return (1.0 - tau / nv) * v
    if q == 1:
        return np.sign(v) * np.maximum(np.abs(v) - tau, 0.0)
    raise ValueError(f"unsupported norm exponent q={q}")


def prox_blocks(v: np.ndarray, thresh: np.ndarray, partition: GroupPartition, q: int) -> np.ndarray:
    """Apply :func:`prox_group` to every group of ``v`` with per-group thresholds.

    An infinite threshold pins the group to zero.
    """
    if q == 2:
        norms = partition.norms(v, 2)
        keep = norms > thresh
        scale = np.zeros_like(norms)
        np.divide(thresh, norms, out=scale, where=keep)
        scale = np.where(keep, 1.0 - scale, 0.0)
        return v * partition.expand(scale)
    if q == 1:
        t = partition.expand(thresh)
        return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)
    raise ValueError(f"unsupported norm exponent q={q}")


def _penalty_change(x, xn, dx, partition, lam, q):
    """sum_i lam_i (||xn_i|| - ||x_i||), evaluated without cancellation."""
    if q == 2:
        a = partition.norms(x, 2)
        b = partition.norms(xn, 2)
        den = a + b
        num = np.add.reduceat(partition.gather(dx * (x + xn)), partition.offsets[:-1])
        diff = np.zeros_like(den)
        np.divide(num, den, out=diff, where=den > 0)
    else:
        comp = np.where(x * xn > 0, np.sign(x) * dx, np.abs(xn) - np.abs(x))
        diff = np.add.reduceat(partition.gather(comp), partition.offsets[:-1])
    active = np.isfinite(lam)
    return float(np.dot(lam[active], diff[active]))


@dataclass
class SubproblemSpec:
    """One weighted subproblem.

    ``lambdas`` has one entry per group of ``instance``. ``active`` lists the
    groups handed to the solver (``None`` means all); every other group is held
    at zero. ``x_init`` is a full-length warm start whose inactive groups are
    ignored.
    """

    instance: ProblemInstance
    lambdas: np.ndarray
    active: np.ndarray | None = None
    x_init: np.ndarray | None = None
    tol: float = DEFAULT_TOL
    max_iters: int = DEFAULT_MAX_ITERS

    def __post_init__(self):
        self.lambdas = np.asarray(self.lambdas, dtype=float)
        if self.lambdas.shape != (self.instance.d,):
            raise ValueError(f"need {self.instance.d} group weights, got shape {self.lambdas.shape}")
        if not np.all(self.lambdas > 0):
            raise ValueError("group weights must be strictly positive")
        if self.active is not None:
            self.active = np.unique(np.asarray(self.active, dtype=np.intp))
            if self.active.size and (self.active[0] < 0 or self.active[-1] >= self.instance.d):
                raise ValueError("active group index out of range")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.max_iters < 0:
            raise ValueError("max_iters must be nonnegative")

    def active_groups(self) -> np.ndarray:
        if self.active is None:
            return np.arange(self.instance.d)
        return self.active


@dataclass
class SubproblemResult:
    """Solver output. ``x`` is full length with zeros outside the active groups.

    ``resid`` is ``A x - y``. ``grad`` is ``A^T resid`` over all columns when the
    solver happened to compute it (full-matrix mode), otherwise ``None``.
    """

    x: np.ndarray
    iterations: int
    final_residual: float
    converged: bool
    resid: np.ndarray
    grad: np.ndarray | None = None


def _fixed_point_residual(x, g, lam, L, partition, q):
    step = 1.0 / L
    z = prox_blocks(x - step * g, step * lam, partition, q)
    return float(np.linalg.norm(x - z)) / max(1.0, float(np.linalg.norm(x)))


def _local_gap(x, r, g, lam, partition, q):
    """Duality gap and primal value of the (possibly reduced) subproblem."""
    active = np.isfinite(lam)
    gdn = partition.dual_norms(g, q)[active]
    lam_a = lam[active]
    s = min(1.0, float(np.min(lam_a / np.maximum(gdn, np.finfo(float).tiny)))) if lam_a.size else 1.0
    xnorm = partition.norms(x, q)[active]
    gx = np.add.reduceat(partition.gather(g * x), partition.offsets[:-1])[active]
    rr = float(r @ r)
    gap = float(np.sum(lam_a * xnorm + s * gx)) + 0.5 * (1.0 - s) ** 2 * rr
    return max(gap, 0.0), 0.5 * rr + float(lam_a @ xnorm)


def _stationarity(x, g, lam, partition, q):
    """Per-group distance of ``-g_i`` from ``lam_i * subdiff ||x_i||_q``, over ``max(1, lam_i)``."""
    active = np.isfinite(lam)
    xnorm = partition.norms(x, q)
    if q == 2:
        nz = xnorm > 0
        unit = x / partition.expand(np.where(nz, xnorm, 1.0))
        dist = partition.norms(g + partition.expand(np.where(nz, lam, 0.0)) * unit, 2)
        dist = np.where(nz, dist, np.maximum(partition.dual_norms(g, 2) - lam, 0.0))
    else:
        # coordinatewise: fixed sign on x_j != 0, |g_j| <= lam_i on zeros
        lam_c = partition.expand(np.where(active, lam, 0.0))
        viol = np.where(x != 0, np.abs(g + lam_c * np.sign(x)), np.maximum(np.abs(g) - lam_c, 0.0))
        dist = partition.norms(viol, 2)
    return dist[active] / np.maximum(1.0, lam[active])


def _stop(x, r, g, lam, L, partition, q, tol):
    """Fixed-point residual, and whether it, the relative gap and the KKT test all pass."""
    res = _fixed_point_residual(x, g, lam, L, partition, q)
    if res > tol:
        return res, False
    gap, P = _local_gap(x, r, g, lam, partition, q)
    if gap > tol * max(1.0, P):
        return res, False
    kkt = _stationarity(x, g, lam, partition, q)
    return res, not kkt.size or float(kkt.max()) <= tol


def _setup(spec: SubproblemSpec):
    inst = spec.instance
    part = inst.partition
    active = spec.active_groups()
    x0 = np.zeros(inst.n) if spec.x_init is None else np.asarray(spec.x_init, dtype=float).ravel()
    if x0.size != inst.n:
        raise ValueError(f"x_init has length {x0.size}, expected {inst.n}")
    n_active_cols = int(part.sizes[active].sum())
    if spec.active is None or n_active_cols >= COPY_THRESHOLD * inst.n:
        # operate on A in place, pinning inactive groups with an infinite weight
        lam = np.full(inst.d, np.inf)
        lam[active] = spec.lambdas[active]
        mask = np.zeros(inst.d, dtype=bool)
        mask[active] = True
        x = np.where(part.expand(mask), x0, 0.0)
        return inst.A, part, lam, x, None
    cols = part.columns(active)
    B = np.asfortranarray(inst.A[:, cols])
    return B, part.subpartition(active), spec.lambdas[active].copy(), x0[cols].copy(), cols


def solve_subproblem(spec: SubproblemSpec) -> SubproblemResult:
    inst = spec.instance
    q = inst.q
    y = inst.y
    B, part, lam, x, cols = _setup(spec)

    def result(x_loc, iters, res, conv, r, g):
        if cols is None:
            return SubproblemResult(x_loc, iters, res, conv, r, g)
        full = np.zeros(inst.n)
        full[cols] = x_loc
        return SubproblemResult(full, iters, res, conv, r, None)

    if x.size == 0:
        return result(x, 0, 0.0, True, -y.copy(), None)

    L = inst.lipschitz
    if L <= 0.0:
        # A == 0: the loss is constant and x = 0 is optimal
        x = np.zeros_like(x)
        return result(x, 0, 0.0, True, -y.copy(), B.T @ (-y))

    r = B @ x - y
    g = B.T @ r
    t = 1.0 / L
    res, done = _stop(x, r, g, lam, L, part, q, spec.tol)
    it = 0
    while not done and it < spec.max_iters:
        it += 1
        for _ in range(_MAX_HALVINGS):
            xn = prox_blocks(x - t * g, t * lam, part, q)
            dx = xn - x
            dd = float(dx @ dx)
            if dd == 0.0:
                break
            Bd = B @ dx
            bdbd = float(Bd @ Bd)
            dP = float(g @ dx) + 0.5 * bdbd + _penalty_change(x, xn, dx, part, lam, q)
            if not math.isfinite(dP):
                raise SubsolverDivergence(
                    f"non-finite objective change at iteration {it} (step {t:.3e}, L {L:.3e})")
            if dP <= -_SUFFICIENT_DECREASE / (2.0 * t) * dd:
                break
            t *= 0.5
        else:
            # no acceptable step at any length: numerically stalled
            break
        if dd == 0.0:
            # a fixed point at any step length is optimal up to rounding
            break
        x = xn
        r = r + Bd
        if it % 50 == 0:
            r = B @ x - y
        g = B.T @ r
        if not np.all(np.isfinite(g)):
            raise SubsolverDivergence(f"non-finite gradient at iteration {it}")
        t = dd / bdbd if bdbd > 0.0 else 1.0 / L
        t = min(max(t, 1.0 / L), 1e10 / L)
        res, done = _stop(x, r, g, lam, L, part, q, spec.tol)

    r = B @ x - y
    return result(x, it, res, done, r, g if cols is None else None)


def subproblem_objective(instance: ProblemInstance, lambdas, x) -> float:
    """P(x) = 0.5 ||Ax - y||^2 + sum_i lam_i ||x_{G_i}||_q."""
    x = np.asarray(x, dtype=float)
    r = instance.A @ x - instance.y
    return 0.5 * float(r @ r) + float(np.dot(lambdas, instance.partition.norms(x, instance.q)))


def dual_gap_from(instance: ProblemInstance, lambdas, x, r, g, groups=None) -> float:
    """Duality gap given ``r = Ax - y`` and ``g = A^T r`` (full length).

    The dual point is ``s * r`` with ``s`` the largest scaling in (0, 1] that
    keeps every considered group feasible. The gap is assembled groupwise so
    that no two O(P) quantities are subtracted.
    """
    lam = np.asarray(lambdas, dtype=float)
    if groups is not None:
        lam = np.full(instance.d, np.inf)
        lam[groups] = np.asarray(lambdas, dtype=float)[groups]
    return _local_gap(np.asarray(x, dtype=float), r, g, lam, instance.partition, instance.q)[0]


def subproblem_dual_gap(spec: SubproblemSpec, x) -> float:
    """P(x) - G(theta) for a dual-feasible theta built by rescaling ``Ax - y``."""
    inst = spec.instance
    x = np.asarray(x, dtype=float).ravel()
    if not np.all(np.isfinite(x)):
        raise ValueError("x must be finite")
    groups = spec.active_groups()
    mask = np.zeros(inst.d, dtype=bool)
    mask[groups] = True
    x = np.where(inst.partition.expand(mask), x, 0.0)
    r = inst.A @ x - inst.y
    g = inst.A.T @ r
    return dual_gap_from(inst, spec.lambdas, x, r, g, None if spec.active is None else groups)
