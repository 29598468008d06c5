"""Problem representation, group norms and the l_{q,p} objective."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

SUPPORTED_Q = (1, 2)


def dual_exponent(q: float) -> float:
    """Return q' = q / (q - 1), with q = 1 mapped to infinity."""
    if q == 1:
        return math.inf
    if q <= 1:
        raise ValueError(f"norm exponent must be >= 1, got {q}")
    return q / (q - 1)


def _check_q(q) -> int:
    if q not in SUPPORTED_Q:
        raise ValueError(f"unsupported norm exponent q={q}; expected one of {SUPPORTED_Q}")
    return int(q)


class GroupPartition:
    """A disjoint partition of the feature indices ``0..n-1`` into ``d`` groups.

    Groups are stored as a concatenated index ``order`` plus ``offsets`` so that
    per-group reductions run through ``np.ufunc.reduceat``. When the groups are
    contiguous and already in order the gather step is skipped.
    """

    __slots__ = ("groups", "d", "n", "sizes", "offsets", "order", "inverse",
                 "contiguous", "group_of")

    def __init__(self, groups: Sequence[Sequence[int]]):
        groups = [np.asarray(g, dtype=np.intp).ravel() for g in groups]
        if not groups:
            raise ValueError("partition needs at least one group")
        if any(g.size == 0 for g in groups):
            raise ValueError("groups must be nonempty")
        order = np.concatenate(groups)
        n = order.size
        if order.min() < 0 or not np.array_equal(np.sort(order), np.arange(n)):
            raise ValueError("groups must be pairwise disjoint and cover 0..n-1 exactly")
        self.groups = groups
        self.d = len(groups)
        self.n = n
        self.sizes = np.array([g.size for g in groups], dtype=np.intp)
        self.offsets = np.concatenate(([0], np.cumsum(self.sizes)))
        self.order = order
        self.contiguous = bool(np.array_equal(order, np.arange(n)))
        self.inverse = np.empty(n, dtype=np.intp)
        self.inverse[order] = np.arange(n)
        self.group_of = np.repeat(np.arange(self.d), self.sizes)[self.inverse]

    @classmethod
    def contiguous_blocks(cls, n: int, size: int) -> "GroupPartition":
        if size <= 0 or n % size:
            raise ValueError(f"n={n} is not divisible by group size {size}")
        return cls([range(s, s + size) for s in range(0, n, size)])

    @classmethod
    def from_sizes(cls, sizes: Sequence[int]) -> "GroupPartition":
        bounds = np.concatenate(([0], np.cumsum(sizes)))
        return cls([range(a, b) for a, b in zip(bounds[:-1], bounds[1:])])

    @classmethod
    def from_labels(cls, labels: Sequence[int]) -> "GroupPartition":
        """Build from a per-feature group label array (labels sorted by first use)."""
        labels = np.asarray(labels)
        _, first = np.unique(labels, return_index=True)
        return cls([np.flatnonzero(labels == labels[i]) for i in np.sort(first)])

    def __len__(self):
        return self.d

    def __repr__(self):
        return f"GroupPartition(d={self.d}, n={self.n})"

    def gather(self, v: np.ndarray) -> np.ndarray:
        return v if self.contiguous else v[self.order]

    def scatter(self, v_grouped: np.ndarray) -> np.ndarray:
        return v_grouped if self.contiguous else v_grouped[self.inverse]

    def expand(self, per_group: np.ndarray) -> np.ndarray:
        """Broadcast a length-d vector to a length-n vector in feature order."""
        return self.scatter(np.repeat(per_group, self.sizes))

    def columns(self, group_ids) -> np.ndarray:
        """Feature indices of the given groups, concatenated in the given order."""
        group_ids = np.asarray(group_ids, dtype=np.intp)
        if group_ids.size == 0:
            return np.empty(0, dtype=np.intp)
        if self.contiguous:
            return np.concatenate([np.arange(self.offsets[i], self.offsets[i + 1])
                                   for i in group_ids])
        return np.concatenate([self.groups[i] for i in group_ids])

    def subpartition(self, group_ids) -> "GroupPartition":
        """Partition of the columns returned by :meth:`columns`, renumbered from 0."""
        return GroupPartition.from_sizes(self.sizes[np.asarray(group_ids, dtype=np.intp)])

    def norms(self, v: np.ndarray, q: int) -> np.ndarray:
        """Per-group l_q norms of ``v``."""
        vg = self.gather(v)
        if q == 2:
            return np.sqrt(np.add.reduceat(vg * vg, self.offsets[:-1]))
        if q == 1:
            return np.add.reduceat(np.abs(vg), self.offsets[:-1])
        raise ValueError(f"unsupported norm exponent q={q}")

    def dual_norms(self, v: np.ndarray, q: int) -> np.ndarray:
        """Per-group l_{q'} norms of ``v`` (l2 for q=2, l-infinity for q=1)."""
        if q == 2:
            return self.norms(v, 2)
        if q == 1:
            return np.maximum.reduceat(np.abs(self.gather(v)), self.offsets[:-1])
        raise ValueError(f"unsupported norm exponent q={q}")


def group_norm(x, partition: GroupPartition, i: int, q: int) -> float:
    seg = np.asarray(x, dtype=float)[partition.groups[i]]
    return float(np.linalg.norm(seg, ord=q))


def group_dual_norm(v, partition: GroupPartition, i: int, q: int) -> float:
    seg = np.asarray(v, dtype=float)[partition.groups[i]]
    return float(np.linalg.norm(seg, ord=dual_exponent(q)))


def _power_iteration(A: np.ndarray, iters: int = 20, seed: int = 0) -> float:
    """Estimate the largest eigenvalue of A^T A."""
    n = A.shape[1]
    v = np.random.default_rng(seed).standard_normal(n)
    v /= np.linalg.norm(v)
    est = prev = 0.0
    for _ in range(iters):
        w = A.T @ (A @ v)
        prev, est = est, float(np.linalg.norm(w))
        if est == 0.0:
            return 0.0
        v = w / est
    if abs(est - prev) <= 1e-12 * est:
        return est
    # unconverged estimates sit below the true value; pad so 1/L stays a safe step
    return est * 1.01


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    """Least squares with an l_{q,p} group penalty.

    ``A`` is stored dense and column-major. The group correlations
    ``c_i = ||(A^T y)_{G_i}||_{q'}`` and a Lipschitz bound for ``A^T A`` are
    computed once and shared by instances derived through :meth:`with_params`.
    """

    A: np.ndarray
    y: np.ndarray
    partition: GroupPartition
    lam: float
    p: float
    q: int = 2
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        A = self.A
        if hasattr(A, "toarray"):
            A = A.toarray()
        A = np.asfortranarray(np.asarray(A, dtype=float))
        y = np.ascontiguousarray(np.asarray(self.y, dtype=float).ravel())
        if A.ndim != 2:
            raise ValueError("A must be a 2-d matrix")
        if A.shape[1] != self.partition.n:
            raise ValueError(f"A has {A.shape[1]} columns but the partition covers {self.partition.n}")
        if y.size != A.shape[0]:
            raise ValueError(f"y has length {y.size} but A has {A.shape[0]} rows")
        if not self.lam > 0:
            raise ValueError(f"lambda must be positive, got {self.lam}")
        if not 0 < self.p < 1:
            raise ValueError(f"p must lie in (0, 1), got {self.p}")
        object.__setattr__(self, "q", _check_q(self.q))
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "lam", float(self.lam))
        object.__setattr__(self, "p", float(self.p))

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.A.shape[1]

    @property
    def d(self) -> int:
        return self.partition.d

    @property
    def correlations(self) -> np.ndarray:
        key = ("c", self.q)
        if key not in self._cache:
            c = self.partition.dual_norms(self.A.T @ self.y, self.q)
            c.setflags(write=False)
            self._cache[key] = c
        return self._cache[key]

    @property
    def lipschitz(self) -> float:
        """Upper estimate of ||A||_2^2, the gradient Lipschitz constant of the loss."""
        if "L" not in self._cache:
            self._cache["L"] = _power_iteration(self.A)
        return self._cache["L"]

    def with_params(self, lam=None, p=None, q=None) -> "ProblemInstance":
        return ProblemInstance(
            self.A, self.y, self.partition,
            self.lam if lam is None else lam,
            self.p if p is None else p,
            self.q if q is None else q,
            _cache=self._cache,
        )


def _check_x(instance: ProblemInstance, x) -> np.ndarray:
    x = np.asarray(x, dtype=float).ravel()
    if x.size != instance.n:
        raise ValueError(f"x has length {x.size}, expected {instance.n}")
    return x


def objective(instance: ProblemInstance, x) -> float:
    """0.5 ||Ax - y||^2 + lam * sum_i ||x_{G_i}||_q^p."""
    x = _check_x(instance, x)
    r = instance.A @ x - instance.y
    penalty = np.sum(instance.partition.norms(x, instance.q) ** instance.p)
    return 0.5 * float(r @ r) + instance.lam * float(penalty)


def perturbed_objective(instance: ProblemInstance, x, eps) -> float:
    """Objective with the smoothed penalty sum_i (||x_{G_i}||_q + eps_i)^p."""
    x = _check_x(instance, x)
    eps = np.broadcast_to(np.asarray(eps, dtype=float), (instance.d,))
    if np.any(eps <= 0):
        raise ValueError("perturbations must be strictly positive")
    r = instance.A @ x - instance.y
    norms = instance.partition.norms(x, instance.q)
    return 0.5 * float(r @ r) + instance.lam * float(np.sum((norms + eps) ** instance.p))


def group_correlations(instance: ProblemInstance) -> np.ndarray:
    """c_i = ||(A^T y)_{G_i}||_{q'} for every group (cached on the instance)."""
    return instance.correlations


def lambda_max(instance: ProblemInstance) -> float:
    """Smallest common group weight for which x = 0 solves the unit-weight subproblem."""
    c = instance.correlations
    return float(c.max()) if c.size else 0.0


def zero_groups(partition: GroupPartition, x) -> np.ndarray:
    """Indices of groups on which ``x`` is identically zero."""
    return np.flatnonzero(partition.norms(np.asarray(x, dtype=float), 1) == 0.0)
