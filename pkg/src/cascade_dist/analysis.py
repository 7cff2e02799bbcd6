"""Functionals of cascade size distributions and clustering of conditional activation rows."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from sklearn.cluster import KMeans
from sklearn.exceptions import ConvergenceWarning

from .distributions import CascadeDistribution, ConditionalActivationMatrix
from .errors import ValidationError

#: Slack when comparing tail probabilities with a level, absorbing summation round-off.
TAIL_TOL = 1e-12

OBJECTIVE_KINDS = ("mean", "weighted", "es")


def exp_weight(a: float = 4.0) -> Callable[[np.ndarray], np.ndarray]:
    """``f(rho) = exp(a rho) / exp(a)``; ``a = 4`` puts extra weight on large cascades."""

    def f(rho):
        return np.exp(a * (np.asarray(rho) - 1.0))

    f.__name__ = f"exp{a:g}"
    return f


@dataclass(frozen=True)
class Objective:
    """Influence function sigma(S) evaluated on the cascade size distribution of S.

    ``kind`` is ``"mean"``, ``"weighted"`` (needs ``exp_a`` or a tabulated
    ``table`` of f over the support) or ``"es"`` (expected shortfall at
    level ``alpha``).
    """

    kind: str = "mean"
    alpha: float = 0.05
    exp_a: float | None = None
    table: tuple[float, ...] | None = field(default=None, repr=False)
    tail_splitting: bool = False

    def __post_init__(self):
        if self.kind not in OBJECTIVE_KINDS:
            raise ValidationError(f"unknown objective {self.kind!r}; expected one of {OBJECTIVE_KINDS}")
        if self.kind == "es" and not 0.0 < self.alpha <= 1.0:
            raise ValidationError("alpha must lie in (0, 1]")
        if self.kind == "weighted" and self.exp_a is None and self.table is None:
            raise ValidationError("weighted objective needs exp_a or a table")

    def f_values(self, n: int) -> np.ndarray:
        if self.table is not None:
            vals = np.asarray(self.table, dtype=float)
            if vals.size != n + 1:
                raise ValidationError(f"weight table has {vals.size} entries, support has {n + 1}")
            return vals
        rho = np.arange(n + 1) / n if n else np.zeros(1)
        return exp_weight(self.exp_a)(rho)

    def __call__(self, dist: CascadeDistribution) -> float:
        if self.kind == "mean":
            return mean_size(dist)
        if self.kind == "weighted":
            return weighted_mean(dist, self.f_values(dist.n))
        return expected_shortfall(dist, self.alpha, self.tail_splitting)

    def describe(self) -> dict:
        out = {"kind": self.kind}
        if self.kind == "es":
            out.update(alpha=self.alpha, tail_splitting=self.tail_splitting)
        if self.kind == "weighted":
            out["exp_a"] = self.exp_a
            if self.table is not None:
                out["table"] = list(self.table)
        return out

    @property
    def label(self) -> str:
        if self.kind == "es":
            return f"es(alpha={self.alpha:g})"
        if self.kind == "weighted":
            return f"weighted(exp_a={self.exp_a:g})" if self.exp_a is not None else "weighted(table)"
        return "mean"


def mean_size(dist: CascadeDistribution) -> float:
    return float(np.dot(dist.mass, dist.rho))


def weighted_mean(dist: CascadeDistribution, f) -> float:
    """E[f(rho)] for ``f`` given as a callable on the support or as its tabulated values."""
    vals = np.asarray(f(dist.rho) if callable(f) else f, dtype=float)
    if vals.shape != dist.mass.shape:
        raise ValidationError("f must have one value per support point")
    if np.any(vals < 0):
        raise ValidationError("weight function must be non-negative")
    return float(np.dot(dist.mass, vals))


def tail_probabilities(dist: CascadeDistribution) -> np.ndarray:
    """``out[t] = P(rho >= t/N)``."""
    return np.cumsum(dist.mass[::-1])[::-1]


def value_at_risk(dist: CascadeDistribution, alpha: float) -> float:
    """Largest support point ``x`` with P(rho >= x) >= alpha."""
    if not 0.0 < alpha <= 1.0:
        raise ValidationError("alpha must lie in (0, 1]")
    ok = np.nonzero(tail_probabilities(dist) >= alpha - TAIL_TOL)[0]
    t = int(ok[-1]) if ok.size else 0
    return float(dist.rho[t])


def expected_shortfall(dist: CascadeDistribution, alpha: float, tail_splitting: bool = False) -> float:
    """E[rho | rho >= VaR_alpha], the whole atom at VaR included.

    With ``tail_splitting`` the VaR atom only contributes the part needed to
    make the tail mass exactly ``alpha`` (the usual CVaR convention).
    """
    if not 0.0 < alpha <= 1.0:
        raise ValidationError("alpha must lie in (0, 1]")
    tails = tail_probabilities(dist)
    ok = np.nonzero(tails >= alpha - TAIL_TOL)[0]
    t = int(ok[-1]) if ok.size else 0
    rho, mass = dist.rho, dist.mass
    if not tail_splitting:
        return float(np.dot(mass[t:], rho[t:]) / mass[t:].sum())
    above = float(mass[t + 1 :].sum())
    return float((np.dot(mass[t + 1 :], rho[t + 1 :]) + (alpha - above) * rho[t]) / alpha)


def distribution_mse(a: CascadeDistribution, b: CascadeDistribution) -> float:
    if a.mass.size != b.mass.size:
        raise ValidationError(f"support sizes differ: {a.mass.size} vs {b.mass.size}")
    return float(np.mean((a.mass - b.mass) ** 2))


@dataclass(frozen=True, eq=False)
class ClusterAssignment:
    labels: np.ndarray
    centroids: np.ndarray
    representatives: tuple[tuple[int, ...], ...]  # per cluster, nearest to centroid first

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    def representative_rank(self) -> np.ndarray:
        rank = np.empty(self.labels.size, dtype=np.int64)
        for members in self.representatives:
            for r, node in enumerate(members):
                rank[node] = r
        return rank

    def to_csv(self, labels=None) -> str:
        rank = self.representative_rank()
        rows = ["node,cluster,is_representative_rank"]
        for i, c in enumerate(self.labels):
            name = labels[i] if labels is not None else str(i)
            rows.append(f"{name},{int(c)},{int(rank[i])}")
        return "\n".join(rows) + "\n"


def cluster_nodes(
    matrix: ConditionalActivationMatrix, k: int, seed: int = 0, fill: float = 0.0, max_iter: int = 300, tol: float = 1e-9
) -> ClusterAssignment:
    """k-means (k-means++ seeding) on the conditional activation rows.

    Undefined entries are replaced by ``fill``. Cluster ids are renumbered by
    their smallest member so the output does not depend on k-means' internal
    label order.
    """
    x = matrix.filled(fill)
    n = x.shape[0]
    if not 1 <= k <= n:
        raise ValidationError(f"cluster count must lie in 1..{n}, got {k}")
    with warnings.catch_warnings():
        # fewer distinct rows than k is legitimate (symmetric nodes)
        warnings.simplefilter("ignore", ConvergenceWarning)
        km = KMeans(n_clusters=k, init="k-means++", n_init=1, max_iter=max_iter, tol=tol, random_state=seed)
        raw = km.fit_predict(x)
    centers = km.cluster_centers_
    order = []
    for lab in raw:
        if lab not in order:
            order.append(lab)
    order += [c for c in range(k) if c not in order]
    relabel = {old: new for new, old in enumerate(order)}
    labels = np.array([relabel[c] for c in raw], dtype=np.int64)
    centroids = centers[order]
    reps = []
    for c in range(k):
        members = np.nonzero(labels == c)[0]
        d = np.linalg.norm(x[members] - centroids[c], axis=1)
        # stable sort keeps lower ids first among equal distances
        reps.append(tuple(int(m) for m in members[np.argsort(d, kind="stable")]))
    return ClusterAssignment(labels, centroids, tuple(reps))

