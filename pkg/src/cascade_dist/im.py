"""Seed selection for influence maximization under distributional objectives."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .analysis import ClusterAssignment, Objective
from .bp_tda import DEFAULT_SWEEPS, tda_pipeline
from .distributions import CascadeDistribution
from .errors import SizeError, ValidationError
from .graph import root_tree
from .icm import ICMParams, enumerate_exact, set_initial_probabilities
from .sdp import run_sdp

ENGINES = ("sdp", "tda", "exact")
DEFAULT_MAX_EVALUATIONS = 10**6


@dataclass
class SeedEvaluator:
    """Computes the cascade size distribution of a seed set and scores it.

    Seeds get ``p = 1``, every other node ``background``. The spanning
    structure (tree or TDA forest) depends only on the network and is
    computed once.
    """

    params: ICMParams
    engine: str = "sdp"
    background: float = 0.0
    sweeps: int = DEFAULT_SWEEPS
    mst_score: str = "noisy-or"
    evaluations: int = 0
    _tree: object = field(default=None, repr=False)

    def __post_init__(self):
        if self.engine not in ENGINES:
            raise ValidationError(f"unknown engine {self.engine!r}; expected one of {ENGINES}")
        if self.engine == "sdp":
            skel = self.params.positive_skeleton()
            pairs = [divmod(int(k), self.params.n) for k in skel]
            try:
                self._tree = root_tree(self.params.net, pairs)
            except ValidationError:
                raise ValidationError(
                    "the 'sdp' engine needs a forest; this network has cycles, use the 'tda' engine"
                ) from None

    def seeded(self, seeds) -> ICMParams:
        return set_initial_probabilities(self.params, seeds=sorted(int(s) for s in seeds), background=self.background)

    def distribution(self, seeds) -> CascadeDistribution:
        params = self.seeded(seeds)
        self.evaluations += 1
        if self.engine == "sdp":
            return run_sdp(self._tree, params)
        if self.engine == "exact":
            return enumerate_exact(params).distribution
        pipe = tda_pipeline(params, self.sweeps, mst_score=self.mst_score)
        return run_sdp(pipe.tree, pipe.model.tree_params)

    def score(self, seeds, objective: Objective) -> float:
        return objective(self.distribution(seeds))


def evaluate_seed_set(params: ICMParams, seeds, objective: Objective, engine: str = "sdp", background: float = 0.0, **kw) -> float:
    """sigma(S): the objective applied to the cascade size distribution of seed set ``seeds``."""
    return SeedEvaluator(params, engine, background, **kw).score(seeds, objective)


def tail_probability(dist: CascadeDistribution, threshold: float) -> float:
    """P(rho >= threshold)."""
    if not 0.0 <= threshold <= 1.0:
        raise ValidationError("threshold must lie in [0, 1]")
    t0 = math.ceil(threshold * dist.n - 1e-9)
    return float(dist.mass[t0:].sum())


@dataclass
class SeedSelectionTrace:
    objective: dict
    engine: str
    candidate_pool: list[int]
    initial_value: float
    chosen: list[int] = field(default_factory=list)
    values: list[float] = field(default_factory=list)
    per_step_scores: list[dict[int, float]] = field(default_factory=list)
    evaluations: int = 0

    def to_json(self) -> dict:
        return {
            "objective": self.objective,
            "engine": self.engine,
            "candidate_pool": self.candidate_pool,
            "initial_value": self.initial_value,
            "chosen": self.chosen,
            "values": self.values,
            "per_step_scores": [{str(k): v for k, v in s.items()} for s in self.per_step_scores],
            "evaluations": self.evaluations,
        }

    def summary_csv(self) -> str:
        rows = ["step,node,objective_value"]
        rows += [f"{i + 1},{n},{v!r}" for i, (n, v) in enumerate(zip(self.chosen, self.values))]
        return "\n".join(rows) + "\n"


def greedy_select(evaluator: SeedEvaluator, budget: int, candidates, objective: Objective) -> SeedSelectionTrace:
    """Add, ``budget`` times, the candidate that maximizes sigma(S + {v}).

    Ties go to the lowest node id. Every candidate score is recorded.
    """
    pool = sorted({int(c) for c in candidates})
    if not pool:
        raise ValidationError("candidate pool is empty")
    if not 0 <= budget <= len(pool):
        raise ValidationError(f"budget {budget} exceeds the candidate pool of size {len(pool)}")
    start = evaluator.evaluations
    trace = SeedSelectionTrace(objective.describe(), evaluator.engine, pool, evaluator.score([], objective))
    chosen: list[int] = []
    for _ in range(budget):
        scores = {v: evaluator.score(chosen + [v], objective) for v in pool if v not in chosen}
        best = max(scores, key=lambda v: (scores[v], -v))
        chosen.append(best)
        trace.chosen.append(best)
        trace.values.append(scores[best])
        trace.per_step_scores.append(scores)
    trace.evaluations = evaluator.evaluations - start
    return trace


@dataclass
class ExhaustiveResult:
    seeds: tuple[int, ...]
    value: float
    evaluations: int
    pool: list[int]


def greedy_pool(clusters: ClusterAssignment) -> list[int]:
    """One candidate per cluster: the member nearest its centroid."""
    return sorted(members[0] for members in clusters.representatives if members)


def exhaustive_pool(clusters: ClusterAssignment, per_cluster_cap: int = 3) -> list[int]:
    """The ``per_cluster_cap`` best-ranked members of every cluster."""
    if per_cluster_cap < 1:
        raise ValidationError("per-cluster cap must be >= 1")
    return sorted(m for members in clusters.representatives for m in members[:per_cluster_cap])


def exhaustive_select(
    evaluator: SeedEvaluator,
    budget: int,
    clusters: ClusterAssignment,
    objective: Objective,
    per_cluster_cap: int = 3,
    max_budget: int = 10,
    max_evaluations: int = DEFAULT_MAX_EVALUATIONS,
) -> ExhaustiveResult:
    """Best seed set of size ``budget`` built from cluster representatives.

    Candidates are the top ``per_cluster_cap`` members of each cluster, so no
    set holds more than ``per_cluster_cap`` nodes of one cluster. Ties go to
    the lexicographically smallest set.
    """
    if budget > max_budget:
        raise SizeError(f"budget {budget} exceeds the exhaustive limit {max_budget}")
    pool = exhaustive_pool(clusters, per_cluster_cap)
    if budget > len(pool):
        raise ValidationError(f"budget {budget} exceeds the candidate pool of size {len(pool)}")
    count = math.comb(len(pool), budget)
    if count > max_evaluations:
        raise SizeError(f"exhaustive search needs {count} evaluations, limit is {max_evaluations}")
    start = evaluator.evaluations
    best, best_val = None, -np.inf
    for combo in itertools.combinations(pool, budget):
        val = evaluator.score(combo, objective)
        if val > best_val:
            best, best_val = combo, val
    return ExhaustiveResult(tuple(best), float(best_val), evaluator.evaluations - start, pool)


def cross_evaluate(evaluator: SeedEvaluator, chosen, objectives: dict[str, Objective]) -> dict[str, list[float]]:
    """Value of every prefix of ``chosen`` under each objective (one distribution per prefix)."""
    out: dict[str, list[float]] = {name: [] for name in objectives}
    for k in range(1, len(chosen) + 1):
        dist = evaluator.distribution(chosen[:k])
        for name, obj in objectives.items():
            out[name].append(obj(dist))
    return out
