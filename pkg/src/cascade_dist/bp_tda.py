"""Belief propagation and the tree distribution approximation for general networks."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .consdp import run_consdp
from .distributions import CascadeDistribution, ConditionalActivationMatrix
from .errors import ValidationError
from .graph import Network, RootedTree, maximum_spanning_forest, root_tree
from .icm import ICMParams
from .sdp import run_sdp, sdp_forward

log = logging.getLogger(__name__)

DEFAULT_SWEEPS = 10
DENOM_FLOOR = 1e-12
DELETED_RULES = ("weighted", "unweighted")


@dataclass(frozen=True, eq=False)
class BPState:
    """Result of ``R`` synchronous BP sweeps.

    ``p_edge[s]`` estimates P(node ``src[s]`` active without ``dst[s]``'s
    contribution) for every ordered pair of skeleton neighbors, and ``Q[i]``
    the probability that ``i`` stays inactive.
    """

    src: np.ndarray
    dst: np.ndarray
    p_edge: np.ndarray
    Q: np.ndarray
    sweeps: int
    floor_hits: int  # denominators floored at DENOM_FLOOR
    residual: float  # max |change of p_edge| in the last sweep

    @property
    def marginals(self) -> np.ndarray:
        return 1.0 - self.Q

    def p_of(self, i: int, j: int) -> float:
        hit = np.nonzero((self.src == i) & (self.dst == j))[0]
        if hit.size == 0:
            raise KeyError((i, j))
        return float(self.p_edge[hit[0]])

    def to_csv(self) -> str:
        rows = ["i,j,p_ij"] + [f"{a},{b},{float(x)!r}" for a, b, x in zip(self.src, self.dst, self.p_edge)]
        return "\n".join(rows) + "\n"


def run_bp(params: ICMParams, sweeps: int = DEFAULT_SWEEPS) -> BPState:
    """Estimate the cavity activation probabilities by synchronous sweeps.

    Each sweep first recomputes ``Q_i = (1 - p_i) prod_{n in nb(i)} (1 - w_ni p_ni)``
    for all nodes and then ``p_ij = 1 - Q_i / (1 - w_ji p_ji)`` for all pairs.
    """
    if sweeps < 1:
        raise ValidationError("BP needs at least one sweep")
    net = params.net
    skel = net.skeleton
    src = np.concatenate([skel[:, 0], skel[:, 1]])
    dst = np.concatenate([skel[:, 1], skel[:, 0]])
    order = np.lexsort((src, dst))  # group slots by their target node
    src, dst = src[order], dst[order]
    m = src.size
    # reverse[s] is the slot of the opposite direction
    key = src * net.n + dst
    rkey = dst * net.n + src
    by_key = np.argsort(key)
    reverse = by_key[np.searchsorted(key, rkey, sorter=by_key)]
    w_in = params.weights_between(src, dst)  # w_{src, dst}
    has_nb = np.zeros(net.n, dtype=bool)
    has_nb[dst] = True
    starts = np.searchsorted(dst, np.arange(net.n))

    p_edge = params.p[src].copy()
    Q = 1.0 - params.p
    hits = 0
    residual = 0.0
    for _ in range(sweeps):
        factor = 1.0 - w_in * p_edge  # factor of slot (n -> i) in Q_i
        Q = 1.0 - params.p
        if m:
            prod = np.multiply.reduceat(factor, starts[has_nb])
            Q[has_nb] = Q[has_nb] * prod
        denom = factor[reverse]  # 1 - w_ji p_ji for slot (i, j)
        low = denom < DENOM_FLOOR
        hits += int(low.sum())
        new = 1.0 - Q[src] / np.maximum(denom, DENOM_FLOOR)
        new = np.clip(new, 0.0, 1.0)
        residual = float(np.max(np.abs(new - p_edge), initial=0.0))
        p_edge = new
    if hits:
        log.warning("BP floored %d denominators at %g", hits, DENOM_FLOOR)
    return BPState(src, dst, p_edge, Q, sweeps, hits, residual)


@dataclass(frozen=True, eq=False)
class TDAModel:
    """ICM on a spanning forest with initial probabilities raised for deleted neighbors."""

    tree_params: ICMParams
    forest: list[tuple[int, int]]
    deleted_neighbors: tuple[np.ndarray, ...]
    source: ICMParams


def build_tda_model(params: ICMParams, bp: BPState, forest, deleted_rule: str = "weighted") -> TDAModel:
    """Move the influence of non-forest neighbors into the initial probabilities.

    A deleted neighbor ``j`` of ``i`` is treated as active before ``i``
    independently with probability ``p_ji``. Under ``"weighted"`` it then
    activates ``i`` with probability ``w_ji p_ji``; ``"unweighted"`` uses
    ``p_ji`` alone.
    """
    if deleted_rule not in DELETED_RULES:
        raise ValidationError(f"unknown deleted-neighbor rule {deleted_rule!r}")
    net = params.net
    forest = sorted((min(int(i), int(j)), max(int(i), int(j))) for i, j in forest)
    fkeys = {i * net.n + j for i, j in forest}
    in_forest = np.array(
        [min(a, b) * net.n + max(a, b) in fkeys for a, b in zip(net.src.tolist(), net.dst.tolist())], dtype=bool
    )
    tree_net = Network(net.n, net.src[in_forest], net.dst[in_forest], net.weight[in_forest], net.labels)

    deleted = []
    p_m = params.p.copy()
    bp_key = bp.src * net.n + bp.dst
    bp_order = np.argsort(bp_key)
    for i in range(net.n):
        dn = np.array([j for j in net.neighbors[i] if min(i, j) * net.n + max(i, j) not in fkeys], dtype=np.int64)
        deleted.append(dn)
        if dn.size == 0:
            continue
        pos = bp_order[np.searchsorted(bp_key, dn * net.n + i, sorter=bp_order)]
        p_ji = bp.p_edge[pos]
        if deleted_rule == "weighted":
            p_ji = params.weights_between(dn, np.full(dn.size, i)) * p_ji
        p_m[i] = 1.0 - (1.0 - params.p[i]) * np.prod(1.0 - p_ji)
    tree_params = ICMParams(tree_net, p_m, params.w[in_forest])
    return TDAModel(tree_params, forest, tuple(deleted), params)


@dataclass(frozen=True, eq=False)
class TDAPipeline:
    model: TDAModel
    tree: RootedTree
    bp: BPState


def tda_pipeline(
    params: ICMParams,
    sweeps: int = DEFAULT_SWEEPS,
    mst_score: str = "noisy-or",
    root="max-degree",
    deleted_rule: str = "weighted",
) -> TDAPipeline:
    """Spanning forest, BP, adjusted forest ICM and its rooting."""
    forest = maximum_spanning_forest(params.net, mst_score)
    bp = run_bp(params, sweeps)
    model = build_tda_model(params, bp, forest, deleted_rule)
    tree = root_tree(params.net, forest, root)
    return TDAPipeline(model, tree, bp)


def run_tda(params: ICMParams, sweeps: int = DEFAULT_SWEEPS, **kw) -> CascadeDistribution:
    """Approximate cascade size distribution of an ICM on any network.

    Exact when the network is a forest.
    """
    pipe = tda_pipeline(params, sweeps, **kw)
    return run_sdp(pipe.tree, pipe.model.tree_params)


def run_contda(params: ICMParams, sweeps: int = DEFAULT_SWEEPS, column_tol=None, **kw) -> ConditionalActivationMatrix:
    """Approximate conditional activation matrix via the TDA forest model."""
    pipe = tda_pipeline(params, sweeps, **kw)
    cache = sdp_forward(pipe.tree, pipe.model.tree_params)
    return run_consdp(pipe.tree, pipe.model.tree_params, cache, column_tol=column_tol)
