"""Activation probabilities conditional on the final cascade size, on trees.

A top-down pass after :func:`~cascade_dist.sdp.sdp_forward`: every parent
sends each child the message its own side of the tree would send if the child
were the root. Combining it with the child's forward combination gives the
distribution seen from that child, and from it P(s_n = 1 | C = t/N).
"""

from __future__ import annotations

import numpy as np

from .distributions import EPS_DEFINED, CascadeDistribution, ConditionalActivationMatrix
from .errors import NumericalConsistencyError
from .graph import RootedTree
from .icm import ICMParams
from .sdp import (
    NodeCombination,
    SDPCache,
    SubtreeMessage,
    clip_residue,
    combine_from_products,
    convolve_all,
    internal_message,
    sdp_forward,
    shift,
)

_ONE = np.ones(1)
#: Identity back message, used at roots.
IDENTITY = SubtreeMessage(_ONE, _ONE, _ONE)

COLUMN_SUM_TOL = 1e-6
ROOT_IDENTITY_TOL = 1e-9


def _pad(x: np.ndarray, size: int) -> np.ndarray:
    out = np.zeros(size)
    out[: min(size, x.size)] = x[:size]
    return out


def conditional_row(nf: np.ndarray, f: np.ndarray, p_c: np.ndarray, others: np.ndarray = _ONE):
    """P(s_n = 1 | C = t/N) from the node-rooted quantities ``nf`` and ``f``.

    ``others`` is the count distribution of all other components (forests).
    Returns ``(values, defined)``.
    """
    size = p_c.size
    a = _pad(np.convolve(_pad(nf, nf.size + 1), others), size)
    b = _pad(np.convolve(shift(f), others), size)
    if np.max(np.abs(a + b - p_c)) > ROOT_IDENTITY_TOL:
        raise NumericalConsistencyError("node-rooted distribution disagrees with p_C")
    defined = (p_c > EPS_DEFINED) & ((a > 0) | (b > 0))
    values = np.full(size, np.nan)
    with np.errstate(divide="ignore", invalid="ignore"):
        values[defined] = 1.0 / (1.0 + a[defined] / b[defined])
    return values, defined


def root_conditional(dist: CascadeDistribution, root_comb: NodeCombination, others: np.ndarray = _ONE):
    """Conditional activation row of a root: ``pf(t-1) / p_C(t/N)``."""
    return conditional_row(root_comb.pnf, root_comb.pf, dist.mass, others)


def back_message(removed: NodeCombination, w_np: float, w_pn: float) -> SubtreeMessage:
    """Message from parent ``p`` to child ``n`` built from p's combination without n.

    ``w_np`` is the weight of the edge child -> parent and ``w_pn`` that of
    parent -> child; the roles are swapped relative to a forward message
    because ``p`` now plays the child.
    """
    return internal_message(removed, w_np=w_pn, w_pn=w_np)


def _prefix_suffix(seqs: list[np.ndarray]) -> list[np.ndarray]:
    """``out[i]`` is the convolution of every sequence except ``seqs[i]``."""
    k = len(seqs)
    prefix = [_ONE]
    for s in seqs[:-1]:
        prefix.append(np.convolve(prefix[-1], s))
    out = [None] * k
    suffix = _ONE
    for i in range(k - 1, -1, -1):
        out[i] = np.convolve(prefix[i], suffix)
        suffix = np.convolve(suffix, seqs[i])
    return out


def child_removal(p_p: float, child_msgs: list[SubtreeMessage], back: SubtreeMessage = IDENTITY) -> list[NodeCombination]:
    """Combination at a parent with each child's factor removed in turn.

    ``back`` is the message the parent received from its own parent
    (identity at a root). Uses prefix/suffix products, never division, so a
    parent with ``k`` children costs O(k) convolutions.
    """
    if not child_msgs:
        return []
    out = []
    per_kind = []
    for kind in ("pB", "pA0", "pAS"):
        seqs = [getattr(back, kind)] + [getattr(m, kind) for m in child_msgs]
        per_kind.append(_prefix_suffix(seqs)[1:])
    for b, a0, a_s in zip(*per_kind):
        out.append(combine_from_products(p_p, b, a0, a_s))
    return out


def node_rooted(comb: NodeCombination, back: SubtreeMessage) -> NodeCombination:
    """Combination at ``n`` including the message from its parent side."""
    nf = np.convolve(comb.pnf, back.pB)
    lf = np.convolve(comb.plf, back.pA0)
    f = clip_residue(np.convolve(comb.pf + comb.plf, back.pAS) - lf, "p_f")
    return NodeCombination(nf, lf, f)


def _other_components(masses: list[np.ndarray]) -> list[np.ndarray]:
    if len(masses) == 1:
        return [_ONE]
    return _prefix_suffix(masses)


def run_consdp(
    tree: RootedTree,
    params: ICMParams,
    cache: SDPCache | None = None,
    column_tol: float | None = COLUMN_SUM_TOL,
) -> ConditionalActivationMatrix:
    """Matrix of P(s_n = 1 | C = t/N) for every node of a forest ICM.

    ``column_tol`` bounds |sum_n P(s_n=1|C=t/N) - t| on defined columns;
    ``None`` skips the check.
    """
    if cache is None:
        cache = sdp_forward(tree, params)
    n = tree.n
    p_c = cache.distribution.mass
    others = _other_components(cache.component_mass)
    values = np.full((n, n + 1), np.nan)
    defined = np.zeros((n, n + 1), dtype=bool)
    back: list = [None] * n
    for r in tree.roots:
        back[r] = IDENTITY
    for v in tree.order[::-1]:
        v = int(v)
        bm = back[v]
        comb = cache.combinations[v]
        full = comb if bm is IDENTITY else node_rooted(comb, bm)
        values[v], defined[v] = conditional_row(full.pnf, full.pf, p_c, others[tree.component[v]])
        kids = tree.children[v]
        if not kids:
            continue
        removed = child_removal(params.p[v], [cache.messages[c] for c in kids], bm)
        for c, rem in zip(kids, removed):
            back[c] = back_message(rem, w_np=params.weight(c, v), w_pn=params.weight(v, c))
        back[v] = None
    out = ConditionalActivationMatrix(values, defined)
    if column_tol is not None:
        err = out.column_sum_error()
        if err > column_tol:
            raise NumericalConsistencyError(f"conditional column sums deviate from t by {err:.3e}")
    return out
