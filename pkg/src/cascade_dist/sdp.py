"""Subtree Distribution Propagation: exact cascade size distribution on trees.

Each node ``n`` with parent ``p`` sends three sub-probability sequences,
indexed by the number ``t`` of active nodes in its subtree:

``pB``
    ``n`` does not activate ``p`` and ``p`` stays inactive;
``pAS``
    ``p`` is active no later than ``n`` (all cases);
``pA0``
    as ``pAS`` but without the cases where the subtree of ``n`` activates ``p``.

A node combines its children's messages into ``pnf`` (``n`` stays inactive),
``plf`` (``n`` is active only because its parent is assumed active) and
``pf`` (``n`` activates by itself or through a child).
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .distributions import CascadeDistribution
from .errors import NumericalConsistencyError, ValidationError
from .graph import RootedTree
from .icm import ICMParams

#: Negative round-off above this value is clipped to zero.
RESIDUE_TOL = 1e-12
# messages are nonnegative; subnormal entries are flushed to zero because
# arithmetic on them is orders of magnitude slower on common CPUs
_TINY = float(np.finfo(np.float64).tiny)

_ONE = np.ones(1)
_ONE.setflags(write=False)


@dataclass(frozen=True, eq=False)
class SubtreeMessage:
    pB: np.ndarray
    pA0: np.ndarray
    pAS: np.ndarray


@dataclass(frozen=True, eq=False)
class NodeCombination:
    pnf: np.ndarray
    plf: np.ndarray
    pf: np.ndarray


def clip_residue(x: np.ndarray, what: str = "probability") -> np.ndarray:
    """Zero out round-off negatives; larger negatives mean the inputs were inconsistent."""
    lo = x.min(initial=0.0)
    if lo < -RESIDUE_TOL:
        raise NumericalConsistencyError(f"{what} has negative entry {lo:.3e}")
    if lo < 0.0:
        x = np.maximum(x, 0.0)
    return x


def shift(x: np.ndarray) -> np.ndarray:
    """Sequence ``y`` with ``y[t] = x[t-1]`` (and ``y[0] = 0``), one entry longer."""
    out = np.empty(x.size + 1)
    out[0] = 0.0
    out[1:] = x
    return out


def convolve_all(seqs) -> np.ndarray:
    """Convolution of a list of sequences; the empty product is the unit impulse."""
    out = _ONE
    for s in seqs:
        out = np.convolve(out, s)
    return out


def leaf_message(p_n: float, w_np: float, w_pn: float) -> SubtreeMessage:
    """Message of a node without children to its parent."""
    q = 1.0 - p_n
    return SubtreeMessage(
        pB=np.array([q, p_n * (1.0 - w_np)]),
        pA0=np.array([q * (1.0 - w_pn), q * w_pn + p_n * (1.0 - w_np)]),
        pAS=np.array([q * (1.0 - w_pn), q * w_pn + p_n]),
    )


def combine_from_products(p_n: float, prod_B, prod_A0, prod_AS) -> NodeCombination:
    q = 1.0 - p_n
    plf = q * prod_A0
    pf = clip_residue(prod_AS - plf, "p_f")
    return NodeCombination(pnf=q * prod_B, plf=plf, pf=pf)


def combine_children(p_n: float, msgs) -> NodeCombination:
    """Fold the children's messages of node ``n`` (entries ``t = 0..|T_n|-1``)."""
    msgs = list(msgs)
    if not msgs:
        q = 1.0 - p_n
        return NodeCombination(np.array([q]), np.array([q]), np.array([p_n]))
    return combine_from_products(
        p_n,
        convolve_all(m.pB for m in msgs),
        convolve_all(m.pA0 for m in msgs),
        convolve_all(m.pAS for m in msgs),
    )


def internal_message(comb: NodeCombination, w_np: float, w_pn: float) -> SubtreeMessage:
    """Message from ``n`` to its parent, given the combination at ``n``."""
    nf = np.append(comb.pnf, 0.0)
    lf = shift(comb.plf)
    f = shift(comb.pf)
    pB = nf + (1.0 - w_np) * f
    pA0 = (1.0 - w_pn) * nf + w_pn * lf + (1.0 - w_np) * f
    return SubtreeMessage(pB=pB, pA0=pA0, pAS=pA0 + w_np * f)


def root_distribution(comb: NodeCombination) -> np.ndarray:
    """``p_C(t) = pnf(t) + pf(t-1)`` at the root of a component."""
    return np.append(comb.pnf, 0.0) + shift(comb.pf)


def check_tree_params(tree: RootedTree, params: ICMParams) -> None:
    if tree.n != params.n:
        raise ValidationError("tree and parameters disagree on the node count")
    child = np.nonzero(tree.parent >= 0)[0]
    par = tree.parent[child]
    tree_keys = np.minimum(child, par) * tree.n + np.maximum(child, par)
    extra = np.setdiff1d(params.positive_skeleton(), tree_keys)
    if extra.size:
        i, j = divmod(int(extra[0]), tree.n)
        raise ValidationError(
            f"edge ({i}, {j}) has positive weight but is not a tree edge; "
            "use the 'tda' engine for networks with cycles"
        )


@dataclass(frozen=True, eq=False)
class SDPCache:
    """Everything the backward (conditional) pass needs from a forward pass."""

    tree: RootedTree
    params: ICMParams
    messages: list  # SubtreeMessage per non-root node, None at roots
    combinations: list  # NodeCombination per node
    component_mass: list  # distribution over component-local counts, per component
    distribution: CascadeDistribution


def sdp_forward(tree: RootedTree, params: ICMParams, check: bool = True) -> SDPCache:
    """Post-order pass over every component; keeps all messages."""
    if check:
        check_tree_params(tree, params)
    p, parent, children = params.p, tree.parent, tree.children
    weight = params.weight
    messages: list = [None] * tree.n
    combs: list = [None] * tree.n
    for v in tree.order:
        v = int(v)
        kids = children[v]
        par = int(parent[v])
        if not kids and par >= 0:
            w_np, w_pn = weight(v, par), weight(par, v)
            messages[v] = leaf_message(p[v], w_np, w_pn)
            combs[v] = combine_children(p[v], ())
            continue
        comb = combine_children(p[v], [messages[c] for c in kids])
        combs[v] = comb
        if par >= 0:
            messages[v] = internal_message(comb, weight(v, par), weight(par, v))
    comp_mass = [clip_residue(root_distribution(combs[r]), "p_C") for r in tree.roots]
    dist = CascadeDistribution(convolve_all(comp_mass))
    return SDPCache(tree, params, messages, combs, comp_mass, dist)


@numba.njit(cache=True, nogil=True)
def _forward_kernel(order, parent, nchild, p, w_up, w_down, residue_tol):
    """Distribution-only forward pass.

    ``order`` must be the reverse of a depth-first preorder, so the children
    of a node are exactly the top entries of the message stack when it is
    reached. Pending messages belong to disjoint subtrees, so the stack never
    holds more than 2N entries. Returns the distribution and the most negative
    clipped residue (below ``-residue_tol`` means failure).
    """
    n = order.size
    cap = 2 * n + 2
    sB = np.empty(cap)
    sA0 = np.empty(cap)
    sAS = np.empty(cap)
    start = np.empty(n + 1, dtype=np.int64)
    depth = 0
    top = 0
    # rows of `pool` hold the three running products plus one spare; a
    # convolution writes into the spare row and the two swap roles
    pool = np.empty((4, n + 1))
    row = np.arange(3)
    spare = 3
    tmp = np.empty(n + 1)
    cidx = np.empty(n, dtype=np.int64)
    clen = np.empty(n, dtype=np.int64)
    total = np.zeros(n + 1)
    total[0] = 1.0
    total_len = 1
    worst = 0.0
    for v in order:
        k = nchild[v]
        for which in range(3):
            pool[row[which], 0] = 1.0
        m = 1
        # children by ascending message length (insertion sort): the running
        # product stays short until the largest child, which then fills a
        # long, contiguous inner loop
        for i in range(k):
            c = depth - k + i
            ln = (start[c + 1] if c + 1 < depth else top) - start[c]
            j = i
            while j > 0 and clen[j - 1] > ln:
                cidx[j] = cidx[j - 1]
                clen[j] = clen[j - 1]
                j -= 1
            cidx[j] = c
            clen[j] = ln
        for i in range(k):
            off = start[cidx[i]]
            ln = clen[i]
            for which in range(3):
                if which == 0:
                    buf = sB
                elif which == 1:
                    buf = sA0
                else:
                    buf = sAS
                acc = pool[row[which]]
                out = pool[spare]
                for t in range(m + ln - 1):
                    out[t] = 0.0
                for a in range(m):
                    x = acc[a]
                    if x >= _TINY:
                        for b in range(ln):
                            out[a + b] += x * buf[off + b]
                row[which], spare = spare, row[which]
            m += ln - 1
        prodB = pool[row[0]]
        prodA0 = pool[row[1]]
        prodAS = pool[row[2]]
        depth -= k
        if k > 0:
            top = start[depth]
        q = 1.0 - p[v]
        par = parent[v]
        if k == 0:
            f0 = p[v]
        # message or component distribution has m + 1 entries
        if par < 0:
            for t in range(m + 1):
                tmp[t] = 0.0
            for t in range(m):
                nf = q * prodB[t]
                if k == 0:
                    f = f0
                else:
                    f = prodAS[t] - q * prodA0[t]
                    if f < 0.0:
                        worst = min(worst, f)
                        f = 0.0
                tmp[t] += nf
                tmp[t + 1] += f
            # fold the component into the running total
            out = np.zeros(total_len + m)
            for a in range(total_len):
                x = total[a]
                for b in range(m + 1):
                    out[a + b] += x * tmp[b]
            total_len += m
            total[:total_len] = out
            continue
        wnp = w_up[v]
        wpn = w_down[v]
        start[depth] = top
        depth += 1
        for t in range(m + 1):
            nf = q * prodB[t] if t < m else 0.0
            if t >= 1:
                lf = q * prodA0[t - 1]
                if k == 0:
                    f = f0
                else:
                    f = prodAS[t - 1] - lf
                    if f < 0.0:
                        worst = min(worst, f)
                        f = 0.0
            else:
                lf = 0.0
                f = 0.0
            a0 = (1.0 - wpn) * nf + wpn * lf + (1.0 - wnp) * f
            b0 = nf + (1.0 - wnp) * f
            s0 = a0 + wnp * f
            sB[top + t] = b0 if b0 >= _TINY else 0.0
            sA0[top + t] = a0 if a0 >= _TINY else 0.0
            sAS[top + t] = s0 if s0 >= _TINY else 0.0
        top += m + 1
    return total, worst


def run_sdp(tree: RootedTree, params: ICMParams) -> CascadeDistribution:
    """Exact final cascade size distribution of an ICM on a rooted forest.

    Independent components are combined by convolving their count
    distributions. Same arithmetic as :func:`sdp_forward`, without keeping
    the messages.
    """
    check_tree_params(tree, params)
    n = tree.n
    parent = tree.parent
    nchild = np.fromiter((len(c) for c in tree.children), dtype=np.int64, count=n)
    nodes = np.arange(n)
    w_up = np.where(parent >= 0, params.weights_between(nodes, parent), 0.0)
    w_down = np.where(parent >= 0, params.weights_between(parent, nodes), 0.0)
    mass, worst = _forward_kernel(tree.order, parent, nchild, params.p, w_up, w_down, RESIDUE_TOL)
    if worst < -RESIDUE_TOL:
        raise NumericalConsistencyError(f"p_f has negative entry {worst:.3e}")
    return CascadeDistribution(mass)


def run_sdp_transform_domain(tree: RootedTree, params: ICMParams) -> CascadeDistribution:
    """Same output as :func:`run_sdp`, with every message kept as a length-(N+1) DFT.

    Convolutions become elementwise products and the shift ``t -> t-1`` a
    multiplication by ``exp(-2 pi i k / (N+1))``; a single inverse transform
    at the end recovers the distribution. No count exceeds N, so the cyclic
    convolution never wraps.
    """
    check_tree_params(tree, params)
    n = params.n
    L = n + 1
    z = np.exp(-2j * np.pi * np.arange(L) / L)
    p, parent, children = params.p, tree.parent, tree.children
    weight = params.weight
    hat_B: list = [None] * n
    hat_A0: list = [None] * n
    hat_AS: list = [None] * n
    total = np.ones(L, dtype=complex)
    for v in tree.order:
        v = int(v)
        prod_B = np.ones(L, dtype=complex)
        prod_A0 = np.ones(L, dtype=complex)
        prod_AS = np.ones(L, dtype=complex)
        for c in children[v]:
            prod_B *= hat_B[c]
            prod_A0 *= hat_A0[c]
            prod_AS *= hat_AS[c]
            hat_B[c] = hat_A0[c] = hat_AS[c] = None
        q = 1.0 - p[v]
        nf = q * prod_B
        lf = q * prod_A0
        f = prod_AS - lf
        par = int(parent[v])
        if par < 0:
            total *= nf + z * f
            continue
        w_np, w_pn = weight(v, par), weight(par, v)
        hat_B[v] = nf + (1.0 - w_np) * z * f
        hat_A0[v] = (1.0 - w_pn) * nf + w_pn * z * lf + (1.0 - w_np) * z * f
        hat_AS[v] = hat_A0[v] + w_np * z * f
    mass = np.fft.ifft(total).real
    return CascadeDistribution(clip_residue(mass, "p_C"))
