"""Independent Cascade Model: parameters, weight models, simulation and exact oracles."""

from __future__ import annotations

import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property

import numba
import numpy as np

from .distributions import EPS_DEFINED, CascadeDistribution, ConditionalActivationMatrix
from .errors import ParseError, SizeError, ValidationError
from .graph import Network

log = logging.getLogger(__name__)

WEIGHT_MODELS = ("ED", "DD", "SD", "uniform", "empirical")


@dataclass(frozen=True, eq=False)
class ICMParams:
    """ICM ``(p, W)`` on a network.

    ``p[i]`` is the initial activation probability of node ``i`` and ``w[e]``
    the transmission probability of the directed edge ``net.src[e] -> net.dst[e]``.
    """

    net: Network
    p: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        p = np.array(self.p, dtype=np.float64).ravel()
        w = np.array(self.w, dtype=np.float64).ravel()
        if p.size != self.net.n:
            raise ValidationError(f"expected {self.net.n} initial probabilities, got {p.size}")
        if w.size != self.net.num_edges:
            raise ValidationError("weights must align with the network edge list")
        if np.any(~np.isfinite(p)) or np.any((p < 0) | (p > 1)):
            raise ValidationError("initial probabilities must lie in [0, 1]")
        if np.any(~np.isfinite(w)) or np.any((w < 0) | (w > 1)):
            raise ValidationError("weights must lie in [0, 1]")
        p.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "w", w)

    @classmethod
    def from_network(cls, net: Network, p=0.0) -> "ICMParams":
        """Use the weights stored on ``net``; ``p`` is a scalar or per-node array."""
        return cls(net, np.broadcast_to(np.asarray(p, dtype=float), (net.n,)), net.weight)

    @property
    def n(self) -> int:
        return self.net.n

    @cached_property
    def _lookup(self) -> dict[tuple[int, int], float]:
        return {k: float(self.w[e]) for k, e in self.net.edge_index.items()}

    def weight(self, i: int, j: int) -> float:
        return self._lookup.get((i, j), 0.0)

    @cached_property
    def _sorted_keys(self) -> tuple[np.ndarray, np.ndarray]:
        keys = self.net.src * self.n + self.net.dst
        order = np.argsort(keys)
        return keys[order], self.w[order]

    def weights_between(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Vectorized ``weight(a[k], b[k])``."""
        keys, w = self._sorted_keys
        want = np.asarray(a, dtype=np.int64) * self.n + np.asarray(b, dtype=np.int64)
        if keys.size == 0:
            return np.zeros(want.shape)
        pos = np.minimum(np.searchsorted(keys, want), keys.size - 1)
        return np.where(keys[pos] == want, w[pos], 0.0)

    def with_p(self, p) -> "ICMParams":
        return ICMParams(self.net, np.broadcast_to(np.asarray(p, dtype=float), (self.n,)), self.w)

    def with_w(self, w) -> "ICMParams":
        return ICMParams(self.net, self.p, w)

    def positive_skeleton(self) -> np.ndarray:
        """Sorted keys ``i * n + j`` (``i < j``) of pairs with positive weight in some direction."""
        pos = self.w > 0
        a, b = self.net.src[pos], self.net.dst[pos]
        return np.unique(np.minimum(a, b) * self.n + np.maximum(a, b))


def assign_weights(net: Network, model: str, c: float | None = None) -> np.ndarray:
    """Transmission probabilities for every listed directed edge of ``net``.

    ED: ``0.05 + 0.5/d_j``; DD: ``0.6`` if ``d_i >= d_j`` else ``0.8``;
    SD: ``0.05 + 0.5 (d_i/d_j)/Z`` with ``Z`` the largest ``d_i/d_j`` over
    listed edges; ``uniform`` sets every weight to ``c``; ``empirical``
    returns the weights stored on ``net``. Degrees are skeleton degrees.
    """
    if model not in WEIGHT_MODELS:
        raise ValidationError(f"unknown weight model {model!r}; expected one of {WEIGHT_MODELS}")
    if model == "empirical":
        return net.weight.copy()
    if model == "uniform":
        if c is None or not 0.0 <= c <= 1.0:
            raise ValidationError("uniform weight model needs c in [0, 1]")
        return np.full(net.num_edges, float(c))
    if net.num_edges == 0:
        return np.empty(0)
    deg = net.degree
    di = deg[net.src].astype(float)
    dj = deg[net.dst].astype(float)
    if model in ("ED", "SD") and (np.any(di == 0) or np.any(dj == 0)):
        bad = int(net.src[di == 0][0] if np.any(di == 0) else net.dst[dj == 0][0])
        raise ValidationError(f"node {bad} has no skeleton neighbors; {model} weights are undefined")
    if model == "ED":
        return 0.05 + 0.5 / dj
    if model == "DD":
        return np.where(di >= dj, 0.6, 0.8)
    ratio = di / dj
    return 0.05 + 0.5 * ratio / ratio.max()


def set_initial_probabilities(params: ICMParams, uniform: float | None = None, seeds=None, background: float = 0.0) -> ICMParams:
    """Return ``params`` with ``p`` replaced by ``uniform`` or by a seed set.

    Seeds get ``p = 1``; every other node gets ``background``.
    """
    if (uniform is None) == (seeds is None):
        raise ValidationError("give exactly one of uniform= or seeds=")
    if uniform is not None:
        if not 0.0 <= uniform <= 1.0:
            raise ValidationError("uniform probability must lie in [0, 1]")
        return params.with_p(float(uniform))
    if not 0.0 <= background <= 1.0:
        raise ValidationError("background probability must lie in [0, 1]")
    p = np.full(params.n, float(background))
    for s in seeds:
        if not (isinstance(s, (int, np.integer)) and 0 <= s < params.n):
            raise ValidationError(f"seed {s!r} is not a node id")
        p[s] = 1.0
    return params.with_p(p)


def load_probabilities(text: str, net: Network) -> np.ndarray:
    """Parse a ``node,p`` CSV. Nodes may be ids or labels; missing nodes get 0."""
    index = {net.label(i): i for i in range(net.n)}
    p = np.zeros(net.n)
    first = True
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = [x.strip().strip("\"'") for x in line.split(",")]
        if len(parts) != 2:
            raise ParseError(f"expected 'node,p', got {raw!r}", lineno)
        if first and parts == ["node", "p"]:
            first = False
            continue
        first = False
        if parts[0] not in index:
            raise ValidationError(f"line {lineno}: unknown node {parts[0]!r}")
        try:
            val = float(parts[1])
        except ValueError:
            raise ParseError(f"probability {parts[1]!r} is not a number", lineno) from None
        if not 0.0 <= val <= 1.0:
            raise ValidationError(f"line {lineno}: probability {val} outside [0, 1]")
        p[index[parts[0]]] = val
    return p


# --------------------------------------------------------------------------
# Monte Carlo simulation

#: Replicas per random stream; fixed so results do not depend on thread count.
CHUNK = 4096


@dataclass(frozen=True, eq=False)
class SimulationResult:
    counts: np.ndarray  # replicas ending with exactly t active nodes
    activation_counts: np.ndarray  # replicas in which node i ends active
    replicas: int

    @property
    def distribution(self) -> CascadeDistribution:
        return CascadeDistribution(self.counts / self.replicas)

    @property
    def activation_frequency(self) -> np.ndarray:
        return self.activation_counts / self.replicas


@numba.njit(cache=True, nogil=True)
def _propagate(indptr, targets, weights, init_u, edge_u, p, counts, act_counts):
    """Synchronous ICM dynamics for one block of replicas.

    Edge coin ``edge_u[r, e]`` is consumed when the source of edge ``e``
    becomes active; since a node fires once, each coin is used at most once.
    """
    reps, n = init_u.shape
    active = np.zeros(n, dtype=np.bool_)
    frontier = np.empty(n, dtype=np.int64)
    nxt = np.empty(n, dtype=np.int64)
    for r in range(reps):
        active[:] = False
        nf = 0
        for i in range(n):
            if init_u[r, i] < p[i]:
                active[i] = True
                frontier[nf] = i
                nf += 1
        total = nf
        while nf > 0:
            nn = 0
            for k in range(nf):
                i = frontier[k]
                for e in range(indptr[i], indptr[i + 1]):
                    j = targets[e]
                    if not active[j] and edge_u[r, e] < weights[e]:
                        active[j] = True  # takes effect at the next step
                        nxt[nn] = j
                        nn += 1
            frontier[:nn] = nxt[:nn]
            nf = nn
            total += nn
        counts[total] += 1
        for i in range(n):
            if active[i]:
                act_counts[i] += 1


def _run_chunk(chunk, params, indptr, targets, weights, seed, size):
    bitgen = np.random.Philox(key=np.uint64(seed), counter=np.array([0, 0, chunk, 0], dtype=np.uint64))
    rng = np.random.Generator(bitgen)
    init_u = rng.random((size, params.n))
    edge_u = rng.random((size, max(targets.size, 1)))
    counts = np.zeros(params.n + 1, dtype=np.int64)
    act = np.zeros(params.n, dtype=np.int64)
    _propagate(indptr, targets, weights, init_u, edge_u, params.p, counts, act)
    return counts, act


def simulate(params: ICMParams, replicas: int, seed: int = 0, threads: int = 1) -> SimulationResult:
    """Sample final cascades by running the time-stepped ICM ``replicas`` times.

    Replica ``r`` draws its coins from block ``r // CHUNK`` of a Philox stream
    keyed by ``seed``, so the output depends only on ``(seed, replicas)``.
    """
    if replicas < 1:
        raise ValidationError("replicas must be >= 1")
    net = params.net
    order = np.lexsort((net.dst, net.src))
    src, targets, weights = net.src[order], net.dst[order], params.w[order]
    indptr = np.zeros(net.n + 1, dtype=np.int64)
    np.add.at(indptr, src + 1, 1)
    indptr = np.cumsum(indptr)
    targets = np.ascontiguousarray(targets)
    weights = np.ascontiguousarray(weights)

    jobs = [(c, min(CHUNK, replicas - c * CHUNK)) for c in range((replicas + CHUNK - 1) // CHUNK)]
    run = lambda job: _run_chunk(job[0], params, indptr, targets, weights, seed, job[1])  # noqa: E731
    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(run, jobs))
    else:
        parts = [run(job) for job in jobs]
    counts = sum(c for c, _ in parts)
    act = sum(a for _, a in parts)
    return SimulationResult(counts, act, replicas)


# --------------------------------------------------------------------------
# Exact oracles (independent of the message passing algorithms)

MAX_EXACT_NODES = 16


@dataclass(frozen=True, eq=False)
class ExactResult:
    distribution: CascadeDistribution
    conditional: ConditionalActivationMatrix
    marginals: np.ndarray  # unconditional P(s_i = 1)


def _result_from_final_sets(n, set_prob) -> ExactResult:
    masks = np.arange(1 << n)
    bits = (masks[:, None] >> np.arange(n)) & 1
    size = bits.sum(axis=1)
    mass = np.bincount(size, weights=set_prob, minlength=n + 1)
    joint = np.zeros((n, n + 1))
    for i in range(n):
        joint[i] = np.bincount(size, weights=set_prob * bits[:, i], minlength=n + 1)
    defined = np.broadcast_to(mass > EPS_DEFINED, (n, n + 1)).copy()
    with np.errstate(invalid="ignore", divide="ignore"):
        values = np.where(defined, joint / mass, np.nan)
    return ExactResult(CascadeDistribution(mass), ConditionalActivationMatrix(values, defined), joint.sum(axis=1))


def final_set_probabilities(params: ICMParams, max_nodes: int = MAX_EXACT_NODES) -> np.ndarray:
    """Exact P(final active set = A) for every node subset ``A`` (bitmask index).

    Uses the live-edge view of the ICM. With R(A) the probability that every
    node of ``A`` is reached from initially active nodes of ``A`` through live
    edges inside ``A``,

        P(final = A) = R(A) * prod_{v not in A} (1 - p_v) * prod_{a in A, b not in A} (1 - w_ab),

    and R follows from the same decomposition applied inside ``A``:
    ``sum_{C subset A} R(C) q(A - C) cut(C, A - C) = 1``. Cost is O(3^N).
    """
    n = params.n
    if n > max_nodes:
        raise SizeError(f"exact enumeration limited to {max_nodes} nodes, got {n}")
    full = (1 << n) - 1
    ld = np.longdouble  # R(A) = 1 - acc(A) cancels; extended precision keeps small masses accurate
    wm = np.zeros((n, n), dtype=ld)
    wm[params.net.src, params.net.dst] = params.w
    stay = 1 - wm  # stay[a, b]: edge a->b fails

    masks = np.arange(1 << n)
    bits = ((masks[:, None] >> np.arange(n)) & 1).astype(bool)
    # q[D] = prod_{v in D} (1 - p_v)
    q = np.prod(np.where(bits, 1 - params.p.astype(ld), ld(1)), axis=1)
    # g[C, v] = prod_{c in C} (1 - w_cv): v is not reached directly from C
    g = np.ones((1 << n, n), dtype=ld)
    for c in range(n):
        g[bits[:, c]] *= stay[c]

    reach = np.zeros(1 << n, dtype=ld)
    acc = np.zeros(1 << n, dtype=ld)
    final = np.zeros(1 << n, dtype=ld)
    for C in sorted(range(1 << n), key=lambda m: bin(m).count("1")):
        reach[C] = 1 if C == 0 else 1 - acc[C]
        if reach[C] <= 0:
            continue
        # enumerate submasks D of the complement with h[D] = prod_{v in D} g[C, v]
        idx = np.zeros(1, dtype=np.int64)
        h = np.ones(1, dtype=ld)
        gc = g[C]
        comp = full & ~C
        for v in range(n):
            if comp >> v & 1:
                idx = np.concatenate([idx, idx | (1 << v)])
                h = np.concatenate([h, h * gc[v]])
        contrib = reach[C] * q[idx] * h
        # the last submask is the whole complement, giving P(final = C)
        final[C] = contrib[-1]
        acc[C | idx[1:]] += contrib[1:]
    return np.clip(final, 0, None).astype(np.float64)


def enumerate_exact(params: ICMParams, max_nodes: int = MAX_EXACT_NODES) -> ExactResult:
    """Exact cascade size distribution and conditional activation probabilities."""
    return _result_from_final_sets(params.n, final_set_probabilities(params, max_nodes))


def enumerate_coins(params: ICMParams, max_coins: int = 22) -> ExactResult:
    """Brute force over every joint outcome of initial and edge coins.

    Only feasible for tiny instances; deterministic coins (probability 0 or 1)
    are not branched on.
    """
    n = params.n
    net = params.net
    node_var = [i for i in range(n) if 0.0 < params.p[i] < 1.0]
    edge_var = [e for e in range(net.num_edges) if 0.0 < params.w[e] < 1.0]
    if len(node_var) + len(edge_var) > max_coins:
        raise SizeError(f"{len(node_var) + len(edge_var)} random coins exceed the limit of {max_coins}")
    set_prob = np.zeros(1 << n)
    base_active = params.p >= 1.0
    base_live = params.w >= 1.0
    for node_bits in itertools.product((0, 1), repeat=len(node_var)):
        active0 = base_active.copy()
        pr_nodes = 1.0
        for i, b in zip(node_var, node_bits):
            active0[i] = bool(b)
            pr_nodes *= params.p[i] if b else 1.0 - params.p[i]
        for edge_bits in itertools.product((0, 1), repeat=len(edge_var)):
            live = base_live.copy()
            pr = pr_nodes
            for e, b in zip(edge_var, edge_bits):
                live[e] = bool(b)
                pr *= params.w[e] if b else 1.0 - params.w[e]
            if pr == 0.0:
                continue
            active = active0.copy()
            stack = list(np.nonzero(active)[0])
            while stack:
                i = stack.pop()
                for e in np.nonzero((net.src == i) & live)[0]:
                    j = net.dst[e]
                    if not active[j]:
                        active[j] = True
                        stack.append(j)
            set_prob[int(np.dot(active, 1 << np.arange(n)))] += pr
    return _result_from_final_sets(n, set_prob)
