"""Weighted directed networks, spanning forests and rooted trees."""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import networkx as nx
import numpy as np
from scipy.cluster.hierarchy import DisjointSet

from .errors import ParseError, ValidationError

_NODES_DIRECTIVE = re.compile(r"#\s*nodes\s*[:=]\s*(\d+)\s*$", re.IGNORECASE)

MST_SCORES = ("noisy-or", "max", "mean")


@dataclass(frozen=True, eq=False)
class Network:
    """Directed weighted graph on nodes ``0..n-1``.

    Edges are stored as parallel arrays ``src``, ``dst``, ``weight``; the pair
    ``(src[e], dst[e])`` carries the transmission probability ``weight[e]``.
    Ordered pairs that are not listed have weight 0.
    """

    n: int
    src: np.ndarray
    dst: np.ndarray
    weight: np.ndarray
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.n < 1:
            raise ValidationError("a network needs at least one node")
        src = np.asarray(self.src, dtype=np.int64).ravel()
        dst = np.asarray(self.dst, dtype=np.int64).ravel()
        w = np.asarray(self.weight, dtype=np.float64).ravel()
        if not (src.size == dst.size == w.size):
            raise ValidationError("src, dst and weight must have equal length")
        if src.size:
            if src.min() < 0 or dst.min() < 0 or max(src.max(), dst.max()) >= self.n:
                raise ValidationError("edge endpoint outside 0..n-1")
            if np.any(src == dst):
                raise ValidationError("self-loops are not allowed")
            if np.any(~np.isfinite(w)) or np.any((w < 0) | (w > 1)):
                raise ValidationError("edge weights must lie in [0, 1]")
            keys = src * self.n + dst
            if np.unique(keys).size != keys.size:
                raise ValidationError("duplicate ordered pair in edge set")
        if self.labels is not None and len(self.labels) != self.n:
            raise ValidationError("label count does not match node count")
        for name, arr in (("src", src), ("dst", dst), ("weight", w)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int, float]], labels=None) -> "Network":
        edges = list(edges)
        if not edges:
            return cls(n, np.empty(0, np.int64), np.empty(0, np.int64), np.empty(0), labels)
        s, d, w = zip(*edges)
        return cls(n, np.array(s), np.array(d), np.array(w, dtype=float), labels)

    @classmethod
    def undirected(cls, n: int, pairs: Iterable[tuple[int, int]], weight: float = 1.0) -> "Network":
        """Network listing every pair in both directions with the same weight."""
        edges = []
        for i, j in pairs:
            edges.append((i, j, weight))
            edges.append((j, i, weight))
        return cls.from_edges(n, edges)

    def with_weights(self, weight: np.ndarray) -> "Network":
        return Network(self.n, self.src, self.dst, weight, self.labels)

    @property
    def num_edges(self) -> int:
        return int(self.src.size)

    @cached_property
    def edge_index(self) -> dict[tuple[int, int], int]:
        return {(int(i), int(j)): e for e, (i, j) in enumerate(zip(self.src, self.dst))}

    def w(self, i: int, j: int) -> float:
        e = self.edge_index.get((i, j))
        return 0.0 if e is None else float(self.weight[e])

    @cached_property
    def skeleton(self) -> np.ndarray:
        """Undirected pairs ``(i, j)``, ``i < j``, with positive weight in some direction."""
        pos = self.weight > 0
        a = np.minimum(self.src[pos], self.dst[pos])
        b = np.maximum(self.src[pos], self.dst[pos])
        keys = np.unique(a * self.n + b)
        return np.stack([keys // self.n, keys % self.n], axis=1)

    @cached_property
    def neighbors(self) -> tuple[np.ndarray, ...]:
        nb: list[list[int]] = [[] for _ in range(self.n)]
        for i, j in self.skeleton:
            nb[i].append(int(j))
            nb[j].append(int(i))
        return tuple(np.array(sorted(x), dtype=np.int64) for x in nb)

    @cached_property
    def degree(self) -> np.ndarray:
        deg = np.zeros(self.n, dtype=np.int64)
        np.add.at(deg, self.skeleton.ravel(), 1)
        return deg

    def is_forest(self) -> bool:
        ds = DisjointSet(range(self.n))
        for i, j in self.skeleton:
            if not ds.merge(int(i), int(j)):
                return False
        return True

    def label(self, i: int) -> str:
        return self.labels[i] if self.labels is not None else str(i)


def _node_token(tok: str) -> str:
    tok = tok.strip()
    if len(tok) >= 2 and tok[0] == tok[-1] and tok[0] in "\"'":
        return tok[1:-1]
    return tok


def load_edge_list(text: str) -> Network:
    """Parse ``src<TAB>dst<TAB>weight`` lines into a :class:`Network`.

    Blank lines and ``#`` comments are skipped. A ``# nodes: N`` comment
    declares the node count, which is how isolated nodes survive a round trip.
    Integer ids are used as-is; if any id is not a non-negative integer, all
    ids are treated as labels and mapped to dense ids in order of appearance.
    """
    declared = None
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            m = _NODES_DIRECTIVE.match(line)
            if m:
                declared = int(m.group(1))
            continue
        parts = line.split("\t") if "\t" in line else line.split()
        if len(parts) != 3:
            raise ParseError(f"expected 'src<TAB>dst<TAB>weight', got {raw!r}", lineno)
        try:
            w = float(parts[2])
        except ValueError:
            raise ParseError(f"weight {parts[2]!r} is not a number", lineno) from None
        rows.append((_node_token(parts[0]), _node_token(parts[1]), w, lineno))

    numeric = all(a.isdigit() and b.isdigit() for a, b, _, _ in rows)
    labels = None
    if numeric:
        ids = [(int(a), int(b)) for a, b, _, _ in rows]
        n = max((max(a, b) for a, b in ids), default=-1) + 1
    else:
        mapping: dict[str, int] = {}
        for a, b, _, _ in rows:
            mapping.setdefault(a, len(mapping))
            mapping.setdefault(b, len(mapping))
        ids = [(mapping[a], mapping[b]) for a, b, _, _ in rows]
        n = len(mapping)
        labels = tuple(mapping)
    if declared is not None:
        if declared < n:
            raise ValidationError(f"'# nodes: {declared}' but ids reach {n - 1}")
        if labels is not None and declared != n:
            raise ValidationError("'# nodes' directive cannot add unlabeled nodes to a labeled network")
        n = declared
    if n == 0:
        raise ValidationError("edge list defines no nodes")

    seen: dict[tuple[int, int], int] = {}
    for (a, b), (_, _, w, lineno) in zip(ids, rows):
        if not 0.0 <= w <= 1.0:
            raise ValidationError(f"line {lineno}: weight {w} outside [0, 1]")
        if a == b:
            raise ValidationError(f"line {lineno}: self-loop on node {a}")
        if (a, b) in seen:
            raise ValidationError(f"line {lineno}: duplicate edge {a}->{b} (first on line {seen[(a, b)]})")
        seen[(a, b)] = lineno
    return Network.from_edges(n, [(a, b, w) for (a, b), (_, _, w, _) in zip(ids, rows)], labels)


def format_edge_list(net: Network, header: Sequence[str] = ()) -> str:
    lines = [f"# {h}" for h in header]
    lines.append(f"# nodes: {net.n}")
    for i, j, w in zip(net.src, net.dst, net.weight):
        lines.append(f"{net.label(int(i))}\t{net.label(int(j))}\t{float(w)!r}")
    return "\n".join(lines) + "\n"


def format_label_map(net: Network) -> str:
    lines = ["id,label"]
    lines += [f"{i},{net.label(i)}" for i in range(net.n)]
    return "\n".join(lines) + "\n"


def edge_scores(net: Network, score: str = "noisy-or") -> np.ndarray:
    """Symmetric score per skeleton pair, aligned with ``net.skeleton``."""
    if score not in MST_SCORES:
        raise ValidationError(f"unknown MST score {score!r}; expected one of {MST_SCORES}")
    out = np.empty(len(net.skeleton))
    for k, (i, j) in enumerate(net.skeleton):
        a, b = net.w(int(i), int(j)), net.w(int(j), int(i))
        if score == "noisy-or":
            out[k] = 1.0 - (1.0 - a) * (1.0 - b)
        elif score == "max":
            out[k] = max(a, b)
        else:
            out[k] = 0.5 * (a + b)
    return out


def maximum_spanning_forest(net: Network, score: str = "noisy-or") -> list[tuple[int, int]]:
    """Kruskal's algorithm on the skeleton, maximizing the total edge score.

    Ties are broken by smaller endpoint, then larger endpoint, so the result
    is fully determined by the input. Returns sorted ``(i, j)`` pairs, ``i < j``.
    """
    skel = net.skeleton
    scores = edge_scores(net, score)
    order = sorted(range(len(skel)), key=lambda k: (-scores[k], skel[k, 0], skel[k, 1]))
    ds = DisjointSet(range(net.n))
    chosen = []
    for k in order:
        i, j = int(skel[k, 0]), int(skel[k, 1])
        if ds.merge(i, j):
            chosen.append((i, j))
            if len(chosen) == net.n - 1:
                break
    return sorted(chosen)


@dataclass(frozen=True, eq=False)
class RootedTree:
    """Rooted spanning forest: one rooted tree per connected component.

    ``order`` lists nodes so that children precede their parent; reversing it
    gives a top-down order. ``roots[c]`` is the root of component ``c``.
    """

    n: int
    parent: np.ndarray
    children: tuple[tuple[int, ...], ...]
    subtree_size: np.ndarray
    component: np.ndarray
    roots: tuple[int, ...]
    order: np.ndarray

    @property
    def num_components(self) -> int:
        return len(self.roots)

    def component_size(self, c: int) -> int:
        return int(self.subtree_size[self.roots[c]])

    def edges(self) -> list[tuple[int, int]]:
        return sorted((min(i, int(p)), max(i, int(p))) for i, p in enumerate(self.parent) if p >= 0)

    def height(self) -> int:
        depth = np.zeros(self.n, dtype=np.int64)
        for v in self.order[::-1]:
            if self.parent[v] >= 0:
                depth[v] = depth[self.parent[v]] + 1
        return int(depth.max())


def root_tree(net: Network, tree_edges: Iterable[tuple[int, int]], root="max-degree") -> RootedTree:
    """Root every component of the forest ``tree_edges``.

    ``root`` is ``"max-degree"`` (highest degree in ``net``, lowest id on ties)
    or an explicit node id, which roots its own component; the remaining
    components fall back to the max-degree rule.
    """
    n = net.n
    adj: list[list[int]] = [[] for _ in range(n)]
    ds = DisjointSet(range(n))
    for i, j in tree_edges:
        i, j = int(i), int(j)
        if not (0 <= i < n and 0 <= j < n) or i == j:
            raise ValidationError(f"invalid tree edge ({i}, {j})")
        if not ds.merge(i, j):
            raise ValidationError(f"tree edges contain a cycle through ({i}, {j})")
        adj[i].append(j)
        adj[j].append(i)

    explicit = None
    if root != "max-degree":
        explicit = int(root)
        if not 0 <= explicit < n:
            raise ValidationError(f"root {explicit} is not a node")

    deg = net.degree
    best: dict[int, int] = {}
    for v in range(n):
        r = ds[v]
        b = best.get(r)
        if b is None or deg[v] > deg[b]:
            best[r] = v
    if explicit is not None:
        best[ds[explicit]] = explicit
    roots = tuple(sorted(best.values()))

    parent = np.full(n, -1, dtype=np.int64)
    component = np.empty(n, dtype=np.int64)
    children: list[tuple[int, ...]] = [()] * n
    topdown = []
    for c, r in enumerate(roots):
        component[r] = c
        stack = [r]
        while stack:
            v = stack.pop()
            topdown.append(v)
            kids = sorted(u for u in adj[v] if u != parent[v])
            children[v] = tuple(kids)
            for u in kids:
                parent[u] = v
                component[u] = c
            stack.extend(reversed(kids))
    order = np.array(topdown[::-1], dtype=np.int64)
    size = np.ones(n, dtype=np.int64)
    for v in order:
        if parent[v] >= 0:
            size[parent[v]] += size[v]
    for arr in (parent, component, size, order):
        arr.setflags(write=False)
    return RootedTree(n, parent, tuple(children), size, component, roots, order)


def tree_edges_of(net: Network) -> list[tuple[int, int]]:
    """Skeleton pairs of a network that must itself be a forest."""
    if not net.is_forest():
        raise ValidationError("network contains a cycle; use the 'tda' engine for general networks")
    return [(int(i), int(j)) for i, j in net.skeleton]


def generate_tree(n: int, seed: int | None = None, degrees: Sequence[int] | None = None) -> Network:
    """Random labeled tree with weight 1.0 in both directions of every edge.

    With ``degrees`` the tree realizes that degree sequence (requires
    ``sum(degrees) == 2 * (n - 1)``); otherwise it is drawn uniformly from all
    labeled trees via a random Pruefer sequence.
    """
    if n < 1:
        raise ValidationError("n must be at least 1")
    if n == 1:
        return Network.from_edges(1, [])
    if n == 2:
        return Network.undirected(2, [(0, 1)])
    rng = np.random.default_rng(seed)
    if degrees is not None:
        degrees = list(degrees)
        if len(degrees) != n or min(degrees) < 1 or sum(degrees) != 2 * (n - 1):
            raise ValidationError("degree sequence must have n entries >= 1 summing to 2(n-1)")
        prufer = [v for v, d in enumerate(degrees) for _ in range(d - 1)]
        if seed is not None:
            rng.shuffle(prufer)
    else:
        prufer = rng.integers(0, n, size=n - 2).tolist()
    t = nx.from_prufer_sequence(prufer)
    return Network.undirected(n, sorted((min(a, b), max(a, b)) for a, b in t.edges()))


def generate_sparse_graph(n: int, mean_degree: float, seed: int | None = None, connected: bool = True) -> Network:
    """Random simple graph with about ``n * mean_degree / 2`` undirected edges.

    ``connected=True`` starts from a uniform random spanning tree and adds
    uniformly random extra edges; otherwise an Erdos-Renyi G(n, m) graph.
    """
    m = int(round(n * mean_degree / 2))
    m = min(m, n * (n - 1) // 2)
    if connected:
        if m < n - 1:
            raise ValidationError(f"a connected graph on {n} nodes needs mean degree >= {2 * (n - 1) / n:.3f}")
        base = generate_tree(n, seed=seed)
        pairs = {(int(i), int(j)) for i, j in base.skeleton}
        rng = np.random.default_rng(None if seed is None else seed + 1)
        while len(pairs) < m:
            i, j = sorted(rng.choice(n, size=2, replace=False).tolist())
            pairs.add((i, j))
    else:
        g = nx.gnm_random_graph(n, m, seed=seed)
        pairs = {(min(a, b), max(a, b)) for a, b in g.edges()}
    return Network.undirected(n, sorted(pairs))
