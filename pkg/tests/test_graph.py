import itertools

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_array_equal
from scipy.cluster.hierarchy import DisjointSet

from cascade_dist.errors import ParseError, ValidationError
from cascade_dist.graph import (
    Network,
    edge_scores,
    format_edge_list,
    generate_sparse_graph,
    generate_tree,
    load_edge_list,
    maximum_spanning_forest,
    root_tree,
    tree_edges_of,
)


def _acyclic(n, edges):
    ds = DisjointSet(range(n))
    for i, j in edges:
        if ds.connected(i, j):
            return False
        ds.merge(i, j)
    return True


class TestEdgeList:
    def test_symmetric_pair(self):
        net = load_edge_list("0\t1\t0.5\n1\t0\t0.5")
        assert net.n == 2
        assert net.w(0, 1) == 0.5 and net.w(1, 0) == 0.5

    def test_weight_out_of_range(self):
        with pytest.raises(ValidationError):
            load_edge_list("0\t1\t1.5")

    def test_malformed_line_reports_line_number(self):
        with pytest.raises(ParseError, match="line 2"):
            load_edge_list("0\t1\t0.5\n0\t1\n")

    def test_non_numeric_weight(self):
        with pytest.raises(ParseError):
            load_edge_list("0\t1\tabc")

    def test_self_loop_and_duplicate(self):
        with pytest.raises(ValidationError):
            load_edge_list("1\t1\t0.5")
        with pytest.raises(ValidationError, match="duplicate"):
            load_edge_list("0\t1\t0.5\n0\t1\t0.2")

    def test_labels_mapped_in_order_of_appearance(self):
        net = load_edge_list("# comment\nalice\tbob\t0.3\nbob\tcarol\t0.2\n")
        assert net.labels == ("alice", "bob", "carol")
        assert net.w(1, 2) == 0.2

    def test_round_trip_of_181_node_tree(self):
        tree = generate_tree(181, seed=7).with_weights(np.linspace(0, 1, 360))
        text = format_edge_list(tree, ["generated"])
        assert sum(1 for ln in text.splitlines() if not ln.startswith("#")) == 360
        back = load_edge_list(text)
        assert back.n == 181 and len(back.skeleton) == 180
        assert_array_equal(back.weight, tree.weight)

    def test_isolated_nodes_survive_round_trip(self):
        net = Network.from_edges(4, [(0, 1, 0.5)])
        assert load_edge_list(format_edge_list(net)).n == 4


class TestSpanningForest:
    def test_tree_is_its_own_spanning_tree(self):
        net = generate_tree(30, seed=1)
        assert maximum_spanning_forest(net) == tree_edges_of(net)

    def test_triangle_keeps_two_best_edges(self):
        # noisy-or score with w in one direction only equals that weight
        net = Network.from_edges(3, [(0, 1, 0.9), (1, 2, 0.8), (0, 2, 0.5)])
        assert maximum_spanning_forest(net) == [(0, 1), (1, 2)]

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_brute_force_best_tree(self, seed):
        rng = np.random.default_rng(seed)
        net = generate_sparse_graph(7, 3.0, seed=seed)
        net = net.with_weights(rng.random(net.num_edges))
        pairs = [tuple(int(x) for x in e) for e in net.skeleton]
        score = dict(zip(pairs, edge_scores(net)))
        best = max(
            sum(score[e] for e in combo)
            for combo in itertools.combinations(pairs, net.n - 1)
            if _acyclic(net.n, combo)
        )
        got = sum(score[e] for e in maximum_spanning_forest(net))
        assert got == pytest.approx(best, abs=1e-12)

    def test_disconnected_graph_gives_forest(self):
        net = Network.undirected(5, [(0, 1), (1, 2), (0, 2), (3, 4)])
        forest = maximum_spanning_forest(net)
        assert len(forest) == 3 and _acyclic(5, forest)

    @settings(max_examples=30, deadline=None)
    @given(n=st.integers(2, 40), extra=st.floats(0.0, 1.5), seed=st.integers(0, 10**6), score=st.sampled_from(["noisy-or", "max", "mean"]))
    def test_connected_input_gives_spanning_tree(self, n, extra, seed, score):
        net = generate_sparse_graph(n, 2 * (n - 1) / n + extra, seed=seed)
        forest = maximum_spanning_forest(net, score)
        assert len(forest) == n - 1 and _acyclic(n, forest)


class TestRootTree:
    def test_path_rooted_in_middle(self):
        net = Network.undirected(3, [(0, 1), (1, 2)])
        t = root_tree(net, tree_edges_of(net), root=1)
        assert t.children[1] == (0, 2)
        assert t.children[0] == () and t.children[2] == ()

    def test_path_rooted_at_end(self):
        net = Network.undirected(3, [(0, 1), (1, 2)])
        t = root_tree(net, tree_edges_of(net), root=0)
        assert t.parent[1] == 0 and t.parent[2] == 1
        assert t.subtree_size[1] == 2

    def test_max_degree_root(self):
        net = Network.undirected(7, [(5, i) for i in range(7) if i != 5])
        assert root_tree(net, tree_edges_of(net)).roots == (5,)

    def test_cycle_rejected(self):
        net = Network.undirected(3, [(0, 1), (1, 2), (0, 2)])
        with pytest.raises(ValidationError, match="tda"):
            tree_edges_of(net)
        with pytest.raises(ValidationError):
            root_tree(net, [(0, 1), (1, 2), (0, 2)])

    @settings(max_examples=30, deadline=None)
    @given(n=st.integers(1, 60), seed=st.integers(0, 10**6), root_pick=st.integers(0, 10**6))
    def test_structure_invariants(self, n, seed, root_pick):
        net = generate_tree(n, seed=seed)
        edges = tree_edges_of(net)
        t = root_tree(net, edges, root=root_pick % n)
        assert sorted(t.edges()) == edges
        for v in range(n):
            assert t.subtree_size[v] == 1 + sum(t.subtree_size[c] for c in t.children[v])
        assert sum(t.component_size(c) for c in range(t.num_components)) == n
        # children are listed before their parents
        pos = np.empty(n, dtype=int)
        pos[np.asarray(t.order)] = np.arange(n)
        assert all(pos[c] < pos[v] for v in range(n) for c in t.children[v])

    def test_forest_has_one_root_per_component(self):
        net = Network.undirected(6, [(0, 1), (2, 3), (3, 4)])
        t = root_tree(net, tree_edges_of(net))
        assert t.num_components == 3
        assert sorted(t.component_size(c) for c in range(3)) == [1, 2, 3]


class TestGenerators:
    def test_small_trees(self):
        assert generate_tree(1).n == 1 and generate_tree(1).num_edges == 0
        assert len(generate_tree(2).skeleton) == 1

    def test_181_node_tree(self):
        net = generate_tree(181, seed=3)
        assert net.n == 181 and len(net.skeleton) == 180
        assert _acyclic(181, [tuple(e) for e in net.skeleton])
        assert nx.is_tree(nx.Graph([tuple(e) for e in net.skeleton.tolist()]))

    def test_deterministic(self):
        a = generate_sparse_graph(200, 2.0, seed=4)
        b = generate_sparse_graph(200, 2.0, seed=4)
        assert format_edge_list(a) == format_edge_list(b)

    def test_sparse_graph_edge_count_and_connectivity(self):
        net = generate_sparse_graph(200, 2.0, seed=0)
        assert len(net.skeleton) == 200
        g = nx.Graph([tuple(e) for e in net.skeleton.tolist()])
        assert g.number_of_nodes() == 200 and nx.is_connected(g)

    def test_degree_sequence(self):
        net = generate_tree(5, seed=1, degrees=[4, 1, 1, 1, 1])
        assert_array_equal(net.degree, [4, 1, 1, 1, 1])
