import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from cascade_dist.analysis import ClusterAssignment, Objective, cluster_nodes, mean_size
from cascade_dist.distributions import CascadeDistribution
from cascade_dist.errors import SizeError, ValidationError
from cascade_dist.graph import Network, generate_sparse_graph, generate_tree
from cascade_dist.icm import ICMParams, assign_weights, enumerate_exact, set_initial_probabilities
from cascade_dist.im import (
    SeedEvaluator,
    cross_evaluate,
    evaluate_seed_set,
    exhaustive_pool,
    exhaustive_select,
    greedy_pool,
    greedy_select,
    tail_probability,
)
from cascade_dist.bp_tda import run_contda

from conftest import path_params, star_and_loop_params

MEAN = Objective("mean")
OBJECTIVES = [MEAN, Objective("weighted", exp_a=4.0), Objective("es", alpha=0.05)]


def singletons(nodes):
    nodes = list(nodes)
    return ClusterAssignment(np.arange(len(nodes)), np.zeros((len(nodes), 0)), tuple((v,) for v in nodes))


def random_tree_params(seed, n):
    rng = np.random.default_rng(seed)
    net = generate_tree(n, seed=seed)
    return ICMParams(net, np.zeros(n), rng.uniform(0.1, 0.9, net.num_edges))


class TestEvaluate:
    def test_all_and_no_seeds(self):
        params = random_tree_params(0, 8)
        assert evaluate_seed_set(params, range(8), MEAN) == 1.0
        assert evaluate_seed_set(params, [], MEAN) == 0.0

    def test_middle_of_path_matches_exact(self):
        params = path_params(5, 0.0, 0.6)
        exact = enumerate_exact(set_initial_probabilities(params, seeds=[2])).distribution
        assert evaluate_seed_set(params, [2], MEAN) == pytest.approx(mean_size(exact), abs=1e-10)

    def test_sdp_rejects_cycles(self):
        params = ICMParams.from_network(Network.undirected(3, [(0, 1), (1, 2), (0, 2)]))
        with pytest.raises(ValidationError, match="tda"):
            SeedEvaluator(params, "sdp")

    def test_engines_agree_on_trees(self):
        params = random_tree_params(4, 12)
        for seeds in ([3], [0, 7], [1, 5, 11]):
            a = SeedEvaluator(params, "sdp").distribution(seeds).mass
            b = SeedEvaluator(params, "tda").distribution(seeds).mass
            c = SeedEvaluator(params, "exact").distribution(seeds).mass
            assert_allclose(a, b, atol=1e-15)
            assert_allclose(a, c, atol=1e-10)

    def test_background(self):
        params = random_tree_params(1, 6)
        with_bg = evaluate_seed_set(params, [0], MEAN, background=0.05)
        assert with_bg > evaluate_seed_set(params, [0], MEAN)

    def test_unknown_engine(self):
        with pytest.raises(ValidationError):
            SeedEvaluator(random_tree_params(0, 3), "magic")


class TestTail:
    def test_examples(self):
        d = CascadeDistribution(np.array([0.2, 0.3, 0.5]))
        assert tail_probability(d, 0.0) == 1.0
        assert tail_probability(CascadeDistribution.point_mass(2, 1), 0.6) == 0.0
        assert tail_probability(d, 0.5) == pytest.approx(0.8)

    def test_star_and_loop_favor_different_seeds(self):
        params = star_and_loop_params()
        dists = [enumerate_exact(set_initial_probabilities(params, seeds=[s])).distribution for s in range(params.n)]
        by_mean = int(np.argmax([mean_size(d) for d in dists]))
        by_tail = int(np.argmax([tail_probability(d, 0.5) for d in dists]))
        assert by_mean == 0 and by_tail >= 7


class TestGreedy:
    def test_middle_of_three_node_path(self):
        trace = greedy_select(SeedEvaluator(path_params(3, 0.0, 0.5)), 1, range(3), MEAN)
        assert trace.chosen == [1]

    def test_full_budget(self):
        params = random_tree_params(2, 6)
        trace = greedy_select(SeedEvaluator(params), 6, range(6), MEAN)
        assert sorted(trace.chosen) == list(range(6))
        assert trace.values[-1] == pytest.approx(1.0)

    def test_trace_consistency(self):
        params = random_tree_params(3, 10)
        ev = SeedEvaluator(params)
        trace = greedy_select(ev, 4, range(10), MEAN)
        assert len(set(trace.chosen)) == 4
        for node, value, scores in zip(trace.chosen, trace.values, trace.per_step_scores):
            assert value == max(scores.values()) == scores[node]
        assert trace.evaluations == 1 + 10 + 9 + 8 + 7
        assert np.all(np.diff(trace.values) >= 0)

    def test_ties_go_to_lowest_id(self):
        params = ICMParams.from_network(Network.from_edges(4, []))
        assert greedy_select(SeedEvaluator(params), 2, [3, 1, 2], MEAN).chosen == [1, 2]

    def test_zero_budget_and_errors(self):
        ev = SeedEvaluator(random_tree_params(0, 4))
        trace = greedy_select(ev, 0, range(4), MEAN)
        assert trace.chosen == [] and trace.initial_value == 0.0
        with pytest.raises(ValidationError):
            greedy_select(ev, 1, [], MEAN)
        with pytest.raises(ValidationError):
            greedy_select(ev, 5, range(4), MEAN)

    def test_deterministic_outputs(self):
        params = random_tree_params(5, 9)
        a = greedy_select(SeedEvaluator(params), 3, range(9), OBJECTIVES[2])
        b = greedy_select(SeedEvaluator(params), 3, range(9), OBJECTIVES[2])
        assert json.dumps(a.to_json()) == json.dumps(b.to_json())
        assert a.summary_csv() == b.summary_csv()
        assert a.summary_csv().splitlines()[0] == "step,node,objective_value"

    @settings(max_examples=15, deadline=None)
    @given(seed=st.integers(0, 10**6), n=st.integers(3, 25))
    def test_monotone_objectives_non_decreasing(self, seed, n):
        params = random_tree_params(seed, n)
        for obj in OBJECTIVES[:2]:
            trace = greedy_select(SeedEvaluator(params), min(4, n), range(n), obj)
            assert np.all(np.diff(trace.values) >= -1e-12)


class TestExhaustive:
    def test_budget_one_equals_greedy_round_one(self):
        params = random_tree_params(6, 9)
        ev = SeedEvaluator(params)
        res = exhaustive_select(ev, 1, singletons(range(9)), MEAN)
        trace = greedy_select(ev, 1, range(9), MEAN)
        assert res.seeds == (trace.chosen[0],) and res.value == trace.values[0]

    def test_one_per_cluster_gives_single_set(self):
        params = random_tree_params(7, 10)
        clusters = cluster_nodes(run_contda(params.with_p(0.05)), 3, seed=0)
        res = exhaustive_select(SeedEvaluator(params), 3, clusters, MEAN, per_cluster_cap=1)
        assert res.evaluations == 1
        assert list(res.seeds) == greedy_pool(clusters)

    def test_pool_respects_cap(self):
        clusters = ClusterAssignment(np.array([0, 0, 0, 0, 1]), np.zeros((2, 1)), ((3, 1, 0, 2), (4,)))
        assert exhaustive_pool(clusters, 3) == [0, 1, 3, 4]
        assert greedy_pool(clusters) == [3, 4]

    @pytest.mark.parametrize("obj", OBJECTIVES, ids=lambda o: o.kind)
    def test_at_least_greedy_on_8_nodes(self, obj):
        net = generate_sparse_graph(8, 2.5, seed=3)
        params = ICMParams(net, np.zeros(8), assign_weights(net, "ED"))
        ev = SeedEvaluator(params, "exact")
        res = exhaustive_select(ev, 2, singletons(range(8)), obj)
        trace = greedy_select(ev, 2, range(8), obj)
        assert res.value >= trace.values[-1]
        assert res.evaluations == math.comb(8, 2)

    def test_caps(self):
        ev = SeedEvaluator(random_tree_params(0, 12))
        with pytest.raises(SizeError, match="924"):
            exhaustive_select(ev, 6, singletons(range(12)), MEAN, max_evaluations=100)
        with pytest.raises(SizeError):
            exhaustive_select(ev, 11, singletons(range(12)), MEAN)

    def test_ties_lexicographic(self):
        params = ICMParams.from_network(Network.from_edges(5, []))
        res = exhaustive_select(SeedEvaluator(params), 2, singletons([4, 2, 3, 1]), MEAN)
        assert res.seeds == (1, 2)


def test_cross_evaluate_shape():
    params = random_tree_params(8, 10)
    ev = SeedEvaluator(params)
    table = cross_evaluate(ev, [1, 4, 7], {o.label: o for o in OBJECTIVES})
    assert len(table) == 3 and all(len(v) == 3 for v in table.values())
    assert table["mean"][0] == pytest.approx(evaluate_seed_set(params, [1], MEAN))
