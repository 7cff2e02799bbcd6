import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from cascade_dist.errors import NumericalConsistencyError, ValidationError
from cascade_dist.graph import Network, generate_tree, root_tree, tree_edges_of
from cascade_dist.icm import ICMParams, assign_weights, enumerate_exact
from cascade_dist.sdp import (
    NodeCombination,
    SubtreeMessage,
    clip_residue,
    combine_children,
    internal_message,
    leaf_message,
    root_distribution,
    run_sdp,
    run_sdp_transform_domain,
    sdp_forward,
)

from conftest import path_params, random_tree_instance


def rooted(params, root="max-degree"):
    return root_tree(params.net, tree_edges_of(params.net), root)


class TestLeafMessage:
    def test_inert_leaf(self):
        m = leaf_message(0.0, 0.0, 0.0)
        for seq in (m.pB, m.pA0, m.pAS):
            assert_array_equal(seq, [1, 0])

    def test_leaf_that_always_fires_and_transmits(self):
        m = leaf_message(1.0, 1.0, 0.0)
        assert_array_equal(m.pB, [0, 0])
        assert_array_equal(m.pAS, [0, 1])

    def test_half_parameters(self):
        m = leaf_message(0.5, 0.5, 0.5)
        assert_allclose(m.pB, [0.5, 0.25])
        assert_allclose(m.pA0, [0.25, 0.5])
        assert_allclose(m.pAS, [0.25, 0.75])


class TestCombination:
    def test_inert_child(self):
        inert = SubtreeMessage(np.array([1.0, 0]), np.array([1.0, 0]), np.array([1.0, 0]))
        c = combine_children(0.0, [inert])
        assert_array_equal(c.pnf, [1, 0])
        assert_array_equal(c.plf, [1, 0])
        assert_array_equal(c.pf, [0, 0])

    def test_seeded_node(self):
        m = SubtreeMessage(np.array([0.5, 0.25]), np.array([0.25, 0.5]), np.array([0.25, 0.75]))
        c = combine_children(1.0, [m])
        assert_array_equal(c.pnf, [0, 0])
        assert_array_equal(c.plf, [0, 0])
        assert_allclose(c.pf, [0.25, 0.75])

    def test_two_identical_children_square(self):
        m = leaf_message(0.3, 0.6, 0.2)
        one = combine_children(0.4, [m])
        two = combine_children(0.4, [m, m])
        q = 0.6
        assert_allclose(two.pnf, q * np.convolve(one.pnf / q, one.pnf / q))
        assert_allclose(two.plf, q * np.convolve(one.plf / q, one.plf / q))
        assert_allclose(two.pf + two.plf, np.convolve(m.pAS, m.pAS))


class TestInternalMessage:
    def test_node_that_never_activates(self):
        # p_n = 0, children never transmit to n, parent never transmits to n
        kid = leaf_message(0.7, 0.0, 0.4)
        comb = combine_children(0.0, [kid, kid])
        assert_array_equal(comb.pf, 0)
        m = internal_message(comb, w_np=0.3, w_pn=0.0)
        nf = np.append(comb.pnf, 0)
        assert_allclose(m.pB, nf)
        assert_allclose(m.pA0, nf)
        assert_allclose(m.pAS, m.pA0)

    def test_certain_upward_transmission(self):
        comb = combine_children(0.3, [leaf_message(0.2, 0.5, 0.5)])
        m = internal_message(comb, w_np=1.0, w_pn=0.0)
        nf = np.append(comb.pnf, 0)
        assert_allclose(m.pB, nf)
        assert_allclose(m.pAS, nf + np.concatenate([[0], comb.pf]))

    def test_hand_composed_chain(self):
        # path 0-1-2 rooted at 0
        params = path_params(3, [0.3, 0.6, 0.2], 0.4)
        m2 = leaf_message(0.2, 0.4, 0.4)
        m1 = internal_message(combine_children(0.6, [m2]), 0.4, 0.4)
        dist = root_distribution(combine_children(0.3, [m1]))
        assert_allclose(dist, enumerate_exact(params).distribution.mass, atol=1e-15)


class TestRunSDP:
    def test_single_node(self):
        params = ICMParams(Network.from_edges(1, []), np.array([0.3]), np.empty(0))
        assert_allclose(run_sdp(rooted(params), params).mass, [0.7, 0.3], atol=1e-15)
        assert_allclose(run_sdp_transform_domain(rooted(params), params).mass, [0.7, 0.3], atol=1e-15)

    def test_two_node(self):
        params = path_params(2, 0.5, 0.5)
        assert_allclose(run_sdp(rooted(params), params).mass, [0.25, 0.25, 0.5], atol=1e-15)
        assert_allclose(run_sdp_transform_domain(rooted(params), params).mass, [0.25, 0.25, 0.5], atol=1e-12)

    @pytest.mark.parametrize("seed", range(40))
    def test_matches_exact_enumeration(self, seed):
        rng = np.random.default_rng(seed)
        tree, params = random_tree_instance(rng, int(rng.integers(2, 13)))
        exact = enumerate_exact(params).distribution.mass
        assert_allclose(run_sdp(tree, params).mass, exact, rtol=0, atol=1e-10)
        assert_allclose(sdp_forward(tree, params).distribution.mass, exact, rtol=0, atol=1e-10)

    def test_forest(self):
        net = Network.undirected(7, [(0, 1), (1, 2), (3, 4)])
        rng = np.random.default_rng(0)
        params = ICMParams(net, rng.random(7), rng.random(net.num_edges))
        exact = enumerate_exact(params).distribution.mass
        assert_allclose(run_sdp(rooted(params), params).mass, exact, atol=1e-14)
        assert_allclose(run_sdp_transform_domain(rooted(params), params).mass, exact, atol=1e-12)

    def test_non_tree_edge_rejected(self):
        net = Network.undirected(3, [(0, 1), (1, 2), (0, 2)])
        params = ICMParams.from_network(net, 0.1)
        tree = root_tree(net, [(0, 1), (1, 2)])
        with pytest.raises(ValidationError, match="tda"):
            run_sdp(tree, params)

    def test_zero_weight_extra_edge_allowed(self):
        net = Network.from_edges(3, [(0, 1, 0.5), (1, 2, 0.5), (0, 2, 0.0)])
        params = ICMParams(net, np.full(3, 0.2), net.weight)
        tree = root_tree(net, [(0, 1), (1, 2)])
        assert_allclose(run_sdp(tree, params).mass, enumerate_exact(params).distribution.mass, atol=1e-15)

    def test_seeded_floor(self):
        net = generate_tree(30, seed=5)
        p = np.zeros(30)
        p[[2, 9, 17]] = 1.0
        params = ICMParams(net, p, assign_weights(net, "ED"))
        mass = run_sdp(rooted(params), params).mass
        assert_array_equal(mass[:3], 0.0)

    def test_degenerate_concentration(self):
        net = generate_tree(25, seed=1)
        p = np.zeros(25)
        p[11] = 1.0
        params = ICMParams(net, p, np.ones(net.num_edges))
        mass = run_sdp(rooted(params), params).mass
        assert mass[-1] == pytest.approx(1.0, abs=1e-14)

    def test_message_mass_bounded(self):
        tree, params = random_tree_instance(np.random.default_rng(9), 60)
        cache = sdp_forward(tree, params)
        for v, m in enumerate(cache.messages):
            if m is None:
                continue
            assert m.pAS.size == tree.subtree_size[v] + 1
            for seq in (m.pB, m.pA0, m.pAS):
                assert seq.min() >= 0 and seq.sum() <= 1 + 1e-9

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 10**6), n=st.integers(2, 50), r1=st.integers(0, 10**6), r2=st.integers(0, 10**6))
    def test_root_invariance(self, seed, n, r1, r2):
        rng = np.random.default_rng(seed)
        tree, params = random_tree_instance(rng, n)
        a = run_sdp(tree, params).mass
        for r in (r1 % n, r2 % n):
            assert_allclose(run_sdp(rooted(params, r), params).mass, a, rtol=0, atol=1e-12)

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 10**6), n=st.integers(1, 80))
    def test_normalized_and_transform_agrees(self, seed, n):
        rng = np.random.default_rng(seed)
        tree, params = random_tree_instance(rng, n)
        d = run_sdp(tree, params)
        assert d.total() == pytest.approx(1.0, abs=1e-9) and d.mass.min() >= 0
        assert_allclose(run_sdp_transform_domain(tree, params).mass, d.mass, rtol=0, atol=1e-9)

    def test_kernel_matches_reference_pass(self):
        tree, params = random_tree_instance(np.random.default_rng(4), 300)
        assert_allclose(run_sdp(tree, params).mass, sdp_forward(tree, params).distribution.mass, atol=1e-14)


class TestResidue:
    def test_small_negative_clipped(self):
        assert_array_equal(clip_residue(np.array([0.5, -1e-14])), [0.5, 0.0])

    def test_large_negative_raises(self):
        with pytest.raises(NumericalConsistencyError):
            clip_residue(np.array([0.5, -1e-6]))

    def test_inconsistent_messages_raise(self):
        # pAS below pA0 is impossible and yields a negative p_f
        bad = SubtreeMessage(np.array([1.0, 0]), np.array([0.2, 0.8]), np.array([0.9, 0.1]))
        with pytest.raises(NumericalConsistencyError):
            combine_children(0.0, [bad])
        assert isinstance(combine_children(0.0, []), NodeCombination)
