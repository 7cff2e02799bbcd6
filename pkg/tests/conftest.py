import numpy as np
import pytest

from cascade_dist.graph import Network, generate_tree, root_tree, tree_edges_of
from cascade_dist.icm import ICMParams


def random_tree_instance(rng: np.random.Generator, n: int, root="max-degree"):
    """Random tree with random p in [0,1] and independent random weights per direction."""
    net = generate_tree(n, seed=int(rng.integers(2**31)))
    params = ICMParams(net, rng.random(n), rng.random(net.num_edges))
    return root_tree(net, tree_edges_of(net), root), params


def path_params(n: int, p, w) -> ICMParams:
    net = Network.undirected(n, [(i, i + 1) for i in range(n - 1)])
    return ICMParams(net, np.broadcast_to(np.asarray(p, float), (n,)).copy(), np.full(net.num_edges, float(w)))


def star_params(leaves: int, p: float, w: float) -> ICMParams:
    net = Network.undirected(leaves + 1, [(0, i) for i in range(1, leaves + 1)])
    return ICMParams(net, np.full(leaves + 1, p), np.full(net.num_edges, w))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def star_and_loop_params() -> ICMParams:
    """Hub 0 with six leaves (w = 0.6) next to a separate 7-node ring (w = 0.6).

    Seeding the hub gives the larger mean cascade; seeding a ring node gives
    the larger chance of reaching half the network.
    """
    edges = [(0, i, 0.6) for i in range(1, 7)] + [(7 + k, 7 + (k + 1) % 7, 0.6) for k in range(7)]
    both = [e for i, j, w in edges for e in ((i, j, w), (j, i, w))]
    net = Network.from_edges(14, both)
    return ICMParams(net, np.zeros(14), net.weight)
