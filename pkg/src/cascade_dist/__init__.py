"""Exact and approximate cascade size distributions of the independent cascade model."""

__version__ = "0.1.0"

from .analysis import (
    ClusterAssignment,
    Objective,
    cluster_nodes,
    distribution_mse,
    expected_shortfall,
    mean_size,
    value_at_risk,
    weighted_mean,
)
from .bp_tda import run_bp, run_contda, run_tda
from .consdp import run_consdp
from .distributions import CascadeDistribution, ConditionalActivationMatrix
from .errors import CascadeError, NumericalConsistencyError, ParseError, SizeError, ValidationError
from .graph import Network, generate_sparse_graph, generate_tree, load_edge_list, maximum_spanning_forest, root_tree
from .icm import ICMParams, assign_weights, enumerate_exact, set_initial_probabilities, simulate
from .im import SeedEvaluator, evaluate_seed_set, exhaustive_select, greedy_select, tail_probability
from .sdp import run_sdp, run_sdp_transform_domain

__all__ = [
    "CascadeDistribution",
    "CascadeError",
    "ClusterAssignment",
    "ConditionalActivationMatrix",
    "ICMParams",
    "Network",
    "NumericalConsistencyError",
    "Objective",
    "ParseError",
    "SeedEvaluator",
    "SizeError",
    "ValidationError",
    "assign_weights",
    "cluster_nodes",
    "distribution_mse",
    "enumerate_exact",
    "evaluate_seed_set",
    "exhaustive_select",
    "expected_shortfall",
    "generate_sparse_graph",
    "generate_tree",
    "greedy_select",
    "load_edge_list",
    "maximum_spanning_forest",
    "mean_size",
    "root_tree",
    "run_bp",
    "run_consdp",
    "run_contda",
    "run_sdp",
    "run_sdp_transform_domain",
    "run_tda",
    "set_initial_probabilities",
    "simulate",
    "tail_probability",
    "value_at_risk",
    "weighted_mean",
]
