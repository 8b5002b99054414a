"""Exact MAP for Bayesian networks by branch-and-bound over a jointree upper bound."""

from .elimination import (
    EliminationOrder,
    EliminationResult,
    eliminate,
    min_fill_order,
    relaxed_map_bound,
    repair_order,
    width,
)
from .jointree import Jointree, build_jointree, choose_root, promote, split_prime_factors
from .minibucket import minibucket_bound
from .model import (
    BayesianNetwork,
    Potential,
    Scaled,
    Variable,
    emit_network,
    joint_probability,
    max_out,
    multiply,
    parse_evidence,
    parse_network,
    parse_var_set,
    restrict,
    sum_out,
)
from .propagation import PropagationState, ValueBounds
from .search import MapResult, SolveOptions, Status, solve_map

__all__ = [
    "BayesianNetwork", "EliminationOrder", "EliminationResult", "Jointree", "MapResult",
    "Potential", "PropagationState", "Scaled", "SolveOptions", "Status", "ValueBounds",
    "Variable", "build_jointree", "choose_root", "eliminate", "emit_network",
    "joint_probability", "max_out", "min_fill_order", "minibucket_bound", "multiply",
    "parse_evidence", "parse_network", "parse_var_set", "promote", "relaxed_map_bound",
    "repair_order", "restrict", "solve_map", "split_prime_factors", "sum_out", "width",
]
