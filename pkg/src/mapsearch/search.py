"""Exact MAP by depth-first branch-and-bound over the jointree bound."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Mapping

import numpy as np

from .elimination import eliminate, min_fill_order, network_graph
from .jointree import (
    VariableSplit,
    build_jointree,
    choose_root,
    prime_factors,
    promote,
    split_prime_factors,
)
from .model import BayesianNetwork, ModelError, Scaled, check_evidence
from .propagation import PropagationState, ValueBounds


class Status(str, Enum):
    EXACT = "exact"
    TIMEOUT = "timeout"
    ZERO_EVIDENCE = "zero-evidence"


@dataclass
class SolveOptions:
    promote: bool = True
    split: bool = True
    value_elimination: bool = True
    time_limit: float | None = None
    # recompute every message at every query (slow; for checking the cache)
    verify_messages: bool = False
    # start from this incumbent instead of running the initializer
    initial: Mapping[int, int] | None = None
    on_node: Callable[[int, Scaled, Scaled | None], None] | None = None


@dataclass
class MapResult:
    solution: dict[int, int]
    probability: Scaled
    status: Status
    nodes: int = 0
    prunes_bound: int = 0
    prunes_value: int = 0
    init_solution: dict[int, int] = field(default_factory=dict)
    init_probability: Scaled = field(default_factory=Scaled)
    root_bound: Scaled = field(default_factory=Scaled)
    time_to_find: float = 0.0
    time_to_finish: float = 0.0
    # (seconds since start, incumbent score) for every improvement
    history: list[tuple[float, Scaled]] = field(default_factory=list)


class SearchTimeout(Exception):
    pass


# ---------------------------------------------------------------------------
# initialization


def _spread(vb: ValueBounds) -> float:
    top = vb.values.max()
    return 0.0 if top == 0 else 1.0 - vb.values.min() / top


def sequential_init(state: PropagationState, max_vars: Iterable[int]) -> dict[int, int]:
    """Greedy assignment of the max variables by their value bounds.

    Variables are visited most decisive first (largest relative gap between
    their best and worst value bound at the root of the search), each taking
    the state with the best bound given the choices made so far.
    """
    max_vars = sorted(max_vars)
    if not max_vars:
        return {}
    spreads = {v: _spread(state.value_bounds(v)) for v in max_vars}
    order = sorted(max_vars, key=lambda v: (-spreads[v], v))
    tokens = []
    assignment = {}
    try:
        for v in order:
            s = state.value_bounds(v).best_state()
            assignment[v] = s
            tokens.append(state.assert_equal(v, s))
    finally:
        for t in reversed(tokens):
            state.retract(t)
    return assignment


def _one_hot(card: int, state: int) -> np.ndarray:
    mask = np.zeros(card, dtype=bool)
    mask[state] = True
    return mask


def hill_climb(state: PropagationState, assignment: Mapping[int, int]) -> tuple[dict[int, int], Scaled]:
    """Steepest-ascent single-variable flips on Pr(m, e) until no flip improves.

    Works on a private copy of ``state``: with every other max variable fixed,
    the value bounds of the free one are exact joint probabilities.
    """
    m = dict(assignment)
    local = state.fresh_copy()
    for v, s in m.items():
        local.set_mask(v, _one_hot(local.card(v), s))
    score = local.bound()
    if not m:
        return m, score
    while True:
        best = (score, None, None)
        for v in sorted(m):
            local.set_mask(v, None)
            vb = local.value_bounds(v)
            for s in range(local.card(v)):
                if s != m[v] and vb.bound(s) > best[0]:
                    best = (vb.bound(s), v, s)
            local.set_mask(v, _one_hot(local.card(v), m[v]))
        if best[1] is None:
            return m, score
        score, v, s = best
        m[v] = s
        local.set_mask(v, _one_hot(local.card(v), s))


def select_variable(bounds: Mapping[int, ValueBounds], incumbent: Scaled) -> int:
    """Variable maximizing M_V / T_V over the values whose bound beats ``incumbent``."""
    best_var, best_ratio = None, -1.0
    for v in sorted(bounds):
        vb = bounds[v]
        kept = [vb.values[s] for s in vb.retained(incumbent)]
        if not kept:
            continue
        total = float(np.sum(kept))
        ratio = float(np.max(kept)) / total
        if ratio > best_ratio:
            best_var, best_ratio = v, ratio
    if best_var is None:
        raise ModelError("no variable has a value that can beat the incumbent")
    return best_var


# ---------------------------------------------------------------------------
# search


class BranchAndBound:
    """One solver instance: a propagation state plus the incumbent."""

    def __init__(self, state: PropagationState, max_vars: Iterable[int],
                 value_elimination: bool = True, deadline: float | None = None,
                 on_node=None, start: float | None = None):
        self.state = state
        self.max_vars = sorted(max_vars)
        self.value_elimination = value_elimination
        self.deadline = deadline
        self.on_node = on_node
        self.start = time.perf_counter() if start is None else start
        self.b_sol: dict[int, int] | None = None
        self.b_score = Scaled(0.0)
        self.nodes = 0
        self.prunes_bound = 0
        self.prunes_value = 0
        self.history: list[tuple[float, Scaled]] = []

    def offer(self, solution: Mapping[int, int], score: Scaled) -> bool:
        if self.b_sol is None or score > self.b_score:
            self.b_sol = dict(solution)
            self.b_score = score
            self.history.append((time.perf_counter() - self.start, score))
            return True
        return False

    def run(self) -> None:
        self._search(list(self.max_vars), {}, None)

    def _search(self, unassigned: list[int], z: dict[int, int], parent_bound: Scaled | None) -> None:
        if self.deadline is not None and time.perf_counter() > self.deadline:
            raise SearchTimeout
        self.nodes += 1
        state = self.state
        bound = state.bound()
        if self.on_node is not None:
            self.on_node(len(z), bound, parent_bound)
        if not bound > self.b_score:
            self.prunes_bound += 1
            return
        if not unassigned:
            self.offer(z, bound)
            return

        bounds = {v: state.value_bounds(v) for v in unassigned}
        tokens = []
        try:
            for v in unassigned:
                vb = bounds[v]
                keep = vb.retained(self.b_score)
                if not keep:
                    self.prunes_bound += 1
                    return
                if self.value_elimination:
                    allowed = state.allowed(v)
                    for s in range(len(vb)):
                        if allowed[s] and s not in keep:
                            tokens.append(state.assert_not_equal(v, s))
                            self.prunes_value += 1
            var = select_variable(bounds, self.b_score)
            vb = bounds[var]
            rest = [u for u in unassigned if u != var]
            for s in sorted(range(len(vb)), key=lambda s: (-vb.values[s], s)):
                if vb.bound(s) > self.b_score:
                    t = state.assert_equal(var, s)
                    try:
                        self._search(rest, {**z, var: s}, bound)
                    finally:
                        state.retract(t)
        finally:
            for t in reversed(tokens):
                state.retract(t)


def search(state: PropagationState, max_vars: Iterable[int], incumbent: Mapping[int, int],
           incumbent_score: Scaled, **kwargs) -> BranchAndBound:
    """Run branch-and-bound from a given incumbent; returns the finished solver."""
    bnb = BranchAndBound(state, max_vars, **kwargs)
    bnb.offer(incumbent, incumbent_score)
    bnb.run()
    return bnb


# ---------------------------------------------------------------------------
# the full pipeline


@dataclass
class Prepared:
    """Everything built before search starts, in split-variable coordinates."""

    net: BayesianNetwork
    evidence: dict[int, int]
    max_vars: list[int]
    split: VariableSplit | None
    state: PropagationState


def prepare(net: BayesianNetwork, evidence: Mapping[int, int], max_vars: Iterable[int],
            options: SolveOptions | None = None) -> Prepared:
    options = options or SolveOptions()
    evidence = check_evidence(net, evidence)
    max_vars = sorted(set(int(v) for v in max_vars))
    for v in max_vars:
        if not 0 <= v < net.n:
            raise ModelError(f"unknown MAP variable {v}")
    if set(max_vars) & set(evidence):
        raise ModelError(f"MAP variables {sorted(set(max_vars) & set(evidence))} have evidence")
    split = None
    if options.split and any(len(prime_factors(net.card(v))) > 1 for v in max_vars):
        net, split = split_prime_factors(net, max_vars)
        evidence = split.map_evidence(evidence)
        max_vars = split.map_vars(max_vars)
    order = min_fill_order(network_graph(net, evidence))
    jt = build_jointree(net, evidence, order)
    root = choose_root(jt, max_vars)
    if options.promote:
        promote(jt, root, max_vars, jt.size_budget)
    state = PropagationState(jt, max_vars, root, full_recompute=options.verify_messages)
    return Prepared(net, evidence, max_vars, split, state)


def solve_map(net: BayesianNetwork, evidence: Mapping[int, int], max_vars: Iterable[int],
              options: SolveOptions | None = None) -> MapResult:
    """Most probable instantiation of ``max_vars`` given ``evidence``."""
    options = options or SolveOptions()
    start = time.perf_counter()
    max_vars = sorted(set(max_vars))
    if not max_vars:
        pr = eliminate(net, evidence, None, ()).value
        status = Status.EXACT if not pr.is_zero() else Status.ZERO_EVIDENCE
        t = time.perf_counter() - start
        return MapResult({}, pr, status, init_probability=pr, root_bound=pr,
                         time_to_find=t, time_to_finish=t, history=[(t, pr)])

    prep = prepare(net, evidence, max_vars, options)
    state = prep.state
    root_bound = state.bound()
    if root_bound.is_zero():
        t = time.perf_counter() - start
        return MapResult({}, Scaled(0.0), Status.ZERO_EVIDENCE, time_to_find=t, time_to_finish=t)

    if options.initial is not None:
        init = {v: int(s) for v, s in options.initial.items()}
        if prep.split is not None:
            init = prep.split.map_assignment(init)
        if sorted(init) != prep.max_vars:
            raise ModelError("initial solution must assign exactly the MAP variables")
        init_score = exact_score(state, init)
    else:
        init, init_score = hill_climb(state, sequential_init(state, prep.max_vars))

    deadline = None if options.time_limit is None else start + options.time_limit
    bnb = BranchAndBound(state, prep.max_vars, options.value_elimination, deadline,
                         options.on_node, start)
    bnb.offer(init, init_score)
    status = Status.EXACT
    try:
        bnb.run()
    except SearchTimeout:
        status = Status.TIMEOUT
    finish = time.perf_counter() - start

    def back(a):
        return prep.split.unmap_assignment(a) if prep.split is not None else dict(a)

    return MapResult(
        solution=back(bnb.b_sol),
        probability=bnb.b_score,
        status=status,
        nodes=bnb.nodes,
        prunes_bound=bnb.prunes_bound,
        prunes_value=bnb.prunes_value,
        init_solution=back(init),
        init_probability=init_score,
        root_bound=root_bound,
        time_to_find=bnb.history[-1][0],
        time_to_finish=finish,
        history=list(bnb.history),
    )


def exact_score(state: PropagationState, assignment: Mapping[int, int]) -> Scaled:
    """Pr(m, e) for a full instantiation of the max variables, via the jointree."""
    tokens = [state.assert_equal(v, s) for v, s in sorted(assignment.items())]
    try:
        return state.bound()
    finally:
        for t in reversed(tokens):
            state.retract(t)
