"""Variable elimination for PR, MPE and MAP, plus the orders it runs on.

Running the engine with an order that interleaves maximization and summation
variables still returns a number; it is an upper bound on the MAP probability
and a lower bound on nothing better than Pr(e).  ``relaxed_map_bound`` is that
use of the engine.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .model import (
    BayesianNetwork,
    ModelError,
    Potential,
    Scaled,
    check_evidence,
    max_out,
    multiply_all,
    restrict,
    sum_out,
)

SUM = "sum"
MAX = "max"


@dataclass(frozen=True)
class EliminationOrder:
    sequence: tuple[int, ...]
    max_vars: frozenset[int] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "sequence", tuple(int(v) for v in self.sequence))
        object.__setattr__(self, "max_vars", frozenset(int(v) for v in self.max_vars))
        if len(set(self.sequence)) != len(self.sequence):
            raise ModelError(f"duplicate variables in order {self.sequence}")
        stray = self.max_vars - set(self.sequence)
        if stray:
            raise ModelError(f"max variables {sorted(stray)} are not in the order")

    def role(self, var: int) -> str:
        return MAX if var in self.max_vars else SUM

    @property
    def sum_vars(self) -> frozenset[int]:
        return frozenset(self.sequence) - self.max_vars

    def is_valid(self) -> bool:
        """True when every summation variable precedes every maximization variable."""
        seen_max = False
        for v in self.sequence:
            if v in self.max_vars:
                seen_max = True
            elif seen_max:
                return False
        return True

    def __len__(self) -> int:
        return len(self.sequence)

    def __iter__(self) -> Iterator[int]:
        return iter(self.sequence)


@dataclass
class EliminationResult:
    value: Scaled
    width: float
    # max-variable instantiation; only set when the order was valid
    solution: dict[int, int] | None = None
    # back-substituted instantiation for invalid orders (a heuristic guess)
    candidate: dict[int, int] | None = None


# ---------------------------------------------------------------------------
# orders


def interaction_graph(scopes: Iterable[Sequence[int]], nodes: Iterable[int] = ()) -> dict[int, set[int]]:
    graph: dict[int, set[int]] = {int(v): set() for v in nodes}
    for scope in scopes:
        for v in scope:
            graph.setdefault(v, set())
        for a, b in combinations(scope, 2):
            graph[a].add(b)
            graph[b].add(a)
    return graph


def _fill_in(graph: dict[int, set[int]], v: int) -> int:
    nbrs = sorted(graph[v])
    fill = 0
    for i, a in enumerate(nbrs):
        adj = graph[a]
        for b in nbrs[i + 1:]:
            if b not in adj:
                fill += 1
    return fill


def min_fill_order(graph: Mapping[int, set[int]], constrained: bool = False,
                   max_vars: Iterable[int] = ()) -> EliminationOrder:
    """Greedy min-fill elimination order; ties go to the lowest variable id.

    With ``constrained`` set, non-max variables are exhausted before any
    variable of ``max_vars`` is eligible.
    """
    g = {v: set(nb) for v, nb in graph.items()}
    max_vars = frozenset(max_vars) & frozenset(g)
    order = []
    while g:
        candidates = list(g)
        if constrained:
            sums = [v for v in candidates if v not in max_vars]
            if sums:
                candidates = sums
        best = min(candidates, key=lambda v: (_fill_in(g, v), v))
        nbrs = g.pop(best)
        for a in nbrs:
            g[a].discard(best)
            g[a].update(nbrs - {a})
        order.append(best)
    return EliminationOrder(tuple(order), max_vars)


def network_graph(net: BayesianNetwork, evidence: Mapping[int, int] = {}) -> dict[int, set[int]]:
    """Interaction graph of the CPTs after restricting them by ``evidence``."""
    nodes = [v for v in range(net.n) if v not in evidence]
    scopes = [[v for v in cpt.scope if v not in evidence] for cpt in net.cpts]
    return interaction_graph(scopes, nodes)


def repair_steps(order: EliminationOrder) -> list[EliminationOrder]:
    """Orders visited while commuting adjacent (max, sum) pairs until the order is valid.

    Always swaps the rightmost offending pair; the first entry is ``order``
    itself and the last is the valid order.
    """
    seq = list(order.sequence)
    steps = [order]
    while True:
        pos = None
        for i in range(len(seq) - 1):
            if seq[i] in order.max_vars and seq[i + 1] not in order.max_vars:
                pos = i
        if pos is None:
            return steps
        seq[pos], seq[pos + 1] = seq[pos + 1], seq[pos]
        steps.append(EliminationOrder(tuple(seq), order.max_vars))


def repair_order(order: EliminationOrder) -> EliminationOrder:
    sums = [v for v in order.sequence if v not in order.max_vars]
    maxes = [v for v in order.sequence if v in order.max_vars]
    return EliminationOrder(tuple(sums + maxes), order.max_vars)


# ---------------------------------------------------------------------------
# the engine


def _check_roles(net: BayesianNetwork, evidence: Mapping[int, int], sum_vars, max_vars,
                 order: EliminationOrder | None) -> tuple[frozenset, frozenset, EliminationOrder]:
    evidence = check_evidence(net, evidence)
    ev = frozenset(evidence)
    max_vars = frozenset(max_vars)
    if sum_vars is None:
        sum_vars = frozenset(range(net.n)) - ev - max_vars
    sum_vars = frozenset(sum_vars)
    if sum_vars & max_vars:
        raise ModelError(f"variables {sorted(sum_vars & max_vars)} are both summed and maxed")
    if (sum_vars | max_vars) & ev:
        raise ModelError(f"evidence variables {sorted((sum_vars | max_vars) & ev)} cannot be eliminated")
    if sum_vars | max_vars | ev != frozenset(range(net.n)):
        missing = frozenset(range(net.n)) - sum_vars - max_vars - ev
        raise ModelError(f"variables {sorted(missing)} are neither evidence, summed nor maxed")
    if order is None:
        order = min_fill_order(network_graph(net, evidence), constrained=True, max_vars=max_vars)
    elif not isinstance(order, EliminationOrder):
        order = EliminationOrder(tuple(order), max_vars)
    if frozenset(order.sequence) != sum_vars | max_vars or order.max_vars != max_vars:
        raise ModelError("order does not match the summation/maximization sets")
    return sum_vars, max_vars, order


def eliminate_potentials(potentials: Sequence[Potential], order: EliminationOrder,
                         want_argmax: bool = False):
    """Run the generic elimination loop over already-restricted potentials.

    Returns ``(value, largest_psi_size, argmax_records)`` where each record is
    ``(var, remaining_scope, argmax_table)`` for a maximized variable.
    """
    pool = list(potentials)
    largest = 1
    records = []
    for var in order.sequence:
        mentioning = [p for p in pool if var in p.scope]
        if not mentioning:
            continue
        pool = [p for p in pool if var not in p.scope]
        psi = multiply_all(mentioning)
        largest = max(largest, psi.size)
        if var in order.max_vars:
            out, arg = max_out(psi, var)
            if want_argmax:
                records.append((var, out.scope, arg))
        else:
            out = sum_out(psi, var)
        pool.append(out)
    final = multiply_all(pool)
    if final.scope:
        raise ModelError(f"variables {final.scope} were never eliminated")
    return final.scalar(), largest, records


def _back_substitute(records, fallback: int = 0) -> tuple[dict[int, int], bool]:
    assignment: dict[int, int] = {}
    complete = True
    for var, scope, arg in reversed(records):
        index = []
        for u in scope:
            if u not in assignment:
                complete = False
            index.append(assignment.get(u, fallback))
        assignment[var] = int(arg[tuple(index)]) if scope else int(arg)
    return assignment, complete


def restricted_cpts(net: BayesianNetwork, evidence: Mapping[int, int]) -> list[Potential]:
    return [restrict(cpt, evidence) for cpt in net.cpts]


def eliminate(net: BayesianNetwork, evidence: Mapping[int, int], sum_vars, max_vars,
              order: EliminationOrder | Sequence[int] | None = None) -> EliminationResult:
    """Compute ``max_M sum_S prod phi_e`` along ``order``.

    ``sum_vars=None`` means every non-evidence variable outside ``max_vars``.
    With a valid order the value is exact (Pr(e), MPE or MAP probability) and
    the maximizing instantiation is recovered from the argmax tables.
    """
    sum_vars, max_vars, order = _check_roles(net, evidence, sum_vars, max_vars, order)
    pots = restricted_cpts(net, evidence)
    value, largest, records = eliminate_potentials(pots, order, want_argmax=bool(max_vars))
    res = EliminationResult(value, math.log2(largest) - 1)
    if max_vars:
        if value.is_zero():
            return res
        assignment, complete = _back_substitute(records)
        if order.is_valid() and complete:
            res.solution = assignment
        else:
            res.candidate = assignment
    elif order.is_valid():
        res.solution = {}
    return res


def relaxed_map_bound(net: BayesianNetwork, evidence: Mapping[int, int], sum_vars, max_vars,
                      order: EliminationOrder | Sequence[int]) -> Scaled:
    """Upper bound on the MAP probability from an arbitrary (possibly invalid) order."""
    return eliminate(net, evidence, sum_vars, max_vars, order).value


def width(net: BayesianNetwork, evidence: Mapping[int, int],
          order: EliminationOrder | Sequence[int]) -> float:
    """``log2(s) - 1`` for the largest product table ``s`` the order would build."""
    seq = order.sequence if isinstance(order, EliminationOrder) else tuple(order)
    expected = set(range(net.n)) - set(evidence)
    if set(seq) != expected or len(seq) != len(expected):
        raise ModelError("order must cover exactly the non-evidence variables")
    scopes = [frozenset(v for v in cpt.scope if v not in evidence) for cpt in net.cpts]
    cards = net.cards
    largest = 1
    for var in seq:
        mentioning = [s for s in scopes if var in s]
        if not mentioning:
            continue
        scopes = [s for s in scopes if var not in s]
        union = frozenset().union(*mentioning)
        largest = max(largest, int(np.prod([cards[u] for u in union], dtype=np.int64)))
        scopes.append(union - {var})
    return math.log2(largest) - 1


def constrained_width(net: BayesianNetwork, evidence: Mapping[int, int], max_vars) -> float:
    """Width of the constrained min-fill order (sums first) -- the usual c-w estimate."""
    order = min_fill_order(network_graph(net, evidence), constrained=True, max_vars=max_vars)
    return width(net, evidence, order)
