"""Jointrees built from elimination orders, max-variable promotion, and
prime-factor splitting of large variables."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .elimination import EliminationOrder, interaction_graph, restricted_cpts
from .model import BayesianNetwork, ModelError, Potential, Variable


@dataclass
class Jointree:
    clusters: list[set[int]]
    adjacency: list[set[int]]
    # cluster index holding each potential
    assignment: list[int]
    potentials: list[Potential]
    cards: tuple[int, ...]
    size_budget: int

    def __len__(self) -> int:
        return len(self.clusters)

    def cluster_size(self, i: int) -> int:
        size = 1
        for v in self.clusters[i]:
            size *= self.cards[v]
        return size

    def largest_cluster_size(self) -> int:
        return max(self.cluster_size(i) for i in range(len(self)))

    def separator(self, i: int, j: int) -> frozenset[int]:
        return frozenset(self.clusters[i] & self.clusters[j])

    def edges(self) -> list[tuple[int, int]]:
        return [(i, j) for i in range(len(self)) for j in sorted(self.adjacency[i]) if i < j]

    def rooted(self, root: int) -> tuple[list[int | None], list[list[int]], list[int]]:
        """Parent pointers, child lists and a BFS order from ``root``."""
        parent: list[int | None] = [None] * len(self)
        children: list[list[int]] = [[] for _ in range(len(self))]
        seen = {root}
        order = []
        queue = deque([root])
        while queue:
            i = queue.popleft()
            order.append(i)
            for j in sorted(self.adjacency[i]):
                if j not in seen:
                    seen.add(j)
                    parent[j] = i
                    children[i].append(j)
                    queue.append(j)
        return parent, children, order

    def copy(self) -> "Jointree":
        return Jointree([set(c) for c in self.clusters], [set(a) for a in self.adjacency],
                        list(self.assignment), list(self.potentials), self.cards, self.size_budget)

    def verify(self) -> None:
        """Raise ``AssertionError`` if any jointree invariant is broken."""
        n = len(self)
        assert n >= 1, "jointree has no clusters"
        for i in range(n):
            for j in self.adjacency[i]:
                assert i in self.adjacency[j], f"asymmetric edge {i}-{j}"
                assert i != j, "self loop"
        assert len(self.edges()) == n - 1, "edge count is not that of a tree"
        _, _, order = self.rooted(0)
        assert len(order) == n, "jointree is not connected"
        variables = set().union(*self.clusters)
        for v in variables:
            holders = {i for i in range(n) if v in self.clusters[i]}
            start = min(holders)
            seen = {start}
            queue = [start]
            while queue:
                i = queue.pop()
                for j in self.adjacency[i]:
                    if j in holders and j not in seen:
                        seen.add(j)
                        queue.append(j)
            assert seen == holders, f"running intersection fails for variable {v}"
        for p, i in zip(self.potentials, self.assignment):
            assert set(p.scope) <= self.clusters[i], f"potential {p.scope} not inside cluster {i}"
        for i in range(n):
            assert self.cluster_size(i) <= self.size_budget, f"cluster {i} exceeds size budget"


def build_jointree(net: BayesianNetwork, evidence: Mapping[int, int],
                   order: EliminationOrder | Sequence[int]) -> Jointree:
    """Jointree whose clusters are the maximal elimination cliques of ``order``."""
    seq = order.sequence if isinstance(order, EliminationOrder) else tuple(order)
    nodes = [v for v in range(net.n) if v not in evidence]
    if sorted(seq) != nodes:
        raise ModelError("order must cover exactly the non-evidence variables")
    pots = restricted_cpts(net, evidence)
    graph = interaction_graph((p.scope for p in pots), nodes)

    position = {v: k for k, v in enumerate(seq)}
    cliques: list[set[int]] = []
    parent: list[int | None] = []
    for v in seq:
        nbrs = graph.pop(v)
        for a in nbrs:
            graph[a].discard(v)
            graph[a].update(nbrs - {a})
        cliques.append({v} | nbrs)
        parent.append(position[min(nbrs, key=position.__getitem__)] if nbrs else None)

    clusters = cliques
    adjacency: list[set[int]] = [set() for _ in clusters]
    for i, p in enumerate(parent):
        if p is not None:
            adjacency[i].add(p)
            adjacency[p].add(i)

    # contract edges whose endpoints are nested so only maximal cliques remain
    alive = set(range(len(clusters)))
    changed = True
    while changed:
        changed = False
        for i in sorted(alive):
            for j in sorted(adjacency[i]):
                if clusters[i] <= clusters[j]:
                    small, big = i, j
                elif clusters[j] <= clusters[i]:
                    small, big = j, i
                else:
                    continue
                for k in adjacency[small]:
                    adjacency[k].discard(small)
                    if k != big:
                        adjacency[k].add(big)
                        adjacency[big].add(k)
                adjacency[small] = set()
                alive.discard(small)
                changed = True
                break
            if changed:
                break

    keep = sorted(alive)
    renum = {old: new for new, old in enumerate(keep)}
    clusters = [set(clusters[i]) for i in keep]
    adjacency = [{renum[j] for j in adjacency[i]} for i in keep]
    if not clusters:
        clusters, adjacency = [set()], [set()]

    # join the components of a forest through empty separators
    comp = [-1] * len(clusters)
    reps = []
    for start in range(len(clusters)):
        if comp[start] >= 0:
            continue
        reps.append(start)
        stack = [start]
        comp[start] = start
        while stack:
            i = stack.pop()
            for j in adjacency[i]:
                if comp[j] < 0:
                    comp[j] = start
                    stack.append(j)
    for a, b in zip(reps, reps[1:]):
        adjacency[a].add(b)
        adjacency[b].add(a)

    assignment = []
    for p in pots:
        scope = set(p.scope)
        assignment.append(next(i for i, c in enumerate(clusters) if scope <= c))
    jt = Jointree(clusters, adjacency, assignment, pots, net.cards, 1)
    jt.size_budget = jt.largest_cluster_size()
    return jt


def choose_root(jt: Jointree, max_vars: Iterable[int]) -> int:
    """Cluster with the most maximization variables; lowest index on ties."""
    max_vars = set(max_vars)
    return max(range(len(jt)), key=lambda i: (len(jt.clusters[i] & max_vars), -i))


def promote(jt: Jointree, root: int, max_vars: Iterable[int],
            size_budget: int | None = None) -> Jointree:
    """Move maximization variables toward ``root`` without any cluster exceeding the budget.

    Mutates and returns ``jt``.  Candidates for a cluster are tried in order
    of increasing cardinality, then variable id.
    """
    max_vars = frozenset(max_vars)
    budget = jt.size_budget if size_budget is None else size_budget
    _, children, _ = jt.rooted(root)

    def visit(i: int) -> None:
        for k in children[i]:
            visit(k)
        candidates = set()
        for k in children[i]:
            candidates |= (jt.clusters[k] & max_vars) - jt.clusters[i]
        size = jt.cluster_size(i)
        for v in sorted(candidates, key=lambda v: (jt.cards[v], v)):
            if size > budget:
                break
            if size * jt.cards[v] <= budget:
                jt.clusters[i].add(v)
                size *= jt.cards[v]

    if max_vars:
        visit(root)
    return jt


# ---------------------------------------------------------------------------
# prime-factor splitting


def prime_factors(n: int) -> list[int]:
    out = []
    d = 2
    while d * d <= n:
        while n % d == 0:
            out.append(d)
            n //= d
        d += 1
    if n > 1:
        out.append(n)
    return out


@dataclass
class VariableSplit:
    """Bijection between a network and its prime-factor split copy."""

    parts: list[tuple[int, ...]]          # old id -> new ids
    factors: list[tuple[int, ...]]        # old id -> cardinalities of the parts
    owner: dict[int, tuple[int, int]] = field(default_factory=dict)  # new id -> (old id, position)

    def __post_init__(self):
        for old, ids in enumerate(self.parts):
            for pos, new in enumerate(ids):
                self.owner[new] = (old, pos)

    def split_state(self, var: int, state: int) -> tuple[int, ...]:
        return tuple(int(s) for s in np.unravel_index(state, self.factors[var]))

    def join_state(self, var: int, states: Sequence[int]) -> int:
        return int(np.ravel_multi_index(tuple(states), self.factors[var]))

    def map_vars(self, variables: Iterable[int]) -> list[int]:
        return sorted(new for v in variables for new in self.parts[v])

    def map_assignment(self, assignment: Mapping[int, int]) -> dict[int, int]:
        out = {}
        for var, state in assignment.items():
            for new, s in zip(self.parts[var], self.split_state(var, state)):
                out[new] = s
        return out

    map_evidence = map_assignment

    def unmap_assignment(self, assignment: Mapping[int, int]) -> dict[int, int]:
        """Translate back; old variables with any part missing are dropped."""
        out = {}
        for old, ids in enumerate(self.parts):
            if all(i in assignment for i in ids):
                out[old] = self.join_state(old, [assignment[i] for i in ids])
        return out


def split_prime_factors(net: BayesianNetwork,
                        variables: Iterable[int] | None = None) -> tuple[BayesianNetwork, VariableSplit]:
    """Replace composite-cardinality variables by chains of prime-cardinality ones.

    A variable with cardinality ``f1*f2*...`` (factors ascending) becomes parts
    ``X.0, X.1, ...`` with CPTs ``P(X.j | X.0..X.j-1, parents)`` derived from
    the original CPT, so the joint distribution is unchanged.  Old state ``x``
    maps to part states by mixed radix with the first part most significant.
    """
    eligible = set(range(net.n)) if variables is None else set(variables)
    factors = []
    for v in range(net.n):
        f = prime_factors(net.card(v)) if v in eligible else []
        factors.append(tuple(f) if len(f) > 1 else (net.card(v),))
    parts = []
    nxt = 0
    for v in range(net.n):
        parts.append(tuple(range(nxt, nxt + len(factors[v]))))
        nxt += len(factors[v])
    mapping = VariableSplit(parts, factors)

    new_vars: list[Variable] = []
    for v in range(net.n):
        name = net.variables[v].name
        if len(parts[v]) == 1:
            new_vars.append(Variable(parts[v][0], name, net.card(v)))
        else:
            for j, (nid, c) in enumerate(zip(parts[v], factors[v])):
                new_vars.append(Variable(nid, f"{name}.{j}", c))

    new_parents: list[tuple[int, ...]] = [()] * nxt
    new_cpts: list[Potential | None] = [None] * nxt
    for v in range(net.n):
        cpt = net.cpts[v]
        scope = tuple(n for u in cpt.scope for n in parts[u])
        shape = tuple(c for u in cpt.scope for c in factors[u])
        table = cpt.values.reshape(shape)
        pa = tuple(n for u in net.parents[v] for n in parts[u])
        own = parts[v]
        if len(own) == 1:
            new_parents[own[0]] = pa
            new_cpts[own[0]] = Potential(scope, table)
            continue
        axis = {n: k for k, n in enumerate(scope)}
        for j, nid in enumerate(own):
            later = tuple(axis[n] for n in own[j + 1:])
            marg = table.sum(axis=later) if later else table
            sub_scope = tuple(n for n in scope if n not in own[j + 1:])
            ax = sub_scope.index(nid)
            denom = marg.sum(axis=ax, keepdims=True)
            with np.errstate(invalid="ignore", divide="ignore"):
                cond = np.where(denom > 0, marg / np.where(denom > 0, denom, 1.0),
                                1.0 / factors[v][j])
            new_parents[nid] = tuple(sorted(pa + own[:j]))
            new_cpts[nid] = Potential(sub_scope, cond)
    split = BayesianNetwork(tuple(new_vars), tuple(new_parents), tuple(new_cpts))
    return split, mapping
