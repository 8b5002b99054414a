"""Mini-bucket upper bound on the MAP probability (the comparison baseline)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

from .elimination import EliminationOrder, _check_roles, network_graph, restricted_cpts
from .model import BayesianNetwork, ModelError, Scaled, max_out, multiply_all, sum_out


class InfeasibleIBound(ModelError):
    pass


@dataclass(frozen=True)
class MiniBucketConfig:
    ibound: int


def partition(potentials, ibound: int) -> list[list]:
    """First-fit of potentials (largest scope first) into groups of at most ``ibound`` variables."""
    ranked = sorted(enumerate(potentials), key=lambda ip: (-len(ip[1].scope), ip[0]))
    groups: list[tuple[set[int], list]] = []
    for _, p in ranked:
        for scope, members in groups:
            if len(scope | set(p.scope)) <= ibound:
                scope.update(p.scope)
                members.append(p)
                break
        else:
            groups.append((set(p.scope), [p]))
    return [members for _, members in groups]


def minibucket_bound(net: BayesianNetwork, evidence: Mapping[int, int], sum_vars, max_vars,
                     order: EliminationOrder | Sequence[int], ibound: int) -> Scaled:
    sum_vars, max_vars, order = _check_roles(net, evidence, sum_vars, max_vars, order)
    pool = restricted_cpts(net, evidence)
    widest = max((len(p.scope) for p in pool), default=0)
    if ibound < max(widest, 1):
        raise InfeasibleIBound(f"i-bound {ibound} is below the largest CPT scope ({widest})")
    for var in order.sequence:
        bucket = [p for p in pool if var in p.scope]
        if not bucket:
            continue
        pool = [p for p in pool if var not in p.scope]
        for k, group in enumerate(partition(bucket, ibound)):
            psi = multiply_all(group)
            if var in max_vars or k > 0:
                pool.append(max_out(psi, var)[0])
            else:
                pool.append(sum_out(psi, var))
    return multiply_all(pool).scalar()


def induced_ibound(net: BayesianNetwork, evidence: Mapping[int, int],
                   order: EliminationOrder | Sequence[int]) -> int:
    """Largest elimination clique (in variables) of ``order``: treewidth + 1."""
    seq = order.sequence if isinstance(order, EliminationOrder) else tuple(order)
    g = network_graph(net, evidence)
    best = 1
    for v in seq:
        nbrs = g.pop(v)
        best = max(best, len(nbrs) + 1)
        for a in nbrs:
            g[a].discard(v)
            g[a].update(nbrs - {a})
    return best
