"""Reference computations that share no code with the solver's potential algebra."""

from __future__ import annotations

import itertools

import numpy as np

from mapsearch.model import BayesianNetwork, Potential, Variable, default_name

N1_TEXT = "BAYES\n2\n2 2\n2\n1 0\n2 0 1\n2 0.7 0.3\n4 0.7 0.3 0.2 0.8\n"


def full_joint(net: BayesianNetwork) -> np.ndarray:
    """Joint distribution as an n-axis array, by the chain rule over fancy indexing."""
    shape = net.cards
    grids = np.indices(shape).reshape(net.n, -1)
    joint = np.ones(grids.shape[1])
    for cpt in net.cpts:
        joint *= cpt.values[tuple(grids[v] for v in cpt.scope)]
    return joint.reshape(shape)


def joint_map(net: BayesianNetwork, evidence: dict, max_vars,
              allowed: dict | None = None) -> tuple[dict, float, float]:
    """(lexicographically first MAP instantiation, its probability, Pr(e)) by enumeration.

    ``allowed`` maps a variable to a boolean mask of states it may take.
    """
    joint = full_joint(net)
    for v, mask in (allowed or {}).items():
        shape = [1] * net.n
        shape[v] = net.card(v)
        joint = joint * np.asarray(mask, dtype=float).reshape(shape)
    index = tuple(evidence.get(v, slice(None)) for v in range(net.n))
    sub = joint[index]
    free = [v for v in range(net.n) if v not in evidence]
    max_vars = sorted(max_vars)
    keep_axes = tuple(free.index(v) for v in max_vars)
    sum_axes = tuple(i for i in range(len(free)) if i not in keep_axes)
    marg = sub.sum(axis=sum_axes) if sum_axes else sub
    pr_e = float(sub.sum())
    if not max_vars:
        return {}, pr_e, pr_e
    flat = np.asarray(marg).reshape(-1)
    best = int(np.argmax(flat))
    states = np.unravel_index(best, np.asarray(marg).shape)
    return {v: int(s) for v, s in zip(max_vars, states)}, float(flat[best]), pr_e


def random_network(rng: np.random.Generator, n: int, max_parents: int = 3,
                   cards=(2,), zero_prob: float = 0.0) -> BayesianNetwork:
    """Small random DAG with cardinalities drawn from ``cards``."""
    card = [int(rng.choice(cards)) for _ in range(n)]
    parents, cpts = [], []
    for i in range(n):
        k = int(rng.integers(0, min(i, max_parents) + 1))
        ps = tuple(sorted(int(p) for p in rng.choice(i, size=k, replace=False))) if k else ()
        shape = tuple(card[p] for p in ps) + (card[i],)
        table = rng.dirichlet(np.ones(card[i]), size=int(np.prod(shape[:-1], dtype=int)))
        if zero_prob:
            mask = rng.random(table.shape) < zero_prob
            mask[np.arange(table.shape[0]), rng.integers(card[i], size=table.shape[0])] = False
            table = np.where(mask, 0.0, table)
            table /= table.sum(axis=1, keepdims=True)
        parents.append(ps)
        cpts.append(Potential(ps + (i,), table.reshape(shape)))
    variables = tuple(Variable(i, default_name(i), card[i]) for i in range(n))
    return BayesianNetwork(variables, tuple(parents), tuple(cpts))


def random_query(rng: np.random.Generator, net: BayesianNetwork, leaf_only: bool = True):
    """Positive-probability leaf evidence and a random nonempty MAP set."""
    candidates = net.leaves() if leaf_only else list(range(net.n))
    joint = full_joint(net)
    for _ in range(200):
        count = int(rng.integers(0, max(1, len(candidates) // 2) + 1))
        ev_vars = sorted(int(v) for v in rng.choice(candidates, size=count, replace=False))
        ev = {v: int(rng.integers(net.card(v))) for v in ev_vars}
        index = tuple(ev.get(v, slice(None)) for v in range(net.n))
        if joint[index].sum() > 0 and len(ev) < net.n:
            break
    free = [v for v in range(net.n) if v not in ev]
    m = int(rng.integers(1, len(free) + 1))
    mv = sorted(int(v) for v in rng.choice(free, size=m, replace=False))
    return ev, mv


def brute_potential_sum(values: np.ndarray, axis: int) -> np.ndarray:
    """Sum along an axis with an explicit Python loop (reference for sum_out)."""
    out = np.zeros(values.shape[:axis] + values.shape[axis + 1:])
    for idx in itertools.product(*(range(c) for c in values.shape)):
        rest = idx[:axis] + idx[axis + 1:]
        out[rest] += values[idx]
    return out
