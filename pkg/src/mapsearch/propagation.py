"""Mixed max/sum message passing over a jointree.

A message from cluster ``i`` to ``j`` multiplies the cluster's own potentials
with every other incoming message, sums out the summation variables that do
not survive into ``j``, then maxes out the surviving maximization variables
that do not.  The product at any cluster, fully eliminated the same way, is an
upper bound on the MAP probability; keeping one max variable instead gives the
per-value bounds the search uses for ordering and pruning.

Evidence asserted during search (``V = v`` or ``V != v``) is kept as a 0/1
mask per variable, multiplied in at the cluster nearest the root that
contains the variable.  Only messages pointing away from that cluster are
invalidated, and retracting an assertion puts the saved messages back.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .jointree import Jointree, choose_root
from .model import (
    ModelError,
    Potential,
    Scaled,
    max_out_many,
    multiply_all,
    sum_out_many,
)


class AssertionConflict(ModelError):
    pass


@dataclass
class ValueBounds:
    """Upper bounds ``B_v`` for every state of one maximization variable."""

    var: int
    values: np.ndarray
    scale_exp: int

    def __len__(self) -> int:
        return len(self.values)

    def bound(self, state: int) -> Scaled:
        return Scaled(float(self.values[state]), self.scale_exp)

    def bounds(self) -> list[Scaled]:
        return [self.bound(s) for s in range(len(self.values))]

    def best_state(self) -> int:
        return int(np.argmax(self.values))

    def retained(self, incumbent: Scaled) -> list[int]:
        """States whose bound strictly exceeds ``incumbent``."""
        return [s for s in range(len(self.values)) if self.bound(s) > incumbent]


class PropagationState:
    def __init__(self, jt: Jointree, max_vars: Iterable[int], root: int | None = None,
                 full_recompute: bool = False):
        self.jt = jt
        self.max_vars = frozenset(max_vars)
        self.root = choose_root(jt, self.max_vars) if root is None else root
        self.full_recompute = full_recompute
        n = len(jt)
        self.parent, self.children, bfs = jt.rooted(self.root)
        self.cluster_vars = [frozenset(c) for c in jt.clusters]

        self.host: dict[int, int] = {}
        for i in bfs:
            for v in sorted(self.cluster_vars[i]):
                self.host.setdefault(v, i)
        self.hosted: list[list[int]] = [[] for _ in range(n)]
        for v, i in sorted(self.host.items()):
            self.hosted[i].append(v)

        self.base = [multiply_all(p for p, c in zip(jt.potentials, jt.assignment) if c == i)
                     for i in range(n)]
        self.neighbors = [sorted(a) for a in jt.adjacency]
        # messages that depend on each cluster: those directed away from it
        self._away: list[list[tuple[int, int]]] = []
        for h in range(n):
            par, _, order = jt.rooted(h)
            self._away.append([(par[c], c) for c in order if par[c] is not None])

        self.masks: dict[int, np.ndarray] = {}
        self._messages: dict[tuple[int, int], Potential] = {}
        self._beliefs: dict[int, Potential] = {}
        self._stack: list[tuple[int, np.ndarray | None, dict]] = []

    # -- evidence -----------------------------------------------------------

    def card(self, var: int) -> int:
        return self.jt.cards[var]

    def allowed(self, var: int) -> np.ndarray:
        mask = self.masks.get(var)
        return np.ones(self.card(var), dtype=bool) if mask is None else mask.copy()

    def fixed_state(self, var: int) -> int | None:
        mask = self.masks.get(var)
        if mask is not None and mask.sum() == 1:
            return int(np.flatnonzero(mask)[0])
        return None

    def _invalidate(self, var: int) -> dict:
        saved = {}
        for e in self._away[self.host[var]]:
            msg = self._messages.pop(e, None)
            if msg is not None:
                saved[e] = msg
        self._beliefs.clear()
        return saved

    def _install(self, var: int, mask: np.ndarray | None) -> None:
        if mask is None or mask.all():
            self.masks.pop(var, None)
        else:
            self.masks[var] = mask

    def _push(self, var: int, mask: np.ndarray) -> int:
        if var not in self.host:
            raise ModelError(f"variable {var} is not in the jointree")
        old = self.masks.get(var)
        saved = self._invalidate(var)
        self._install(var, mask)
        self._stack.append((var, old, saved))
        return len(self._stack) - 1

    def assert_equal(self, var: int, state: int) -> int:
        allowed = self.allowed(var)
        if not allowed[state]:
            raise AssertionConflict(f"state {state} of variable {var} is already excluded")
        mask = np.zeros(self.card(var), dtype=bool)
        mask[state] = True
        return self._push(var, mask)

    def assert_not_equal(self, var: int, state: int) -> int:
        allowed = self.allowed(var)
        if self.fixed_state(var) == state:
            raise AssertionConflict(f"variable {var} is fixed to state {state}")
        allowed[state] = False
        if not allowed.any():
            raise AssertionConflict(f"excluding state {state} leaves variable {var} no states")
        return self._push(var, allowed)

    def retract(self, token: int) -> None:
        if token != len(self._stack) - 1:
            raise ModelError("assertions must be retracted in reverse order")
        var, old, saved = self._stack.pop()
        self._invalidate(var)
        self._install(var, old)
        self._messages.update(saved)

    def set_mask(self, var: int, allowed: np.ndarray | None) -> None:
        """Replace a variable's mask outright (no undo); for local search on a private state."""
        if self._stack:
            raise ModelError("set_mask cannot be mixed with pending assertions")
        if allowed is not None and not np.any(allowed):
            raise AssertionConflict(f"mask leaves variable {var} no states")
        self._invalidate(var)
        self._install(var, None if allowed is None else np.asarray(allowed, dtype=bool).copy())

    # -- messages -----------------------------------------------------------

    def _local(self, i: int) -> list[Potential]:
        pots = [self.base[i]]
        for v in self.hosted[i]:
            mask = self.masks.get(v)
            if mask is not None:
                pots.append(Potential._raw((v,), mask.astype(float), 0))
        return pots

    def _eliminate(self, pot: Potential, drop: frozenset[int]) -> Potential:
        sums = [v for v in pot.scope if v in drop and v not in self.max_vars]
        maxes = [v for v in pot.scope if v in drop and v in self.max_vars]
        return max_out_many(sum_out_many(pot, sums), maxes)

    def message(self, i: int, j: int) -> Potential:
        key = (i, j)
        msg = self._messages.get(key)
        if msg is None:
            pots = self._local(i)
            pots.extend(self.message(k, i) for k in self.neighbors[i] if k != j)
            prod = multiply_all(pots)
            msg = self._eliminate(prod, self.cluster_vars[i] - self.cluster_vars[j])
            self._messages[key] = msg
        return msg

    def _fresh(self) -> None:
        if self.full_recompute:
            self._messages.clear()
            self._beliefs.clear()

    def cluster_belief(self, i: int) -> Potential:
        """Cluster product with all incoming messages, summation variables summed out."""
        bel = self._beliefs.get(i)
        if bel is None:
            pots = self._local(i)
            pots.extend(self.message(k, i) for k in self.neighbors[i])
            prod = multiply_all(pots)
            bel = sum_out_many(prod, [v for v in prod.scope if v not in self.max_vars])
            self._beliefs[i] = bel
        return bel

    def bound(self) -> Scaled:
        """Upper bound on the MAP probability under the current assertions (inward pass)."""
        self._fresh()
        bel = self.cluster_belief(self.root)
        return max_out_many(bel, bel.scope).scalar()

    def bound_at(self, cluster: int) -> Scaled:
        self._fresh()
        bel = self.cluster_belief(cluster)
        return max_out_many(bel, bel.scope).scalar()

    def value_bounds(self, var: int, cluster: int | None = None) -> ValueBounds:
        """Bounds with ``var`` fixed to each state, read at the cluster nearest the root."""
        if var not in self.max_vars:
            raise ModelError(f"variable {var} is not a maximization variable")
        self._fresh()
        c = self.host[var] if cluster is None else cluster
        bel = self.cluster_belief(c)
        out = max_out_many(bel, [u for u in bel.scope if u != var])
        if out.scope:
            values = np.array(out.values, dtype=float)
        else:
            values = np.full(self.card(var), float(out.values))
            mask = self.masks.get(var)
            if mask is not None:
                values = values * mask
        return ValueBounds(var, values, out.scale_exp)

    def outward_pass(self) -> None:
        """Make every message in both directions available."""
        self._fresh()
        for i in range(len(self.jt)):
            for j in self.neighbors[i]:
                self.message(i, j)

    # -- introspection ------------------------------------------------------

    def induced_order(self) -> list[int]:
        """Elimination order equivalent to an inward pass toward the root."""
        _, _, bfs = self.jt.rooted(self.root)
        order = []
        for i in reversed(bfs):
            p = self.parent[i]
            drop = self.cluster_vars[i] - (self.cluster_vars[p] if p is not None else frozenset())
            order += sorted(v for v in drop if v not in self.max_vars)
            order += sorted(v for v in drop if v in self.max_vars)
        return order

    def fresh_copy(self) -> "PropagationState":
        """Independent state over the same jointree with no assertions."""
        return PropagationState(self.jt, self.max_vars, self.root, self.full_recompute)
