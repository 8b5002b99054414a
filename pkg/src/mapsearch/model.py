"""Variables, potentials, Bayesian networks and the text formats they travel in.

Potentials are dense numpy tables whose axes follow the scope, which is always
sorted by ascending variable id.  Flattening a table in C order therefore gives
the canonical layout with the last scope variable varying fastest.

Each potential carries an integer ``scale_exp`` so the represented value of an
entry is ``entry * 2**scale_exp``.  Products of many small CPT entries would
otherwise underflow long before a search over a large network is finished.
"""

from __future__ import annotations

import math
import string
from dataclasses import dataclass, field
from functools import total_ordering
from typing import Iterable, Mapping, Sequence

import numpy as np

# entries are rescaled when the largest one leaves [2**-RESCALE_BITS, 2**RESCALE_BITS]
RESCALE_BITS = 512
CPT_TOLERANCE = 1e-9

Evidence = dict  # variable id -> state index


class ModelError(ValueError):
    """Base class for malformed models and queries."""


class InvalidEvidenceError(ModelError):
    pass


class DomainError(ModelError):
    """A variable was eliminated from a potential that does not mention it."""


class ParseError(ModelError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


# ---------------------------------------------------------------------------
# scaled scalars


@total_ordering
class Scaled:
    """A nonnegative number stored as ``mantissa * 2**exp``.

    The mantissa is kept in ``[0.5, 1)`` (or is exactly zero) so comparisons
    can look at the exponent first and never overflow.
    """

    __slots__ = ("mantissa", "exp")

    def __init__(self, value: float = 0.0, exp: int = 0):
        value = float(value)
        if value < 0 or not math.isfinite(value):
            raise ValueError(f"scaled values must be finite and >= 0, got {value}")
        if value == 0.0:
            self.mantissa, self.exp = 0.0, 0
        else:
            m, e = math.frexp(value)
            self.mantissa, self.exp = m, int(exp) + e

    @classmethod
    def from_log10(cls, log10_value: float) -> "Scaled":
        if log10_value == -math.inf:
            return cls(0.0)
        log2_value = log10_value / math.log10(2.0)
        whole = math.floor(log2_value)
        return cls(2.0 ** (log2_value - whole), whole)

    def is_zero(self) -> bool:
        return self.mantissa == 0.0

    def __float__(self) -> float:
        if self.mantissa == 0.0:
            return 0.0
        try:
            return math.ldexp(self.mantissa, self.exp)
        except OverflowError:
            return math.inf

    def log2(self) -> float:
        return -math.inf if self.mantissa == 0.0 else math.log2(self.mantissa) + self.exp

    def log10(self) -> float:
        return self.log2() * math.log10(2.0)

    def __mul__(self, other: "Scaled | float") -> "Scaled":
        if not isinstance(other, Scaled):
            other = Scaled(other)
        return Scaled(self.mantissa * other.mantissa, self.exp + other.exp)

    __rmul__ = __mul__

    def ratio(self, other: "Scaled") -> float:
        """``self / other`` as a plain float (inf when other is zero)."""
        if other.mantissa == 0.0:
            return math.inf if self.mantissa else math.nan
        if self.mantissa == 0.0:
            return 0.0
        shift = self.exp - other.exp
        if shift > 1000:
            return math.inf
        if shift < -1000:
            return 0.0
        return math.ldexp(self.mantissa / other.mantissa, shift)

    def _key(self) -> tuple[int, int, float]:
        if self.mantissa == 0.0:
            return (0, 0, 0.0)
        return (1, self.exp, self.mantissa)

    def __eq__(self, other: object) -> bool:
        if isinstance(other, (int, float)):
            other = Scaled(other)
        if not isinstance(other, Scaled):
            return NotImplemented
        return self._key() == other._key()

    def __lt__(self, other: "Scaled | float") -> bool:
        if isinstance(other, (int, float)):
            other = Scaled(other)
        return self._key() < other._key()

    def __hash__(self) -> int:
        return hash(self._key())

    def __repr__(self) -> str:
        value = float(self)
        if value == 0.0 and self.mantissa:
            return f"Scaled(10**{self.log10():.6g})"
        return f"Scaled({value!r})"


def rel_close(a: "Scaled | float", b: "Scaled | float", rtol: float = 1e-9) -> bool:
    """Relative closeness that stays meaningful for values outside double range."""
    a = a if isinstance(a, Scaled) else Scaled(a)
    b = b if isinstance(b, Scaled) else Scaled(b)
    if a.is_zero() or b.is_zero():
        return a.is_zero() and b.is_zero()
    r = a.ratio(b)
    return abs(r - 1.0) <= rtol


def le_rel(a: "Scaled | float", b: "Scaled | float", rtol: float = 1e-9) -> bool:
    """``a <= b * (1 + rtol)``."""
    a = a if isinstance(a, Scaled) else Scaled(a)
    b = b if isinstance(b, Scaled) else Scaled(b)
    if a.is_zero():
        return True
    if b.is_zero():
        return False
    return a.ratio(b) <= 1.0 + rtol


# ---------------------------------------------------------------------------
# potentials


class Potential:
    """Dense nonnegative table over a sorted scope of variable ids."""

    __slots__ = ("scope", "values", "scale_exp")

    def __init__(self, scope: Iterable[int], values, scale_exp: int = 0):
        scope = tuple(int(v) for v in scope)
        values = np.array(values, dtype=float)
        if any(a >= b for a, b in zip(scope, scope[1:])):
            raise ModelError(f"potential scope must be strictly increasing: {scope}")
        if values.ndim != len(scope):
            raise ModelError(
                f"table has {values.ndim} axes but scope has {len(scope)} variables")
        if values.size == 0:
            raise ModelError("potential tables cannot be empty")
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise ModelError("potential entries must be finite and nonnegative")
        self.scope = scope
        self.values = values
        self.scale_exp = int(scale_exp)

    @classmethod
    def _raw(cls, scope: tuple[int, ...], values: np.ndarray, scale_exp: int = 0) -> "Potential":
        # unchecked constructor for the hot paths
        p = object.__new__(cls)
        p.scope = scope
        p.values = values
        p.scale_exp = scale_exp
        return p

    @classmethod
    def from_flat(cls, scope: Sequence[int], cards: Sequence[int], table, scale_exp: int = 0):
        table = np.asarray(table, dtype=float)
        expected = int(np.prod(cards, dtype=np.int64)) if cards else 1
        if table.size != expected:
            raise ModelError(f"table has {table.size} entries, expected {expected}")
        return cls(scope, table.reshape(tuple(cards)), scale_exp)

    @classmethod
    def trivial(cls, value: float = 1.0) -> "Potential":
        return cls((), np.array(value, dtype=float))

    @property
    def cards(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def table(self) -> np.ndarray:
        """Flat row-major view of the entries (last scope variable fastest)."""
        return self.values.reshape(-1)

    @property
    def size(self) -> int:
        return self.values.size

    def is_trivial(self) -> bool:
        return not self.scope

    def scalar(self) -> Scaled:
        """Value of a trivial potential."""
        if self.scope:
            raise ModelError("scalar() needs a trivial potential")
        return Scaled(float(self.values), self.scale_exp)

    def scaled_entry(self, index) -> Scaled:
        return Scaled(float(self.values[index]), self.scale_exp)

    def normalized(self) -> "Potential":
        """Fold the magnitude of the largest entry into ``scale_exp`` if it drifted."""
        return _renormalize(self)

    def __repr__(self) -> str:
        return f"Potential(scope={self.scope}, table={self.table.tolist()}, scale_exp={self.scale_exp})"


def _renormalize(p: Potential) -> Potential:
    if p.values.size == 0:
        return p
    top = float(p.values.max())
    if top == 0.0:
        return p
    _, e = math.frexp(top)
    if -RESCALE_BITS <= e <= RESCALE_BITS:
        return p
    return Potential._raw(p.scope, np.ldexp(p.values, -e), p.scale_exp + e)


def _expand(p: Potential, scope: tuple[int, ...]) -> np.ndarray:
    # view of p's table broadcastable against a table over the (sorted) superset scope
    if p.scope == scope:
        return p.values
    shape = [1] * len(scope)
    pos = {v: i for i, v in enumerate(scope)}
    for v, c in zip(p.scope, p.values.shape):
        shape[pos[v]] = c
    return p.values.reshape(shape)


def restrict(phi: Potential, evidence: Mapping[int, int]) -> Potential:
    """Fix the evidence variables of ``phi`` and drop them from its scope."""
    if not evidence:
        return phi
    index = []
    keep = []
    touched = False
    for v, card in zip(phi.scope, phi.values.shape):
        if v in evidence:
            state = evidence[v]
            if not 0 <= state < card:
                raise InvalidEvidenceError(
                    f"state {state} out of range for variable {v} with cardinality {card}")
            index.append(int(state))
            touched = True
        else:
            index.append(slice(None))
            keep.append(v)
    if not touched:
        return phi
    return Potential._raw(tuple(keep), np.array(phi.values[tuple(index)], dtype=float), phi.scale_exp)


def multiply(phi: Potential, psi: Potential) -> Potential:
    if phi.scope == psi.scope:
        values = phi.values * psi.values
        scope = phi.scope
    else:
        scope = tuple(sorted(set(phi.scope) | set(psi.scope)))
        values = _expand(phi, scope) * _expand(psi, scope)
        if values.ndim != len(scope):
            values = np.array(values).reshape(())
    return _renormalize(Potential._raw(scope, values, phi.scale_exp + psi.scale_exp))


def multiply_all(potentials: Iterable[Potential]) -> Potential:
    """Product of many potentials, formed in one broadcast pass."""
    potentials = list(potentials)
    if not potentials:
        return Potential.trivial()
    if len(potentials) == 1:
        return potentials[0]
    scope = tuple(sorted(set().union(*(p.scope for p in potentials))))
    shape = [1] * len(scope)
    for p in potentials:
        for v, c in zip(p.scope, p.values.shape):
            shape[scope.index(v)] = c
    values = np.ones(shape)
    exp = 0
    for p in potentials:
        values = values * _expand(p, scope)
        exp += p.scale_exp
        top = values.max()
        if top > 0:
            _, e = math.frexp(float(top))
            if not -RESCALE_BITS <= e <= RESCALE_BITS:
                values = np.ldexp(values, -e)
                exp += e
    return Potential._raw(scope, values, exp)


def _axis(phi: Potential, var: int) -> int:
    try:
        return phi.scope.index(var)
    except ValueError:
        raise DomainError(f"variable {var} is not in scope {phi.scope}") from None


def sum_out(phi: Potential, var: int) -> Potential:
    ax = _axis(phi, var)
    values = phi.values.sum(axis=ax)
    return _renormalize(Potential._raw(phi.scope[:ax] + phi.scope[ax + 1:],
                                       np.asarray(values, dtype=float), phi.scale_exp))


def max_out(phi: Potential, var: int) -> tuple[Potential, np.ndarray]:
    """Max-marginalize ``var``; also return the argmax table (smallest maximizing state)."""
    ax = _axis(phi, var)
    arg = np.argmax(phi.values, axis=ax)
    values = np.max(phi.values, axis=ax)
    return (Potential._raw(phi.scope[:ax] + phi.scope[ax + 1:],
                           np.asarray(values, dtype=float), phi.scale_exp),
            np.asarray(arg))


def sum_out_many(phi: Potential, variables: Iterable[int]) -> Potential:
    axes = tuple(i for i, v in enumerate(phi.scope) if v in set(variables))
    if not axes:
        return phi
    keep = tuple(v for i, v in enumerate(phi.scope) if i not in axes)
    return _renormalize(Potential._raw(keep, np.asarray(phi.values.sum(axis=axes), dtype=float),
                                       phi.scale_exp))


def max_out_many(phi: Potential, variables: Iterable[int]) -> Potential:
    axes = tuple(i for i, v in enumerate(phi.scope) if v in set(variables))
    if not axes:
        return phi
    keep = tuple(v for i, v in enumerate(phi.scope) if i not in axes)
    return Potential._raw(keep, np.asarray(phi.values.max(axis=axes), dtype=float), phi.scale_exp)


# ---------------------------------------------------------------------------
# networks


@dataclass(frozen=True)
class Variable:
    id: int
    name: str
    cardinality: int

    def __post_init__(self):
        if self.cardinality < 1:
            raise ModelError(f"variable {self.name} has cardinality {self.cardinality} < 1")


def default_name(i: int) -> str:
    """Spreadsheet-style labels: A..Z, AA, AB, ..."""
    letters = string.ascii_uppercase
    name = ""
    i += 1
    while i:
        i, r = divmod(i - 1, 26)
        name = letters[r] + name
    return name


@dataclass(frozen=True)
class BayesianNetwork:
    variables: tuple[Variable, ...]
    parents: tuple[tuple[int, ...], ...]
    cpts: tuple[Potential, ...] = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))
        object.__setattr__(self, "parents", tuple(tuple(sorted(p)) for p in self.parents))
        object.__setattr__(self, "cpts", tuple(self.cpts))
        self.validate()

    @property
    def n(self) -> int:
        return len(self.variables)

    @property
    def cards(self) -> tuple[int, ...]:
        return tuple(v.cardinality for v in self.variables)

    def card(self, var: int) -> int:
        return self.variables[var].cardinality

    def family(self, var: int) -> tuple[int, ...]:
        return tuple(sorted(self.parents[var] + (var,)))

    def children(self) -> list[list[int]]:
        kids: list[list[int]] = [[] for _ in range(self.n)]
        for child, ps in enumerate(self.parents):
            for p in ps:
                kids[p].append(child)
        return kids

    def leaves(self) -> list[int]:
        return [v for v, kids in enumerate(self.children()) if not kids]

    def index_of(self, name: str) -> int:
        for v in self.variables:
            if v.name == name:
                return v.id
        raise KeyError(name)

    def topological_order(self) -> list[int]:
        indeg = [len(p) for p in self.parents]
        kids = self.children()
        ready = sorted(v for v in range(self.n) if indeg[v] == 0)
        order = []
        while ready:
            v = ready.pop(0)
            order.append(v)
            for k in kids[v]:
                indeg[k] -= 1
                if indeg[k] == 0:
                    ready.append(k)
            ready.sort()
        if len(order) != self.n:
            raise ModelError("parent graph contains a cycle")
        return order

    def validate(self) -> None:
        n = self.n
        if len(self.parents) != n or len(self.cpts) != n:
            raise ModelError("need one parent list and one CPT per variable")
        for i, v in enumerate(self.variables):
            if v.id != i:
                raise ModelError(f"variable ids must be 0..n-1 without gaps (got {v.id} at {i})")
        for child, ps in enumerate(self.parents):
            for p in ps:
                if not 0 <= p < n or p == child:
                    raise ModelError(f"bad parent {p} for variable {child}")
            if len(set(ps)) != len(ps):
                raise ModelError(f"duplicate parents for variable {child}")
        self.topological_order()
        for child, cpt in enumerate(self.cpts):
            fam = self.family(child)
            if cpt.scope != fam:
                raise ModelError(f"CPT of {child} has scope {cpt.scope}, expected {fam}")
            if cpt.cards != tuple(self.card(v) for v in fam):
                raise ModelError(f"CPT of {child} has shape {cpt.cards}")
            if cpt.scale_exp != 0:
                raise ModelError("CPTs must be unscaled")
            sums = cpt.values.sum(axis=fam.index(child))
            if not np.all(np.abs(sums - 1.0) <= CPT_TOLERANCE):
                raise ModelError(f"CPT of variable {child} is not normalized")


def joint_probability(net: BayesianNetwork, full: Mapping[int, int]) -> Scaled:
    """Chain-rule probability of a complete instantiation."""
    missing = [v for v in range(net.n) if v not in full]
    if missing:
        raise ModelError(f"instantiation is incomplete; missing {missing}")
    result = Scaled(1.0)
    for cpt in net.cpts:
        entry = cpt.values[tuple(full[v] for v in cpt.scope)]
        result = result * Scaled(float(entry))
    return result


def check_evidence(net: BayesianNetwork, evidence: Mapping[int, int]) -> dict[int, int]:
    out = {}
    for var, state in evidence.items():
        var, state = int(var), int(state)
        if not 0 <= var < net.n:
            raise InvalidEvidenceError(f"unknown variable {var}")
        if not 0 <= state < net.card(var):
            raise InvalidEvidenceError(
                f"state {state} out of range for variable {var} (cardinality {net.card(var)})")
        out[var] = state
    return out


# ---------------------------------------------------------------------------
# text formats


def _tokens(text: str) -> list[tuple[str, int]]:
    out = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0]
        out.extend((tok, lineno) for tok in line.split())
    return out


class _TokenStream:
    def __init__(self, text: str):
        self.toks = _tokens(text)
        self.pos = 0

    def _next(self, what: str) -> tuple[str, int]:
        if self.pos >= len(self.toks):
            last = self.toks[-1][1] if self.toks else 1
            raise ParseError(f"unexpected end of input while reading {what}", last)
        tok = self.toks[self.pos]
        self.pos += 1
        return tok

    def int(self, what: str) -> tuple[int, int]:
        tok, line = self._next(what)
        try:
            return int(tok), line
        except ValueError:
            raise ParseError(f"expected integer {what}, got {tok!r}", line) from None

    def float(self, what: str) -> tuple[float, int]:
        tok, line = self._next(what)
        try:
            return float(tok), line
        except ValueError:
            raise ParseError(f"expected number {what}, got {tok!r}", line) from None

    def word(self, what: str) -> tuple[str, int]:
        return self._next(what)

    def finish(self) -> None:
        if self.pos < len(self.toks):
            tok, line = self.toks[self.pos]
            raise ParseError(f"trailing token {tok!r}", line)


def parse_network(text: str, names: Sequence[str] | None = None) -> BayesianNetwork:
    """Parse a network in the BAYES text layout (one CPT per variable, child last)."""
    ts = _TokenStream(text)
    head, line = ts.word("header")
    if head.upper() != "BAYES":
        raise ParseError(f"expected BAYES header, got {head!r}", line)
    n, line = ts.int("variable count")
    if n < 1:
        raise ParseError("network needs at least one variable", line)
    cards = []
    for i in range(n):
        c, line = ts.int(f"cardinality of variable {i}")
        if c < 1:
            raise ParseError(f"variable {i} has cardinality {c}", line)
        cards.append(c)
    nf, line = ts.int("function count")
    if nf != n:
        raise ParseError(f"expected {n} functions (one CPT per variable), got {nf}", line)

    scopes = []
    for f in range(n):
        k, line = ts.int(f"scope size of function {f}")
        if k < 1:
            raise ParseError(f"function {f} has empty scope", line)
        ids = []
        for _ in range(k):
            v, vline = ts.int(f"scope of function {f}")
            if not 0 <= v < n:
                raise ParseError(f"variable id {v} out of range", vline)
            ids.append(v)
        ps, child = ids[:-1], ids[-1]
        if list(ps) != sorted(set(ps)) or child in ps:
            raise ParseError(f"parents of function {f} must be distinct and ascending", line)
        scopes.append((tuple(ps), child, line))
    children = [s[1] for s in scopes]
    if sorted(children) != list(range(n)):
        raise ParseError("each variable must be the child of exactly one function")

    parents: list[tuple[int, ...]] = [()] * n
    cpts: list[Potential | None] = [None] * n
    for f, (ps, child, _) in enumerate(scopes):
        size, line = ts.int(f"table size of function {f}")
        order = list(ps) + [child]
        shape = tuple(cards[v] for v in order)
        expected = int(np.prod(shape))
        if size != expected:
            raise ParseError(f"function {f} declares {size} entries, expected {expected}", line)
        vals = []
        for _ in range(size):
            x, xline = ts.float(f"table entry of function {f}")
            if not math.isfinite(x) or x < 0:
                raise ParseError(f"invalid probability {x}", xline)
            vals.append(x)
        table = np.array(vals, dtype=float).reshape(shape)
        sums = table.sum(axis=-1)
        if not np.all(np.abs(sums - 1.0) <= CPT_TOLERANCE):
            raise ParseError(f"CPT of variable {child} is not normalized", line)
        perm = np.argsort(order)
        parents[child] = ps
        cpts[child] = Potential(tuple(sorted(order)), np.transpose(table, perm))
    ts.finish()

    if names is None:
        names = [default_name(i) for i in range(n)]
    variables = tuple(Variable(i, names[i], cards[i]) for i in range(n))
    try:
        return BayesianNetwork(variables, tuple(parents), tuple(cpts))
    except ModelError as exc:
        raise ParseError(str(exc)) from exc


def emit_network(net: BayesianNetwork) -> str:
    lines = ["BAYES", str(net.n), " ".join(str(c) for c in net.cards), str(net.n)]
    for child in range(net.n):
        ids = list(net.parents[child]) + [child]
        lines.append(" ".join(str(x) for x in [len(ids)] + ids))
    for child in range(net.n):
        order = list(net.parents[child]) + [child]
        cpt = net.cpts[child]
        table = np.transpose(cpt.values, [cpt.scope.index(v) for v in order]).reshape(-1)
        lines.append(" ".join([str(table.size)] + [repr(float(x)) for x in table]))
    return "\n".join(lines) + "\n"


def parse_evidence(text: str, net: BayesianNetwork | None = None) -> dict[int, int]:
    """``count var state var state ...``; an empty file is empty evidence."""
    ts = _TokenStream(text)
    if not ts.toks:
        return {}
    count, line = ts.int("evidence count")
    if count < 0:
        raise ParseError("negative evidence count", line)
    ev: dict[int, int] = {}
    for _ in range(count):
        var, vline = ts.int("evidence variable")
        state, _ = ts.int("evidence state")
        if var in ev:
            raise ParseError(f"variable {var} appears twice in evidence", vline)
        if net is not None:
            if not 0 <= var < net.n:
                raise ParseError(f"variable id {var} out of range", vline)
            if not 0 <= state < net.card(var):
                raise ParseError(f"state {state} out of range for variable {var}", vline)
        elif var < 0 or state < 0:
            raise ParseError("negative index in evidence", vline)
        ev[var] = state
    ts.finish()
    return ev


def parse_var_set(text: str, net: BayesianNetwork | None = None) -> list[int]:
    """``count id id ...``; returns ids in ascending order."""
    ts = _TokenStream(text)
    if not ts.toks:
        return []
    count, line = ts.int("variable count")
    if count < 0:
        raise ParseError("negative variable count", line)
    out = set()
    for _ in range(count):
        var, vline = ts.int("variable id")
        if var < 0 or (net is not None and var >= net.n):
            raise ParseError(f"variable id {var} out of range", vline)
        if var in out:
            raise ParseError(f"variable {var} listed twice", vline)
        out.add(var)
    ts.finish()
    return sorted(out)


def emit_evidence(evidence: Mapping[int, int]) -> str:
    items = sorted(evidence.items())
    return " ".join([str(len(items))] + [f"{v} {s}" for v, s in items]) + "\n"


def emit_var_set(variables: Iterable[int]) -> str:
    vs = sorted(variables)
    return " ".join(str(x) for x in [len(vs)] + vs) + "\n"
