"""Random networks, the brute-force oracle, and desk-scale experiment harnesses.

Random streams: every generator is ``numpy.random.PCG64`` seeded through a
``SeedSequence``.  Instance ``i`` of a corpus with base seed ``s`` gets the
seed ``corpus_seed(s, i)`` (first 64-bit word of ``SeedSequence(s,
spawn_key=(i,))``).  Network structure and CPTs come from stream 0 of that
seed and query selection (evidence, MAP variables) from stream 1, so the same
network can be reused with different queries.
"""

from __future__ import annotations

import itertools
import json
import math
import statistics
from dataclasses import asdict, dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .elimination import (
    EliminationOrder,
    constrained_width,
    eliminate,
    min_fill_order,
    network_graph,
    restricted_cpts,
)
from .jointree import build_jointree, choose_root, promote
from .minibucket import induced_ibound, minibucket_bound
from .model import (
    BayesianNetwork,
    ModelError,
    Potential,
    Scaled,
    Variable,
    check_evidence,
    default_name,
    multiply_all,
    rel_close,
    sum_out,
)
from .propagation import PropagationState
from .search import SolveOptions, Status, solve_map

BRUTE_FORCE_GUARD = 2 ** 24


@dataclass(frozen=True)
class RandomNetSpec:
    n: int
    connectivity: int
    seed: int
    cardinality: int = 2

    def __post_init__(self):
        if self.n < 1 or self.connectivity < 0 or self.cardinality < 1:
            raise ValueError(f"invalid random network spec {self}")


def corpus_seed(base_seed: int, index: int) -> int:
    ss = np.random.SeedSequence(base_seed, spawn_key=(index,))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(stream,))))


def gen_random_network(spec: RandomNetSpec) -> BayesianNetwork:
    """Random DAG in topological id order with Dirichlet(1) CPT columns.

    Node ``i`` draws a parent budget ``k ~ Binomial(c, 1/2)`` and takes
    ``min(i, k)`` distinct parents uniformly from its ``c`` nearest
    predecessors ``i-c .. i-1``.  The window keeps the min-fill width close to
    ``c``.
    """
    rng = _rng(spec.seed, 0)
    c, card = spec.connectivity, spec.cardinality
    parents = []
    cpts = []
    for i in range(spec.n):
        window = np.arange(max(0, i - c), i)
        k = min(int(rng.binomial(c, 0.5)), len(window))
        ps = tuple(sorted(int(p) for p in rng.choice(window, size=k, replace=False))) if k else ()
        rows = int(card ** len(ps))
        table = rng.dirichlet(np.ones(card), size=rows).reshape((card,) * len(ps) + (card,))
        parents.append(ps)
        cpts.append(Potential(ps + (i,), table))
    variables = tuple(Variable(i, default_name(i), card) for i in range(spec.n))
    return BayesianNetwork(variables, tuple(parents), tuple(cpts))


def probability_of_evidence(net: BayesianNetwork, evidence: Mapping[int, int]) -> Scaled:
    order = min_fill_order(network_graph(net, evidence))
    return eliminate(net, evidence, None, (), order).value


def leaf_evidence(net: BayesianNetwork, rng: np.random.Generator, max_tries: int = 1000) -> dict[int, int]:
    """Uniformly drawn states for the leaves, redrawn until Pr(e) > 0."""
    leaves = net.leaves()
    for _ in range(max_tries):
        ev = {v: int(rng.integers(net.card(v))) for v in leaves}
        if not probability_of_evidence(net, ev).is_zero():
            return ev
    raise ModelError("could not find leaf evidence with positive probability")


def random_map_vars(net: BayesianNetwork, evidence: Mapping[int, int], rng: np.random.Generator,
                    count: int | None = None, fraction: float | None = None,
                    state_space_cap: int | None = None) -> list[int]:
    """MAP variables drawn uniformly from the non-evidence variables.

    With ``state_space_cap`` variables are taken in random order and kept while
    the product of MAP cardinalities stays within the cap.
    """
    pool = [v for v in range(net.n) if v not in evidence]
    perm = [pool[i] for i in rng.permutation(len(pool))]
    if state_space_cap is not None:
        chosen, space = [], 1
        for v in perm:
            if space * net.card(v) <= state_space_cap:
                chosen.append(v)
                space *= net.card(v)
        return sorted(chosen)
    if count is None:
        count = round((fraction if fraction is not None else 0.25) * net.n)
    return sorted(perm[:min(count, len(perm))])


@dataclass
class Query:
    net: BayesianNetwork
    evidence: dict[int, int]
    max_vars: list[int]
    seed: int


def random_query(spec: RandomNetSpec, map_count: int | None = None,
                 map_fraction: float | None = None, state_space_cap: int | None = None) -> Query:
    net = gen_random_network(spec)
    rng = _rng(spec.seed, 1)
    ev = leaf_evidence(net, rng)
    mv = random_map_vars(net, ev, rng, map_count, map_fraction, state_space_cap)
    return Query(net, ev, mv, spec.seed)


# ---------------------------------------------------------------------------
# the oracle


@dataclass
class OracleResult:
    solution: dict[int, int]
    probability: Scaled


def map_table(net: BayesianNetwork, evidence: Mapping[int, int], max_vars: Sequence[int]) -> Potential:
    """Pr(m, e) for every instantiation m of ``max_vars`` (axes in ascending id order)."""
    evidence = check_evidence(net, evidence)
    max_vars = sorted(max_vars)
    sums = [v for v in range(net.n) if v not in evidence and v not in max_vars]
    graph = network_graph(net, evidence)
    order = min_fill_order(graph, constrained=True, max_vars=max_vars)
    pool = restricted_cpts(net, evidence)
    for var in order.sequence[:len(sums)]:
        mentioning = [p for p in pool if var in p.scope]
        pool = [p for p in pool if var not in p.scope]
        pool.append(sum_out(multiply_all(mentioning), var))
    table = multiply_all(pool)
    if tuple(table.scope) != tuple(max_vars):
        shape = tuple(net.card(v) for v in max_vars)
        full = np.broadcast_to(table.values.reshape(
            [net.card(v) if v in table.scope else 1 for v in max_vars]), shape)
        table = Potential._raw(tuple(max_vars), np.array(full), table.scale_exp)
    return table


def brute_force_map(net: BayesianNetwork, evidence: Mapping[int, int], max_vars: Iterable[int],
                    method: str = "table", guard: int = BRUTE_FORCE_GUARD) -> OracleResult:
    """Exhaustive MAP: the lexicographically smallest maximizer of Pr(m, e).

    ``method="table"`` builds Pr(m, e) for all m at once by summing out the
    other variables; ``method="enumerate"`` runs one evidence computation per
    instantiation.  Both enumerate every m.
    """
    max_vars = sorted(set(max_vars))
    space = 1
    for v in max_vars:
        space *= net.card(v)
    if space > guard:
        raise ModelError(f"MAP state space {space} exceeds the brute-force guard {guard}")
    if method == "table":
        table = map_table(net, evidence, max_vars)
        flat = table.values.reshape(-1)
        idx = int(np.argmax(flat))
        states = np.unravel_index(idx, table.values.shape) if max_vars else ()
        return OracleResult({v: int(s) for v, s in zip(max_vars, states)},
                            Scaled(float(flat[idx]), table.scale_exp))
    if method != "enumerate":
        raise ValueError(f"unknown method {method!r}")
    best, best_m = None, None
    for states in itertools.product(*(range(net.card(v)) for v in max_vars)):
        m = dict(zip(max_vars, states))
        pr = eliminate(net, {**evidence, **m}, None, ()).value
        if best is None or pr > best:
            best, best_m = pr, m
    return OracleResult(best_m, best)


# ---------------------------------------------------------------------------
# harnesses


def jointree_bound(net: BayesianNetwork, evidence: Mapping[int, int], max_vars: Sequence[int],
                   order: EliminationOrder, do_promote: bool = True) -> Scaled:
    jt = build_jointree(net, evidence, order)
    root = choose_root(jt, max_vars)
    if do_promote:
        promote(jt, root, max_vars)
    return PropagationState(jt, max_vars, root).bound()


def matched_minibucket_bound(net: BayesianNetwork, evidence: Mapping[int, int],
                             max_vars: Sequence[int], ibound: int) -> Scaled:
    """Mini-bucket MAP bound along the constrained min-fill order (sums first)."""
    order = min_fill_order(network_graph(net, evidence), constrained=True, max_vars=max_vars)
    return minibucket_bound(net, evidence, None, max_vars, order, ibound)


def _log10(x: Scaled) -> float | None:
    v = x.log10()
    return None if v == -math.inf else v


@dataclass
class BoundRecord:
    instance: int
    seed: int
    n: int
    connectivity: int
    map_vars: int
    ibound: int
    bd_log10: float | None
    mb_log10: float | None
    ratio_log10: float | None


def run_bound_comparison(specs: Sequence[RandomNetSpec], map_fraction: float = 0.25,
                         trials: int = 1) -> tuple[list[BoundRecord], dict]:
    """Jointree bound vs mini-bucket bound at a matched complexity parameter."""
    records = []
    for idx, spec in enumerate(specs):
        for t in range(trials):
            s = spec if t == 0 else RandomNetSpec(spec.n, spec.connectivity,
                                                  corpus_seed(spec.seed, t), spec.cardinality)
            q = random_query(s, map_fraction=map_fraction)
            order = min_fill_order(network_graph(q.net, q.evidence))
            k = induced_ibound(q.net, q.evidence, order)
            bd = jointree_bound(q.net, q.evidence, q.max_vars, order)
            mb = matched_minibucket_bound(q.net, q.evidence, q.max_vars, k)
            bl, ml = _log10(bd), _log10(mb)
            ratio = None if bl is None or ml is None else ml - bl
            records.append(BoundRecord(idx * trials + t, s.seed, s.n, s.connectivity,
                                       len(q.max_vars), k, bl, ml, ratio))
    ratios = [r.ratio_log10 for r in records if r.ratio_log10 is not None]
    summary = {
        "instances": len(records),
        "ratio_min": 10 ** min(ratios) if ratios else None,
        "ratio_median": 10 ** statistics.median(ratios) if ratios else None,
        "ratio_max": 10 ** max(ratios) if ratios else None,
        "jointree_looser": sum(1 for r in ratios if r < 0),
    }
    return records, summary


@dataclass
class BenchmarkRecord:
    instance: int
    seed: int
    n: int
    connectivity: int
    map_vars: int
    status: str
    t_find_s: float
    t_finish_s: float
    cwidth: float
    nodes: int
    prunes_bound: int
    prunes_value: int
    bd_log10: float | None
    mb_log10: float | None
    map_log10: float | None
    init_log10: float | None = None
    verified: bool | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=False)


def run_solver_benchmark(specs: Sequence[RandomNetSpec], map_count: int | None = None,
                         state_space_cap: int | None = None, time_limit: float = 60.0,
                         verify_max_states: int = 2 ** 20, with_minibucket: bool = True,
                         progress=None) -> list[BenchmarkRecord]:
    records = []
    for idx, spec in enumerate(specs):
        q = random_query(spec, map_count=map_count, state_space_cap=state_space_cap)
        res = solve_map(q.net, q.evidence, q.max_vars, SolveOptions(time_limit=time_limit))
        cw = constrained_width(q.net, q.evidence, q.max_vars)
        mb = None
        if with_minibucket:
            order = min_fill_order(network_graph(q.net, q.evidence))
            k = induced_ibound(q.net, q.evidence, order)
            mb = _log10(matched_minibucket_bound(q.net, q.evidence, q.max_vars, k))
        verified = None
        space = math.prod(q.net.card(v) for v in q.max_vars)
        if res.status == Status.EXACT and space <= verify_max_states:
            oracle = brute_force_map(q.net, q.evidence, q.max_vars)
            verified = rel_close(oracle.probability, res.probability, 1e-9)
        rec = BenchmarkRecord(
            instance=idx, seed=spec.seed, n=spec.n, connectivity=spec.connectivity,
            map_vars=len(q.max_vars), status=res.status.value,
            t_find_s=res.time_to_find, t_finish_s=res.time_to_finish, cwidth=cw,
            nodes=res.nodes, prunes_bound=res.prunes_bound, prunes_value=res.prunes_value,
            bd_log10=_log10(res.root_bound), mb_log10=mb, map_log10=_log10(res.probability),
            init_log10=_log10(res.init_probability), verified=verified)
        records.append(rec)
        if progress is not None:
            progress(rec)
    return records


def _stats(values: list[float]) -> dict[str, float]:
    return {"min": min(values), "median": statistics.median(values),
            "mean": statistics.fmean(values), "max": max(values)}


def summarize_solver(records: Sequence[BenchmarkRecord], label: str = "random") -> str:
    """Text table with the row structure of the solver results table."""
    done = [r for r in records if r.status == Status.EXACT.value]
    lines = [f"{'Set':<12}{'#/' + str(len(records)):>6}  {'':<8}{'find':>10}{'finish':>10}{'c-w':>8}"]
    if not done:
        lines.append(f"{label:<12}{0:>6}")
        return "\n".join(lines)
    cols = [_stats([r.t_find_s for r in done]), _stats([r.t_finish_s for r in done]),
            _stats([r.cwidth for r in done])]
    for k, row in enumerate(("min", "median", "mean", "max")):
        head = f"{label:<12}{len(done):>6}" if k == 0 else " " * 18
        lines.append(f"{head}  {row:<8}{cols[0][row]:>10.2f}{cols[1][row]:>10.2f}{cols[2][row]:>8.1f}")
    return "\n".join(lines)


def summarize_bounds(summary: Mapping) -> str:
    def fmt(x):
        return "n/a" if x is None else f"{x:.3g}"
    return (f"instances={summary['instances']} ratio min={fmt(summary['ratio_min'])} "
            f"median={fmt(summary['ratio_median'])} max={fmt(summary['ratio_max'])} "
            f"jointree_looser={summary['jointree_looser']}")


def corpus(n: int, connectivity: int, instances: int, base_seed: int,
           cardinality: int = 2) -> list[RandomNetSpec]:
    return [RandomNetSpec(n, connectivity, corpus_seed(base_seed, i), cardinality)
            for i in range(instances)]
