"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 parse or validation error,
3 timeout (the best instantiation found is still printed).
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

from . import bench
from .elimination import min_fill_order, network_graph
from .minibucket import induced_ibound
from .model import (
    BayesianNetwork,
    ModelError,
    Scaled,
    emit_evidence,
    emit_network,
    emit_var_set,
    parse_evidence,
    parse_network,
    parse_var_set,
)
from .search import SolveOptions, Status, solve_map

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_TIMEOUT = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _read(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise ModelError(f"cannot read {path}: {exc.strerror or exc}") from exc


def _load(args) -> tuple[BayesianNetwork, dict[int, int], list[int]]:
    try:
        net = parse_network(_read(args.network))
    except ModelError as exc:
        raise ModelError(f"{args.network}: {exc}") from exc
    ev = parse_evidence(_read(args.evidence), net) if args.evidence else {}
    mv = parse_var_set(_read(args.map_vars), net) if args.map_vars else []
    return net, ev, mv


def format_probability(p: Scaled) -> tuple[float | None, float | None, str, str]:
    """(log10, linear, log10 text, linear text); linear is ``~0`` below 1e-300."""
    lg = p.log10()
    lg_num = None if lg == float("-inf") else float(f"{lg:.12g}")
    lin = float(p)
    if p.is_zero():
        lin_num, lin_txt = 0.0, "0"
    elif lin < 1e-300:
        lin_num, lin_txt = None, "~0"
    else:
        lin_txt = f"{lin:.12g}"
        lin_num = float(lin_txt)
    lg_txt = "-inf" if lg_num is None else f"{lg:.12g}"
    return lg_num, lin_num, lg_txt, lin_txt


def _assignment_text(net: BayesianNetwork, sol: dict[int, int]) -> str:
    return " ".join(f"{net.variables[v].name}={s}" for v, s in sorted(sol.items()))


def cmd_solve(args) -> int:
    net, ev, mv = _load(args)
    opts = SolveOptions(promote=not args.no_promote, split=not args.no_split,
                        value_elimination=not args.no_value_elim, time_limit=args.time_limit)
    res = solve_map(net, ev, mv, opts)
    lg, lin, lg_txt, lin_txt = format_probability(res.probability)
    if args.json:
        print(json.dumps({
            "status": res.status.value,
            "log10": lg,
            "p": lin,
            "assignment": {net.variables[v].name: s for v, s in sorted(res.solution.items())},
            "nodes": res.nodes,
            "prunes_bound": res.prunes_bound,
            "prunes_value": res.prunes_value,
            "time_ms": round(res.time_to_finish * 1000, 3),
        }))
    else:
        print(f"status: {res.status.value}")
        print(f"map log10={lg_txt} p={lin_txt}")
        print(f"assignment: {_assignment_text(net, res.solution)}")
        print(f"nodes={res.nodes} prunes_bound={res.prunes_bound} "
              f"prunes_value={res.prunes_value} time_ms={res.time_to_finish * 1000:.3f}")
    return EXIT_TIMEOUT if res.status == Status.TIMEOUT else EXIT_OK


def cmd_bound(args) -> int:
    net, ev, mv = _load(args)
    order = min_fill_order(network_graph(net, ev))
    if args.method == "jointree":
        value = bench.jointree_bound(net, ev, mv, order)
        k = None
    else:
        k = args.ibound if args.ibound is not None else induced_ibound(net, ev, order)
        value = bench.matched_minibucket_bound(net, ev, mv, k)
    lg, lin, lg_txt, lin_txt = format_probability(value)
    if args.json:
        print(json.dumps({"method": args.method, "ibound": k, "log10": lg, "p": lin}))
    else:
        extra = f" ibound={k}" if k is not None else ""
        print(f"bound method={args.method}{extra} log10={lg_txt} p={lin_txt}")
    return EXIT_OK


def cmd_oracle(args) -> int:
    net, ev, mv = _load(args)
    res = bench.brute_force_map(net, ev, mv)
    lg, lin, lg_txt, lin_txt = format_probability(res.probability)
    if args.json:
        print(json.dumps({"log10": lg, "p": lin, "assignment": {
            net.variables[v].name: s for v, s in sorted(res.solution.items())}}))
    else:
        print(f"map log10={lg_txt} p={lin_txt}")
        print(f"assignment: {_assignment_text(net, res.solution)}")
    return EXIT_OK


def cmd_gen_random(args) -> int:
    spec = bench.RandomNetSpec(args.nodes, args.connectivity, args.seed, args.cardinality)
    if args.map_count is None and args.evidence_out is None and args.map_vars_out is None:
        net = bench.gen_random_network(spec)
    else:
        q = bench.random_query(spec, map_count=args.map_count)
        net = q.net
        if args.evidence_out:
            Path(args.evidence_out).write_text(emit_evidence(q.evidence))
        if args.map_vars_out:
            Path(args.map_vars_out).write_text(emit_var_set(q.max_vars))
    Path(args.output).write_text(emit_network(net))
    return EXIT_OK


def cmd_bench(args) -> int:
    try:
        cfg = json.loads(_read(args.config))
    except json.JSONDecodeError as exc:
        raise ModelError(f"{args.config}: invalid JSON ({exc})") from exc
    specs = bench.corpus(int(cfg.get("n", 40)), int(cfg.get("connectivity", 8)),
                         int(cfg.get("instances", 10)), int(cfg.get("seed", 0)),
                         int(cfg.get("cardinality", 2)))
    out = Path(args.output)
    if args.kind == "compare-bounds":
        records, summary = bench.run_bound_comparison(
            specs, float(cfg.get("map_fraction", 0.25)), int(cfg.get("trials", 1)))
        out.write_text("".join(json.dumps(asdict(r)) + "\n" for r in records))
        print(bench.summarize_bounds(summary))
    else:
        records = bench.run_solver_benchmark(
            specs, map_count=cfg.get("map_count"), state_space_cap=cfg.get("state_space_cap"),
            time_limit=float(cfg.get("time_limit", 60.0)))
        out.write_text("".join(r.to_json() + "\n" for r in records))
        print(bench.summarize_solver(records, cfg.get("label", "random")))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mapsearch", description="Exact MAP for Bayesian networks.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def query_args(sp):
        sp.add_argument("network")
        sp.add_argument("--evidence", help="evidence file: count then var/state pairs")
        sp.add_argument("--map-vars", help="MAP variable file: count then ids")
        sp.add_argument("--json", action="store_true")

    sp = sub.add_parser("solve", help="exact MAP by branch-and-bound")
    query_args(sp)
    sp.add_argument("--time-limit", type=float)
    sp.add_argument("--no-promote", action="store_true")
    sp.add_argument("--no-split", action="store_true")
    sp.add_argument("--no-value-elim", action="store_true")
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("bound", help="upper bound on the MAP probability")
    query_args(sp)
    sp.add_argument("--method", choices=["jointree", "minibucket"], default="jointree")
    sp.add_argument("--ibound", type=int)
    sp.set_defaults(func=cmd_bound)

    sp = sub.add_parser("oracle", help="brute-force MAP")
    query_args(sp)
    sp.set_defaults(func=cmd_oracle)

    sp = sub.add_parser("gen-random", help="write a random network")
    sp.add_argument("--nodes", type=int, required=True)
    sp.add_argument("--connectivity", type=int, required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--cardinality", type=int, default=2)
    sp.add_argument("--map-count", type=int)
    sp.add_argument("--evidence-out")
    sp.add_argument("--map-vars-out")
    sp.add_argument("-o", "--output", required=True)
    sp.set_defaults(func=cmd_gen_random)

    sp = sub.add_parser("bench", help="run a benchmark corpus")
    sp.add_argument("kind", choices=["compare-bounds", "solver"])
    sp.add_argument("--config", required=True, help="JSON corpus description")
    sp.add_argument("-o", "--output", required=True, help="JSON-lines report")
    sp.set_defaults(func=cmd_bench)
    return p


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    try:
        return args.func(args)
    except (ModelError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
