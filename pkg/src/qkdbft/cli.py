"""Command-line front end.

Subcommands:

* ``run``            one scenario -> summary row, optional JSONL/figures/trace
* ``batch``          several scenarios (files and/or --builtin) -> summary table
* ``trace-dump``     run a scenario and print the per-slot event trace
* ``topology-check`` print connectivity, capacity bound, and disjoint paths

Exit status is nonzero if any run raises a safety-violation flag.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

from .scenario import ScenarioConfig, ScenarioError, load_scenario, render_scenario
from .scenarios import overhead_scenario, builtin_suite
from .report import build_report, render_figures, render_table, to_jsonl
from .simnet import run_world
from .topology import Graph, byzantine_capacity, local_connectivity, max_disjoint_paths, node_connectivity

_OVERRIDABLE = {
    "seed": int,
    "view_limit": int,
    "min_views": int,
    "delta_s": float,
    "omega": int,
    "ts_key_len_bits": int,
    "link_capacity_bits": int,
    "round_cap_bits": int,
    "epsilon": float,
    "epsilon_k": float,
    "f": int,
    "name": str,
}


def _apply_overrides(cfg: ScenarioConfig, pairs: list[str]) -> ScenarioConfig:
    updates = {}
    for pair in pairs:
        if "=" not in pair:
            raise ScenarioError(f"--set {pair!r}: expected key=value")
        key, _, raw = pair.partition("=")
        if key not in _OVERRIDABLE:
            raise ScenarioError(
                f"--set {key}: unknown field (overridable: {', '.join(sorted(_OVERRIDABLE))})"
            )
        updates[key] = _OVERRIDABLE[key](raw)
    return dataclasses.replace(cfg, **updates) if updates else cfg


def _load_configs(args) -> list[ScenarioConfig]:
    configs = []
    if getattr(args, "builtin", False):
        configs.extend(builtin_suite())
        configs.append(overhead_scenario())
    for path in getattr(args, "scenario", []) or []:
        configs.append(load_scenario(path))
    if not configs:
        raise ScenarioError("no scenarios given (pass files or --builtin)")
    seeds = [int(s) for s in (args.seeds.split(",") if getattr(args, "seeds", None) else [])]
    if seeds:
        configs = [
            dataclasses.replace(c, seed=s, name=c.name if len(seeds) == 1 else f"{c.name}@{s}")
            for c in configs
            for s in seeds
        ]
    return [_apply_overrides(c, args.set or []) for c in configs]


def _emit(reports, args) -> None:
    table = render_table(reports)
    if getattr(args, "csv", None):
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write(table)
    sys.stdout.write(table)
    if getattr(args, "jsonl", None):
        with open(args.jsonl, "w", encoding="utf-8") as fh:
            fh.write(to_jsonl(reports))
    if getattr(args, "figures", None):
        for p in render_figures(reports, args.figures):
            print(f"figure: {p}")


def cmd_run(args) -> int:
    reports = []
    bad = False
    for cfg in _load_configs(args):
        world = run_world(cfg)
        rep = build_report(world)
        reports.append(rep)
        bad = bad or rep.flags.get("safety_violation", False)
        if args.trace:
            with open(args.trace, "w", encoding="utf-8") as fh:
                for entry in world.trace:
                    fh.write(json.dumps(entry, default=str, sort_keys=True) + "\n")
    _emit(reports, args)
    return 1 if bad else 0


def cmd_batch(args) -> int:
    reports = []
    bad = False
    for cfg in _load_configs(args):
        try:
            rep = build_report(run_world(cfg))
        except Exception as e:  # individual failures recorded, batch continues
            print(f"error: scenario {cfg.name}: {e}", file=sys.stderr)
            bad = True
            continue
        reports.append(rep)
        bad = bad or rep.flags.get("safety_violation", False)
    _emit(reports, args)
    return 1 if bad else 0


def cmd_trace_dump(args) -> int:
    for cfg in _load_configs(args):
        world = run_world(cfg)
        for entry in world.trace:
            sys.stdout.write(json.dumps(entry, default=str, sort_keys=True) + "\n")
    return 0


def cmd_topology_check(args) -> int:
    for cfg in _load_configs(args):
        g = Graph.from_edges(cfg.nodes, cfg.edges)
        print(f"scenario: {cfg.name}")
        print(f"  nodes: {cfg.nodes}  edges: {len(g.edges)}")
        print(f"  node_connectivity: {node_connectivity(g)}")
        print(f"  byzantine_capacity: {byzantine_capacity(g)}  declared f: {cfg.declared_f}")
        for src, dst, amount in cfg.demands:
            beta = local_connectivity(g, src, dst)
            feasible = "ok" if beta > cfg.declared_f else "INFEASIBLE"
            print(f"  demand {src}->{dst} ({amount} bits): local connectivity {beta} [{feasible}]")
            for p in max_disjoint_paths(g, src, dst).paths:
                print(f"    path: {'-'.join(map(str, p))}")
    return 0


def cmd_render(args) -> int:
    for cfg in _load_configs(args):
        sys.stdout.write(render_scenario(cfg))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qkdbft", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, trace=False):
        p.add_argument("scenario", nargs="*", help="scenario YAML file(s)")
        p.add_argument("--builtin", action="store_true", help="include the built-in suite")
        p.add_argument("--seeds", help="comma-separated seed list")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config field")
        if trace:
            p.add_argument("--csv", help="write the summary table to a file")
            p.add_argument("--jsonl", help="write machine-readable records to a file")
            p.add_argument("--figures", metavar="DIR", help="render figures into DIR")

    p = sub.add_parser("run", help="run scenarios and print the summary table")
    common(p, trace=True)
    p.add_argument("--trace", help="write the per-slot event trace to a file")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("batch", help="run many scenarios; failures don't stop the batch")
    common(p, trace=True)
    p.set_defaults(func=cmd_batch)

    p = sub.add_parser("trace-dump", help="print the per-slot event trace")
    common(p)
    p.set_defaults(func=cmd_trace_dump)

    p = sub.add_parser("topology-check", help="print connectivity and disjoint paths")
    common(p)
    p.set_defaults(func=cmd_topology_check)

    p = sub.add_parser("render", help="print the canonical YAML for scenarios")
    common(p)
    p.set_defaults(func=cmd_render)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
