"""Metrics extraction and reporting.

``build_report`` reduces a finished World to a MetricsReport; the render
helpers emit the fixed-column summary table (topology, f, total Kb,
consensus Kb, delivery Kb, eavesdrop %, time s), a JSONL record stream,
and overview figures.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .bits import concat, derive_seed, keystream
from .crypto import toeplitz_seed_len
from .distribution import post_process
from .scenario import KBIT

__all__ = [
    "DemandReport",
    "MetricsReport",
    "build_report",
    "render_table",
    "to_jsonl",
    "render_figures",
    "TABLE_COLUMNS",
]

TABLE_COLUMNS = ("topology", "f", "total_kb", "consensus_kb", "delivery_kb",
                 "eavesdrop_pct", "time_s")


@dataclass(frozen=True)
class DemandReport:
    idx: int
    src: int
    dst: int
    amount_bits: int
    status: str
    delivered_bits: int
    final_key_bits: int | None
    eavesdrop_fraction: Fraction
    injected: bool


@dataclass(frozen=True)
class MetricsReport:
    scenario: str
    seed: int
    f: int
    nodes: int
    total_bits: int
    consensus_bits: int
    delivery_bits: int
    eavesdrop_worst: Fraction
    time_s: float | None
    views: int
    served_any: bool
    demands: tuple[DemandReport, ...]
    flags: dict = field(default_factory=dict)

    @property
    def total_kb(self) -> float:
        return self.total_bits / KBIT

    @property
    def consensus_kb(self) -> float:
        return self.consensus_bits / KBIT

    @property
    def delivery_kb(self) -> float:
        return self.delivery_bits / KBIT

    @property
    def eavesdrop_pct(self) -> float:
        return float(self.eavesdrop_worst * 100)


def _final_key(world, demand, views: dict[int, dict]) -> tuple[int | None, bool]:
    """(total post-processed key bits, endpoint mismatch?) for one demand."""
    if demand.src in world.byz or demand.dst in world.byz:
        return None, False
    src_node = world.agents[demand.src].node
    dst_node = world.agents[demand.dst].node
    total = 0
    mismatch = False
    for view, obs_outcome in sorted(views.items()):
        beta = len(obs_outcome["paths"])
        src_out = _outcome_of(src_node, view, demand.idx)
        dst_out = _outcome_of(dst_node, view, demand.idx)
        if src_out is None or dst_out is None:
            return None, mismatch
        segs = []
        for i in range(beta):
            s = src_out["secrets"].get((i, 0))
            d = dst_out["secrets"].get((i, 1))
            if s is None or d is None or s != d:
                mismatch = mismatch or (s is not None and d is not None and s != d)
                return None, mismatch
            segs.append(s)
        pre = concat(segs)
        leaked = world.ledger.observed.get((view, demand.idx), set())
        frac = Fraction(len(leaked), beta)
        seed = keystream(
            derive_seed(world.master, "postpa", view, demand.idx),
            0,
            toeplitz_seed_len(pre.n),
        )
        total += post_process(pre, frac, seed, world.params).n
    return total, mismatch


def _outcome_of(node, view: int, demand_idx: int):
    for out in node.outcomes:
        if out["view"] == view and out["demand"] == demand_idx:
            return out
    return None


def build_report(world) -> MetricsReport:
    obs = world.observer
    ledger = world.keystore.ledger
    demands = []
    worst = Fraction(0)
    served_any = False
    mismatch_flag = False
    for d in world.ctx.demands:
        status = obs.demand_status.get(d.idx, "pending")
        delivered_views = {
            out["view"]: out
            for out in obs.outcomes
            if out["demand"] == d.idx and out["result"] == "delivered"
        }
        delivered = d.amount_bits - obs.remaining.get(d.idx, d.amount_bits)
        if status == "served":
            served_any = True
            frac = max(
                (
                    Fraction(len(world.ledger.observed.get((v, d.idx), set())),
                             len(out["paths"]))
                    for v, out in delivered_views.items()
                ),
                default=Fraction(0),
            )
            final_bits, mism = _final_key(world, d, delivered_views)
            mismatch_flag = mismatch_flag or mism
        else:
            frac = Fraction(1)
            final_bits = None
        if not d.injected:
            worst = max(worst, frac)
        demands.append(DemandReport(
            d.idx, d.src, d.dst, d.amount_bits, status, delivered,
            final_bits, frac, d.injected,
        ))
    time_s = None
    if served_any and obs.resolved_at is not None:
        time_s = obs.resolved_at * world.config.delta_s
    flags = dict(world.ledger.flags)
    if mismatch_flag:
        flags["endpoint_mismatch"] = True
    return MetricsReport(
        scenario=world.config.name,
        seed=world.config.seed,
        f=world.f,
        nodes=world.n,
        total_bits=ledger.total_bits,
        consensus_bits=ledger.consensus_bits,
        delivery_bits=ledger.delivery_bits,
        eavesdrop_worst=worst if demands else Fraction(0),
        time_s=time_s,
        views=len(obs.view_log),
        served_any=served_any,
        demands=tuple(demands),
        flags=flags,
    )


def render_table(reports, delimiter: str = ",") -> str:
    """Fixed-column summary, one row per report; '-' marks rows where no
    demand could be served."""
    lines = [delimiter.join(TABLE_COLUMNS)]
    for r in reports:
        if r.served_any:
            row = (
                r.scenario,
                str(r.f),
                f"{r.total_kb:.2f}",
                f"{r.consensus_kb:.2f}",
                f"{r.delivery_kb:.2f}",
                f"{r.eavesdrop_pct:.2f}%",
                f"{r.time_s:g}",
            )
        else:
            row = (r.scenario, str(r.f), "-", "-", "-", f"{r.eavesdrop_pct:.2f}%", "-")
        lines.append(delimiter.join(row))
    return "\n".join(lines) + "\n"


def to_jsonl(reports) -> str:
    out = []
    for r in reports:
        out.append(json.dumps({
            "scenario": r.scenario,
            "seed": r.seed,
            "f": r.f,
            "nodes": r.nodes,
            "total_bits": r.total_bits,
            "consensus_bits": r.consensus_bits,
            "delivery_bits": r.delivery_bits,
            "eavesdrop_pct": round(r.eavesdrop_pct, 4),
            "time_s": r.time_s,
            "views": r.views,
            "served_any": r.served_any,
            "flags": r.flags,
            "demands": [
                {
                    "idx": d.idx, "src": d.src, "dst": d.dst,
                    "amount_bits": d.amount_bits, "status": d.status,
                    "delivered_bits": d.delivered_bits,
                    "final_key_bits": d.final_key_bits,
                    "eavesdrop_pct": round(float(d.eavesdrop_fraction * 100), 4),
                    "injected": d.injected,
                }
                for d in r.demands
            ],
        }, sort_keys=True))
    return "\n".join(out) + "\n"


def render_figures(reports, outdir, prefix: str = "report") -> list[str]:
    """Consumption, leakage, and timing overview figures as PNG files."""
    import os

    os.makedirs(outdir, exist_ok=True)
    labels = [f"{r.scenario}\nf={r.f}" for r in reports]
    xs = range(len(reports))
    paths = []

    fig, ax = plt.subplots(figsize=(max(6, 1.2 * len(reports)), 4))
    ax.bar(xs, [r.consensus_kb for r in reports], label="consensus")
    ax.bar(xs, [r.delivery_kb for r in reports],
           bottom=[r.consensus_kb for r in reports], label="delivery")
    ax.set_xticks(list(xs), labels, fontsize=8)
    ax.set_ylabel("key consumption (Kb)")
    ax.legend()
    fig.tight_layout()
    p = os.path.join(outdir, f"{prefix}-consumption.png")
    fig.savefig(p, dpi=120)
    plt.close(fig)
    paths.append(p)

    fig, ax = plt.subplots(figsize=(max(6, 1.2 * len(reports)), 4))
    ax.bar(xs, [r.eavesdrop_pct for r in reports], color="firebrick")
    ax.set_xticks(list(xs), labels, fontsize=8)
    ax.set_ylabel("worst-case eavesdrop (%)")
    ax.set_ylim(0, 105)
    fig.tight_layout()
    p = os.path.join(outdir, f"{prefix}-eavesdrop.png")
    fig.savefig(p, dpi=120)
    plt.close(fig)
    paths.append(p)

    fig, ax = plt.subplots(figsize=(max(6, 1.2 * len(reports)), 4))
    times = [r.time_s if r.time_s is not None else 0 for r in reports]
    ax.bar(xs, times, color="steelblue")
    ax.set_xticks(list(xs), labels, fontsize=8)
    ax.set_ylabel("time to serve all demands (s)")
    fig.tight_layout()
    p = os.path.join(outdir, f"{prefix}-time.png")
    fig.savefig(p, dpi=120)
    plt.close(fig)
    paths.append(p)
    return paths
