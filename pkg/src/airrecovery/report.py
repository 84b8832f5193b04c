"""KPI computation, batch summaries, and machine-readable output.

Per-record CSV output is byte-deterministic for a given (instance, config,
seed): wall-clock runtime lives in the JSON output only.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field, replace

from . import cost as costmod
from .model import Schedule

KPI_FIELDS = (
    "cancelled_flights", "delayed_flights", "missed_pax_connections",
    "delayed_over_15", "delayed_over_5", "max_delay_min", "avg_delay_min",
    "npc", "total_cost", "npc_change_pct", "cost_change_pct",
)

RECORD_COLUMNS = ("algo", "scenario", "solved") + KPI_FIELDS


@dataclass
class KpiRecord:
    solved: bool
    cancelled_flights: int = 0
    delayed_flights: int = 0
    missed_pax_connections: int = 0
    delayed_over_15: int = 0
    delayed_over_5: int = 0
    max_delay_min: int = 0
    avg_delay_min: float = 0.0
    npc: int = 0
    total_cost: int = 0
    npc_change_pct: float | None = None
    cost_change_pct: float | None = None
    runtime_s: float = 0.0
    breakdown: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        out = {"solved": self.solved, "runtime_s": round(self.runtime_s, 3)}
        for name in KPI_FIELDS:
            out[name] = getattr(self, name)
        out["breakdown"] = self.breakdown
        return out


def compute_kpis(schedule: Schedule, solved: bool = True, runtime_s: float = 0.0,
                 reference: KpiRecord | None = None) -> KpiRecord:
    """The KPI battery of one solution, always under the original cost model."""
    cancelled = 0
    delays = []
    for fid in schedule.state:
        st = schedule.state[fid]
        if st.cancelled:
            cancelled += 1
        elif st.delay > 0:
            delays.append(st.delay)
    missed = sum(
        1 for cid in schedule.inst.connections
        if costmod._connection_broken(schedule, schedule.inst.connections[cid]))
    breakdown = costmod.total_cost(schedule, penalty=costmod.PenaltyState(coefficient=0))
    record = KpiRecord(
        solved=solved,
        cancelled_flights=cancelled,
        delayed_flights=len(delays),
        missed_pax_connections=missed,
        delayed_over_15=sum(1 for d in delays if d > 15),
        delayed_over_5=sum(1 for d in delays if d > 5),
        max_delay_min=max(delays, default=0),
        avg_delay_min=round(sum(delays) / len(delays), 2) if delays else 0.0,
        npc=breakdown.npc,
        total_cost=breakdown.total,
        runtime_s=runtime_s,
        breakdown=breakdown.to_json(),
    )
    if reference is not None:
        if reference.npc > 0:
            record.npc_change_pct = round(100.0 * (record.npc - reference.npc) / reference.npc, 2)
        if reference.total_cost > 0:
            record.cost_change_pct = round(
                100.0 * (record.total_cost - reference.total_cost) / reference.total_cost, 2)
    return record


def compute_kpis_with_reference(record: KpiRecord, reference: KpiRecord) -> KpiRecord:
    """A copy of ``record`` with change percentages against ``reference``."""
    out = replace(record)
    if reference.npc > 0:
        out.npc_change_pct = round(100.0 * (record.npc - reference.npc) / reference.npc, 2)
    if reference.total_cost > 0:
        out.cost_change_pct = round(
            100.0 * (record.total_cost - reference.total_cost) / reference.total_cost, 2)
    return out


@dataclass
class BatchSummary:
    algos: tuple[str, ...]
    n_scenarios: int
    n_common: int
    pct_solved: dict[str, float]
    means: dict[str, dict[str, float]]
    mean_runtime_s: dict[str, float]
    empty: bool

    def to_json(self) -> dict:
        return {
            "algos": list(self.algos), "n_scenarios": self.n_scenarios,
            "n_common": self.n_common, "empty": self.empty,
            "pct_solved": self.pct_solved, "means": self.means,
            "mean_runtime_s": {a: round(v, 3) for a, v in self.mean_runtime_s.items()},
        }


def summarize_batch(records: list[tuple[str, str, KpiRecord]]) -> BatchSummary:
    """Mean KPIs over the scenarios solved by every compared algorithm.

    Unsolved scenarios still count toward each algorithm's percentage
    solved, but are excluded from all means.
    """
    algos = tuple(sorted({algo for algo, _s, _r in records}))
    scenarios = sorted({s for _a, s, _r in records})
    by_algo: dict[str, dict[str, KpiRecord]] = {a: {} for a in algos}
    for algo, scenario, record in records:
        by_algo[algo][scenario] = record
    common = [s for s in scenarios
              if all(s in by_algo[a] and by_algo[a][s].solved for a in algos)]
    pct_solved = {}
    mean_runtime = {}
    for algo in algos:
        mine = [by_algo[algo][s] for s in scenarios if s in by_algo[algo]]
        solved = sum(1 for r in mine if r.solved)
        pct_solved[algo] = round(100.0 * solved / len(mine), 2) if mine else 0.0
        mean_runtime[algo] = (sum(r.runtime_s for r in mine) / len(mine)) if mine else 0.0
    means: dict[str, dict[str, float]] = {}
    for algo in algos:
        if not common:
            means[algo] = {}
            continue
        agg = {}
        for name in KPI_FIELDS:
            values = [getattr(by_algo[algo][s], name) for s in common]
            values = [v for v in values if v is not None]
            agg[name] = round(sum(values) / len(values), 2) if values else None
        means[algo] = agg
    return BatchSummary(algos=algos, n_scenarios=len(scenarios), n_common=len(common),
                        pct_solved=pct_solved, means=means, mean_runtime_s=mean_runtime,
                        empty=not common)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return f"{value:.2f}"
    return str(value)


def records_to_csv(records: list[tuple[str, str, KpiRecord]], config_echo: dict) -> str:
    buf = io.StringIO()
    buf.write("# config: " + json.dumps(config_echo, sort_keys=True) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RECORD_COLUMNS)
    for algo, scenario, record in records:
        row = [algo, scenario, _fmt(record.solved)]
        row.extend(_fmt(getattr(record, name)) for name in KPI_FIELDS)
        writer.writerow(row)
    return buf.getvalue()


def summary_to_csv(summary: BatchSummary, config_echo: dict) -> str:
    buf = io.StringIO()
    buf.write("# config: " + json.dumps(config_echo, sort_keys=True) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("algo", "pct_solved", "n_common") + KPI_FIELDS)
    for algo in summary.algos:
        row = [algo, _fmt(summary.pct_solved[algo]), summary.n_common]
        row.extend(_fmt(summary.means[algo].get(name)) for name in KPI_FIELDS)
        writer.writerow(row)
    return buf.getvalue()
