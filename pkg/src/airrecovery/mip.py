"""Tail-recovery MIP on a connection network.

Nodes are flight and maintenance activities inside the horizon plus a
source and sink per the flow formulation; an arc exists where two
activities can be performed successively by one aircraft under some delay
choice.  Big-M rows enforce turnaround times and passenger connections;
the piecewise-constant delay cost is linearized with ordered step
indicator binaries.  ``solve_exact`` is a best-first branch-and-bound over
HiGHS LP relaxations, intended for desk-scale oracle use; ``export_model``
writes deterministic LP or MPS text for external solvers.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .model import Instance, ValidationError

SOURCE = "@s"
SINK = "@t"


def _clean(name: str) -> str:
    """LP-format safe identifier."""
    return name.replace("-", ".").replace(":", ".")


@dataclass(frozen=True)
class Node:
    id: str
    kind: str  # "flight" | "maintenance"
    origin: str
    destination: str
    start: int  # scheduled departure / task start
    end: int    # scheduled arrival / task end


@dataclass
class ConnectionGraph:
    nodes: dict[str, Node]
    arcs: list[tuple[str, str]]
    source_arcs: dict[str, list[str]]  # tail -> nodes reachable from source
    sink_arcs: dict[str, list[str]]    # tail -> nodes that may end the path
    direct: list[str]                  # tails allowed an s->t arc
    horizon_end: int
    start_loc: dict[str, str]
    end_loc: dict[str, str]


@dataclass
class Row:
    name: str
    sense: str  # "E" or "L"
    rhs: float
    coeffs: dict[int, float]


@dataclass
class MipModel:
    var_names: list[str]
    integrality: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    objective: np.ndarray
    rows: list[Row]
    graph: ConnectionGraph
    instance: Instance
    x_index: dict[tuple[str, str, str], int]  # (v1, v2, tail)
    y_index: dict[str, int]
    d_index: dict[str, int]
    z_index: dict[str, int]

    @property
    def n_binaries(self) -> int:
        return int(self.integrality.sum())

    def stats(self) -> dict:
        return {"variables": len(self.var_names), "binaries": self.n_binaries,
                "rows": len(self.rows), "arcs": len(self.graph.arcs)}


@dataclass
class SolveLimits:
    max_binaries: int = 600
    max_nodes: int = 50_000
    time_limit_s: float = 120.0


@dataclass
class MipSolution:
    status: str  # "optimal" | "feasible" | "infeasible" | "limit"
    objective: int | None = None
    bound: float | None = None
    assignment: dict[str, str] = field(default_factory=dict)
    delays: dict[str, int] = field(default_factory=dict)
    cancelled: set[str] = field(default_factory=set)
    broken_connections: set[str] = field(default_factory=set)
    nodes_explored: int = 0

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"

    @property
    def gap(self) -> float:
        if self.objective is None or self.bound is None:
            return math.inf
        if self.objective == 0:
            return 0.0 if self.bound == 0 else math.inf
        return abs(self.objective - self.bound) / abs(self.objective)


# ---------------------------------------------------------------------------
# Graph construction


def build_graph(instance: Instance, horizon: int | None = None,
                current_delays: dict[str, int] | None = None) -> ConnectionGraph:
    """Connection network of all in-horizon activities.

    An arc (v1, v2) exists iff v2 starts where v1 ends and the timing is
    feasible under some admissible delay choice.
    """
    window_start, window_end = instance.window
    if horizon is None:
        horizon = window_end - window_start
    if horizon > window_end - window_start:
        raise ValueError("horizon exceeds the recovery window")
    horizon_end = window_start + horizon
    d_max = instance.rules.d_max
    min_turn = min(instance.rules.turnaround.values()) if instance.rules.turnaround else 0
    current_delays = current_delays or {}

    nodes: dict[str, Node] = {}
    for fid in sorted(instance.flights):
        f = instance.flights[fid]
        if f.sched_dep < horizon_end:
            nodes[fid] = Node(fid, "flight", f.origin, f.destination, f.sched_dep, f.sched_arr)
    for mid in sorted(instance.tasks):
        task = instance.tasks[mid]
        if task.tail is not None and task.start < horizon_end:
            loc = task.location if task.location is not None else ""
            nodes[mid] = Node(mid, "maintenance", loc, loc, task.start, task.end)

    arcs: list[tuple[str, str]] = []
    ordered = sorted(nodes.values(), key=lambda n: (n.start, n.id))
    for v1 in ordered:
        for v2 in ordered:
            if v1.id == v2.id:
                continue
            if v1.destination != v2.origin and v1.kind == "flight" and v2.kind == "flight":
                continue
            if v1.kind == "maintenance" or v2.kind == "maintenance":
                # maintenance ties to one tail; location "" matches anything
                if v1.destination and v2.origin and v1.destination != v2.origin:
                    continue
            if v1.kind == "flight" and v2.kind == "flight":
                lhs = v2.start + d_max
                rhs = v1.end + min_turn
            elif v1.kind == "flight":
                lhs = v2.start
                rhs = v1.end  # flight (possibly delayed to 0) before fixed task
            elif v2.kind == "flight":
                lhs = v2.start + d_max
                rhs = v1.end
            else:
                lhs = v2.start
                rhs = v1.end
            if lhs >= rhs:
                arcs.append((v1.id, v2.id))

    start_loc: dict[str, str] = {}
    end_loc: dict[str, str] = {}
    per_tail: dict[str, list[Node]] = {t: [] for t in instance.tails}
    beyond: dict[str, list] = {t: [] for t in instance.tails}
    for fid in sorted(instance.flights):
        f = instance.flights[fid]
        tid = instance.planned_tail[fid]
        if fid in nodes:
            per_tail[tid].append(nodes[fid])
        elif f.sched_dep >= horizon_end:
            beyond[tid].append(f)
    for mid in sorted(instance.tasks):
        task = instance.tasks[mid]
        if task.tail is not None and mid in nodes:
            per_tail[task.tail].append(nodes[mid])
    for tid in sorted(instance.tails):
        mine = sorted(per_tail[tid], key=lambda n: (n.start, n.id))
        if mine:
            start_loc[tid] = mine[0].origin or instance.hub
        else:
            start_loc[tid] = instance.hub
        future = sorted(beyond[tid], key=lambda f: (f.sched_dep, f.id))
        if future:
            end_loc[tid] = future[0].origin
        elif mine:
            end_loc[tid] = mine[-1].destination or instance.hub
        else:
            end_loc[tid] = start_loc[tid]

    source_arcs = {}
    sink_arcs = {}
    direct = []
    for tid in sorted(instance.tails):
        tail = instance.tails[tid]
        reachable = []
        ending = []
        for node in ordered:
            if node.kind == "maintenance":
                task = instance.tasks[node.id]
                if task.tail != tid:
                    continue
            else:
                f = instance.flights[node.id]
                if f.underway and instance.planned_tail[node.id] != tid:
                    continue
                if not (tail.may_visit(f.origin) and tail.may_visit(f.destination)):
                    continue
            if node.origin in ("", start_loc[tid]):
                reachable.append(node.id)
            if node.destination in ("", end_loc[tid]):
                ending.append(node.id)
        source_arcs[tid] = reachable
        sink_arcs[tid] = ending
        if start_loc[tid] == end_loc[tid]:
            direct.append(tid)
    return ConnectionGraph(nodes=nodes, arcs=arcs, source_arcs=source_arcs,
                           sink_arcs=sink_arcs, direct=direct, horizon_end=horizon_end,
                           start_loc=start_loc, end_loc=end_loc)


# ---------------------------------------------------------------------------
# Model construction


def _tail_may_serve(instance: Instance, tid: str, node: Node) -> bool:
    if node.kind == "maintenance":
        return instance.tasks[node.id].tail == tid
    f = instance.flights[node.id]
    if f.underway and instance.planned_tail[node.id] != tid:
        return False
    tail = instance.tails[tid]
    return tail.may_visit(f.origin) and tail.may_visit(f.destination)


def build_model(graph: ConnectionGraph, instance: Instance,
                current_delays: dict[str, int] | None = None) -> MipModel:
    """Assemble variables, objective, and constraint rows."""
    current_delays = current_delays or {}
    d_max = instance.rules.d_max
    tails = sorted(instance.tails)
    nodes = graph.nodes

    var_names: list[str] = []
    lower: list[float] = []
    upper: list[float] = []
    integ: list[int] = []
    obj: list[float] = []

    def add_var(name, lo, hi, integral, cost) -> int:
        var_names.append(name)
        lower.append(lo)
        upper.append(hi)
        integ.append(1 if integral else 0)
        obj.append(float(cost))
        return len(var_names) - 1

    def head_cost(head: str, tid: str) -> int:
        node = nodes[head]
        if node.kind != "flight":
            return 0
        tail = instance.tails[tid]
        cost = instance.costs.op_cost(head, tail)
        if tail.aircraft_type != instance.planned_type(head):
            cost += instance.costs.reassign_cost(head, tail.aircraft_type)
        return cost

    x_index: dict[tuple[str, str, str], int] = {}
    for v1, v2 in graph.arcs:
        for tid in tails:
            if _tail_may_serve(instance, tid, nodes[v1]) and _tail_may_serve(instance, tid, nodes[v2]):
                x_index[(v1, v2, tid)] = add_var(
                    f"x__{_clean(v1)}__{_clean(v2)}__{_clean(tid)}", 0, 1, True,
                    head_cost(v2, tid))
    for tid in tails:
        for vid in graph.source_arcs[tid]:
            x_index[(SOURCE, vid, tid)] = add_var(
                f"x__s__{_clean(vid)}__{_clean(tid)}", 0, 1, True, head_cost(vid, tid))
        for vid in graph.sink_arcs[tid]:
            x_index[(vid, SINK, tid)] = add_var(
                f"x__{_clean(vid)}__t__{_clean(tid)}", 0, 1, True, 0)
    for tid in graph.direct:
        x_index[(SOURCE, SINK, tid)] = add_var(f"x__s__t__{_clean(tid)}", 0, 1, True, 0)

    y_index: dict[str, int] = {}
    d_index: dict[str, int] = {}
    w_index: dict[tuple[str, int], int] = {}
    for vid in sorted(nodes):
        node = nodes[vid]
        if node.kind != "flight":
            continue
        f = instance.flights[vid]
        cancellable = 0 if f.underway else 1
        y_index[vid] = add_var(f"y__{_clean(vid)}", 0, cancellable, True,
                               instance.costs.cancel_cost(vid))
        cur = current_delays.get(vid, 0)
        if f.underway:
            d_index[vid] = add_var(f"d__{_clean(vid)}", cur, cur, False, 0)
        else:
            d_index[vid] = add_var(f"d__{_clean(vid)}", 0, d_max, False, 0)
        curve = instance.costs.delay_curves[vid]
        prev_cost = 0
        for k, (_bound, cost_k) in enumerate(curve):
            w_index[(vid, k)] = add_var(f"w__{_clean(vid)}__{k}", 0, 1, True,
                                        cost_k - prev_cost)
            prev_cost = cost_k

    z_index: dict[str, int] = {}
    for cid in sorted(instance.connections):
        conn = instance.connections[cid]
        if conn.from_flight in nodes and conn.to_flight in nodes:
            z_index[cid] = add_var(f"z__{_clean(cid)}", 0, 1, True,
                                   instance.costs.missed_cost(cid))

    rows: list[Row] = []

    in_arcs: dict[tuple[str, str], list[int]] = {}
    out_arcs: dict[tuple[str, str], list[int]] = {}
    for (v1, v2, tid), idx in x_index.items():
        out_arcs.setdefault((v1, tid), []).append(idx)
        in_arcs.setdefault((v2, tid), []).append(idx)

    for vid in sorted(nodes):
        for tid in tails:
            incoming = in_arcs.get((vid, tid), [])
            outgoing = out_arcs.get((vid, tid), [])
            if not incoming and not outgoing:
                continue
            coeffs: dict[int, float] = {}
            for idx in incoming:
                coeffs[idx] = coeffs.get(idx, 0) + 1
            for idx in outgoing:
                coeffs[idx] = coeffs.get(idx, 0) - 1
            rows.append(Row(f"flow__{_clean(vid)}__{_clean(tid)}", "E", 0.0, coeffs))
    for tid in tails:
        coeffs = {idx: 1.0 for idx in out_arcs.get((SOURCE, tid), [])}
        rows.append(Row(f"src__{_clean(tid)}", "E", 1.0, coeffs))
        coeffs = {idx: 1.0 for idx in in_arcs.get((SINK, tid), [])}
        rows.append(Row(f"snk__{_clean(tid)}", "E", 1.0, coeffs))

    for vid in sorted(nodes):
        node = nodes[vid]
        coeffs = {}
        for tid in tails:
            for idx in in_arcs.get((vid, tid), []):
                coeffs[idx] = 1.0
        if node.kind == "flight":
            coeffs[y_index[vid]] = 1.0
            rows.append(Row(f"assign__{_clean(vid)}", "E", 1.0, coeffs))
        else:
            rows.append(Row(f"maint__{_clean(vid)}", "E", 1.0, coeffs))

    subtypes = sorted({instance.tails[t].subtype for t in tails})
    tails_by_subtype = {s: [t for t in tails if instance.tails[t].subtype == s]
                        for s in subtypes}
    for v1, v2 in graph.arcs:
        n1, n2 = nodes[v1], nodes[v2]
        if n1.kind == "flight" and n2.kind == "flight":
            for sub in subtypes:
                xs = [x_index[(v1, v2, t)] for t in tails_by_subtype[sub]
                      if (v1, v2, t) in x_index]
                if not xs:
                    continue
                t_conn = instance.rules.turnaround[sub]
                slack = n2.start - n1.end - t_conn
                big_m = max(0, -slack + d_max)
                if big_m == 0 and slack >= d_max:
                    continue  # never binding under any delay
                coeffs = {d_index[v1]: 1.0, d_index[v2]: -1.0}
                for idx in xs:
                    coeffs[idx] = big_m
                rows.append(Row(f"turn__{_clean(v1)}__{_clean(v2)}__{_clean(sub)}",
                                "L", slack + big_m, coeffs))
        elif n1.kind == "flight":
            # flight then fixed task: f_a + d_f <= m_s when the arc is used
            xs = [x_index[(v1, v2, t)] for t in tails if (v1, v2, t) in x_index]
            slack = n2.start - n1.end
            big_m = max(0, -slack + d_max)
            if big_m > 0 or slack < d_max:
                coeffs = {d_index[v1]: 1.0}
                for idx in xs:
                    coeffs[idx] = big_m
                rows.append(Row(f"turn__{_clean(v1)}__{_clean(v2)}__fixed",
                                "L", slack + big_m, coeffs))
        elif n2.kind == "flight":
            # fixed task then flight: f_d + d_f >= m_e when the arc is used
            xs = [x_index[(v1, v2, t)] for t in tails if (v1, v2, t) in x_index]
            slack = n2.start - n1.end
            if slack >= 0:
                continue  # departs after the task ends even undelayed
            big_m = -slack
            coeffs = {d_index[v2]: -1.0}
            for idx in xs:
                coeffs[idx] = float(big_m)
            rows.append(Row(f"turn__{_clean(v1)}__{_clean(v2)}__fixed",
                            "L", slack + big_m, coeffs))

    for cid in sorted(z_index):
        conn = instance.connections[cid]
        f1, f2 = conn.from_flight, conn.to_flight
        slack = nodes[f2].start - nodes[f1].end - conn.min_connect
        big_m = max(1, -slack + d_max)
        coeffs = {d_index[f1]: 1.0, d_index[f2]: -1.0, z_index[cid]: -float(big_m)}
        rows.append(Row(f"pax__{_clean(cid)}", "L", slack, coeffs))
        rows.append(Row(f"paxy1__{_clean(cid)}", "L", 0.0,
                        {y_index[f1]: 1.0, z_index[cid]: -1.0}))
        rows.append(Row(f"paxy2__{_clean(cid)}", "L", 0.0,
                        {y_index[f2]: 1.0, z_index[cid]: -1.0}))

    for vid in sorted(nodes):
        if nodes[vid].kind != "flight":
            continue
        curve = instance.costs.delay_curves[vid]
        prev_bound = 0
        for k, (bound, _cost) in enumerate(curve):
            rows.append(Row(f"step__{_clean(vid)}__{k}", "L", float(prev_bound),
                            {d_index[vid]: 1.0, w_index[(vid, k)]: -float(d_max)}))
            if k > 0:
                rows.append(Row(f"steporder__{_clean(vid)}__{k}", "L", 0.0,
                                {w_index[(vid, k)]: 1.0, w_index[(vid, k - 1)]: -1.0}))
            prev_bound = bound

    return MipModel(
        var_names=var_names,
        integrality=np.array(integ, dtype=np.int8),
        lower=np.array(lower, dtype=float),
        upper=np.array(upper, dtype=float),
        objective=np.array(obj, dtype=float),
        rows=rows, graph=graph, instance=instance,
        x_index=x_index, y_index=y_index, d_index=d_index, z_index=z_index)


# ---------------------------------------------------------------------------
# Export / import


def export_model(model: MipModel, format: str = "lp") -> str:
    if format == "lp":
        return _write_lp(model)
    if format == "mps":
        return _write_mps(model)
    raise ValueError(f"unsupported export format {format!r}")


def _term(coef: float, name: str, first: bool) -> str:
    sign = "-" if coef < 0 else ("" if first else "+")
    mag = abs(coef)
    val = f"{int(mag)}" if mag == int(mag) else f"{mag}"
    return f"{sign} {val} {name}" if not first else f"{sign}{val} {name}"


def _write_lp(model: MipModel) -> str:
    out = ["Minimize", " obj:"]
    parts = []
    for idx, cost in enumerate(model.objective):
        if cost != 0:
            parts.append(_term(cost, model.var_names[idx], not parts))
    out[1] = " obj: " + (" ".join(parts) if parts else "0 " + model.var_names[0])
    out.append("Subject To")
    for row in model.rows:
        terms = []
        for idx in sorted(row.coeffs):
            coef = row.coeffs[idx]
            if coef != 0:
                terms.append(_term(coef, model.var_names[idx], not terms))
        op = "=" if row.sense == "E" else "<="
        rhs = f"{int(row.rhs)}" if row.rhs == int(row.rhs) else f"{row.rhs}"
        out.append(f" {row.name}: {' '.join(terms)} {op} {rhs}")
    out.append("Bounds")
    for idx, name in enumerate(model.var_names):
        lo, hi = model.lower[idx], model.upper[idx]
        if model.integrality[idx] and lo == 0 and hi == 1:
            continue
        lo_s = f"{int(lo)}" if lo == int(lo) else f"{lo}"
        hi_s = f"{int(hi)}" if hi == int(hi) else f"{hi}"
        out.append(f" {lo_s} <= {name} <= {hi_s}")
    binaries = [model.var_names[i] for i in range(len(model.var_names))
                if model.integrality[i]]
    if binaries:
        out.append("Binaries")
        for name in binaries:
            out.append(f" {name}")
    out.append("End")
    return "\n".join(out) + "\n"


def _write_mps(model: MipModel) -> str:
    out = ["NAME tailrecovery", "ROWS", " N obj"]
    for row in model.rows:
        out.append(f" {row.sense} {row.name}")
    out.append("COLUMNS")
    by_col: dict[int, list[tuple[str, float]]] = {}
    for row in model.rows:
        for idx, coef in row.coeffs.items():
            by_col.setdefault(idx, []).append((row.name, coef))
    in_binary_block = False
    for idx, name in enumerate(model.var_names):
        if bool(model.integrality[idx]) != in_binary_block:
            marker = "'MARKER' 'INTORG'" if not in_binary_block else "'MARKER' 'INTEND'"
            out.append(f" MARKER{idx} {marker}")
            in_binary_block = not in_binary_block
        entries = []
        if model.objective[idx] != 0:
            entries.append(("obj", model.objective[idx]))
        entries.extend(sorted(by_col.get(idx, [])))
        if not entries:
            entries.append(("obj", 0.0))
        for rname, coef in entries:
            out.append(f" {name} {rname} {coef}")
    if in_binary_block:
        out.append(" MARKEREND 'MARKER' 'INTEND'")
    out.append("RHS")
    for row in model.rows:
        if row.rhs != 0:
            out.append(f" rhs {row.name} {row.rhs}")
    out.append("BOUNDS")
    for idx, name in enumerate(model.var_names):
        lo, hi = model.lower[idx], model.upper[idx]
        if model.integrality[idx] and lo == 0 and hi == 1:
            continue
        if lo == hi:
            out.append(f" FX bnd {name} {lo}")
        else:
            if lo != 0:
                out.append(f" LO bnd {name} {lo}")
            out.append(f" UP bnd {name} {hi}")
    out.append("ENDATA")
    return "\n".join(out) + "\n"


@dataclass
class ParsedModel:
    objective: dict[str, float]
    rows: dict[str, tuple[str, float, dict[str, float]]]
    bounds: dict[str, tuple[float, float]]
    binaries: set[str]


def model_signature(model: MipModel) -> ParsedModel:
    """The exported-text content of a model, for round-trip comparison."""
    objective = {model.var_names[i]: float(c)
                 for i, c in enumerate(model.objective) if c != 0}
    rows = {}
    for row in model.rows:
        coeffs = {model.var_names[i]: float(c) for i, c in row.coeffs.items() if c != 0}
        rows[row.name] = (row.sense, float(row.rhs), coeffs)
    bounds = {}
    binaries = set()
    for i, name in enumerate(model.var_names):
        if model.integrality[i]:
            binaries.add(name)
            if model.lower[i] == 0 and model.upper[i] == 1:
                continue
        bounds[name] = (float(model.lower[i]), float(model.upper[i]))
    return ParsedModel(objective=objective, rows=rows, bounds=bounds, binaries=binaries)


def parse_lp(text: str) -> ParsedModel:
    section = None
    objective: dict[str, float] = {}
    rows: dict[str, tuple[str, float, dict[str, float]]] = {}
    bounds: dict[str, tuple[float, float]] = {}
    binaries: set[str] = set()

    def parse_terms(tokens: list[str]) -> dict[str, float]:
        coeffs: dict[str, float] = {}
        sign = 1.0
        pending: float | None = None
        for tok in tokens:
            if tok == "+":
                sign = 1.0
            elif tok == "-":
                sign = -1.0
            else:
                try:
                    value = float(tok)
                except ValueError:
                    coef = sign * (1.0 if pending is None else pending)
                    coeffs[tok] = coeffs.get(tok, 0.0) + coef
                    sign, pending = 1.0, None
                else:
                    pending = value
        return coeffs

    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        low = line.lower()
        if low in ("minimize", "subject to", "bounds", "binaries", "end"):
            section = low
            continue
        if section == "minimize":
            body = line.split(":", 1)[1] if ":" in line else line
            objective.update(parse_terms(body.replace("+", " + ").replace("-", " - ").split()))
        elif section == "subject to":
            name, body = line.split(":", 1)
            if "<=" in body:
                sense, (lhs, rhs) = "L", body.split("<=")
            else:
                sense, (lhs, rhs) = "E", body.split("=")
            coeffs = parse_terms(lhs.replace("+", " + ").replace("-", " - ").split())
            rows[name.strip()] = (sense, float(rhs), coeffs)
        elif section == "bounds":
            lo, name, hi = (p.strip() for p in line.split("<="))
            bounds[name] = (float(lo), float(hi))
        elif section == "binaries":
            binaries.add(line)
    objective = {k: v for k, v in objective.items() if v != 0}
    return ParsedModel(objective=objective, rows=rows, bounds=bounds, binaries=binaries)


def parse_mps(text: str) -> ParsedModel:
    section = None
    senses: dict[str, str] = {}
    coeffs: dict[str, dict[str, float]] = {}
    objective: dict[str, float] = {}
    rhs: dict[str, float] = {}
    bounds: dict[str, list[float | None]] = {}
    binaries: set[str] = set()
    integer_mode = False
    order: list[str] = []
    for raw in text.splitlines():
        line = raw.rstrip()
        if not line:
            continue
        if not raw.startswith(" "):
            section = line.split()[0]
            continue
        parts = line.split()
        if section == "ROWS":
            if parts[0] != "N":
                senses[parts[1]] = parts[0]
        elif section == "COLUMNS":
            if "'MARKER'" in line:
                integer_mode = "'INTORG'" in line
                continue
            name, rname, value = parts[0], parts[1], float(parts[2])
            if name not in coeffs:
                coeffs[name] = {}
                order.append(name)
                if integer_mode:
                    binaries.add(name)
            if rname == "obj":
                if value != 0:
                    objective[name] = value
            else:
                coeffs[name][rname] = value
        elif section == "RHS":
            rhs[parts[1]] = float(parts[2])
        elif section == "BOUNDS":
            btype, name = parts[0], parts[2]
            value = float(parts[3])
            entry = bounds.setdefault(name, [None, None])
            if btype == "FX":
                entry[0] = entry[1] = value
            elif btype == "LO":
                entry[0] = value
            elif btype == "UP":
                entry[1] = value
    rows = {}
    for rname, sense in senses.items():
        row_coeffs = {}
        for cname, cmap in coeffs.items():
            if rname in cmap and cmap[rname] != 0:
                row_coeffs[cname] = cmap[rname]
        rows[rname] = (sense, rhs.get(rname, 0.0), row_coeffs)
    out_bounds = {}
    for name, (lo, hi) in bounds.items():
        out_bounds[name] = (0.0 if lo is None else lo,
                            math.inf if hi is None else hi)
    return ParsedModel(objective=objective, rows=rows, bounds=out_bounds, binaries=binaries)


# ---------------------------------------------------------------------------
# Internal exact solver


def _to_arrays(model: MipModel):
    n = len(model.var_names)
    eq_rows = [r for r in model.rows if r.sense == "E"]
    ub_rows = [r for r in model.rows if r.sense == "L"]

    def build(rows_subset):
        data, ri, ci = [], [], []
        rhs = np.zeros(len(rows_subset))
        for i, row in enumerate(rows_subset):
            rhs[i] = row.rhs
            for idx, coef in row.coeffs.items():
                ri.append(i)
                ci.append(idx)
                data.append(coef)
        mat = sparse.csr_matrix((data, (ri, ci)), shape=(len(rows_subset), n))
        return mat, rhs

    a_eq, b_eq = build(eq_rows) if eq_rows else (None, None)
    a_ub, b_ub = build(ub_rows) if ub_rows else (None, None)
    return a_eq, b_eq, a_ub, b_ub


def solve_exact(model: MipModel, limits: SolveLimits | None = None) -> MipSolution:
    """Best-first branch-and-bound with HiGHS LP relaxations."""
    limits = limits or SolveLimits()
    if model.n_binaries > limits.max_binaries:
        raise ValueError(
            f"model has {model.n_binaries} binaries, above the desk-scale "
            f"limit {limits.max_binaries}")
    a_eq, b_eq, a_ub, b_ub = _to_arrays(model)
    c = model.objective
    binary_idx = np.flatnonzero(model.integrality)
    t_start = time.perf_counter()

    import heapq

    def lp(bounds_lo, bounds_hi):
        res = linprog(c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq,
                      bounds=np.column_stack([bounds_lo, bounds_hi]),
                      method="highs")
        return res

    root = lp(model.lower, model.upper)
    if root.status == 2:
        return MipSolution(status="infeasible")
    if root.status != 0:
        return MipSolution(status="limit")

    counter = 0
    heap = [(root.fun, counter, model.lower.copy(), model.upper.copy(), root.x)]
    incumbent = None
    incumbent_obj = math.inf
    explored = 0
    hit_limit = False
    while heap:
        bound, _cnt, lo, hi, x = heapq.heappop(heap)
        if bound >= incumbent_obj - 1e-6:
            continue
        explored += 1
        if explored > limits.max_nodes or time.perf_counter() - t_start > limits.time_limit_s:
            hit_limit = True
            break
        frac = x[binary_idx]
        dist = np.abs(frac - np.round(frac))
        worst = int(np.argmax(dist))
        if dist[worst] <= 1e-6:
            value = float(c @ x)
            if value < incumbent_obj - 1e-9:
                incumbent_obj = value
                incumbent = x.copy()
            continue
        branch_var = int(binary_idx[worst])
        for branch_hi in (0.0, 1.0):
            lo2 = lo.copy()
            hi2 = hi.copy()
            if branch_hi == 0.0:
                hi2[branch_var] = 0.0
            else:
                lo2[branch_var] = 1.0
            res = lp(lo2, hi2)
            if res.status != 0:
                continue
            if res.fun >= incumbent_obj - 1e-6:
                continue
            counter += 1
            heapq.heappush(heap, (res.fun, counter, lo2, hi2, res.x))

    best_bound = min((entry[0] for entry in heap), default=incumbent_obj)
    if incumbent is None:
        return MipSolution(status="limit" if hit_limit else "infeasible",
                           nodes_explored=explored)
    status = "feasible" if hit_limit or heap else "optimal"
    if not heap and not hit_limit:
        best_bound = incumbent_obj
    return _extract(model, incumbent, int(round(incumbent_obj)), best_bound, status, explored)


def _extract(model: MipModel, x: np.ndarray, objective: int, bound: float,
             status: str, explored: int) -> MipSolution:
    assignment: dict[str, str] = {}
    for (v1, v2, tid), idx in model.x_index.items():
        if x[idx] > 0.5 and v2 not in (SINK,) and model.graph.nodes.get(v2) is not None:
            if model.graph.nodes[v2].kind == "flight":
                assignment[v2] = tid
    delays = {}
    for fid, idx in model.d_index.items():
        val = int(round(x[idx]))
        if val:
            delays[fid] = val
    cancelled = {fid for fid, idx in model.y_index.items() if x[idx] > 0.5}
    broken = {cid for cid, idx in model.z_index.items() if x[idx] > 0.5}
    return MipSolution(status=status, objective=objective, bound=bound,
                       assignment=assignment, delays=delays, cancelled=cancelled,
                       broken_connections=broken, nodes_explored=explored)


def validate_solution_import(instance: Instance, data: dict) -> dict:
    """Validate an external tail-solution JSON ({flight: {tail, delay, cancelled}})."""
    out = {}
    for fid, entry in data.items():
        if fid not in instance.flights:
            raise ValidationError(f"solution references unknown flight {fid!r}")
        tail = entry.get("tail")
        cancelled = bool(entry.get("cancelled", False))
        delay = int(entry.get("delay", 0))
        if not cancelled:
            if tail not in instance.tails:
                raise ValidationError(f"solution[{fid}]: unknown tail {tail!r}")
            if not 0 <= delay <= instance.rules.d_max:
                raise ValidationError(f"solution[{fid}]: delay {delay} out of range")
        out[fid] = {"tail": tail, "delay": delay, "cancelled": cancelled}
    return out
