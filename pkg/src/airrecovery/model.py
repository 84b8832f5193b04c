"""Problem instance and mutable schedule state.

All times are integer minutes from the scenario epoch (the start of the
recovery window), all money is integer cost units.  An :class:`Instance` is
immutable after loading; a :class:`Schedule` is the single-owner mutable
solution state that the search mutates through :func:`apply_move` and
reverts through :func:`revert_move`.
"""

from __future__ import annotations

import json
from bisect import insort
from dataclasses import dataclass, field, replace

Minutes = int

DEFAULT_D_MAX = 180


class ValidationError(ValueError):
    """Raised when an instance file violates the schema or an invariant."""


class StaleMoveError(RuntimeError):
    """Raised when a move is applied against a different schedule version."""


@dataclass(frozen=True)
class Flight:
    id: str
    origin: str
    destination: str
    sched_dep: Minutes
    sched_arr: Minutes
    pax: int = 0
    underway: bool = False
    required_crew: int = 1

    @property
    def block_time(self) -> Minutes:
        return self.sched_arr - self.sched_dep


@dataclass(frozen=True)
class Tail:
    id: str
    aircraft_type: str
    subtype: str
    capacity: int
    authorized: frozenset[str] | None = None  # None means unrestricted

    def may_visit(self, airport: str) -> bool:
        return self.authorized is None or airport in self.authorized


@dataclass(frozen=True)
class CrewMember:
    id: str
    licensed_types: frozenset[str]
    # Summary of a duty that is already open when the window starts.
    duty_start: Minutes | None = None
    duty_prev_end: Minutes | None = None
    duty_flights_flown: int = 0


@dataclass(frozen=True)
class GroundTask:
    """Maintenance task or an unavailability block; immovable either way."""

    id: str
    start: Minutes
    end: Minutes
    tail: str | None = None
    crew: str | None = None
    location: str | None = None
    is_block: bool = False


@dataclass(frozen=True)
class PaxConnection:
    id: str
    from_flight: str
    to_flight: str
    pax: int
    min_connect: Minutes


@dataclass(frozen=True)
class RuleParams:
    d_max: Minutes = DEFAULT_D_MAX
    turnaround: dict[str, Minutes] = field(default_factory=dict)  # by subtype
    crew_connect_same: Minutes = 30
    crew_connect_switch: Minutes = 45
    duty_base_max: Minutes = 780
    duty_step: Minutes = 30
    duty_free_flights: int = 4
    rest_floor: Minutes = 720

    def tail_gap(self, subtype: str) -> Minutes:
        return self.turnaround[subtype]

    def crew_gap(self, same_aircraft: bool) -> Minutes:
        return self.crew_connect_same if same_aircraft else self.crew_connect_switch

    def duty_max(self, n_flights: int) -> Minutes:
        return self.duty_base_max - self.duty_step * max(0, n_flights - self.duty_free_flights)

    def rest_min(self, duty_len: Minutes) -> Minutes:
        return max(self.rest_floor, duty_len)


class CostTables:
    """Per-flight cost lookups, resolved to plain dicts at load time.

    ``op`` is keyed by tail id or aircraft type (tail overrides type),
    ``reassign`` by aircraft type with the planned type pinned to zero,
    ``delay`` curves are piecewise-constant step functions given as sorted
    ``(upper_bound, cost)`` pairs.
    """

    def __init__(
        self,
        op: dict[str, dict[str, int]],
        reassign: dict[str, dict[str, int]],
        cancel: dict[str, int],
        missed: dict[str, int],
        delay_curves: dict[str, tuple[tuple[Minutes, int], ...]],
    ):
        self.op = op
        self.reassign = reassign
        self.cancel = cancel
        self.missed = missed
        self.delay_curves = delay_curves

    def op_cost(self, flight_id: str, tail: Tail) -> int:
        table = self.op[flight_id]
        hit = table.get(tail.id)
        return table[tail.aircraft_type] if hit is None else hit

    def reassign_cost(self, flight_id: str, aircraft_type: str) -> int:
        return self.reassign[flight_id].get(aircraft_type, 0)

    def cancel_cost(self, flight_id: str) -> int:
        return self.cancel[flight_id]

    def missed_cost(self, conn_id: str) -> int:
        return self.missed[conn_id]

    def delay_cost(self, flight_id: str, delay: Minutes) -> int:
        if delay <= 0:
            return 0
        curve = self.delay_curves[flight_id]
        for bound, cost in curve:
            if delay <= bound:
                return cost
        return curve[-1][1] if curve else 0


@dataclass(frozen=True)
class Instance:
    flights: dict[str, Flight]
    tails: dict[str, Tail]
    crew: dict[str, CrewMember]
    tasks: dict[str, GroundTask]
    connections: dict[str, PaxConnection]
    hub: str
    window: tuple[Minutes, Minutes]
    rules: RuleParams
    costs: CostTables
    planned_tail: dict[str, str]
    planned_crew: dict[str, tuple[str, ...]]
    # Derived indexes, filled in __post_init__.
    tails_by_type: dict[str, tuple[str, ...]] = field(default_factory=dict)
    conns_by_flight: dict[str, tuple[str, ...]] = field(default_factory=dict)
    planned_end_loc: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        by_type: dict[str, list[str]] = {}
        for tid in sorted(self.tails):
            by_type.setdefault(self.tails[tid].aircraft_type, []).append(tid)
        object.__setattr__(self, "tails_by_type", {k: tuple(v) for k, v in by_type.items()})

        by_flight: dict[str, list[str]] = {}
        for cid in sorted(self.connections):
            conn = self.connections[cid]
            by_flight.setdefault(conn.from_flight, []).append(cid)
            by_flight.setdefault(conn.to_flight, []).append(cid)
        object.__setattr__(self, "conns_by_flight", {k: tuple(v) for k, v in by_flight.items()})

        object.__setattr__(self, "planned_end_loc", self._planned_end_locations())

    def _planned_end_locations(self) -> dict[str, str]:
        ends: dict[str, tuple[Minutes, str]] = {}
        for fid, tid in self.planned_tail.items():
            f = self.flights[fid]
            cur = ends.get(tid)
            if cur is None or f.sched_arr > cur[0]:
                ends[tid] = (f.sched_arr, f.destination)
        for fid, crew_ids in self.planned_crew.items():
            f = self.flights[fid]
            for cid in crew_ids:
                cur = ends.get(cid)
                if cur is None or f.sched_arr > cur[0]:
                    ends[cid] = (f.sched_arr, f.destination)
        for task in self.tasks.values():
            rid = task.tail or task.crew
            if rid is None or task.location is None:
                continue
            cur = ends.get(rid)
            if cur is None or task.end > cur[0]:
                ends[rid] = (task.end, task.location)
        return {rid: loc for rid, (_, loc) in ends.items()}

    def planned_type(self, flight_id: str) -> str:
        return self.tails[self.planned_tail[flight_id]].aircraft_type

    def with_extra_tasks(self, blocks: list[GroundTask]) -> "Instance":
        """A copy of this instance with unavailability blocks added."""
        tasks = dict(self.tasks)
        for b in blocks:
            if b.id in tasks or b.id in self.flights:
                raise ValidationError(f"duplicate task id {b.id!r}")
            tasks[b.id] = b
        return replace(self, tasks=tasks)


# ---------------------------------------------------------------------------
# Instance loading


def _need(obj: dict, key: str, where: str):
    if key not in obj:
        raise ValidationError(f"{where}: missing required field {key!r}")
    return obj[key]


def _minutes(value, where: str, epoch=None) -> Minutes:
    if isinstance(value, bool):
        raise ValidationError(f"{where}: expected a time, got {value!r}")
    if isinstance(value, int):
        return value
    if isinstance(value, str):
        from datetime import datetime

        if epoch is None:
            raise ValidationError(f"{where}: ISO time given but instance has no 'epoch'")
        try:
            dt = datetime.fromisoformat(value)
        except ValueError as exc:
            raise ValidationError(f"{where}: bad ISO-8601 time {value!r}") from exc
        return int((dt - epoch).total_seconds() // 60)
    raise ValidationError(f"{where}: expected minutes or ISO-8601 string, got {value!r}")


def _delay_curve(raw, where: str) -> tuple[tuple[Minutes, int], ...]:
    curve = []
    last_bound, last_cost = 0, 0
    for i, pair in enumerate(raw):
        if not isinstance(pair, (list, tuple)) or len(pair) != 2:
            raise ValidationError(f"{where}[{i}]: expected [upper_bound, cost]")
        bound, cost = int(pair[0]), int(pair[1])
        if bound <= last_bound:
            raise ValidationError(f"{where}[{i}]: breakpoints must increase")
        if cost < last_cost:
            raise ValidationError(f"{where}[{i}]: delay curve must be non-decreasing")
        curve.append((bound, cost))
        last_bound, last_cost = bound, cost
    return tuple(curve)


def _resolve_cost_table(raw: dict, flights: dict[str, Flight], kind: str, resolver):
    default = raw.get("*")
    out = {}
    for fid in flights:
        spec = raw.get(fid, default)
        if spec is None:
            raise ValidationError(f"costs.{kind}: no entry for flight {fid!r} and no '*' default")
        out[fid] = resolver(spec, f"costs.{kind}[{fid}]", flights[fid])
    return out


def load_instance(source) -> Instance:
    """Load and validate an instance from a JSON byte/str stream or mapping.

    Raises :class:`ValidationError` naming the offending field path on any
    schema or cross-reference problem.
    """
    if isinstance(source, (bytes, str)):
        try:
            data = json.loads(source)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"instance JSON parse error: {exc}") from exc
    elif hasattr(source, "read"):
        try:
            data = json.load(source)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"instance JSON parse error: {exc}") from exc
    else:
        data = source
    if not isinstance(data, dict):
        raise ValidationError("instance: top level must be an object")
    if data.get("schema") != 1:
        raise ValidationError("instance: unsupported or missing 'schema' (expected 1)")

    epoch = None
    if "epoch" in data:
        from datetime import datetime

        epoch = datetime.fromisoformat(data["epoch"])

    hub = _need(data, "hub", "instance")
    win = _need(data, "window", "instance")
    window = (_minutes(_need(win, "start", "window"), "window.start", epoch),
              _minutes(_need(win, "end", "window"), "window.end", epoch))
    if window[1] <= window[0]:
        raise ValidationError("window: end must be after start")

    rules_raw = data.get("rules", {})
    turnaround = {str(k): int(v) for k, v in rules_raw.get("turnaround", {}).items()}
    rules = RuleParams(
        d_max=int(rules_raw.get("d_max", DEFAULT_D_MAX)),
        turnaround=turnaround,
        crew_connect_same=int(rules_raw.get("crew_connect_same", 30)),
        crew_connect_switch=int(rules_raw.get("crew_connect_switch", 45)),
        duty_base_max=int(rules_raw.get("duty_base_max", 780)),
        duty_step=int(rules_raw.get("duty_step", 30)),
        duty_free_flights=int(rules_raw.get("duty_free_flights", 4)),
        rest_floor=int(rules_raw.get("rest_floor", 720)),
    )
    if rules.crew_connect_switch < rules.crew_connect_same:
        raise ValidationError("rules: crew_connect_switch must be >= crew_connect_same")
    if rules.d_max <= 0:
        raise ValidationError("rules.d_max: must be positive")

    flights: dict[str, Flight] = {}
    for i, raw in enumerate(data.get("flights", [])):
        where = f"flights[{i}]"
        fid = str(_need(raw, "id", where))
        if fid in flights:
            raise ValidationError(f"{where}: duplicate flight id {fid!r}")
        dep = _minutes(_need(raw, "dep", where), f"{where}.dep", epoch)
        arr = _minutes(_need(raw, "arr", where), f"{where}.arr", epoch)
        if arr <= dep:
            raise ValidationError(f"{where}: arr must be after dep")
        flights[fid] = Flight(
            id=fid,
            origin=str(_need(raw, "origin", where)),
            destination=str(_need(raw, "destination", where)),
            sched_dep=dep,
            sched_arr=arr,
            pax=int(raw.get("pax", 0)),
            underway=bool(raw.get("underway", False)),
            required_crew=int(raw.get("required_crew", 1)),
        )

    tails: dict[str, Tail] = {}
    for i, raw in enumerate(data.get("tails", [])):
        where = f"tails[{i}]"
        tid = str(_need(raw, "id", where))
        if tid in tails:
            raise ValidationError(f"{where}: duplicate tail id {tid!r}")
        cap = int(_need(raw, "capacity", where))
        if cap <= 0:
            raise ValidationError(f"{where}.capacity: must be positive")
        auth = raw.get("authorized_airports")
        tails[tid] = Tail(
            id=tid,
            aircraft_type=str(_need(raw, "type", where)),
            subtype=str(raw.get("subtype", _need(raw, "type", where))),
            capacity=cap,
            authorized=None if auth is None else frozenset(map(str, auth)),
        )
    for tid, t in tails.items():
        if t.subtype not in rules.turnaround:
            raise ValidationError(f"rules.turnaround: no entry for subtype {t.subtype!r} (tail {tid!r})")

    crew: dict[str, CrewMember] = {}
    for i, raw in enumerate(data.get("crew", [])):
        where = f"crew[{i}]"
        cid = str(_need(raw, "id", where))
        if cid in crew:
            raise ValidationError(f"{where}: duplicate crew id {cid!r}")
        lic = frozenset(map(str, _need(raw, "licensed_types", where)))
        if not lic:
            raise ValidationError(f"{where}.licensed_types: must be non-empty")
        crew[cid] = CrewMember(
            id=cid,
            licensed_types=lic,
            duty_start=None if raw.get("duty_start") is None
            else _minutes(raw["duty_start"], f"{where}.duty_start", epoch),
            duty_prev_end=None if raw.get("duty_prev_end") is None
            else _minutes(raw["duty_prev_end"], f"{where}.duty_prev_end", epoch),
            duty_flights_flown=int(raw.get("duty_flights_flown", 0)),
        )

    tasks: dict[str, GroundTask] = {}
    for i, raw in enumerate(data.get("maintenance", [])):
        where = f"maintenance[{i}]"
        mid = str(_need(raw, "id", where))
        if mid in tasks or mid in flights:
            raise ValidationError(f"{where}: duplicate task id {mid!r}")
        tid = str(_need(raw, "tail", where))
        if tid not in tails:
            raise ValidationError(f"{where}.tail: unknown tail {tid!r}")
        start = _minutes(_need(raw, "start", where), f"{where}.start", epoch)
        end = _minutes(_need(raw, "end", where), f"{where}.end", epoch)
        if end <= start:
            raise ValidationError(f"{where}: end must be after start")
        tasks[mid] = GroundTask(
            id=mid, start=start, end=end, tail=tid,
            location=None if raw.get("location") is None else str(raw["location"]),
        )

    connections: dict[str, PaxConnection] = {}
    for i, raw in enumerate(data.get("connections", [])):
        where = f"connections[{i}]"
        cid = str(_need(raw, "id", where))
        if cid in connections:
            raise ValidationError(f"{where}: duplicate connection id {cid!r}")
        src = str(_need(raw, "from", where))
        dst = str(_need(raw, "to", where))
        if src == dst:
            raise ValidationError(f"{where}: from and to must differ")
        for fid in (src, dst):
            if fid not in flights:
                raise ValidationError(f"{where}: unknown flight {fid!r}")
        connections[cid] = PaxConnection(
            id=cid, from_flight=src, to_flight=dst,
            pax=int(raw.get("pax", 1)),
            min_connect=int(_need(raw, "min_connect", where)),
        )

    assignment = data.get("initial_assignment", {})
    planned_tail: dict[str, str] = {}
    planned_crew: dict[str, tuple[str, ...]] = {}
    for fid, f in flights.items():
        where = f"initial_assignment[{fid}]"
        raw = assignment.get(fid)
        if raw is None:
            raise ValidationError(f"{where}: flight has no initial assignment")
        tid = str(_need(raw, "tail", where))
        if tid not in tails:
            raise ValidationError(f"{where}.tail: unknown tail {tid!r}")
        crew_ids = tuple(str(c) for c in _need(raw, "crew", where))
        if len(crew_ids) != f.required_crew:
            raise ValidationError(f"{where}.crew: expected {f.required_crew} crew, got {len(crew_ids)}")
        for cid in crew_ids:
            if cid not in crew:
                raise ValidationError(f"{where}.crew: unknown crew {cid!r}")
            if tails[tid].aircraft_type not in crew[cid].licensed_types:
                raise ValidationError(
                    f"{where}.crew: crew {cid!r} not licensed for type {tails[tid].aircraft_type!r}")
        for airport in (f.origin, f.destination):
            if not tails[tid].may_visit(airport):
                raise ValidationError(f"{where}.tail: tail {tid!r} not authorized for {airport!r}")
        planned_tail[fid] = tid
        planned_crew[fid] = crew_ids

    costs_raw = data.get("costs", {})
    flights_or_empty = flights

    def _per_type(spec, where, _f):
        if not isinstance(spec, dict):
            raise ValidationError(f"{where}: expected a mapping of tail/type to cost")
        return {str(k): int(v) for k, v in spec.items()}

    def _flat(spec, where, _f):
        return int(spec)

    def _curve(spec, where, _f):
        return _delay_curve(spec, where)

    if flights_or_empty:
        op = _resolve_cost_table(costs_raw.get("op", {}), flights, "op", _per_type)
        reassign_raw = costs_raw.get("reassign", {"*": {}})
        reassign = _resolve_cost_table(reassign_raw, flights, "reassign", _per_type)
        cancel = _resolve_cost_table(costs_raw.get("cancel", {}), flights, "cancel", _flat)
        delay_curves = _resolve_cost_table(costs_raw.get("delay", {}), flights, "delay", _curve)
    else:
        op, reassign, cancel, delay_curves = {}, {}, {}, {}

    missed: dict[str, int] = {}
    missed_raw = costs_raw.get("missed_connection", {})
    for cid, conn in connections.items():
        spec = missed_raw.get(cid, missed_raw.get("*"))
        if spec is None:
            raise ValidationError(f"costs.missed_connection: no entry for {cid!r} and no '*' default")
        if isinstance(spec, dict):
            missed[cid] = int(spec["per_pax"]) * conn.pax
        else:
            missed[cid] = int(spec)

    for fid in flights:
        table = op[fid]
        tid = planned_tail[fid]
        ttype = tails[tid].aircraft_type
        if tid not in table and ttype not in table:
            raise ValidationError(f"costs.op[{fid}]: no cost for planned tail {tid!r} or type {ttype!r}")
        if reassign[fid].get(ttype, 0) != 0:
            raise ValidationError(f"costs.reassign[{fid}]: planned type {ttype!r} must cost 0")

    inst = Instance(
        flights=flights, tails=tails, crew=crew, tasks=tasks, connections=connections,
        hub=str(hub), window=window, rules=rules,
        costs=CostTables(op, reassign, cancel, missed, delay_curves),
        planned_tail=planned_tail, planned_crew=planned_crew,
    )
    return inst


# ---------------------------------------------------------------------------
# Schedule state


@dataclass(frozen=True)
class Rotation:
    """A maximal hub-to-hub flight series on one tail.

    ``anchored`` is False for partial series cut by the window boundary
    (e.g. a tail currently away from the hub); those cannot be swapped,
    moved, or cancelled.
    """

    key: str
    flights: tuple[str, ...]
    anchored: bool


class FlightState:
    __slots__ = ("delay", "cancelled", "tail", "crew")

    def __init__(self, delay: int, cancelled: bool, tail: str | None, crew: tuple[str, ...]):
        self.delay = delay
        self.cancelled = cancelled
        self.tail = tail
        self.crew = crew

    def copy(self) -> "FlightState":
        return FlightState(self.delay, self.cancelled, self.tail, self.crew)

    def as_tuple(self):
        return (self.delay, self.cancelled, self.tail, self.crew)


@dataclass(frozen=True)
class CancelGroup:
    flights: tuple[str, ...]
    tail: str
    crew: dict[str, tuple[str, ...]]
    rotation_key: str


class RevertToken:
    __slots__ = ("version_before", "version_after", "journal")

    def __init__(self, version_before: int, version_after: int, journal: list):
        self.version_before = version_before
        self.version_after = version_after
        self.journal = journal


class ChangeSet:
    """Resources and flights touched by a move, for incremental updates."""

    __slots__ = ("tails", "crews", "flights")

    def __init__(self):
        self.tails: set[str] = set()
        self.crews: set[str] = set()
        self.flights: set[str] = set()

    def sorted(self) -> tuple[tuple[str, ...], tuple[str, ...], tuple[str, ...]]:
        return (tuple(sorted(self.tails)), tuple(sorted(self.crews)), tuple(sorted(self.flights)))


class Schedule:
    """Mutable solution state bound to one instance.

    Tail sequences hold atomic rotation blocks plus ground tasks, ordered
    by effective start time; crew sequences hold flight and block ids.
    """

    def __init__(self, inst: Instance):
        self.inst = inst
        self.state: dict[str, FlightState] = {}
        self.rotations: dict[str, Rotation] = {}
        self.rot_of: dict[str, str] = {}
        self.tail_seq: dict[str, list[tuple[str, str]]] = {t: [] for t in inst.tails}
        self.crew_seq: dict[str, list[str]] = {c: [] for c in inst.crew}
        self.cancel_groups: dict[str, CancelGroup] = {}
        self.version = 0
        self.op_total = 0
        self.reassign_total = 0
        self.changed_count = 0
        self.frozen_delay_cost = 0
        self.frozen_le15 = 0
        self.frozen_gt15 = 0
        self.frozen_delayed: tuple[str, ...] = ()

    # -- construction -------------------------------------------------

    @classmethod
    def initial(cls, inst: Instance) -> "Schedule":
        """The planned schedule: every flight on its planned resources."""
        return cls.from_assignment(inst, inst.planned_tail, inst.planned_crew)

    @classmethod
    def from_assignment(
        cls,
        inst: Instance,
        tail_of: dict[str, str],
        crew_of: dict[str, tuple[str, ...]],
        delays: dict[str, int] | None = None,
        cancelled: set[str] | None = None,
    ) -> "Schedule":
        """Build schedule state from an explicit assignment.

        Cancelled flights carry no resources and no undo information.
        """
        delays = delays or {}
        cancelled = cancelled or set()
        sched = cls(inst)
        for fid in inst.flights:
            if fid in cancelled:
                sched.state[fid] = FlightState(0, True, None, ())
            else:
                sched.state[fid] = FlightState(delays.get(fid, 0), False,
                                               tail_of[fid], crew_of[fid])
        per_tail: dict[str, list[str]] = {t: [] for t in inst.tails}
        for fid in inst.flights:
            if fid not in cancelled:
                per_tail[tail_of[fid]].append(fid)
        for tid, fids in per_tail.items():
            fids.sort(key=lambda f: (inst.flights[f].sched_dep + sched.state[f].delay, f))
            for rot in _build_rotations(inst, fids):
                sched.rotations[rot.key] = rot
                for fid in rot.flights:
                    sched.rot_of[fid] = rot.key
                sched.tail_seq[tid].append(("rot", rot.key))
        for task in inst.tasks.values():
            if task.tail is not None:
                sched.tail_seq[task.tail].append(("task", task.id))
            elif task.crew is not None:
                sched.crew_seq[task.crew].append(task.id)
        for tid in sched.tail_seq:
            sched._sort_tail(tid)
        for fid, st in sched.state.items():
            for cid in st.crew:
                sched.crew_seq[cid].append(fid)
        for cid in sched.crew_seq:
            sched._sort_crew(cid)
        for fid in inst.flights:
            sched._add_assignment_totals(fid)
        sched.freeze_disruption_costs()
        return sched

    def clone(self) -> "Schedule":
        other = Schedule.__new__(Schedule)
        other.inst = self.inst
        other.state = {fid: st.copy() for fid, st in self.state.items()}
        other.rotations = dict(self.rotations)
        other.rot_of = dict(self.rot_of)
        other.tail_seq = {t: list(seq) for t, seq in self.tail_seq.items()}
        other.crew_seq = {c: list(seq) for c, seq in self.crew_seq.items()}
        other.cancel_groups = dict(self.cancel_groups)
        other.version = self.version
        other.op_total = self.op_total
        other.reassign_total = self.reassign_total
        other.changed_count = self.changed_count
        other.frozen_delay_cost = self.frozen_delay_cost
        other.frozen_le15 = self.frozen_le15
        other.frozen_gt15 = self.frozen_gt15
        other.frozen_delayed = self.frozen_delayed
        return other

    def snapshot_key(self):
        """A hashable digest of the full mutable state, for identity tests."""
        return (
            tuple(sorted((f, s.as_tuple()) for f, s in self.state.items())),
            tuple(sorted((t, tuple(seq)) for t, seq in self.tail_seq.items())),
            tuple(sorted((c, tuple(seq)) for c, seq in self.crew_seq.items())),
            tuple(sorted(self.cancel_groups)),
            self.version,
            self.op_total,
            self.reassign_total,
            self.changed_count,
        )

    # -- time helpers ---------------------------------------------------

    def eff_dep(self, fid: str) -> Minutes:
        return self.inst.flights[fid].sched_dep + self.state[fid].delay

    def eff_arr(self, fid: str) -> Minutes:
        return self.inst.flights[fid].sched_arr + self.state[fid].delay

    def item_start(self, item: tuple[str, str]) -> Minutes:
        kind, key = item
        if kind == "rot":
            return self.eff_dep(self.rotations[key].flights[0])
        return self.inst.tasks[key].start

    def seq_key(self, item: tuple[str, str]) -> tuple[Minutes, str]:
        return (self.item_start(item), item[1])

    def crew_key(self, ident: str) -> tuple[Minutes, str]:
        if ident in self.state:
            return (self.eff_dep(ident), ident)
        return (self.inst.tasks[ident].start, ident)

    def _sort_tail(self, tid: str):
        self.tail_seq[tid].sort(key=self.seq_key)

    def _sort_crew(self, cid: str):
        self.crew_seq[cid].sort(key=self.crew_key)

    def tail_units(self, tid: str) -> list[tuple[str, Minutes, Minutes, bool]]:
        """Flattened (id, start, end, is_flight) tuples for one tail."""
        units = []
        for kind, key in self.tail_seq[tid]:
            if kind == "rot":
                for fid in self.rotations[key].flights:
                    units.append((fid, self.eff_dep(fid), self.eff_arr(fid), True))
            else:
                task = self.inst.tasks[key]
                units.append((key, task.start, task.end, False))
        return units

    def crew_units(self, cid: str) -> list[tuple[str, Minutes, Minutes, bool]]:
        units = []
        for ident in self.crew_seq[cid]:
            if ident in self.state:
                units.append((ident, self.eff_dep(ident), self.eff_arr(ident), True))
            else:
                task = self.inst.tasks[ident]
                units.append((ident, task.start, task.end, False))
        return units

    # -- assignment cost totals ----------------------------------------

    def _assignment_contrib(self, fid: str) -> tuple[int, int, int]:
        st = self.state[fid]
        if st.cancelled or st.tail is None:
            return (0, 0, 0)
        inst = self.inst
        tail = inst.tails[st.tail]
        op = inst.costs.op_cost(fid, tail)
        planned_type = inst.planned_type(fid)
        rc = inst.costs.reassign_cost(fid, tail.aircraft_type) if tail.aircraft_type != planned_type else 0
        changed = (1 if st.tail != inst.planned_tail[fid] else 0)
        planned_crew = inst.planned_crew[fid]
        changed += sum(1 for c in st.crew if c not in planned_crew)
        return (op, rc, changed)

    def _add_assignment_totals(self, fid: str):
        op, rc, ch = self._assignment_contrib(fid)
        self.op_total += op
        self.reassign_total += rc
        self.changed_count += ch

    def _sub_assignment_totals(self, fid: str):
        op, rc, ch = self._assignment_contrib(fid)
        self.op_total -= op
        self.reassign_total -= rc
        self.changed_count -= ch

    def freeze_disruption_costs(self):
        """Record delay costs of underway flights; those never change."""
        total = le15 = gt15 = 0
        frozen = []
        for fid in sorted(self.state):
            st = self.state[fid]
            if self.inst.flights[fid].underway and st.delay > 0 and not st.cancelled:
                total += self.inst.costs.delay_cost(fid, st.delay)
                if st.delay > 15:
                    gt15 += 1
                else:
                    le15 += 1
                frozen.append(fid)
        self.frozen_delay_cost = total
        self.frozen_le15 = le15
        self.frozen_gt15 = gt15
        self.frozen_delayed = tuple(frozen)

    # -- primitive mutations (journaled) --------------------------------

    def _set_delay(self, fid: str, delay: int, journal: list, changes: ChangeSet):
        st = self.state[fid]
        old = st.delay
        if old == delay:
            return
        journal.append(("delay", fid, old))
        st.delay = delay
        rot_key = self.rot_of.get(fid)
        if rot_key is not None:
            tid = st.tail
            self._sort_tail(tid)
            changes.tails.add(tid)
        for cid in st.crew:
            self._sort_crew(cid)
            changes.crews.add(cid)
        changes.flights.add(fid)

    def _move_rotation(self, rot_key: str, to_tail: str, journal: list, changes: ChangeSet):
        rot = self.rotations[rot_key]
        from_tail = self.state[rot.flights[0]].tail
        if from_tail == to_tail:
            return
        journal.append(("rot_tail", rot_key, from_tail))
        self.tail_seq[from_tail].remove(("rot", rot_key))
        for fid in rot.flights:
            self._sub_assignment_totals(fid)
            st = self.state[fid]
            st.tail = to_tail
            self._add_assignment_totals(fid)
            changes.flights.add(fid)
            changes.crews.update(st.crew)
        insort(self.tail_seq[to_tail], ("rot", rot_key), key=self.seq_key)
        changes.tails.add(from_tail)
        changes.tails.add(to_tail)

    def _set_crew(self, fid: str, new_crew: tuple[str, ...], journal: list, changes: ChangeSet):
        st = self.state[fid]
        old_crew = st.crew
        if old_crew == new_crew:
            return
        journal.append(("crew", fid, old_crew))
        self._sub_assignment_totals(fid)
        for cid in old_crew:
            if cid not in new_crew:
                self.crew_seq[cid].remove(fid)
                changes.crews.add(cid)
        for cid in new_crew:
            if cid not in old_crew:
                insort(self.crew_seq[cid], fid, key=self.crew_key)
                changes.crews.add(cid)
        st.crew = new_crew
        self._add_assignment_totals(fid)
        changes.flights.add(fid)

    def _swap_crew_member(self, fid: str, old: str, new: str, journal: list, changes: ChangeSet):
        st = self.state[fid]
        journal.append(("crew", fid, st.crew))
        self._sub_assignment_totals(fid)
        st.crew = tuple(new if c == old else c for c in st.crew)
        self._add_assignment_totals(fid)
        self.crew_seq[old].remove(fid)
        insort(self.crew_seq[new], fid, key=self.crew_key)
        changes.crews.add(old)
        changes.crews.add(new)
        changes.flights.add(fid)

    def _cancel_rotation(self, rot_key: str, journal: list, changes: ChangeSet):
        rot = self.rotations[rot_key]
        first = rot.flights[0]
        tail = self.state[first].tail
        crew_map = {fid: self.state[fid].crew for fid in rot.flights}
        group = CancelGroup(flights=rot.flights, tail=tail, crew=crew_map, rotation_key=rot_key)
        journal.append(("cancel", rot_key, group, tuple(self.state[f].delay for f in rot.flights)))
        self.tail_seq[tail].remove(("rot", rot_key))
        changes.tails.add(tail)
        for fid in rot.flights:
            self._sub_assignment_totals(fid)
            st = self.state[fid]
            for cid in st.crew:
                self.crew_seq[cid].remove(fid)
                changes.crews.add(cid)
            st.cancelled = True
            st.tail = None
            st.crew = ()
            st.delay = 0
            del self.rot_of[fid]
            changes.flights.add(fid)
        for fid in rot.flights:
            self.cancel_groups[fid] = group

    def _restore_group(self, group: CancelGroup, journal: list, changes: ChangeSet):
        journal.append(("restore", group))
        insort(self.tail_seq[group.tail], ("rot", group.rotation_key), key=self.seq_key)
        changes.tails.add(group.tail)
        for fid in group.flights:
            st = self.state[fid]
            st.cancelled = False
            st.tail = group.tail
            st.crew = group.crew[fid]
            st.delay = 0
            self.rot_of[fid] = group.rotation_key
            self._add_assignment_totals(fid)
            for cid in st.crew:
                insort(self.crew_seq[cid], fid, key=self.crew_key)
                changes.crews.add(cid)
            del self.cancel_groups[fid]
            changes.flights.add(fid)

    # -- journal replay --------------------------------------------------

    def _undo_entry(self, entry, changes: ChangeSet):
        op = entry[0]
        if op == "delay":
            _, fid, old = entry
            st = self.state[fid]
            st.delay = old
            if self.rot_of.get(fid) is not None:
                self._sort_tail(st.tail)
                changes.tails.add(st.tail)
            for cid in st.crew:
                self._sort_crew(cid)
                changes.crews.add(cid)
            changes.flights.add(fid)
        elif op == "rot_tail":
            _, rot_key, from_tail = entry
            self._move_rotation(rot_key, from_tail, [], changes)
        elif op == "crew":
            _, fid, old_crew = entry
            st = self.state[fid]
            self._sub_assignment_totals(fid)
            for cid in st.crew:
                if cid not in old_crew:
                    self.crew_seq[cid].remove(fid)
                    changes.crews.add(cid)
            for cid in old_crew:
                if cid not in st.crew:
                    insort(self.crew_seq[cid], fid, key=self.crew_key)
                    changes.crews.add(cid)
            st.crew = old_crew
            self._add_assignment_totals(fid)
            changes.flights.add(fid)
        elif op == "cancel":
            _, rot_key, group, delays = entry
            self._restore_group(group, [], changes)
            for fid, d in zip(group.flights, delays):
                if d:
                    self._set_delay(fid, d, [], changes)
        elif op == "restore":
            (_, group) = entry
            self._cancel_rotation(group.rotation_key, [], changes)
        else:  # pragma: no cover
            raise AssertionError(f"unknown journal entry {op!r}")


def _build_rotations(inst: Instance, fids: list[str]) -> list[Rotation]:
    """Group a time-ordered flight list into maximal hub-to-hub series."""
    hub = inst.hub
    rotations = []
    current: list[str] = []
    started_at_hub = False
    for fid in fids:
        f = inst.flights[fid]
        if not current:
            current = [fid]
            started_at_hub = f.origin == hub
        else:
            current.append(fid)
        if f.destination == hub:
            rotations.append(Rotation(key=f"R-{current[0]}", flights=tuple(current),
                                      anchored=started_at_hub))
            current = []
    if current:
        rotations.append(Rotation(key=f"R-{current[0]}", flights=tuple(current), anchored=False))
    return rotations


# ---------------------------------------------------------------------------
# Moves


def rotation_of(schedule: Schedule, flight_id: str) -> Rotation:
    """The maximal hub-to-hub series on the flight's tail containing it."""
    st = schedule.state.get(flight_id)
    if st is None:
        raise KeyError(f"unknown flight {flight_id!r}")
    if st.cancelled or st.tail is None:
        raise ValueError(f"flight {flight_id!r} is cancelled or unassigned")
    return schedule.rotations[schedule.rot_of[flight_id]]


def apply_move(schedule: Schedule, move) -> tuple[RevertToken, ChangeSet]:
    """Mutate the schedule in place; returns an exact-restore token.

    The move must have been generated against the current state version.
    """
    if move.version != schedule.version:
        raise StaleMoveError(f"move built at version {move.version}, schedule at {schedule.version}")
    journal: list = []
    changes = ChangeSet()
    kind = move.kind
    if kind in ("swap_tail", "move_tail"):
        for rk in move.rot_a:
            schedule._move_rotation(rk, move.tail_b, journal, changes)
        for rk in move.rot_b:
            schedule._move_rotation(rk, move.tail_a, journal, changes)
    elif kind == "swap_crew":
        for fid in move.flights_a:
            schedule._swap_crew_member(fid, move.crew_a, move.crew_b, journal, changes)
        for fid in move.flights_b:
            schedule._swap_crew_member(fid, move.crew_b, move.crew_a, journal, changes)
    elif kind == "swap_both":
        for rk in move.rot_a:
            schedule._move_rotation(rk, move.tail_b, journal, changes)
            for fid in schedule.rotations[rk].flights:
                schedule._set_crew(fid, move.crews_b, journal, changes)
        for rk in move.rot_b:
            schedule._move_rotation(rk, move.tail_a, journal, changes)
            for fid in schedule.rotations[rk].flights:
                schedule._set_crew(fid, move.crews_a, journal, changes)
    elif kind in ("delay", "undo_delay"):
        for fid, d in move.delays:
            schedule._set_delay(fid, d, journal, changes)
    elif kind == "cancel":
        for rk in move.rot_a:
            schedule._cancel_rotation(rk, journal, changes)
    elif kind == "undo_cancel":
        group = schedule.cancel_groups[move.flights_a[0]]
        schedule._restore_group(group, journal, changes)
    else:
        raise ValueError(f"unknown move kind {kind!r}")
    token = RevertToken(move.version, move.version + 1, journal)
    schedule.version = move.version + 1
    return token, changes


def revert_move(schedule: Schedule, token: RevertToken) -> ChangeSet:
    """Restore the exact state from before the corresponding apply."""
    if schedule.version != token.version_after:
        raise StaleMoveError(
            f"revert token for version {token.version_after}, schedule at {schedule.version}")
    changes = ChangeSet()
    for entry in reversed(token.journal):
        schedule._undo_entry(entry, changes)
    schedule.version = token.version_before
    return changes
