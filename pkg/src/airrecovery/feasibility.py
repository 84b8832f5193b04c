"""Issue detection and hard-constraint checking.

Issues are the unit of directed search: violations of the relaxed
constraints (overlaps between consecutive tasks, duty and rest rule
breaches) plus the steering issues (delays, cancellations, missed
passenger connections).  :class:`IssueSet` supports O(1) uniform random
picks and incremental updates after a move; ``detect_issues`` is the
from-scratch reference used as its oracle.
"""

from __future__ import annotations

from dataclasses import dataclass

from .model import ChangeSet, Instance, Schedule

OVERLAP_TAIL = "OverlapTail"
OVERLAP_CREW = "OverlapCrew"
OVERLAP_BOTH = "OverlapBoth"
EXCEEDED_DUTY = "ExceededDuty"
NOT_ENOUGH_REST = "NotEnoughRest"
DELAYED = "DelayedFlight"
CANCELLED = "CancelledFlight"
MISSED_CONNECTION = "MissedConnection"

VIOLATION_KINDS = (OVERLAP_TAIL, OVERLAP_CREW, OVERLAP_BOTH, EXCEEDED_DUTY, NOT_ENOUGH_REST)


class Issue:
    """One undesirable feature of the current schedule.

    ``magnitude`` is in minutes for violations and delays, passenger count
    for missed connections and cancellations.  ``resolve_delay`` is the
    exact delay of the issue's changeable flight that would zero it, where
    that lever applies.
    """

    __slots__ = ("key", "kind", "flights", "resources", "magnitude", "resolve_delay", "start")

    def __init__(self, key, kind, flights, resources, magnitude, resolve_delay, start):
        self.key = key
        self.kind = kind
        self.flights = flights
        self.resources = resources
        self.magnitude = magnitude
        self.resolve_delay = resolve_delay
        self.start = start

    def __repr__(self):  # pragma: no cover
        return f"Issue({self.kind}, {self.flights}, mag={self.magnitude})"

    def to_json(self):
        return {
            "kind": self.kind,
            "flights": list(self.flights),
            "resources": list(self.resources),
            "magnitude": self.magnitude,
            "start": self.start,
        }


@dataclass(frozen=True)
class Duty:
    start: int
    end: int
    flights: tuple[str, ...]
    n_flights: int
    started: bool

    @property
    def span(self) -> int:
        return self.end - self.start


@dataclass(frozen=True)
class HardViolation:
    constraint: str  # C3..C7
    resource: str
    flights: tuple[str, ...]
    detail: str


def duty_partition(schedule: Schedule, crew_id: str) -> list[Duty]:
    """Split a crew member's flight sequence into duties.

    Consecutive flights separated by at least the rest floor start a new
    duty; the rest actually required after a duty may be longer and is
    checked separately.  An open duty from before the window is merged
    into the first run when the boundary gap is shorter than the floor.
    """
    inst = schedule.inst
    rules = inst.rules
    member = inst.crew[crew_id]
    flights = [f for f in schedule.crew_seq[crew_id] if f in schedule.state]
    runs: list[list[str]] = []
    for fid in flights:
        if runs and schedule.eff_dep(fid) - schedule.eff_arr(runs[-1][-1]) < rules.rest_floor:
            runs[-1].append(fid)
        else:
            runs.append([fid])
    duties = []
    for i, run in enumerate(runs):
        start = schedule.eff_dep(run[0])
        end = schedule.eff_arr(run[-1])
        count = len(run)
        started = inst.flights[run[0]].underway
        if i == 0 and member.duty_prev_end is not None:
            if start - member.duty_prev_end < rules.rest_floor:
                open_start = member.duty_start if member.duty_start is not None else member.duty_prev_end
                start = min(start, open_start)
                count += member.duty_flights_flown
                started = True
        duties.append(Duty(start=start, end=end, flights=tuple(run), n_flights=count, started=started))
    return duties


def _tail_pairs(schedule: Schedule, tail_id: str):
    """Adjacent unit pairs on a tail with positive overlap magnitude."""
    inst = schedule.inst
    gap_flights = inst.rules.tail_gap(inst.tails[tail_id].subtype)
    units = schedule.tail_units(tail_id)
    out = []
    for (a, _a_start, a_end, a_fl), (b, b_start, _b_end, b_fl) in zip(units, units[1:]):
        if not a_fl and not b_fl:
            continue  # two immovable tasks; nothing the search could change
        required = gap_flights if (a_fl and b_fl) else 0
        mag = required - (b_start - a_end)
        if mag > 0:
            out.append(((a, b), mag, b_start))
    return out


def _crew_pairs(schedule: Schedule, crew_id: str):
    inst = schedule.inst
    rules = inst.rules
    units = schedule.crew_units(crew_id)
    state = schedule.state
    out = []
    for (a, _a_start, a_end, a_fl), (b, b_start, _b_end, b_fl) in zip(units, units[1:]):
        if not a_fl and not b_fl:
            continue
        if a_fl and b_fl:
            same = state[a].tail is not None and state[a].tail == state[b].tail
            required = rules.crew_gap(same)
        else:
            required = 0
        mag = required - (b_start - a_end)
        if mag > 0:
            out.append(((a, b), mag, b_start))
    return out


def _duty_issues(schedule: Schedule, crew_id: str) -> list[Issue]:
    inst = schedule.inst
    rules = inst.rules
    member = inst.crew[crew_id]
    duties = duty_partition(schedule, crew_id)
    issues = []
    for duty in duties:
        excess = duty.span - rules.duty_max(duty.n_flights)
        if excess > 0:
            issues.append(Issue(
                key=("DUTY", crew_id, duty.flights[0]), kind=EXCEEDED_DUTY,
                flights=duty.flights, resources=(crew_id,), magnitude=excess,
                resolve_delay=excess, start=duty.start))
    for prev, nxt in zip(duties, duties[1:]):
        actual = nxt.start - prev.end
        shortfall = rules.rest_min(prev.span) - actual
        if shortfall > 0:
            issues.append(Issue(
                key=("REST", crew_id, prev.flights[-1]), kind=NOT_ENOUGH_REST,
                flights=(prev.flights[-1], nxt.flights[0]), resources=(crew_id,),
                magnitude=shortfall, resolve_delay=shortfall, start=prev.end))
    if duties and member.duty_prev_end is not None and not duties[0].started:
        open_start = member.duty_start if member.duty_start is not None else member.duty_prev_end
        required = rules.rest_min(member.duty_prev_end - open_start)
        actual = duties[0].start - member.duty_prev_end
        shortfall = required - actual
        if shortfall > 0:
            issues.append(Issue(
                key=("REST", crew_id, ""), kind=NOT_ENOUGH_REST,
                flights=(duties[0].flights[0],), resources=(crew_id,),
                magnitude=shortfall, resolve_delay=shortfall, start=member.duty_prev_end))
    return issues


def _connection_state(schedule: Schedule, conn_id: str):
    """(broken, catch_up_delay, start) for a passenger connection."""
    conn = schedule.inst.connections[conn_id]
    st_from = schedule.state[conn.from_flight]
    st_to = schedule.state[conn.to_flight]
    if st_from.cancelled or st_to.cancelled:
        return True, None, schedule.inst.flights[conn.from_flight].sched_arr
    slack = schedule.eff_dep(conn.to_flight) - (schedule.eff_arr(conn.from_flight) + conn.min_connect)
    if slack < 0:
        return True, -slack, schedule.eff_arr(conn.from_flight)
    return False, None, None


class IssueSet:
    """Indexed issue collection with O(1) random pick and incremental update."""

    def __init__(self, schedule: Schedule, include_crew: bool = True):
        self.schedule = schedule
        self.include_crew = include_crew
        self._items: list[Issue] = []
        self._pos: dict[tuple, int] = {}
        self._ov_tail: dict[tuple, tuple[str, int]] = {}
        self._ov_crew: dict[tuple, dict[str, int]] = {}
        self._pairs_by_tail: dict[str, set] = {}
        self._pairs_by_crew: dict[str, set] = {}
        self._duty_keys: dict[str, set] = {}
        # Cost-weighted aggregates for O(1) objective evaluation.
        self.violation_minutes = 0
        self.delay_cost = 0
        self.cancel_cost = 0
        self.missed_cost = 0
        self.n_delayed_le15 = 0
        self.n_delayed_gt15 = 0

    # -- container primitives ------------------------------------------

    def __len__(self):
        return len(self._items)

    def __iter__(self):
        return iter(self._items)

    def get(self, key):
        pos = self._pos.get(key)
        return None if pos is None else self._items[pos]

    def random(self, rng) -> Issue:
        return self._items[rng.randrange(len(self._items))]

    def as_dict(self) -> dict[tuple, tuple[str, int]]:
        return {i.key: (i.kind, i.magnitude) for i in self._items}

    def _account(self, issue: Issue, sign: int):
        kind = issue.kind
        costs = self.schedule.inst.costs
        if kind in (OVERLAP_TAIL, OVERLAP_CREW, OVERLAP_BOTH, EXCEEDED_DUTY, NOT_ENOUGH_REST):
            self.violation_minutes += sign * issue.magnitude
        elif kind == DELAYED:
            fid = issue.flights[0]
            self.delay_cost += sign * costs.delay_cost(fid, issue.magnitude)
            if issue.magnitude > 15:
                self.n_delayed_gt15 += sign
            else:
                self.n_delayed_le15 += sign
        elif kind == CANCELLED:
            self.cancel_cost += sign * costs.cancel_cost(issue.flights[0])
        elif kind == MISSED_CONNECTION:
            self.missed_cost += sign * costs.missed_cost(issue.resources[0])

    def _put(self, issue: Issue):
        pos = self._pos.get(issue.key)
        if pos is not None:
            self._account(self._items[pos], -1)
            self._items[pos] = issue
        else:
            self._pos[issue.key] = len(self._items)
            self._items.append(issue)
        self._account(issue, +1)

    def _discard(self, key):
        pos = self._pos.pop(key, None)
        if pos is None:
            return
        issue = self._items[pos]
        self._account(issue, -1)
        last = self._items.pop()
        if pos < len(self._items):
            self._items[pos] = last
            self._pos[last.key] = pos

    # -- overlap pair records --------------------------------------------

    def _refresh_pair(self, pair):
        tail_part = self._ov_tail.get(pair)
        crew_parts = self._ov_crew.get(pair)
        key = ("OV",) + pair
        if not tail_part and not crew_parts:
            self._discard(key)
            return
        sched = self.schedule
        a, b = pair
        magnitude = 0
        deficits = []
        resources = []
        if tail_part:
            magnitude += tail_part[1]
            deficits.append(tail_part[1])
            resources.append(tail_part[0])
        if crew_parts:
            for cid in sorted(crew_parts):
                magnitude += crew_parts[cid]
                deficits.append(crew_parts[cid])
                resources.append(cid)
        if tail_part and crew_parts:
            kind = OVERLAP_BOTH
        elif tail_part:
            kind = OVERLAP_TAIL
        else:
            kind = OVERLAP_CREW
        start = sched.eff_dep(b) if b in sched.state else sched.inst.tasks[b].start
        self._put(Issue(key=key, kind=kind, flights=pair, resources=tuple(resources),
                        magnitude=magnitude, resolve_delay=max(deficits), start=start))

    def _rescan_tail(self, tid: str):
        for pair in sorted(self._pairs_by_tail.pop(tid, ())):
            rec = self._ov_tail.get(pair)
            if rec is not None and rec[0] == tid:
                del self._ov_tail[pair]
                self._refresh_pair(pair)
        fresh = set()
        for pair, mag, _start in _tail_pairs(self.schedule, tid):
            self._ov_tail[pair] = (tid, mag)
            fresh.add(pair)
            self._refresh_pair(pair)
        if fresh:
            self._pairs_by_tail[tid] = fresh

    def _rescan_crew(self, cid: str):
        for pair in sorted(self._pairs_by_crew.pop(cid, ())):
            parts = self._ov_crew.get(pair)
            if parts is not None:
                parts.pop(cid, None)
                if not parts:
                    del self._ov_crew[pair]
            self._refresh_pair(pair)
        fresh = set()
        for pair, mag, _start in _crew_pairs(self.schedule, cid):
            self._ov_crew.setdefault(pair, {})[cid] = mag
            fresh.add(pair)
            self._refresh_pair(pair)
        if fresh:
            self._pairs_by_crew[cid] = fresh
        for key in sorted(self._duty_keys.pop(cid, ())):
            self._discard(key)
        fresh_duty = set()
        for issue in _duty_issues(self.schedule, cid):
            self._put(issue)
            fresh_duty.add(issue.key)
        if fresh_duty:
            self._duty_keys[cid] = fresh_duty

    def _rescan_flight(self, fid: str):
        sched = self.schedule
        st = sched.state[fid]
        flight = sched.inst.flights[fid]
        del_key = ("DEL", fid, "")
        if st.delay > 0 and not st.cancelled and not flight.underway:
            self._put(Issue(key=del_key, kind=DELAYED, flights=(fid,), resources=(),
                            magnitude=st.delay, resolve_delay=None, start=sched.eff_dep(fid)))
        else:
            self._discard(del_key)
        cxl_key = ("CXL", fid, "")
        if st.cancelled:
            self._put(Issue(key=cxl_key, kind=CANCELLED, flights=(fid,), resources=(),
                            magnitude=max(1, flight.pax), resolve_delay=None,
                            start=flight.sched_dep))
        else:
            self._discard(cxl_key)

    def _rescan_connection(self, conn_id: str):
        broken, catch_up, start = _connection_state(self.schedule, conn_id)
        key = ("MC", conn_id, "")
        if broken:
            conn = self.schedule.inst.connections[conn_id]
            self._put(Issue(key=key, kind=MISSED_CONNECTION,
                            flights=(conn.from_flight, conn.to_flight),
                            resources=(conn_id,), magnitude=conn.pax,
                            resolve_delay=catch_up, start=start))
        else:
            self._discard(key)

    # -- public API -------------------------------------------------------

    def rebuild(self):
        sched = self.schedule
        for tid in sorted(sched.tail_seq):
            self._rescan_tail(tid)
        if self.include_crew:
            for cid in sorted(sched.crew_seq):
                self._rescan_crew(cid)
        conns = set()
        for fid in sorted(sched.state):
            self._rescan_flight(fid)
            conns.update(sched.inst.conns_by_flight.get(fid, ()))
        for conn_id in sorted(conns):
            self._rescan_connection(conn_id)
        return self

    def update(self, changes: ChangeSet) -> "IssueSet":
        """Apply incremental recomputation for moved/changed resources."""
        tails, crews, flights = changes.sorted()
        for tid in tails:
            self._rescan_tail(tid)
        if self.include_crew:
            for cid in crews:
                self._rescan_crew(cid)
        conns = set()
        for fid in flights:
            self._rescan_flight(fid)
            conns.update(self.schedule.inst.conns_by_flight.get(fid, ()))
        for conn_id in sorted(conns):
            self._rescan_connection(conn_id)
        return self


def detect_issues(schedule: Schedule, instance: Instance | None = None,
                  include_crew: bool = True) -> IssueSet:
    """Full from-scratch issue inventory of a schedule."""
    del instance  # bound to the schedule; kept for signature compatibility
    return IssueSet(schedule, include_crew=include_crew).rebuild()


def update_issues(issues: IssueSet, schedule: Schedule, changes: ChangeSet) -> IssueSet:
    assert issues.schedule is schedule
    return issues.update(changes)


# ---------------------------------------------------------------------------
# Hard constraints (C3-C7)


def _tail_unit_locs(schedule: Schedule, unit_id: str, is_flight: bool):
    if is_flight:
        f = schedule.inst.flights[unit_id]
        return f.origin, f.destination
    loc = schedule.inst.tasks[unit_id].location
    return loc, loc


def _pair_required_gap(schedule: Schedule, resource: str, is_crew: bool,
                       a: str, a_fl: bool, b: str, b_fl: bool) -> int:
    if not (a_fl and b_fl):
        return 0
    if is_crew:
        state = schedule.state
        same = state[a].tail is not None and state[a].tail == state[b].tail
        return schedule.inst.rules.crew_gap(same)
    return schedule.inst.rules.tail_gap(schedule.inst.tails[resource].subtype)


def _chain_violations(schedule: Schedule, resource: str, units,
                      is_crew: bool) -> list[HardViolation]:
    """Location continuity over non-conflicting adjacent pairs.

    Pairs violating their minimum connection gap are an overlap issue, not
    a continuity violation: the itinerary there is unresolved by design
    while the search runs.
    """
    out = []
    for (a, _as_, a_end, a_fl), (b, b_start, _be, b_fl) in zip(units, units[1:]):
        required = _pair_required_gap(schedule, resource, is_crew, a, a_fl, b, b_fl)
        if b_start - a_end < required:
            continue
        _, a_to = _tail_unit_locs(schedule, a, a_fl)
        b_from, _ = _tail_unit_locs(schedule, b, b_fl)
        if a_to is not None and b_from is not None and a_to != b_from:
            out.append(HardViolation("C7", resource, (a, b),
                                     f"{a} ends at {a_to}, {b} starts at {b_from}"))
    return out


def check_hard(schedule: Schedule, instance: Instance | None = None) -> list[HardViolation]:
    """C3-C7 violations; empty list means all hard constraints hold."""
    inst = schedule.inst
    out: list[HardViolation] = []
    for fid in sorted(schedule.state):
        st = schedule.state[fid]
        f = inst.flights[fid]
        if st.cancelled:
            if st.tail is not None or st.crew:
                out.append(HardViolation("C6", fid, (fid,), "cancelled flight still holds resources"))
            continue
        if st.tail is None or len(st.crew) != f.required_crew:
            out.append(HardViolation("C6", fid, (fid,),
                                     f"needs 1 tail and {f.required_crew} crew"))
            continue
        tail = inst.tails[st.tail]
        for cid in st.crew:
            if tail.aircraft_type not in inst.crew[cid].licensed_types:
                out.append(HardViolation("C3", cid, (fid,),
                                         f"crew {cid} not licensed for {tail.aircraft_type}"))
        for airport in (f.origin, f.destination):
            if not tail.may_visit(airport):
                out.append(HardViolation("C4", st.tail, (fid,),
                                         f"tail {st.tail} not authorized for {airport}"))
    for mid in sorted(inst.tasks):
        task = inst.tasks[mid]
        if task.tail is not None and ("task", mid) not in schedule.tail_seq[task.tail]:
            out.append(HardViolation("C5", task.tail, (mid,), "fixed task missing from tail sequence"))
        if task.crew is not None and mid not in schedule.crew_seq[task.crew]:
            out.append(HardViolation("C5", task.crew, (mid,), "fixed task missing from crew sequence"))
    for tid in sorted(schedule.tail_seq):
        units = schedule.tail_units(tid)
        out.extend(_chain_violations(schedule, tid, units, is_crew=False))
        planned_end = inst.planned_end_loc.get(tid)
        if units and planned_end is not None:
            last_id, _s, _e, last_fl = units[-1]
            _, end_loc = _tail_unit_locs(schedule, last_id, last_fl)
            if end_loc is not None and end_loc != planned_end:
                out.append(HardViolation("C7", tid, (last_id,),
                                         f"window ends at {end_loc}, planned {planned_end}"))
    for cid in sorted(schedule.crew_seq):
        units = schedule.crew_units(cid)
        out.extend(_chain_violations(schedule, cid, units, is_crew=True))
        planned_end = inst.planned_end_loc.get(cid)
        if units and planned_end is not None:
            last_id, _s, _e, last_fl = units[-1]
            _, end_loc = _tail_unit_locs(schedule, last_id, last_fl)
            if end_loc is not None and end_loc != planned_end:
                out.append(HardViolation("C7", cid, (last_id,),
                                         f"window ends at {end_loc}, planned {planned_end}"))
    return out
