"""Candidate move generation targeted at a chosen issue.

Eight move kinds: the four reassignment operators (swap_tail, swap_crew,
swap_both, move_tail), delay and cancel, and their undo forms.  Generators
never mutate the schedule; they return a :class:`Move` (or ``None`` when
the operator fails to produce one) that ``model.apply_move`` executes.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import feasibility as fz
from .model import Rotation, Schedule

INF = 10 ** 9

SWAP_TAIL = "swap_tail"
SWAP_CREW = "swap_crew"
SWAP_BOTH = "swap_both"
MOVE_TAIL = "move_tail"
DELAY = "delay"
CANCEL = "cancel"
UNDO_DELAY = "undo_delay"
UNDO_CANCEL = "undo_cancel"

REASSIGNMENT_KINDS = (SWAP_TAIL, SWAP_CREW, SWAP_BOTH, MOVE_TAIL)

# Which reassignment operators can address which issue kind.
_REASSIGN_TABLE = {
    fz.OVERLAP_TAIL: (SWAP_TAIL, SWAP_BOTH, MOVE_TAIL),
    fz.OVERLAP_CREW: (SWAP_CREW, SWAP_BOTH),
    fz.OVERLAP_BOTH: (SWAP_TAIL, SWAP_CREW, SWAP_BOTH, MOVE_TAIL),
    fz.EXCEEDED_DUTY: (SWAP_CREW, SWAP_BOTH),
    fz.NOT_ENOUGH_REST: (SWAP_CREW, SWAP_BOTH),
    fz.MISSED_CONNECTION: (),
}


class NoChangeableFlight(RuntimeError):
    """All flights that could resolve the issue are underway or frozen."""


@dataclass(frozen=True)
class Move:
    kind: str
    version: int
    rot_a: tuple[str, ...] = ()
    rot_b: tuple[str, ...] = ()
    tail_a: str | None = None
    tail_b: str | None = None
    crew_a: str | None = None
    crew_b: str | None = None
    crews_a: tuple[str, ...] = ()
    crews_b: tuple[str, ...] = ()
    flights_a: tuple[str, ...] = ()
    flights_b: tuple[str, ...] = ()
    delays: tuple[tuple[str, int], ...] = ()
    issue_key: tuple = ()
    extended: bool = False

    def to_json(self) -> dict:
        out = {"kind": self.kind, "version": self.version}
        for name in ("rot_a", "rot_b", "tail_a", "tail_b", "crew_a", "crew_b",
                     "flights_a", "flights_b", "delays"):
            value = getattr(self, name)
            if value not in ((), None):
                out[name] = list(value) if isinstance(value, tuple) else value
        return out


def _changeable(schedule: Schedule, ident: str) -> bool:
    st = schedule.state.get(ident)
    if st is None:  # ground task
        return False
    return not st.cancelled and not schedule.inst.flights[ident].underway


def select_flight(schedule: Schedule, issue: fz.Issue, rng) -> str:
    """The flight whose modification is to resolve the issue.

    Overlaps pick the later of the two tasks; duty violations pick the
    start or end flight at random while the duty has not started yet;
    everything else is determined by the issue itself.
    """
    kind = issue.kind
    if kind in (fz.OVERLAP_TAIL, fz.OVERLAP_CREW, fz.OVERLAP_BOTH):
        a, b = issue.flights
        if _changeable(schedule, b):
            return b
        if _changeable(schedule, a):
            return a
        raise NoChangeableFlight(str(issue.key))
    if kind == fz.EXCEEDED_DUTY:
        first, last = issue.flights[0], issue.flights[-1]
        candidates = []
        if issue.resolve_delay is not None and _changeable(schedule, first):
            candidates.append(first)
        if _changeable(schedule, last) and last != first:
            candidates.append(last)
        if not candidates:
            raise NoChangeableFlight(str(issue.key))
        return candidates[rng.randrange(len(candidates))]
    if kind == fz.NOT_ENOUGH_REST:
        nxt = issue.flights[-1]
        if _changeable(schedule, nxt):
            return nxt
        raise NoChangeableFlight(str(issue.key))
    if kind == fz.MISSED_CONNECTION:
        to_flight = issue.flights[1]
        if _changeable(schedule, to_flight):
            return to_flight
        raise NoChangeableFlight(str(issue.key))
    if kind == fz.DELAYED:
        return issue.flights[0]
    if kind == fz.CANCELLED:
        return issue.flights[0]
    raise ValueError(f"unknown issue kind {kind!r}")


def applicable_types(issue: fz.Issue, crew_enabled: bool = True) -> tuple[str, ...]:
    """Neighbour kinds that can address the issue, per the lookup rules."""
    kind = issue.kind
    if kind == fz.DELAYED:
        return (UNDO_DELAY,)
    if kind == fz.CANCELLED:
        return (UNDO_CANCEL,)
    kinds = _REASSIGN_TABLE[kind] + (DELAY, CANCEL)
    if not crew_enabled:
        kinds = tuple(k for k in kinds if k not in (SWAP_CREW, SWAP_BOTH))
    return kinds


# ---------------------------------------------------------------------------
# Shared helpers


def _rotation_clean(schedule: Schedule, rot: Rotation) -> bool:
    if not rot.anchored:
        return False
    return not any(schedule.inst.flights[f].underway for f in rot.flights)


def _tail_window(schedule: Schedule, tail: str, rot_key: str) -> tuple[int, int]:
    """(arrival of predecessor, departure of successor) around a rotation."""
    seq = schedule.tail_seq[tail]
    idx = seq.index(("rot", rot_key))
    prev_a = -INF
    if idx > 0:
        kind, key = seq[idx - 1]
        prev_a = (schedule.eff_arr(schedule.rotations[key].flights[-1])
                  if kind == "rot" else schedule.inst.tasks[key].end)
    next_d = INF
    if idx + 1 < len(seq):
        kind, key = seq[idx + 1]
        next_d = (schedule.eff_dep(schedule.rotations[key].flights[0])
                  if kind == "rot" else schedule.inst.tasks[key].start)
    return prev_a, next_d


def _tail_authorized_for(schedule: Schedule, tail_id: str, rot_keys) -> bool:
    tail = schedule.inst.tails[tail_id]
    if tail.authorized is None:
        return True
    for rk in rot_keys:
        for fid in schedule.rotations[rk].flights:
            f = schedule.inst.flights[fid]
            if not (tail.may_visit(f.origin) and tail.may_visit(f.destination)):
                return False
    return True


def _chain_ok_after(schedule: Schedule, tail: str, removed: set[str], added: tuple[str, ...]) -> bool:
    """Location continuity of a tail's sequence after a hypothetical change.

    Only non-hub-located ground tasks can break the chain, since rotations
    are hub-anchored; pairs that overlap in time are the overlap penalty's
    business and are skipped here, matching check_hard.
    """
    items: list[tuple[int, str, str, int]] = []  # (start, from, to, end)
    for kind, key in schedule.tail_seq[tail]:
        if kind == "rot":
            if key in removed:
                continue
            rot = schedule.rotations[key]
            first, last = rot.flights[0], rot.flights[-1]
            items.append((schedule.eff_dep(first), schedule.inst.flights[first].origin,
                          schedule.inst.flights[last].destination, schedule.eff_arr(last)))
        else:
            task = schedule.inst.tasks[key]
            loc = task.location
            if loc is None:
                continue
            items.append((task.start, loc, loc, task.end))
    for rk in added:
        rot = schedule.rotations[rk]
        first, last = rot.flights[0], rot.flights[-1]
        items.append((schedule.eff_dep(first), schedule.inst.flights[first].origin,
                      schedule.inst.flights[last].destination, schedule.eff_arr(last)))
    items.sort()
    for (_s1, _f1, to1, end1), (s2, from2, _t2, _e2) in zip(items, items[1:]):
        if s2 < end1:
            continue
        if to1 != from2:
            return False
    planned_end = schedule.inst.planned_end_loc.get(tail)
    if items and planned_end is not None and items[-1][2] != planned_end:
        return False
    return True


def _crew_seq_ok(schedule: Schedule, crew_id: str, removed: frozenset | set = frozenset(),
                 added: tuple[str, ...] = (), delay_of: dict[str, int] | None = None,
                 tail_of: dict[str, str] | None = None) -> bool:
    """Location continuity of a crew sequence after a hypothetical change.

    Mirrors check_hard's rule: pairs below their minimum connection gap are
    an overlap issue and exempt from the continuity requirement.
    """
    inst = schedule.inst
    delay_of = delay_of or {}
    tail_of = tail_of or {}
    units = []
    for ident in schedule.crew_seq[crew_id]:
        if ident in removed:
            continue
        if ident in schedule.state:
            d = delay_of.get(ident, schedule.state[ident].delay)
            f = inst.flights[ident]
            tail = tail_of.get(ident, schedule.state[ident].tail)
            units.append((f.sched_dep + d, ident, f.sched_arr + d, f.origin,
                          f.destination, tail, True))
        else:
            task = inst.tasks[ident]
            units.append((task.start, ident, task.end, task.location, task.location,
                          None, False))
    for ident in added:
        d = delay_of.get(ident, schedule.state[ident].delay)
        f = inst.flights[ident]
        tail = tail_of.get(ident, schedule.state[ident].tail)
        units.append((f.sched_dep + d, ident, f.sched_arr + d, f.origin,
                      f.destination, tail, True))
    units.sort(key=lambda u: (u[0], u[1]))
    for (_, _, a_end, _, a_to, a_tail, a_fl), (b_start, _, _, b_from, _, b_tail, b_fl) \
            in zip(units, units[1:]):
        if a_fl and b_fl:
            required = inst.rules.crew_gap(a_tail is not None and a_tail == b_tail)
        else:
            required = 0
        if b_start - a_end < required:
            continue
        if a_to is not None and b_from is not None and a_to != b_from:
            return False
    planned_end = inst.planned_end_loc.get(crew_id)
    if units and planned_end is not None:
        last_to = units[-1][4]
        if last_to is not None and last_to != planned_end:
            return False
    return True


def _tail_seq_ok(schedule: Schedule, tail: str, delay_of: dict[str, int] | None = None,
                 added: tuple[str, ...] = ()) -> bool:
    """Location continuity of a tail's flattened sequence under shifted times."""
    inst = schedule.inst
    delay_of = delay_of or {}
    gap = inst.rules.tail_gap(inst.tails[tail].subtype)
    units = []
    for kind, key in schedule.tail_seq[tail]:
        if kind == "rot":
            for fid in schedule.rotations[key].flights:
                d = delay_of.get(fid, schedule.state[fid].delay)
                f = inst.flights[fid]
                units.append((f.sched_dep + d, fid, f.sched_arr + d, f.origin,
                              f.destination, True))
        else:
            task = inst.tasks[key]
            units.append((task.start, key, task.end, task.location, task.location, False))
    for fid in added:
        d = delay_of.get(fid, schedule.state[fid].delay)
        f = inst.flights[fid]
        units.append((f.sched_dep + d, fid, f.sched_arr + d, f.origin, f.destination, True))
    units.sort(key=lambda u: (u[0], u[1]))
    for (_, _, a_end, _, a_to, a_fl), (b_start, _, _, b_from, _, b_fl) in zip(units, units[1:]):
        required = gap if (a_fl and b_fl) else 0
        if b_start - a_end < required:
            continue
        if a_to is not None and b_from is not None and a_to != b_from:
            return False
    planned_end = inst.planned_end_loc.get(tail)
    if units and planned_end is not None:
        last_to = units[-1][4]
        if last_to is not None and last_to != planned_end:
            return False
    return True


def _crews_of(schedule: Schedule, flights) -> list[str]:
    out = set()
    for fid in flights:
        out.update(schedule.state[fid].crew)
    return sorted(out)


def _clean_rotations_in_window(schedule: Schedule, tail: str, lo: int, hi: int) -> list[str]:
    out = []
    for kind, key in schedule.tail_seq[tail]:
        if kind != "rot":
            continue
        rot = schedule.rotations[key]
        dep = schedule.eff_dep(rot.flights[0])
        if lo <= dep <= hi and _rotation_clean(schedule, rot):
            out.append(key)
    return out


def _series_end(schedule: Schedule, series: tuple[str, ...]) -> int:
    return schedule.eff_arr(schedule.rotations[series[-1]].flights[-1])


def _series_start(schedule: Schedule, series: tuple[str, ...]) -> int:
    return schedule.eff_dep(schedule.rotations[series[0]].flights[0])


def _next_after(schedule: Schedule, tail: str, rot_key: str):
    """(dep_time, required_gap_applies) of the item after a rotation."""
    seq = schedule.tail_seq[tail]
    idx = seq.index(("rot", rot_key))
    if idx + 1 >= len(seq):
        return INF, False, None
    kind, key = seq[idx + 1]
    if kind == "rot":
        return schedule.eff_dep(schedule.rotations[key].flights[0]), True, ("rot", key)
    return schedule.inst.tasks[key].start, False, ("task", key)


def _prev_before(schedule: Schedule, tail: str, rot_key: str):
    seq = schedule.tail_seq[tail]
    idx = seq.index(("rot", rot_key))
    if idx == 0:
        return -INF, False, None
    kind, key = seq[idx - 1]
    if kind == "rot":
        return schedule.eff_arr(schedule.rotations[key].flights[-1]), True, ("rot", key)
    return schedule.inst.tasks[key].end, False, ("task", key)


def _gap_violated(schedule: Schedule, tail: str, arr: int, dep: int, both_flights: bool) -> bool:
    required = schedule.inst.rules.tail_gap(schedule.inst.tails[tail].subtype) if both_flights else 0
    return dep - arr < required


def _had_overlap(issues, a: str, b: str) -> bool:
    return issues is not None and issues.get(("OV", a, b)) is not None


# ---------------------------------------------------------------------------
# Reassignment operators


def gen_swap_tail(schedule: Schedule, flight: str, rng, extension_prob: float = 0.6,
                  attempts: int = 8, issues=None) -> Move | None:
    """Swap the rotation containing ``flight`` with one on a same-type tail.

    With probability ``extension_prob`` both selections are extended by
    successive rotations until the tails are colocated in time, which
    guarantees no new tail overlaps; if the extension cannot be completed
    the plain single-rotation swap is used.
    """
    inst = schedule.inst
    st = schedule.state[flight]
    tail_a = st.tail
    rot_key = schedule.rot_of[flight]
    rot = schedule.rotations[rot_key]
    if not _rotation_clean(schedule, rot):
        return None
    partners = [t for t in inst.tails_by_type[inst.tails[tail_a].aircraft_type] if t != tail_a]
    if not partners:
        return None
    prev_a, next_d = _tail_window(schedule, tail_a, rot_key)
    for _ in range(attempts):
        tail_b = partners[rng.randrange(len(partners))]
        cands = _clean_rotations_in_window(schedule, tail_b, prev_a, next_d)
        if not cands:
            continue
        rot_b_key = cands[rng.randrange(len(cands))]
        if not _tail_authorized_for(schedule, tail_b, (rot_key,)):
            continue
        if not _tail_authorized_for(schedule, tail_a, (rot_b_key,)):
            continue
        series_a, series_b = (rot_key,), (rot_b_key,)
        extended = False
        if rng.random() < extension_prob:
            ext = _try_extend(schedule, tail_a, series_a, tail_b, series_b, issues)
            if ext is not None:
                series_a, series_b = ext
                extended = True
        if not _chain_ok_after(schedule, tail_a, set(series_a), series_b):
            continue
        if not _chain_ok_after(schedule, tail_b, set(series_b), series_a):
            continue
        if extended and not (_tail_authorized_for(schedule, tail_b, series_a)
                             and _tail_authorized_for(schedule, tail_a, series_b)):
            series_a, series_b, extended = (rot_key,), (rot_b_key,), False
        flights_a = [f for rk in series_a for f in schedule.rotations[rk].flights]
        flights_b = [f for rk in series_b for f in schedule.rotations[rk].flights]
        tail_over = {f: tail_b for f in flights_a}
        tail_over.update({f: tail_a for f in flights_b})
        if not all(_crew_seq_ok(schedule, c, tail_of=tail_over)
                   for c in _crews_of(schedule, flights_a + flights_b)):
            continue
        return Move(kind=SWAP_TAIL, version=schedule.version,
                    rot_a=series_a, rot_b=series_b, tail_a=tail_a, tail_b=tail_b,
                    extended=extended)
    return None


def _try_extend(schedule: Schedule, tail_a: str, series_a, tail_b: str, series_b,
                issues, max_rotations: int = 6):
    """Extend both series until the tails idle at the hub simultaneously.

    Returns the extended series only when the swap provably introduces no
    new tail overlap: boundary pairs on both tails keep their required
    turnaround (or already overlapped before), and the moved series stay
    internally clean under the destination subtype.
    """
    series_a = tuple(series_a)
    series_b = tuple(series_b)
    while True:
        end_a = _series_end(schedule, series_a)
        next_a, next_a_is_flight, _ = _next_after(schedule, tail_a, series_a[-1])
        end_b = _series_end(schedule, series_b)
        next_b, next_b_is_flight, _ = _next_after(schedule, tail_b, series_b[-1])
        if max(end_a, end_b) <= min(next_a, next_b):
            break
        if end_a <= end_b:
            nxt = _next_after(schedule, tail_a, series_a[-1])[2]
            if nxt is None or nxt[0] != "rot":
                return None
            rot = schedule.rotations[nxt[1]]
            if not _rotation_clean(schedule, rot):
                return None
            series_a = series_a + (nxt[1],)
        else:
            nxt = _next_after(schedule, tail_b, series_b[-1])[2]
            if nxt is None or nxt[0] != "rot":
                return None
            rot = schedule.rotations[nxt[1]]
            if not _rotation_clean(schedule, rot):
                return None
            series_b = series_b + (nxt[1],)
        if len(series_a) > max_rotations or len(series_b) > max_rotations:
            return None

    def boundary_ok(host_tail, own_series, incoming_series) -> bool:
        prev_t, prev_is_flight, prev_item = _prev_before(schedule, host_tail, own_series[0])
        next_t, next_is_flight, next_item = _next_after(schedule, host_tail, own_series[-1])
        in_first = schedule.rotations[incoming_series[0]].flights[0]
        in_last = schedule.rotations[incoming_series[-1]].flights[-1]
        dep = schedule.eff_dep(in_first)
        arr = schedule.eff_arr(in_last)
        if prev_item is not None:
            prev_id = (schedule.rotations[prev_item[1]].flights[-1]
                       if prev_item[0] == "rot" else prev_item[1])
            if (_gap_violated(schedule, host_tail, prev_t, dep, prev_is_flight)
                    and not _had_overlap(issues, prev_id, in_first)):
                return False
        if next_item is not None:
            next_id = (schedule.rotations[next_item[1]].flights[0]
                       if next_item[0] == "rot" else next_item[1])
            if (_gap_violated(schedule, host_tail, arr, next_t, next_is_flight)
                    and not _had_overlap(issues, in_last, next_id)):
                return False
        # Gaps between and inside the incoming rotations under the host subtype.
        flat = [f for rk in incoming_series for f in schedule.rotations[rk].flights]
        for f1, f2 in zip(flat, flat[1:]):
            if (_gap_violated(schedule, host_tail, schedule.eff_arr(f1), schedule.eff_dep(f2), True)
                    and not _had_overlap(issues, f1, f2)):
                return False
        return True

    if not boundary_ok(tail_a, series_a, series_b):
        return None
    if not boundary_ok(tail_b, series_b, series_a):
        return None
    return series_a, series_b


def _crew_footprint(schedule: Schedule, flight: str, crew_id: str) -> tuple[str, ...] | None:
    """The chosen crew's contiguous share of the flight's tail rotation."""
    rot = schedule.rotations.get(schedule.rot_of.get(flight)) if flight in schedule.rot_of else None
    if rot is None:
        return None
    picked = [f for f in rot.flights if crew_id in schedule.state[f].crew]
    if not picked:
        return None
    idxs = [rot.flights.index(f) for f in picked]
    if idxs != list(range(idxs[0], idxs[-1] + 1)):
        return None
    if any(schedule.inst.flights[f].underway for f in picked):
        return None
    return tuple(picked)


def _footprint_locs(schedule: Schedule, footprint: tuple[str, ...]) -> tuple[str, str]:
    return (schedule.inst.flights[footprint[0]].origin,
            schedule.inst.flights[footprint[-1]].destination)


def _crew_window(schedule: Schedule, crew_id: str, footprint: tuple[str, ...]) -> tuple[int, int]:
    seq = [x for x in schedule.crew_seq[crew_id]]
    first_idx = seq.index(footprint[0])
    last_idx = seq.index(footprint[-1])
    prev_a = -INF
    if first_idx > 0:
        ident = seq[first_idx - 1]
        prev_a = schedule.eff_arr(ident) if ident in schedule.state else schedule.inst.tasks[ident].end
    next_d = INF
    if last_idx + 1 < len(seq):
        ident = seq[last_idx + 1]
        next_d = schedule.eff_dep(ident) if ident in schedule.state else schedule.inst.tasks[ident].start
    return prev_a, next_d


def _types_flown(schedule: Schedule, flights: tuple[str, ...]) -> set[str]:
    return {schedule.inst.tails[schedule.state[f].tail].aircraft_type for f in flights}


def gen_swap_crew(schedule: Schedule, flight: str, crew_id: str, rng,
                  attempts: int = 8) -> Move | None:
    """Swap crew footprints between two equally qualified crew members."""
    inst = schedule.inst
    fp_a = _crew_footprint(schedule, flight, crew_id)
    if fp_a is None:
        return None
    locs_a = _footprint_locs(schedule, fp_a)
    types_a = _types_flown(schedule, fp_a)
    lic_a = inst.crew[crew_id].licensed_types
    partners = [c for c in sorted(inst.crew) if c != crew_id
                and types_a <= inst.crew[c].licensed_types]
    if not partners:
        return None
    prev_a, next_d = _crew_window(schedule, crew_id, fp_a)
    for _ in range(attempts):
        crew_b = partners[rng.randrange(len(partners))]
        cands = []
        seen = set()
        for ident in schedule.crew_seq[crew_b]:
            if ident not in schedule.state:
                continue
            if not (prev_a <= schedule.eff_dep(ident) <= next_d):
                continue
            fp_b = _crew_footprint(schedule, ident, crew_b)
            if fp_b is None or fp_b[0] in seen or fp_b == fp_a:
                continue
            seen.add(fp_b[0])
            if _footprint_locs(schedule, fp_b) != locs_a:
                continue
            if not _types_flown(schedule, fp_b) <= lic_a:
                continue
            if not (prev_a <= schedule.eff_dep(fp_b[0]) <= next_d):
                continue
            cands.append(fp_b)
        while cands:
            fp_b = cands.pop(rng.randrange(len(cands)))
            if not _crew_seq_ok(schedule, crew_id, removed=set(fp_a), added=fp_b):
                continue
            if not _crew_seq_ok(schedule, crew_b, removed=set(fp_b), added=fp_a):
                continue
            return Move(kind=SWAP_CREW, version=schedule.version,
                        flights_a=fp_a, flights_b=fp_b, crew_a=crew_id, crew_b=crew_b)
    return None


def gen_swap_both(schedule: Schedule, flight: str, rng, attempts: int = 8) -> Move | None:
    """Swap rotations between two tail-crew pairs; cross-type is allowed."""
    inst = schedule.inst
    st = schedule.state[flight]
    tail_a = st.tail
    rot_key = schedule.rot_of[flight]
    rot = schedule.rotations[rot_key]
    if not _rotation_clean(schedule, rot):
        return None
    crews_a = st.crew
    if any(schedule.state[f].crew != crews_a for f in rot.flights):
        return None
    partners = [t for t in sorted(inst.tails) if t != tail_a]
    if not partners:
        return None
    prev_a, next_d = _tail_window(schedule, tail_a, rot_key)
    for _ in range(attempts):
        tail_b = partners[rng.randrange(len(partners))]
        cands = []
        for rk in _clean_rotations_in_window(schedule, tail_b, prev_a, next_d):
            cand = schedule.rotations[rk]
            crews_b = schedule.state[cand.flights[0]].crew
            if not crews_b or any(schedule.state[f].crew != crews_b for f in cand.flights):
                continue
            cands.append((rk, crews_b))
        if not cands:
            continue
        rot_b_key, crews_b = cands[rng.randrange(len(cands))]
        if not _tail_authorized_for(schedule, tail_b, (rot_key,)):
            continue
        if not _tail_authorized_for(schedule, tail_a, (rot_b_key,)):
            continue
        if not _chain_ok_after(schedule, tail_a, {rot_key}, (rot_b_key,)):
            continue
        if not _chain_ok_after(schedule, tail_b, {rot_b_key}, (rot_key,)):
            continue
        flights_a = schedule.rotations[rot_key].flights
        flights_b = schedule.rotations[rot_b_key].flights
        ok = True
        for cid in sorted(set(crews_a)):
            if not _crew_seq_ok(schedule, cid, removed=set(flights_a), added=flights_b,
                                tail_of={f: tail_a for f in flights_b}):
                ok = False
        for cid in sorted(set(crews_b)):
            if not _crew_seq_ok(schedule, cid, removed=set(flights_b), added=flights_a,
                                tail_of={f: tail_b for f in flights_a}):
                ok = False
        if not ok:
            continue
        return Move(kind=SWAP_BOTH, version=schedule.version,
                    rot_a=(rot_key,), rot_b=(rot_b_key,), tail_a=tail_a, tail_b=tail_b,
                    crews_a=crews_a, crews_b=crews_b)
    return None


def gen_move_tail(schedule: Schedule, flight: str, rng, attempts: int = 8) -> Move | None:
    """Move the rotation containing ``flight`` onto a same-type tail.

    The rotation keeps its times; any overlap this creates on the target
    is left for the annealer to judge.
    """
    inst = schedule.inst
    st = schedule.state[flight]
    tail_a = st.tail
    rot_key = schedule.rot_of[flight]
    rot = schedule.rotations[rot_key]
    if not _rotation_clean(schedule, rot):
        return None
    partners = [t for t in inst.tails_by_type[inst.tails[tail_a].aircraft_type] if t != tail_a]
    if not partners:
        return None
    for _ in range(attempts):
        tail_b = partners[rng.randrange(len(partners))]
        if not _tail_authorized_for(schedule, tail_b, (rot_key,)):
            continue
        if not _chain_ok_after(schedule, tail_b, set(), (rot_key,)):
            continue
        if not _chain_ok_after(schedule, tail_a, {rot_key}, ()):
            continue
        tail_over = {f: tail_b for f in rot.flights}
        if not all(_crew_seq_ok(schedule, c, tail_of=tail_over)
                   for c in _crews_of(schedule, rot.flights)):
            continue
        return Move(kind=MOVE_TAIL, version=schedule.version,
                    rot_a=(rot_key,), rot_b=(), tail_a=tail_a, tail_b=tail_b)
    return None


# ---------------------------------------------------------------------------
# Schedule-change operators


def gen_delay(schedule: Schedule, issue: fz.Issue, flight: str) -> Move | None:
    """Delay ``flight`` by exactly the issue-resolving amount, propagating
    minimal knock-on delays to later flights of the same rotation."""
    amount = issue.resolve_delay
    if amount is None or amount <= 0:
        return None
    kind = issue.kind
    if kind in (fz.OVERLAP_TAIL, fz.OVERLAP_CREW, fz.OVERLAP_BOTH):
        if flight != issue.flights[1]:
            return None  # delaying the earlier task cannot close the gap
    elif kind == fz.EXCEEDED_DUTY:
        if flight != issue.flights[0]:
            return None
    elif kind in (fz.NOT_ENOUGH_REST, fz.MISSED_CONNECTION):
        if flight != issue.flights[-1]:
            return None
    else:
        return None
    inst = schedule.inst
    d_max = inst.rules.d_max
    st = schedule.state[flight]
    new_delay = st.delay + amount
    if new_delay > d_max:
        return None
    delays = [(flight, new_delay)]
    rot = schedule.rotations[schedule.rot_of[flight]]
    gap = inst.rules.tail_gap(inst.tails[st.tail].subtype)
    idx = rot.flights.index(flight)
    prev_arr = inst.flights[flight].sched_arr + new_delay
    for nxt in rot.flights[idx + 1:]:
        needed = prev_arr + gap - inst.flights[nxt].sched_dep
        cur = schedule.state[nxt].delay
        if needed > cur:
            if needed > d_max:
                return None
            delays.append((nxt, needed))
            prev_arr = inst.flights[nxt].sched_arr + needed
        else:
            prev_arr = inst.flights[nxt].sched_arr + cur
    delay_of = dict(delays)
    if not _tail_seq_ok(schedule, st.tail, delay_of=delay_of):
        return None
    if not all(_crew_seq_ok(schedule, c, delay_of=delay_of)
               for c in _crews_of(schedule, delay_of)):
        return None
    return Move(kind=DELAY, version=schedule.version, delays=tuple(delays),
                issue_key=issue.key)


def gen_cancel(schedule: Schedule, flight: str) -> Move | None:
    """Cancel the full rotation containing ``flight``.

    Fails when a crew change occurs mid-rotation: the relieving crew could
    not return to the hub if the remaining legs disappeared.
    """
    st = schedule.state[flight]
    if st.cancelled or st.tail is None:
        return None
    rot = schedule.rotations[schedule.rot_of[flight]]
    if not _rotation_clean(schedule, rot):
        return None
    first_crew = schedule.state[rot.flights[0]].crew
    if any(schedule.state[f].crew != first_crew for f in rot.flights):
        return None
    return Move(kind=CANCEL, version=schedule.version, rot_a=(rot.key,))


def gen_undo(schedule: Schedule, issue: fz.Issue) -> Move | None:
    """Remove a delay, or restore a cancelled rotation to the resources it
    held when cancelled, at scheduled times."""
    if issue.kind == fz.DELAYED:
        fid = issue.flights[0]
        delay_of = {fid: 0}
        st = schedule.state[fid]
        if st.tail is not None and not _tail_seq_ok(schedule, st.tail, delay_of=delay_of):
            return None
        if not all(_crew_seq_ok(schedule, c, delay_of=delay_of) for c in st.crew):
            return None
        return Move(kind=UNDO_DELAY, version=schedule.version, delays=((fid, 0),))
    if issue.kind != fz.CANCELLED:
        return None
    fid = issue.flights[0]
    group = schedule.cancel_groups.get(fid)
    if group is None:
        return None
    inst = schedule.inst
    blockers = []
    for gid, start, end, is_flight in schedule.tail_units(group.tail):
        if not is_flight or inst.flights[gid].underway:
            blockers.append((start, end))
    crew_blockers: dict[str, list[tuple[int, int]]] = {}
    for crew_ids in group.crew.values():
        for cid in crew_ids:
            if cid in crew_blockers:
                continue
            spans = []
            for gid, start, end, is_flight in schedule.crew_units(cid):
                if not is_flight or inst.flights[gid].underway:
                    spans.append((start, end))
            crew_blockers[cid] = spans
    for gid in group.flights:
        f = inst.flights[gid]
        for start, end in blockers:
            if start < f.sched_arr and f.sched_dep < end:
                return None
        for cid in group.crew[gid]:
            for start, end in crew_blockers[cid]:
                if start < f.sched_arr and f.sched_dep < end:
                    return None
    tail_over = {f: group.tail for f in group.flights}
    if not _tail_seq_ok(schedule, group.tail, added=group.flights):
        return None
    for cid in sorted(crew_blockers):
        mine = tuple(f for f in group.flights if cid in group.crew[f])
        if mine and not _crew_seq_ok(schedule, cid, added=mine, tail_of=tail_over):
            return None
    return Move(kind=UNDO_CANCEL, version=schedule.version, flights_a=group.flights)


# ---------------------------------------------------------------------------
# Dispatch


@dataclass(frozen=True)
class GenerationConfig:
    extension_prob: float = 0.6
    attempts: int = 8
    crew_enabled: bool = True


def _issue_crew(issue: fz.Issue, rng) -> str | None:
    if issue.kind in (fz.EXCEEDED_DUTY, fz.NOT_ENOUGH_REST):
        return issue.resources[0]
    if issue.kind == fz.OVERLAP_CREW:
        return issue.resources[rng.randrange(len(issue.resources))]
    if issue.kind == fz.OVERLAP_BOTH:
        crews = issue.resources[1:]
        return crews[rng.randrange(len(crews))]
    return None


def generate(kind: str, schedule: Schedule, issue: fz.Issue, flight: str, rng,
             cfg: GenerationConfig = GenerationConfig(), issues=None) -> Move | None:
    """Generate one candidate move of the given kind for an issue."""
    if kind == SWAP_TAIL:
        return gen_swap_tail(schedule, flight, rng, cfg.extension_prob, cfg.attempts, issues)
    if kind == SWAP_CREW:
        crew_id = _issue_crew(issue, rng)
        if crew_id is None:
            return None
        return gen_swap_crew(schedule, flight, crew_id, rng, cfg.attempts)
    if kind == SWAP_BOTH:
        return gen_swap_both(schedule, flight, rng, cfg.attempts)
    if kind == MOVE_TAIL:
        return gen_move_tail(schedule, flight, rng, cfg.attempts)
    if kind == DELAY:
        return gen_delay(schedule, issue, flight)
    if kind == CANCEL:
        return gen_cancel(schedule, flight)
    if kind in (UNDO_DELAY, UNDO_CANCEL):
        return gen_undo(schedule, issue)
    raise ValueError(f"unknown move kind {kind!r}")
