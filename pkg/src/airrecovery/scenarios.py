"""Disruption scenario generation and the synthetic benchmark network.

FD scenarios delay a fraction of the flights underway at the disruption
clock; UR scenarios make a tail, a crew member, or both unavailable for a
period by inserting an immovable blocking task.  ``synthetic_instance``
builds a reproducible single-hub network (six aircraft types, roughly 500
flights per day, rotations of 2-4 legs) for benchmarks and tests.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .model import GroundTask, Instance, Schedule, load_instance

CLOCKS = {"08:00": 480, "12:00": 720, "15:00": 900, "18:00": 1080}

FD = "fd"
UR = "ur"


@dataclass(frozen=True)
class ScenarioSpec:
    kind: str  # "fd" or "ur"
    clock: int = 480  # minutes after local midnight of the disruption day
    seed: int = 0
    fd_fraction: float = 0.25
    fd_mean_delay: int = 30
    fd_min_delay: int = 10
    ur_resource: str = "tail"  # "tail", "crew", or "both"
    ur_block_min: int = 360
    ur_block_max: int = 720
    ur_count: int = 1

    def __post_init__(self):
        if self.kind not in (FD, UR):
            raise ValueError(f"unknown scenario kind {self.kind!r}")
        if not 0.0 <= self.fd_fraction <= 1.0:
            raise ValueError("fd_fraction must be in [0, 1]")
        if self.ur_resource not in ("tail", "crew", "both"):
            raise ValueError(f"unknown ur resource {self.ur_resource!r}")

    def label(self) -> str:
        clock = f"{self.clock // 60:02d}:{self.clock % 60:02d}"
        if self.kind == UR:
            return f"ur-{self.ur_resource}@{clock}#{self.seed}"
        return f"fd@{clock}#{self.seed}"


def parse_scenario_arg(text: str) -> ScenarioSpec:
    """Parse inline scenario syntax like ``fd@08:00`` or ``ur-both@12:00``."""
    head, _, clock_text = text.partition("@")
    clock = CLOCKS.get(clock_text)
    if clock is None:
        try:
            hh, mm = clock_text.split(":")
            clock = int(hh) * 60 + int(mm)
        except ValueError as exc:
            raise ValueError(f"bad scenario clock in {text!r}") from exc
    if head == FD:
        return ScenarioSpec(kind=FD, clock=clock)
    if head == UR:
        return ScenarioSpec(kind=UR, clock=clock)
    if head.startswith("ur-"):
        return ScenarioSpec(kind=UR, clock=clock, ur_resource=head[3:])
    raise ValueError(f"unknown scenario kind in {text!r}")


def _fd_delays(instance: Instance, spec: ScenarioSpec) -> dict[str, int]:
    rng = random.Random(spec.seed)
    underway = sorted(f for f, fl in instance.flights.items() if fl.underway)
    if not underway:
        raise ValueError("no flights underway at the scenario clock")
    if spec.fd_fraction == 0:
        return {}
    count = max(1, round(spec.fd_fraction * len(underway)))
    picked = rng.sample(underway, count)
    scale = max(1, spec.fd_mean_delay - spec.fd_min_delay)
    delays = {}
    for fid in sorted(picked):
        d = spec.fd_min_delay + int(rng.expovariate(1.0 / scale))
        delays[fid] = min(instance.rules.d_max, max(1, d))
    return delays


def gen_fd(instance: Instance, spec: ScenarioSpec) -> Schedule:
    """Flight-delay disruption: initial delays on underway flights."""
    delays = _fd_delays(instance, spec)
    return Schedule.from_assignment(instance, instance.planned_tail,
                                    instance.planned_crew, delays=delays)


def _ur_blocks(instance: Instance, spec: ScenarioSpec) -> list[GroundTask]:
    rng = random.Random(spec.seed)
    start = instance.window[0]
    eligible = sorted(
        fid for fid, f in instance.flights.items()
        if start <= f.sched_arr <= start + 60 or start <= f.sched_dep <= start + 60)
    if not eligible:
        raise ValueError("no flight just landed or close to departing at the clock")
    blocks: list[GroundTask] = []
    used: set[str] = set()
    count = 0
    for _ in range(10 * spec.ur_count):
        if count >= spec.ur_count:
            break
        fid = eligible[rng.randrange(len(eligible))]
        span = rng.randrange(spec.ur_block_min // 5, spec.ur_block_max // 5 + 1) * 5
        tail = instance.planned_tail[fid]
        crew_ids = instance.planned_crew[fid]
        want_tail = spec.ur_resource in ("tail", "both")
        want_crew = spec.ur_resource in ("crew", "both")
        if want_tail and tail in used:
            continue
        if want_crew and any(c in used for c in crew_ids):
            continue
        if want_tail:
            blocks.append(GroundTask(id=f"BLOCK{len(blocks) + 1}", start=start,
                                     end=start + span, tail=tail, is_block=True))
            used.add(tail)
        if want_crew:
            for cid in crew_ids:
                blocks.append(GroundTask(id=f"BLOCK{len(blocks) + 1}", start=start,
                                         end=start + span, crew=cid, is_block=True))
                used.add(cid)
        count += 1
    if count < spec.ur_count:
        raise ValueError("could not place the requested number of blocks")
    return blocks


def gen_ur(instance: Instance, spec: ScenarioSpec) -> Schedule:
    """Unavailable-resource disruption: blocking task(s) on tail/crew."""
    blocks = _ur_blocks(instance, spec)
    blocked = instance.with_extra_tasks(blocks)
    return Schedule.from_assignment(blocked, blocked.planned_tail, blocked.planned_crew)


def generate(instance: Instance, spec: ScenarioSpec) -> Schedule:
    return gen_fd(instance, spec) if spec.kind == FD else gen_ur(instance, spec)


def scenario_overlay(instance: Instance, spec: ScenarioSpec, base_ref: str = "") -> dict:
    """Serializable instance-overlay form of a scenario."""
    overlay = {"schema": 1, "base": base_ref, "kind": spec.kind,
               "seed": spec.seed, "clock": spec.clock, "delays": {}, "blocks": []}
    if spec.kind == FD:
        overlay["delays"] = _fd_delays(instance, spec)
    else:
        overlay["blocks"] = [
            {"id": b.id, "start": b.start, "end": b.end, "tail": b.tail,
             "crew": b.crew} for b in _ur_blocks(instance, spec)]
    return overlay


def apply_overlay(instance: Instance, overlay: dict) -> Schedule:
    delays = {str(k): int(v) for k, v in overlay.get("delays", {}).items()}
    for fid in delays:
        if fid not in instance.flights:
            raise ValueError(f"overlay delays unknown flight {fid!r}")
    blocks = [
        GroundTask(id=str(b["id"]), start=int(b["start"]), end=int(b["end"]),
                   tail=b.get("tail"), crew=b.get("crew"), is_block=True)
        for b in overlay.get("blocks", [])]
    inst = instance.with_extra_tasks(blocks) if blocks else instance
    return Schedule.from_assignment(inst, inst.planned_tail, inst.planned_crew,
                                    delays=delays)


# ---------------------------------------------------------------------------
# Synthetic benchmark network


TYPE_NAMES = ("A1", "A2", "B1", "B2", "C1", "C2")
TYPE_CAPACITY = {"A1": 90, "A2": 110, "B1": 130, "B2": 150, "C1": 180, "C2": 210}
TYPE_TURNAROUND = {"A1": 30, "A2": 30, "B1": 35, "B2": 35, "C1": 40, "C2": 40}
TYPE_OP_COST = {"A1": 2500, "A2": 2900, "B1": 3300, "B2": 3800, "C1": 4400, "C2": 5100}

DAY = 1440


def _r5(rng: random.Random, lo: int, hi: int) -> int:
    """Random multiple of 5 in [lo, hi]."""
    return 5 * rng.randrange(lo // 5, hi // 5 + 1)


class _Template:
    """One generated day of operations, in local minutes-of-day."""

    def __init__(self):
        self.flights: list[dict] = []  # dep, arr, origin, dest, tail, crew, leg index
        self.maintenance: list[dict] = []
        self.counter = 0

    def add_flight(self, tail, crew, origin, dest, dep, arr):
        self.counter += 1
        fid = f"FL{self.counter:04d}"
        self.flights.append({"id": fid, "tail": tail, "crew": crew, "origin": origin,
                             "dest": dest, "dep": dep, "arr": arr})
        return fid


def _build_day_template(rng: random.Random, tails: dict[str, str],
                        stations: list[str], rules_turnaround: dict[str, int],
                        crossover_prob: float, maintenance_prob: float) -> _Template:
    tpl = _Template()
    day_end = 1290  # 21:30
    cursor = {}
    duty_info = {}  # tail -> (crew id, duty start, flight count)
    crew_counter = [0]

    def new_crew(tail):
        crew_counter[0] += 1
        return f"C{crew_counter[0]:03d}"

    def duty_crew(tail, dep, arr_last, n_new):
        """Crew for a rotation starting at dep; opens a new duty if needed."""
        info = duty_info.get(tail)
        if info is not None:
            cid, start, count = info
            if arr_last - start <= 640 and count + n_new <= 6:
                return cid
        cid = new_crew(tail)
        duty_info[tail] = (cid, dep, 0)
        return cid

    def book(tail, cid, n_flights):
        _c, start, count = duty_info[tail]
        duty_info[tail] = (cid, start, count + n_flights)

    order = sorted(tails)
    for tail in order:
        cursor[tail] = _r5(rng, 330, 505)  # first departures 05:30-08:25

    by_type: dict[str, list[str]] = {}
    for tail in order:
        by_type.setdefault(tails[tail], []).append(tail)

    pending_crossover = {
        t: (rng.random() < crossover_prob) for t in order
    }

    active = list(order)
    while active:
        # Advance the tail with the earliest cursor for an even spread.
        tail = min(active, key=lambda t: (cursor[t], t))
        ttype = tails[tail]
        turn = rules_turnaround[ttype]
        start = cursor[tail]
        if start > day_end - 150:
            active.remove(tail)
            continue

        if rng.random() < maintenance_prob:
            dur = _r5(rng, 120, 240)
            tpl.maintenance.append({"tail": tail, "start": start + 10, "end": start + 10 + dur})
            cursor[tail] = start + dur + 40
            continue

        partner = None
        if pending_crossover[tail]:
            mates = [m for m in by_type[ttype] if m != tail and m in active
                     and abs(cursor[m] - start) <= 90 and cursor[m] >= start]
            if mates:
                partner = min(mates, key=lambda m: (cursor[m], m))
        if partner is not None:
            pending_crossover[tail] = False
            _emit_crossover(tpl, rng, tail, partner, tails, rules_turnaround,
                            stations, cursor, duty_info, new_crew)
            continue

        legs = 2 if rng.random() < 0.85 else 4
        flights = []
        pos = "HUB"
        dep = start
        route = rng.sample(stations, legs - 1)
        hops = route + ["HUB"]
        for hop in hops:
            leg = _r5(rng, 45, 150)
            flights.append((pos, hop, dep, dep + leg))
            pos = hop
            if hop != "HUB":
                dep = dep + leg + turn + _r5(rng, 0, 10)
        arr_last = flights[-1][3]
        if arr_last > day_end + 60:
            active.remove(tail)
            continue
        cid = duty_crew(tail, start, arr_last, len(flights))
        for origin, dest, f_dep, f_arr in flights:
            tpl.add_flight(tail, cid, origin, dest, f_dep, f_arr)
        book(tail, cid, len(flights))
        cursor[tail] = arr_last + turn + _r5(rng, 0, 15)
    return tpl


def _emit_crossover(tpl, rng, tail_a, tail_b, tails, rules_turnaround, stations,
                    cursor, duty_info, new_crew):
    """Two same-type tails fly to one outstation and exchange crews there.

    Both rotations get a mid-rotation crew change, which makes them
    uncancellable; both duties close afterwards.
    """
    station = stations[rng.randrange(len(stations))]
    turn_a = rules_turnaround[tails[tail_a]]
    turn_b = rules_turnaround[tails[tail_b]]
    switch = 45
    leg = _r5(rng, 60, 120)
    dep_f1 = cursor[tail_a]
    arr_f1 = dep_f1 + leg
    dep_g1 = max(cursor[tail_b], dep_f1 + 10)
    arr_g1 = dep_g1 + leg
    dep_f2 = max(arr_f1 + turn_a, arr_g1 + switch) + _r5(rng, 5, 15)
    dep_g2 = max(arr_g1 + turn_b, arr_f1 + switch) + _r5(rng, 5, 15)
    arr_f2 = dep_f2 + leg
    arr_g2 = dep_g2 + leg
    crew_a = new_crew(tail_a)
    crew_b = new_crew(tail_b)
    # crew_a: out on tail_a, back on tail_b; crew_b the other way round.
    tpl.add_flight(tail_a, crew_a, "HUB", station, dep_f1, arr_f1)
    tpl.add_flight(tail_b, crew_b, "HUB", station, dep_g1, arr_g1)
    tpl.add_flight(tail_a, crew_b, station, "HUB", dep_f2, arr_f2)
    tpl.add_flight(tail_b, crew_a, station, "HUB", dep_g2, arr_g2)
    cursor[tail_a] = arr_f2 + turn_a + _r5(rng, 5, 25)
    cursor[tail_b] = arr_g2 + turn_b + _r5(rng, 5, 25)
    duty_info.pop(tail_a, None)
    duty_info.pop(tail_b, None)


def synthetic_instance(seed: int, clock: int = 480, **kwargs) -> Instance:
    """A reproducible single-hub desk-scale network, loaded and validated."""
    return load_instance(synthetic_instance_data(seed, clock, **kwargs))


def synthetic_instance_data(
    seed: int,
    clock: int = 480,
    days: int = 3,
    tails_per_type: int = 16,
    crossover_prob: float = 0.25,
    maintenance_prob: float = 0.04,
    connection_rate: float = 0.55,
    extra_license_prob: float = 0.35,
) -> dict:
    """Instance JSON (as a dict) for the synthetic benchmark network.

    The window is ``days`` times 24h starting at ``clock`` on day zero;
    flights wholly before the clock become crew history, flights straddling
    it are underway.
    """
    rng = random.Random(seed)
    stations = [f"S{i:02d}" for i in range(1, 25)]
    tails = {}
    for ttype in TYPE_NAMES:
        for i in range(1, tails_per_type + 1):
            tails[f"{ttype}-{i:02d}"] = ttype
    tpl = _build_day_template(rng, tails, stations, TYPE_TURNAROUND,
                              crossover_prob, maintenance_prob)

    window_end = days * DAY
    flights_json = []
    assignment = {}
    crew_types: dict[str, set[str]] = {}
    crew_open_duty: dict[str, dict] = {}
    rot_buf: dict[str, list[dict]] = {}

    def flush_rotation(day, tail):
        key = (day, tail)
        buf = rot_buf.get(key, [])
        if not buf:
            return
        rot_buf[key] = []
        abs_times = [(f["dep"] + day * DAY - clock, f["arr"] + day * DAY - clock) for f in buf]
        if abs_times[-1][1] > window_end:
            return  # trailing rotations cut by the window are dropped whole
        for f, (dep, arr) in zip(buf, abs_times):
            cid = f"{f['crew']}"
            crew_types.setdefault(cid, set()).add(tails[f["tail"]])
            if arr <= 0:
                # pre-window history: feeds the open-duty summary
                open_d = crew_open_duty.setdefault(cid, {"start": dep, "end": arr, "count": 0})
                open_d["start"] = min(open_d["start"], dep)
                open_d["end"] = max(open_d["end"], arr)
                open_d["count"] += 1
                continue
            fid = f"D{day}-{f['id']}"
            capacity = TYPE_CAPACITY[tails[f["tail"]]]
            pax = int(capacity * (0.5 + 0.4 * rng.random()))
            flights_json.append({
                "id": fid, "origin": f["origin"], "destination": f["dest"],
                "dep": dep, "arr": arr, "pax": pax, "underway": dep < 0,
            })
            assignment[fid] = {"tail": f["tail"], "crew": [cid]}

    for day in range(0, days + 1):
        for f in tpl.flights:
            key = (day, f["tail"])
            rot_buf.setdefault(key, []).append(f)
            if f["dest"] == "HUB":
                flush_rotation(day, f["tail"])

    maintenance_json = []
    for day in range(0, days + 1):
        for i, m in enumerate(tpl.maintenance):
            start = m["start"] + day * DAY - clock
            end = m["end"] + day * DAY - clock
            if start >= 0 and end <= window_end:
                maintenance_json.append({
                    "id": f"M{day}-{i:02d}", "tail": m["tail"],
                    "start": start, "end": end, "location": "HUB"})

    crew_json = []
    for cid in sorted(crew_types):
        types = sorted(crew_types[cid])
        extras = [t for t in TYPE_NAMES if t not in types]
        if extras and rng.random() < extra_license_prob:
            types.append(extras[rng.randrange(len(extras))])
        entry = {"id": cid, "licensed_types": sorted(types)}
        open_d = crew_open_duty.get(cid)
        if open_d is not None:
            entry["duty_start"] = open_d["start"]
            entry["duty_prev_end"] = open_d["end"]
            entry["duty_flights_flown"] = open_d["count"]
        crew_json.append(entry)

    arrivals = sorted((f for f in flights_json if f["destination"] == "HUB"),
                      key=lambda f: (f["arr"], f["id"]))
    departures = sorted((f for f in flights_json if f["origin"] == "HUB"),
                        key=lambda f: (f["dep"], f["id"]))
    connections_json = []
    dep_idx = 0
    for a in arrivals:
        if rng.random() > connection_rate:
            continue
        while dep_idx < len(departures) and departures[dep_idx]["dep"] < a["arr"] + 30:
            dep_idx += 1
        cands = [d for d in departures[dep_idx:dep_idx + 12]
                 if 30 <= d["dep"] - a["arr"] <= 75 and d["id"] != a["id"]]
        if not cands:
            continue
        b = cands[rng.randrange(len(cands))]
        connections_json.append({
            "id": f"P{len(connections_json) + 1:04d}", "from": a["id"], "to": b["id"],
            "pax": 3 + rng.randrange(23), "min_connect": 30})

    delay_default = [[15, 8], [30, 18], [60, 38], [120, 80], [180, 140]]
    delay_table = {"*": delay_default}
    cancel_table = {}
    reassign_table = {}
    for f in flights_json:
        pax = f["pax"]
        delay_table[f["id"]] = [[b, c * pax] for b, c in delay_default]
        cancel_table[f["id"]] = 300 * pax + 8000
        spill = {}
        for ttype, cap in TYPE_CAPACITY.items():
            if pax > cap:
                spill[ttype] = 180 * (pax - cap)
        if spill:
            reassign_table[f["id"]] = spill
    cancel_table["*"] = 10000
    reassign_table["*"] = {}

    data = {
        "schema": 1,
        "hub": "HUB",
        "window": {"start": 0, "end": window_end},
        "rules": {
            "d_max": 180, "turnaround": TYPE_TURNAROUND,
            "crew_connect_same": 30, "crew_connect_switch": 45,
            "duty_base_max": 780, "duty_step": 30, "duty_free_flights": 4,
            "rest_floor": 720,
        },
        "flights": flights_json,
        "tails": [{"id": tid, "type": ttype, "subtype": ttype,
                   "capacity": TYPE_CAPACITY[ttype]}
                  for tid, ttype in sorted(tails.items())],
        "crew": crew_json,
        "maintenance": maintenance_json,
        "connections": connections_json,
        "initial_assignment": assignment,
        "costs": {
            "op": {"*": dict(TYPE_OP_COST)},
            "reassign": reassign_table,
            "cancel": cancel_table,
            "missed_connection": {"*": {"per_pax": 120}},
            "delay": delay_table,
        },
    }
    return data
