"""Comparison solvers: naive delay propagation and sequential pipelines.

The naive algorithm repeatedly takes the earliest-starting relaxed
violation, resolves it by delaying subsequent flights, and cancels the
rotation when delaying is impossible.  The pipelines resolve tail issues
first (by annealing or by the tail-recovery MIP) and hand the remaining
crew issues to the same naive method.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

from . import annealer as sa
from . import feasibility as fz
from . import mip as mipmod
from . import neighbours as nb
from .model import Instance, Schedule, ValidationError, apply_move

TAILS_ONLY = "tails"
CREW_ONLY = "crew"
INTEGRATED = "integrated"


@dataclass
class BaselineOutcome:
    schedule: Schedule
    feasible: bool
    failed_step: str | None = None
    blocking: str | None = None
    wall_time_s: float = 0.0
    iterations: int = 0


def _delay_target(schedule: Schedule, issue: fz.Issue) -> str | None:
    kind = issue.kind
    if kind in (fz.OVERLAP_TAIL, fz.OVERLAP_CREW, fz.OVERLAP_BOTH):
        later = issue.flights[1]
        return later if nb._changeable(schedule, later) else None
    if kind == fz.EXCEEDED_DUTY:
        first = issue.flights[0]
        if issue.resolve_delay is not None and nb._changeable(schedule, first):
            return first
        return None
    if kind == fz.NOT_ENOUGH_REST:
        nxt = issue.flights[-1]
        return nxt if nb._changeable(schedule, nxt) else None
    return None


def _cancel_target(schedule: Schedule, issue: fz.Issue) -> str | None:
    for fid in reversed(issue.flights):
        if nb._changeable(schedule, fid):
            return fid
    return None


def naive_recover(schedule: Schedule, instance: Instance | None = None,
                  scope: str = INTEGRATED) -> BaselineOutcome:
    """Deterministic delay-propagation repair of relaxed violations.

    ``scope`` limits which violations are considered: ``tails`` ignores
    crew entirely; ``crew`` and ``integrated`` track everything (the crew
    stage of a pipeline starts from a schedule whose tail issues are
    already resolved, so only crew issues remain at entry).
    """
    t0 = time.perf_counter()
    sched = schedule.clone()
    sched.freeze_disruption_costs()
    include_crew = scope != TAILS_ONLY
    issues = fz.detect_issues(sched, include_crew=include_crew)
    iterations = 0
    budget = 20 * (len(sched.state) + 10)
    while True:
        worst = None
        for issue in issues:
            if issue.kind not in fz.VIOLATION_KINDS:
                continue
            rank = (issue.start, issue.resources[0] if issue.resources else "", issue.key)
            if worst is None or rank < worst[0]:
                worst = (rank, issue)
        if worst is None:
            return BaselineOutcome(schedule=sched, feasible=True,
                                   wall_time_s=time.perf_counter() - t0,
                                   iterations=iterations)
        issue = worst[1]
        iterations += 1
        if iterations > budget:
            return BaselineOutcome(schedule=sched, feasible=False, failed_step="naive",
                                   blocking=f"no progress on {issue.kind} {issue.key}",
                                   wall_time_s=time.perf_counter() - t0,
                                   iterations=iterations)
        move = None
        target = _delay_target(sched, issue)
        if target is not None:
            move = nb.gen_delay(sched, issue, target)
        if move is None:
            target = _cancel_target(sched, issue)
            if target is not None:
                move = nb.gen_cancel(sched, target)
        if move is None:
            return BaselineOutcome(schedule=sched, feasible=False, failed_step="naive",
                                   blocking=f"{issue.kind} {issue.key}: delay and "
                                            "cancel both impossible",
                                   wall_time_s=time.perf_counter() - t0,
                                   iterations=iterations)
        _token, changes = apply_move(sched, move)
        issues.update(changes)


def pipeline_ls_tail_naive_crew(instance: Instance, schedule: Schedule,
                                config: sa.AnnealConfig, n_runs: int = 1,
                                seeds: list[int] | None = None) -> BaselineOutcome:
    """Local search on tail issues only, then naive repair of crew issues."""
    t0 = time.perf_counter()
    tail_cfg = replace(config, crew_enabled=False)
    result = sa.multi_start(instance, schedule, tail_cfg, n_runs=n_runs, seeds=seeds)
    if not result.feasible or result.best_schedule is None:
        return BaselineOutcome(schedule=schedule.clone(), feasible=False,
                               failed_step="ls-tail", blocking="tail stage infeasible",
                               wall_time_s=time.perf_counter() - t0)
    outcome = naive_recover(result.best_schedule, instance, scope=CREW_ONLY)
    outcome.wall_time_s = time.perf_counter() - t0
    if not outcome.feasible:
        outcome.failed_step = "naive-crew"
    return outcome


def apply_tail_solution(instance: Instance, schedule: Schedule, solution) -> Schedule:
    """Overwrite the tail layer of a schedule from a MIP (or imported) solution."""
    if isinstance(solution, mipmod.MipSolution):
        entries = {fid: {"tail": tid, "delay": solution.delays.get(fid, 0),
                         "cancelled": False}
                   for fid, tid in solution.assignment.items()}
        for fid in solution.cancelled:
            entries[fid] = {"tail": None, "delay": 0, "cancelled": True}
    else:
        entries = mipmod.validate_solution_import(instance, solution)
    tail_map = {}
    crew_map = {}
    delays = {}
    cancelled = set()
    for fid in instance.flights:
        st = schedule.state[fid]
        entry = entries.get(fid)
        if entry is None:
            if st.cancelled:
                cancelled.add(fid)
                continue
            tail_map[fid] = st.tail
            crew_map[fid] = st.crew
            if st.delay:
                delays[fid] = st.delay
            continue
        if entry["cancelled"]:
            if instance.flights[fid].underway:
                raise ValidationError(f"solution cancels underway flight {fid!r}")
            cancelled.add(fid)
            continue
        if instance.flights[fid].underway and entry["tail"] != st.tail:
            raise ValidationError(f"solution moves underway flight {fid!r}")
        tail_map[fid] = entry["tail"]
        crew_map[fid] = st.crew
        if entry["delay"]:
            delays[fid] = entry["delay"]
    rebuilt = Schedule.from_assignment(instance, tail_map, crew_map,
                                       delays=delays, cancelled=cancelled)
    hard = [v for v in fz.check_hard(rebuilt)
            if v.constraint in ("C4", "C5", "C6", "C7")]
    if hard:
        first = hard[0]
        raise ValidationError(
            f"imported solution violates {first.constraint} on {first.resource}: {first.detail}")
    return rebuilt


def pipeline_mip_tail_naive_crew(instance: Instance, schedule: Schedule,
                                 mip_solution) -> BaselineOutcome:
    """Tail assignment from a MIP solution, then naive crew repair.

    Rotations whose new aircraft type leaves the planned crew unlicensed
    are cancelled up front (a licence conflict cannot be delayed away); if
    such a rotation cannot be cancelled the pipeline is infeasible.
    """
    t0 = time.perf_counter()
    sched = apply_tail_solution(instance, schedule, mip_solution)
    issues = fz.detect_issues(sched)
    conflicts = []
    for v in fz.check_hard(sched):
        if v.constraint == "C3":
            conflicts.append(v.flights[0])
    for fid in sorted(set(conflicts)):
        if sched.state[fid].cancelled:
            continue
        move = nb.gen_cancel(sched, fid)
        if move is None:
            return BaselineOutcome(schedule=sched, feasible=False,
                                   failed_step="naive-crew",
                                   blocking=f"unlicensed crew on {fid}, rotation "
                                            "uncancellable",
                                   wall_time_s=time.perf_counter() - t0)
        _token, changes = apply_move(sched, move)
        issues.update(changes)
    outcome = naive_recover(sched, instance, scope=CREW_ONLY)
    outcome.wall_time_s = time.perf_counter() - t0
    if not outcome.feasible:
        outcome.failed_step = "naive-crew"
    return outcome


def solve_mip_tail(instance: Instance, schedule: Schedule, horizon: int = 36 * 60,
                   limits: mipmod.SolveLimits | None = None) -> mipmod.MipSolution:
    """Build and exactly solve the tail-recovery MIP for a disrupted schedule."""
    current_delays = {fid: st.delay for fid, st in schedule.state.items() if st.delay}
    graph = mipmod.build_graph(instance, horizon, current_delays)
    model = mipmod.build_model(graph, instance, current_delays)
    return mipmod.solve_exact(model, limits)
