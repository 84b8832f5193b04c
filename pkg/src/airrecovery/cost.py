"""Objective evaluation: operating, reassignment, cancellation, delay and
missed-connection cost, relaxed-constraint penalties, the punctuality cost
variant, and the swap penalty.

``total_cost`` recomputes everything from the schedule and is the oracle;
``evaluate`` reads the incremental aggregates kept by the issue set and is
the hot path used inside the search, with ``delta_cost`` as the
apply-measure-revert wrapper around it.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from . import feasibility
from .model import Schedule, apply_move, revert_move

ORIGINAL = "original"
PUNCTUALITY = "punctuality"


@dataclass(frozen=True)
class CostModel:
    """Which delay/connection costing the search optimizes.

    The punctuality variant charges a flat penalty per delayed flight,
    multiplied tenfold past 15 minutes, and ignores passenger connections.
    Reporting always re-evaluates with the original model.
    """

    kind: str = ORIGINAL
    punct_base: int = 500
    punct_over15_mult: int = 10

    def __post_init__(self):
        if self.kind not in (ORIGINAL, PUNCTUALITY):
            raise ValueError(f"unknown cost model {self.kind!r}")


ORIGINAL_MODEL = CostModel(ORIGINAL)


@dataclass(frozen=True)
class PenaltyState:
    """Linear violation penalty with geometric escalation."""

    coefficient: int = 100
    factor: float = 2.0
    period: int = 50_000
    steps: int = 0

    def __post_init__(self):
        if self.factor <= 1.0:
            raise ValueError("escalation factor must exceed 1")


def escalate(penalty: PenaltyState) -> PenaltyState:
    new_coeff = int(penalty.coefficient * penalty.factor)
    if new_coeff <= penalty.coefficient:
        new_coeff = penalty.coefficient + 1
    return replace(penalty, coefficient=new_coeff, steps=penalty.steps + 1)


@dataclass(frozen=True)
class CostBreakdown:
    op: int
    reassign: int
    cancel: int
    delay: int
    missed: int
    penalty: int
    swap_penalty: int

    @property
    def total(self) -> int:
        return (self.op + self.reassign + self.cancel + self.delay
                + self.missed + self.penalty + self.swap_penalty)

    @property
    def npc(self) -> int:
        return self.cancel + self.delay + self.missed

    def to_json(self) -> dict:
        return {
            "op": self.op, "reassign": self.reassign, "cancel": self.cancel,
            "delay": self.delay, "missed": self.missed, "penalty": self.penalty,
            "swap_penalty": self.swap_penalty, "total": self.total, "npc": self.npc,
        }


def _connection_broken(schedule: Schedule, conn) -> bool:
    st_from = schedule.state[conn.from_flight]
    st_to = schedule.state[conn.to_flight]
    if st_from.cancelled or st_to.cancelled:
        return True
    return (schedule.eff_arr(conn.from_flight) + conn.min_connect
            > schedule.eff_dep(conn.to_flight))


def total_cost(
    schedule: Schedule,
    instance=None,
    penalty: PenaltyState = PenaltyState(),
    model: CostModel = ORIGINAL_MODEL,
    swap_penalty: int = 0,
    include_crew: bool = True,
) -> CostBreakdown:
    """Full from-scratch cost breakdown of the current schedule state."""
    inst = schedule.inst
    costs = inst.costs
    op = reassign = cancel = delay = changed = 0
    n_le15 = n_gt15 = 0
    for fid in schedule.state:
        st = schedule.state[fid]
        if st.cancelled:
            cancel += costs.cancel_cost(fid)
            continue
        tail = inst.tails[st.tail]
        op += costs.op_cost(fid, tail)
        if tail.aircraft_type != inst.planned_type(fid):
            reassign += costs.reassign_cost(fid, tail.aircraft_type)
        if st.tail != inst.planned_tail[fid]:
            changed += 1
        planned_crew = inst.planned_crew[fid]
        changed += sum(1 for c in st.crew if c not in planned_crew)
        if st.delay > 0:
            delay += costs.delay_cost(fid, st.delay)
            if st.delay > 15:
                n_gt15 += 1
            else:
                n_le15 += 1
    missed = 0
    for cid in inst.connections:
        if _connection_broken(schedule, inst.connections[cid]):
            missed += costs.missed_cost(cid)
    issues = feasibility.detect_issues(schedule, include_crew=include_crew)
    violation_minutes = sum(
        i.magnitude for i in issues if i.kind in feasibility.VIOLATION_KINDS)
    if model.kind == PUNCTUALITY:
        delay = model.punct_base * (n_le15 + model.punct_over15_mult * n_gt15)
        missed = 0
    return CostBreakdown(
        op=op, reassign=reassign, cancel=cancel, delay=delay, missed=missed,
        penalty=penalty.coefficient * violation_minutes,
        swap_penalty=swap_penalty * changed,
    )


def npc(schedule: Schedule, instance=None) -> int:
    """Non-performance cost: delay + cancellation + missed-connection terms."""
    bd = total_cost(schedule)
    return bd.npc


def evaluate(
    schedule: Schedule,
    issues: "feasibility.IssueSet",
    penalty: PenaltyState,
    model: CostModel = ORIGINAL_MODEL,
    swap_penalty: int = 0,
) -> int:
    """O(1) objective from the issue set's running aggregates."""
    base = (schedule.op_total + schedule.reassign_total + issues.cancel_cost
            + penalty.coefficient * issues.violation_minutes
            + swap_penalty * schedule.changed_count)
    if model.kind == ORIGINAL:
        return base + issues.delay_cost + schedule.frozen_delay_cost + issues.missed_cost
    n_le15 = issues.n_delayed_le15 + schedule.frozen_le15
    n_gt15 = issues.n_delayed_gt15 + schedule.frozen_gt15
    return base + model.punct_base * (n_le15 + model.punct_over15_mult * n_gt15)


def delta_cost(
    schedule: Schedule,
    issues: "feasibility.IssueSet",
    move,
    penalty: PenaltyState = PenaltyState(),
    model: CostModel = ORIGINAL_MODEL,
    swap_penalty: int = 0,
) -> int:
    """Exact objective change of a move, leaving the schedule untouched."""
    before = evaluate(schedule, issues, penalty, model, swap_penalty)
    token, changes = apply_move(schedule, move)
    issues.update(changes)
    after = evaluate(schedule, issues, penalty, model, swap_penalty)
    back = revert_move(schedule, token)
    issues.update(back)
    return after - before
