"""Integrated airline fleet and crew schedule recovery via directed
simulated annealing, with naive and MIP-based baselines."""

from .annealer import AnnealConfig, RunResult, multi_start, run
from .baselines import BaselineOutcome, naive_recover
from .cost import CostModel, PenaltyState, delta_cost, npc, total_cost
from .feasibility import IssueSet, check_hard, detect_issues, update_issues
from .model import (Instance, Schedule, ValidationError, apply_move, load_instance,
                    revert_move, rotation_of)
from .neighbours import Move, applicable_types, select_flight
from .report import KpiRecord, compute_kpis, summarize_batch
from .scenarios import ScenarioSpec, gen_fd, gen_ur, synthetic_instance

__version__ = "0.1.0"

__all__ = [
    "AnnealConfig", "BaselineOutcome", "CostModel", "Instance", "IssueSet",
    "KpiRecord", "Move", "PenaltyState", "RunResult", "Schedule", "ScenarioSpec",
    "ValidationError", "applicable_types", "apply_move", "check_hard",
    "compute_kpis", "delta_cost", "detect_issues", "gen_fd", "gen_ur",
    "load_instance", "multi_start", "naive_recover", "npc", "revert_move",
    "rotation_of", "run", "select_flight", "summarize_batch",
    "synthetic_instance", "total_cost", "update_issues",
]
