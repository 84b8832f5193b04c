"""Directed simulated annealing over schedule issues.

Each iteration picks a uniformly random issue, selects the flight that can
resolve it, generates one or more candidate moves of the applicable kinds,
and runs Metropolis acceptance on the chosen candidate.  Temperature cools
geometrically, violation penalties escalate on a fixed period, and the
search restarts with a raised temperature when it stalls.
"""

from __future__ import annotations

import math
import random
import time
from dataclasses import dataclass, field, replace

from . import cost as costmod
from . import feasibility as fz
from . import neighbours as nb
from .model import Instance, Schedule, apply_move, revert_move

DETERMINISTIC_KINDS = (nb.DELAY, nb.CANCEL, nb.UNDO_DELAY, nb.UNDO_CANCEL)

RANDOM_NEIGHBOUR = "random"
CANDIDATES_BEST = "best"
CANDIDATES_SOFTMIN = "softmin"


@dataclass(frozen=True)
class AnnealConfig:
    strategy: str = RANDOM_NEIGHBOUR
    candidates_per_type: int = 25
    stall_limit: int = 10_000
    restarts: int = 2
    restart_temp_factor: float = 2.0
    cooling: float = 0.999
    t0: float | None = None  # None: calibrate from sampled neighbour deltas
    t0_accept_prob: float = 0.3
    t0_samples: int = 1000
    seed: int = 0
    penalty0: int = 600
    penalty_factor: float = 1.3
    penalty_period: int = 10_000
    reassign_weight: float = 0.9
    delay_weight: float = 0.08
    cancel_weight: float = 0.02
    extension_prob: float = 0.6
    swap_penalty: int = 0
    cost_model: costmod.CostModel = costmod.ORIGINAL_MODEL
    crew_enabled: bool = True
    max_iterations: int | None = None

    def __post_init__(self):
        if not 0.0 < self.cooling < 1.0:
            raise ValueError("cooling factor must be in (0, 1)")
        if self.stall_limit <= 0:
            raise ValueError("stall limit must be positive")
        if self.candidates_per_type < 1:
            raise ValueError("candidates per type must be >= 1")
        if self.strategy not in (RANDOM_NEIGHBOUR, CANDIDATES_BEST, CANDIDATES_SOFTMIN):
            raise ValueError(f"unknown strategy {self.strategy!r}")

    def generation(self) -> nb.GenerationConfig:
        return nb.GenerationConfig(extension_prob=self.extension_prob,
                                   crew_enabled=self.crew_enabled)


@dataclass
class RunResult:
    best_schedule: Schedule | None
    best_cost: int | None
    feasible: bool
    iterations: int
    accepted: int
    wall_time_s: float
    restarts_used: int
    final_violation_minutes: int
    seed: int
    restart_trace: list[dict] = field(default_factory=list)


def accept(current_cost: float, candidate_cost: float, temperature: float, rng) -> bool:
    """Metropolis rule: better always, worse with probability e^((c-c')/T)."""
    if candidate_cost < current_cost:
        return True
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    return rng.random() < math.exp((current_cost - candidate_cost) / temperature)


def choose_candidate(candidates: list[tuple[nb.Move, int]], strategy: str, rng) -> nb.Move:
    """Pick among (move, delta) pairs: greedy best or SoftMin-weighted."""
    if not candidates:
        raise ValueError("no candidates to choose from")
    if len(candidates) == 1:
        return candidates[0][0]
    if strategy == CANDIDATES_BEST:
        best_delta = min(d for _m, d in candidates)
        ties = [m for m, d in candidates if d == best_delta]
        return ties[rng.randrange(len(ties))]
    if strategy == CANDIDATES_SOFTMIN:
        min_delta = min(d for _m, d in candidates)
        weights = [math.exp(-(d - min_delta)) for _m, d in candidates]
        total = sum(weights)
        pick = rng.random() * total
        acc = 0.0
        for (move, _d), w in zip(candidates, weights):
            acc += w
            if pick < acc:
                return move
        return candidates[-1][0]
    raise ValueError(f"unknown strategy {strategy!r}")


def _pick_kind(kinds: tuple[str, ...], config: AnnealConfig, rng) -> str:
    if len(kinds) == 1:
        return kinds[0]
    reassign = [k for k in kinds if k in nb.REASSIGNMENT_KINDS]
    weights = []
    for k in kinds:
        if k in nb.REASSIGNMENT_KINDS:
            weights.append(config.reassign_weight / len(reassign))
        elif k == nb.DELAY:
            weights.append(config.delay_weight)
        elif k == nb.CANCEL:
            weights.append(config.cancel_weight)
        else:
            weights.append(config.delay_weight)
    total = sum(weights)
    pick = rng.random() * total
    acc = 0.0
    for k, w in zip(kinds, weights):
        acc += w
        if pick < acc:
            return k
    return kinds[-1]


def _sample_candidate(schedule, issues, config, rng, gen_cfg):
    """One (issue, flight, kind, move) generation attempt; parts may be None."""
    issue = issues.random(rng)
    try:
        flight = nb.select_flight(schedule, issue, rng)
    except nb.NoChangeableFlight:
        return None
    kinds = nb.applicable_types(issue, crew_enabled=config.crew_enabled)
    if not kinds:
        return None
    kind = _pick_kind(kinds, config, rng)
    return nb.generate(kind, schedule, issue, flight, rng, gen_cfg, issues=issues)


def calibrate_t0(schedule: Schedule, issues, config: AnnealConfig, rng,
                 penalty: costmod.PenaltyState) -> float:
    """Temperature at which a typical small sampled |delta| is accepted with
    the configured probability; instance-scale free.

    The lower quartile is used rather than the median: the sampled delta
    distribution is bimodal (cheap reassignments versus wholesale damage
    like cancellations), and calibrating on the damage mode makes the hot
    phase accept everything.
    """
    deltas = []
    gen_cfg = config.generation()
    for _ in range(config.t0_samples):
        if len(issues) == 0:
            break
        move = _sample_candidate(schedule, issues, config, rng, gen_cfg)
        if move is None:
            continue
        d = costmod.delta_cost(schedule, issues, move, penalty,
                               config.cost_model, config.swap_penalty)
        if d != 0:
            deltas.append(abs(d))
    if not deltas:
        return 1000.0
    deltas.sort()
    quartile = deltas[len(deltas) // 4]
    return quartile / -math.log(config.t0_accept_prob)


def run(instance: Instance, disrupted: Schedule, config: AnnealConfig,
        trace=None) -> RunResult:
    """One annealing run; the input schedule is cloned, never mutated."""
    t_start = time.perf_counter()
    sched = disrupted.clone()
    sched.freeze_disruption_costs()
    rng = random.Random(config.seed)
    issues = fz.detect_issues(sched, include_crew=config.crew_enabled)
    penalty = costmod.PenaltyState(coefficient=config.penalty0,
                                   factor=config.penalty_factor,
                                   period=config.penalty_period)
    gen_cfg = config.generation()

    best: Schedule | None = None
    best_cost: int | None = None

    def consider_best():
        nonlocal best, best_cost
        if issues.violation_minutes == 0:
            c = costmod.evaluate(sched, issues, costmod.PenaltyState(coefficient=0),
                                 config.cost_model, config.swap_penalty)
            if best_cost is None or c < best_cost:
                best = sched.clone()
                best_cost = c

    consider_best()
    if len(issues) == 0:
        return RunResult(best_schedule=best, best_cost=best_cost,
                         feasible=best is not None, iterations=0, accepted=0,
                         wall_time_s=time.perf_counter() - t_start, restarts_used=0,
                         final_violation_minutes=issues.violation_minutes,
                         seed=config.seed)

    t0 = config.t0 if config.t0 is not None else calibrate_t0(sched, issues, config, rng, penalty)
    temperature = t0
    stall = 0
    fail_streak = 0
    restarts_used = 0
    iterations = 0
    accepted_count = 0
    restart_trace: list[dict] = []
    restart_iter_start = 0

    while len(issues) > 0:
        if config.max_iterations is not None and iterations >= config.max_iterations:
            break
        iterations += 1
        if iterations % penalty.period == 0:
            penalty = costmod.escalate(penalty)

        move = None
        issue = issues.random(rng)
        try:
            flight = nb.select_flight(sched, issue, rng)
        except nb.NoChangeableFlight:
            flight = None
        if flight is not None:
            kinds = nb.applicable_types(issue, crew_enabled=config.crew_enabled)
            if config.strategy == RANDOM_NEIGHBOUR:
                kind = _pick_kind(kinds, config, rng)
                move = nb.generate(kind, sched, issue, flight, rng, gen_cfg, issues=issues)
            else:
                candidates: list[tuple[nb.Move, int]] = []
                for kind in kinds:
                    count = 1 if kind in DETERMINISTIC_KINDS else config.candidates_per_type
                    for _ in range(count):
                        cand = nb.generate(kind, sched, issue, flight, rng, gen_cfg, issues=issues)
                        if cand is not None:
                            delta = costmod.delta_cost(sched, issues, cand, penalty,
                                                       config.cost_model, config.swap_penalty)
                            candidates.append((cand, delta))
                if candidates:
                    move = choose_candidate(candidates, config.strategy, rng)

        if move is None:
            fail_streak += 1
            temperature *= config.cooling
        else:
            before = costmod.evaluate(sched, issues, penalty,
                                      config.cost_model, config.swap_penalty)
            token, changes = apply_move(sched, move)
            issues.update(changes)
            after = costmod.evaluate(sched, issues, penalty,
                                     config.cost_model, config.swap_penalty)
            ok = accept(before, after, temperature, rng)
            if trace is not None:
                trace({"iteration": iterations, "issue": issue.kind, "move": move.kind,
                       "delta": after - before, "accepted": ok,
                       "temperature": round(temperature, 3)})
            if ok:
                accepted_count += 1
                stall = 0
                fail_streak = 0
                consider_best()
            else:
                back = revert_move(sched, token)
                issues.update(back)
                stall += 1
            temperature *= config.cooling

        if stall >= config.stall_limit or fail_streak >= config.stall_limit:
            restart_trace.append({"restart": restarts_used,
                                  "iterations": iterations - restart_iter_start,
                                  "best_cost": best_cost})
            if restarts_used >= config.restarts:
                break
            restarts_used += 1
            temperature = t0 * (config.restart_temp_factor ** (restarts_used - 1))
            stall = 0
            fail_streak = 0
            restart_iter_start = iterations
            if best is not None:
                sched = best.clone()
                issues = fz.detect_issues(sched, include_crew=config.crew_enabled)

    return RunResult(
        best_schedule=best, best_cost=best_cost, feasible=best is not None,
        iterations=iterations, accepted=accepted_count,
        wall_time_s=time.perf_counter() - t_start, restarts_used=restarts_used,
        final_violation_minutes=issues.violation_minutes, seed=config.seed,
        restart_trace=restart_trace)


def multi_start(instance: Instance, disrupted: Schedule, config: AnnealConfig,
                n_runs: int = 1, seeds: list[int] | None = None,
                n_jobs: int = 1) -> RunResult:
    """Best result over independent runs differing only in their seed."""
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    if seeds is None:
        seeds = [config.seed + i for i in range(n_runs)]
    if len(seeds) < n_runs:
        raise ValueError("need at least one seed per run")
    seeds = seeds[:n_runs]
    if n_jobs > 1 and n_runs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(
                run, [instance] * n_runs, [disrupted] * n_runs,
                [replace(config, seed=s) for s in seeds]))
    else:
        results = [run(instance, disrupted, replace(config, seed=s)) for s in seeds]
    feasible = [(r.best_cost, i) for i, r in enumerate(results) if r.feasible]
    if feasible:
        _, idx = min(feasible)
        return results[idx]
    _, idx = min((r.final_violation_minutes, i) for i, r in enumerate(results))
    return results[idx]
