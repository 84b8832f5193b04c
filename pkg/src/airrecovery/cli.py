"""Command-line entry point.

Subcommands: ``solve`` one scenario with one algorithm, ``bench`` a grid of
algorithms x scenarios, ``gen`` scenario/instance materialization,
``export-mip`` the tail-recovery model, ``validate`` instance lint.
Exit codes: 0 feasible/ok, 1 usage or validation error, 2 infeasible.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import annealer as sa
from . import baselines, feasibility, mip, report, scenarios
from .cost import CostModel
from .model import Instance, Schedule, ValidationError, load_instance

ALGOS = ("naive", "ls", "ls-tail", "mip-tail", "pipeline-ls", "pipeline-mip")


class CliError(Exception):
    def __init__(self, message, code=1):
        super().__init__(message)
        self.code = code


def _load_instance_arg(args) -> Instance:
    if args.instance.startswith("synthetic:"):
        seed = int(args.instance.split(":", 1)[1])
        clock = scenarios.parse_scenario_arg(args.scenario).clock if args.scenario else 480
        return scenarios.synthetic_instance(seed, clock=clock)
    path = Path(args.instance)
    if not path.exists():
        raise CliError(f"instance file not found: {path}")
    try:
        return load_instance(path.read_text())
    except ValidationError as exc:
        raise CliError(f"invalid instance {path}: {exc}") from exc


def _scenario_schedule(instance: Instance, args) -> tuple[Schedule, str]:
    if not args.scenario:
        return Schedule.initial(instance), "none"
    if "@" in args.scenario:
        spec = scenarios.parse_scenario_arg(args.scenario)
        spec = replace(spec, seed=args.seed)
        return scenarios.generate(instance, spec), spec.label()
    path = Path(args.scenario)
    if not path.exists():
        raise CliError(f"scenario file not found: {path}")
    overlay = json.loads(path.read_text())
    return scenarios.apply_overlay(instance, overlay), path.name


def _anneal_config(args) -> sa.AnnealConfig:
    return sa.AnnealConfig(
        strategy=args.strategy,
        seed=args.seed,
        swap_penalty=args.swap_penalty,
        cost_model=CostModel(args.cost_model),
    )


def _write(path: Path, text: str, force: bool):
    if path.exists() and not force:
        raise CliError(f"refusing to overwrite {path} (use --force)")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _solution_json(schedule: Schedule) -> dict:
    out = {}
    for fid in sorted(schedule.state):
        st = schedule.state[fid]
        out[fid] = {"tail": st.tail, "crew": list(st.crew), "delay": st.delay,
                    "cancelled": st.cancelled}
    return out


def _run_algo(algo: str, instance: Instance, disrupted: Schedule,
              config: sa.AnnealConfig, runs: int, horizon: int,
              trace_path: str | None = None):
    """(schedule, solved, runtime) for one algorithm on one scenario."""
    trace_fn = None
    trace_file = None
    if trace_path:
        trace_file = open(trace_path, "w")
        trace_fn = lambda rec: trace_file.write(json.dumps(rec) + "\n")
    try:
        if algo == "naive":
            out = baselines.naive_recover(disrupted, instance)
            return out.schedule, out.feasible, out.wall_time_s
        if algo == "ls":
            res = sa.multi_start(instance, disrupted, config, n_runs=runs)
            sched = res.best_schedule if res.best_schedule is not None else disrupted
            return sched, res.feasible, res.wall_time_s
        if algo == "ls-tail":
            cfg = replace(config, crew_enabled=False)
            res = sa.multi_start(instance, disrupted, cfg, n_runs=runs)
            sched = res.best_schedule if res.best_schedule is not None else disrupted
            return sched, res.feasible, res.wall_time_s
        if algo == "mip-tail":
            sol = baselines.solve_mip_tail(instance, disrupted, horizon=horizon)
            if sol.status in ("infeasible", "limit") and sol.objective is None:
                return disrupted, False, 0.0
            sched = baselines.apply_tail_solution(instance, disrupted, sol)
            return sched, True, 0.0
        if algo == "pipeline-ls":
            out = baselines.pipeline_ls_tail_naive_crew(instance, disrupted, config,
                                                        n_runs=runs)
            return out.schedule, out.feasible, out.wall_time_s
        if algo == "pipeline-mip":
            sol = baselines.solve_mip_tail(instance, disrupted, horizon=horizon)
            if sol.status in ("infeasible", "limit") and sol.objective is None:
                return disrupted, False, 0.0
            out = baselines.pipeline_mip_tail_naive_crew(instance, disrupted, sol)
            return out.schedule, out.feasible, out.wall_time_s
        raise CliError(f"unknown algorithm {algo!r}")
    finally:
        if trace_file is not None:
            trace_file.close()


def _config_echo(args, extra=None) -> dict:
    echo = {"instance": args.instance, "seed": args.seed,
            "strategy": getattr(args, "strategy", None),
            "swap_penalty": getattr(args, "swap_penalty", 0),
            "cost_model": getattr(args, "cost_model", "original")}
    if extra:
        echo.update(extra)
    return echo


def cmd_solve(args) -> int:
    instance = _load_instance_arg(args)
    disrupted, label = _scenario_schedule(instance, args)
    config = _anneal_config(args)
    schedule, solved, runtime = _run_algo(
        args.algo, instance, disrupted, config, args.runs, args.horizon, args.trace)
    record = report.compute_kpis(schedule, solved=solved, runtime_s=runtime)
    out_dir = Path(args.out)
    echo = _config_echo(args, {"algo": args.algo, "scenario": label, "runs": args.runs})
    _write(out_dir / "solution.json", json.dumps(
        {"config": echo, "solved": solved, "assignment": _solution_json(schedule)},
        indent=1, sort_keys=True), args.force)
    _write(out_dir / "kpi.json", json.dumps({"config": echo, "kpi": record.to_json()},
                                            indent=1, sort_keys=True), args.force)
    _write(out_dir / "kpi.csv",
           report.records_to_csv([(args.algo, label, record)], echo), args.force)
    if args.dump_issues:
        issues = feasibility.detect_issues(schedule)
        _write(out_dir / "issues.json",
               json.dumps([i.to_json() for i in issues], indent=1), args.force)
    print(f"{args.algo} on {label}: solved={solved} total={record.total_cost} "
          f"npc={record.npc}")
    return 0 if solved else 2


def _bench_cell(task):
    algo, kind, clock, seed, net_seed, runs, strategy, swap_penalty, cost_model, horizon = task
    instance = scenarios.synthetic_instance(net_seed, clock=clock)
    spec = scenarios.ScenarioSpec(kind=kind, clock=clock, seed=seed)
    disrupted = scenarios.generate(instance, spec)
    config = sa.AnnealConfig(strategy=strategy, seed=seed, swap_penalty=swap_penalty,
                             cost_model=CostModel(cost_model))
    schedule, solved, runtime = _run_algo(algo, instance, disrupted, config, runs, horizon)
    record = report.compute_kpis(schedule, solved=solved, runtime_s=runtime)
    return algo, spec.label(), record


def cmd_bench(args) -> int:
    algos = [a.strip() for a in args.algos.split(",") if a.strip()]
    for algo in algos:
        if algo not in ALGOS:
            raise CliError(f"unknown algorithm {algo!r}")
    kinds = [k.strip() for k in args.kinds.split(",") if k.strip()]
    clocks = [scenarios.CLOCKS.get(t.strip()) or scenarios.parse_scenario_arg(f"fd@{t.strip()}").clock
              for t in args.times.split(",")]
    if not args.instance.startswith("synthetic:"):
        raise CliError("bench requires --instance synthetic:<seed>")
    net_seed = int(args.instance.split(":", 1)[1])
    tasks = []
    for kind in kinds:
        for clock in clocks:
            for seed in range(args.seed, args.seed + args.scenarios):
                for algo in algos:
                    tasks.append((algo, kind, clock, seed, net_seed, args.runs,
                                  args.strategy, args.swap_penalty, args.cost_model,
                                  args.horizon))
    if args.jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_bench_cell, tasks))
    else:
        results = [_bench_cell(t) for t in tasks]
    # Reference for change percentages: the naive record of the same scenario.
    naive_by_scenario = {s: r for a, s, r in results if a == "naive"}
    records = []
    for algo, scenario, record in results:
        ref = naive_by_scenario.get(scenario)
        if ref is not None and algo != "naive" and ref.solved:
            record = report.compute_kpis_with_reference(record, ref)
        records.append((algo, scenario, record))
    summary = report.summarize_batch(records)
    echo = _config_echo(args, {"algos": algos, "kinds": kinds, "times": args.times,
                               "scenarios": args.scenarios, "runs": args.runs})
    out_dir = Path(args.out)
    _write(out_dir / "records.csv", report.records_to_csv(records, echo), args.force)
    _write(out_dir / "summary.csv", report.summary_to_csv(summary, echo), args.force)
    _write(out_dir / "summary.json",
           json.dumps({"config": echo, "summary": summary.to_json(),
                       "records": {f"{a}|{s}": r.to_json() for a, s, r in records}},
                      indent=1, sort_keys=True), args.force)
    print(f"bench: {len(records)} records, {summary.n_common} common-solved scenarios")
    return 0


def cmd_gen(args) -> int:
    instance = _load_instance_arg(args)
    out = Path(args.out)
    if args.dump_instance:
        if not args.instance.startswith("synthetic:"):
            raise CliError("--dump-instance requires --instance synthetic:<seed>")
        seed = int(args.instance.split(":", 1)[1])
        clock = scenarios.parse_scenario_arg(args.scenario).clock if args.scenario else 480
        data = scenarios.synthetic_instance_data(seed, clock=clock)
        _write(out, json.dumps(data, indent=1, sort_keys=True), args.force)
        print(f"instance written to {out}")
        return 0
    if not args.scenario or "@" not in args.scenario:
        raise CliError("gen needs an inline scenario spec like fd@08:00")
    spec = replace(scenarios.parse_scenario_arg(args.scenario), seed=args.seed)
    overlay = scenarios.scenario_overlay(instance, spec, base_ref=args.instance)
    _write(out, json.dumps(overlay, indent=1, sort_keys=True), args.force)
    print(f"scenario {spec.label()} written to {out}")
    return 0


def cmd_export_mip(args) -> int:
    instance = _load_instance_arg(args)
    disrupted, _label = _scenario_schedule(instance, args)
    window = instance.window[1] - instance.window[0]
    if args.horizon > window:
        raise CliError(f"horizon {args.horizon} min exceeds recovery window {window} min")
    delays = {fid: st.delay for fid, st in disrupted.state.items() if st.delay}
    graph = mip.build_graph(instance, args.horizon, delays)
    model = mip.build_model(graph, instance, delays)
    text = mip.export_model(model, args.format)
    _write(Path(args.out), text, args.force)
    stats = model.stats()
    print(f"exported {args.format}: {stats['variables']} variables "
          f"({stats['binaries']} binary), {stats['rows']} rows, {stats['arcs']} arcs")
    return 0


def cmd_validate(args) -> int:
    instance = _load_instance_arg(args)
    schedule = Schedule.initial(instance)
    hard = feasibility.check_hard(schedule)
    issues = feasibility.detect_issues(schedule)
    print(f"{len(instance.flights)} flights, {len(instance.tails)} tails, "
          f"{len(instance.crew)} crew, {len(instance.connections)} connections")
    for violation in hard[:20]:
        print(f"  hard {violation.constraint} on {violation.resource}: {violation.detail}")
    for issue in list(issues)[:20]:
        print(f"  issue {issue.kind}: {issue.flights} magnitude={issue.magnitude}")
    if args.dump_issues:
        _write(Path(args.dump_issues),
               json.dumps([i.to_json() for i in issues], indent=1), args.force)
    if hard or len(issues):
        print(f"NOT CLEAN: {len(hard)} hard violations, {len(issues)} issues")
        return 2
    print("clean")
    return 0


def _parse_horizon(text: str) -> int:
    if text.endswith("h"):
        return int(float(text[:-1]) * 60)
    return int(text)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="airrecovery",
        description="Integrated airline fleet and crew schedule recovery")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, scenario=True):
        p.add_argument("--instance", required=True,
                       help="instance JSON path or synthetic:<seed>")
        if scenario:
            p.add_argument("--scenario", default=None,
                           help="inline spec (fd@08:00, ur-both@12:00) or overlay path")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--force", action="store_true",
                       help="overwrite existing output files")

    solve = sub.add_parser("solve", help="solve one scenario")
    common(solve)
    solve.add_argument("--algo", choices=ALGOS, default="ls")
    solve.add_argument("--runs", type=int, default=1, help="multi-start runs")
    solve.add_argument("--strategy", choices=("random", "best", "softmin"),
                       default="random")
    solve.add_argument("--swap-penalty", type=int, default=0)
    solve.add_argument("--cost-model", choices=("original", "punctuality"),
                       default="original")
    solve.add_argument("--horizon", type=_parse_horizon, default="36h")
    solve.add_argument("--out", default="out")
    solve.add_argument("--trace", default=None, help="iteration trace JSON-lines path")
    solve.add_argument("--dump-issues", action="store_true")
    solve.set_defaults(func=cmd_solve)

    bench = sub.add_parser("bench", help="run an algorithm x scenario grid")
    common(bench, scenario=False)
    bench.add_argument("--algos", default="naive,ls")
    bench.add_argument("--kinds", default="fd")
    bench.add_argument("--times", default="08:00,12:00,15:00,18:00")
    bench.add_argument("--scenarios", type=int, default=25,
                       help="scenario seeds per (kind, time) cell")
    bench.add_argument("--runs", type=int, default=1)
    bench.add_argument("--strategy", choices=("random", "best", "softmin"),
                       default="random")
    bench.add_argument("--swap-penalty", type=int, default=0)
    bench.add_argument("--cost-model", choices=("original", "punctuality"),
                       default="original")
    bench.add_argument("--horizon", type=_parse_horizon, default="36h")
    bench.add_argument("--jobs", type=int, default=1)
    bench.add_argument("--out", default="bench")
    bench.set_defaults(func=cmd_bench)

    gen = sub.add_parser("gen", help="materialize a scenario overlay or instance")
    common(gen)
    gen.add_argument("--out", required=True)
    gen.add_argument("--dump-instance", action="store_true",
                     help="write the synthetic instance JSON instead of a scenario")
    gen.set_defaults(func=cmd_gen)

    export = sub.add_parser("export-mip", help="export the tail-recovery MIP")
    common(export)
    export.add_argument("--horizon", type=_parse_horizon, default="36h")
    export.add_argument("--format", choices=("lp", "mps"), default="lp")
    export.add_argument("--out", required=True)
    export.set_defaults(func=cmd_export_mip)

    validate = sub.add_parser("validate", help="lint an instance")
    common(validate, scenario=False)
    validate.add_argument("--dump-issues", default=None,
                          help="write the issue inventory to this JSON path")
    validate.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
