"""Command-line interface: generate traces, run one simulation, run sweeps."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .engine import SimConfig, Simulation
from .experiment import config_to_json, emit, load_sweep_config, run_experiment, SweepConfig
from .scheduling import Policy
from .workload import WorkloadSpec, generate, read_trace, write_trace


def _add_workload_flags(parser: argparse.ArgumentParser) -> None:
    g = parser.add_argument_group("workload")
    g.add_argument("--tasks", type=int, default=2000, help="number of requests")
    g.add_argument("--window", type=float, default=600.0, help="arrival window (s)")
    g.add_argument("--videos", type=int, default=120, help="distinct videos")
    g.add_argument("--p-dup", type=float, default=0.3, help="duplicate-arrival probability")
    g.add_argument("--p-same", type=float, default=0.5, help="identical-parameters probability")
    g.add_argument("--p-op-change", type=float, default=0.3, help="operation re-roll probability")
    g.add_argument("--startup", type=float, default=30.0, help="deadline startup delay (s)")
    g.add_argument("--seed", type=int, default=0, help="generator seed")


def _workload_from_args(args: argparse.Namespace) -> WorkloadSpec:
    return WorkloadSpec(
        task_count=args.tasks,
        arrival_window=args.window,
        video_count=args.videos,
        duplicate_prob=args.p_dup,
        same_params_prob=args.p_same,
        op_change_prob=args.p_op_change,
        startup_delay=args.startup,
        rng_seed=args.seed,
    )


def _add_sim_flags(parser: argparse.ArgumentParser) -> None:
    g = parser.add_argument_group("simulation")
    g.add_argument("--machines", type=int, default=8, help="worker VM count")
    g.add_argument("--queue-cap", type=int, default=1, help="pending slots per machine")
    g.add_argument("--policy", default="fcfs", help="fcfs | edf | mu")
    g.add_argument("--no-merge", action="store_true", help="disable merge admission")
    g.add_argument("--kappa-op", type=float, default=0.5, help="same-operation merge cost factor")
    g.add_argument("--kappa-data", type=float, default=0.9, help="same-data merge cost factor")
    g.add_argument("--no-noise", action="store_true", help="use exact mean execution times")
    g.add_argument("--sim-seed", type=int, default=0, help="execution-noise seed")


def _sim_from_args(args: argparse.Namespace, audit: bool) -> SimConfig:
    return SimConfig(
        machine_count=args.machines,
        queue_capacity=args.queue_cap,
        policy=Policy.parse(args.policy),
        merge_enabled=not args.no_merge,
        op_merge_factor=args.kappa_op,
        data_merge_factor=args.kappa_data,
        rng_seed=args.sim_seed,
        exec_noise=not args.no_noise,
        audit=audit,
    )


def _cmd_generate(args: argparse.Namespace) -> int:
    tasks = generate(_workload_from_args(args))
    write_trace(tasks, args.out)
    print(f"wrote {len(tasks)} requests to {args.out}")
    return 0


def _cmd_run(args: argparse.Namespace) -> int:
    tasks = read_trace(args.trace)
    sim = Simulation(tasks, _sim_from_args(args, audit=args.audit is not None))
    metrics = sim.run()
    summary = {
        "tasks": metrics.task_count,
        "policy": args.policy,
        "merging": not args.no_merge,
        "deadline_miss_rate": metrics.deadline_miss_rate,
        "makespan": metrics.makespan,
        "merges": {level.value: n for level, n in metrics.merges.items()},
        "merge_rejections": metrics.merge_rejections,
    }
    print(json.dumps(summary, indent=2, sort_keys=True))
    if args.json is not None:
        payload = dict(summary)
        payload["outcomes"] = [
            {
                "request_id": o.request_id,
                "completion": o.completion,
                "deadline": o.deadline,
                "missed": o.missed,
                "unit_id": o.unit_id,
                "merge_level": o.merge_level.value if o.merge_level else None,
            }
            for o in metrics.outcomes
        ]
        Path(args.json).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    if args.audit is not None:
        with open(args.audit, "w", encoding="utf-8") as fh:
            for d in metrics.merge_decisions:
                fh.write(
                    json.dumps(
                        {
                            "record": "merge_decision",
                            "time": d.time,
                            "incoming": d.incoming_id,
                            "candidate_unit": d.candidate_unit_id,
                            "level": d.level.value,
                            "misses_with_merge": d.misses_with_merge,
                            "misses_without_merge": d.misses_without_merge,
                            "approved": d.approved,
                        }
                    )
                    + "\n"
                )
            for entry in metrics.audit or ():
                fh.write(json.dumps({"record": "event", **entry}) + "\n")
    return 0


def _cmd_sweep(args: argparse.Namespace) -> int:
    if args.config is not None:
        config = load_sweep_config(args.config)
    else:
        config = SweepConfig(
            task_counts=tuple(int(c) for c in args.task_counts.split(",")),
            policies=tuple(Policy.parse(p) for p in args.policies.split(",")),
            replications=args.replications,
            base_seed=args.base_seed,
            workload=_workload_from_args(args),
            sim=replace(_sim_from_args(args, audit=False), policy=Policy.FCFS, merge_enabled=True),
        )
    progress = None
    if args.verbose:
        def progress(row):
            print(
                f"  {row.policy.value:<4} merging={'on ' if row.merging else 'off'} "
                f"tasks={row.task_count} rep={row.replication} "
                f"dmr={row.deadline_miss_rate:.4f} makespan={row.makespan:.1f}"
            )
    audit_fh = None
    decision_sink = None
    if args.audit:
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        audit_fh = open(outdir / "audit.jsonl", "w", encoding="utf-8")

        def decision_sink(row, decisions):
            for d in decisions:
                audit_fh.write(
                    json.dumps(
                        {
                            "policy": row.policy.value,
                            "merging": row.merging,
                            "task_count": row.task_count,
                            "replication": row.replication,
                            "time": d.time,
                            "incoming": d.incoming_id,
                            "candidate_unit": d.candidate_unit_id,
                            "level": d.level.value,
                            "misses_with_merge": d.misses_with_merge,
                            "misses_without_merge": d.misses_without_merge,
                            "approved": d.approved,
                        }
                    )
                    + "\n"
                )

    try:
        result = run_experiment(config, progress=progress, decision_sink=decision_sink)
    finally:
        if audit_fh is not None:
            audit_fh.close()
    paths = emit(result, args.out)
    message = f"wrote {paths['csv']} and {paths['summary']}"
    if args.audit:
        message += f" and {Path(args.out) / 'audit.jsonl'}"
    print(message)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mergesim",
        description="Simulate merge-aware admission control on an oversubscribed task backend.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("generate", help="synthesize a workload trace")
    p_gen.add_argument("--out", required=True, help="output trace path (JSON lines)")
    _add_workload_flags(p_gen)
    p_gen.set_defaults(func=_cmd_generate)

    p_run = sub.add_parser("run", help="simulate one trace")
    p_run.add_argument("--trace", required=True, help="input trace path")
    p_run.add_argument("--json", default=None, help="write per-request results to this file")
    p_run.add_argument("--audit", default=None, help="write merge decisions / event log here")
    _add_sim_flags(p_run)
    p_run.set_defaults(func=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="run a replication sweep and emit CSV + summary")
    p_sweep.add_argument("--out", required=True, help="output directory")
    p_sweep.add_argument("--config", default=None, help="sweep config file (mergesim-sweep/1)")
    p_sweep.add_argument("--task-counts", default="200,240,280,320", help="comma-separated counts")
    p_sweep.add_argument("--policies", default="fcfs,edf,mu", help="comma-separated policies")
    p_sweep.add_argument("--replications", type=int, default=30)
    p_sweep.add_argument("--base-seed", type=int, default=1)
    p_sweep.add_argument("--verbose", action="store_true", help="print per-run progress")
    p_sweep.add_argument("--audit", action="store_true",
                         help="also write audit.jsonl with every merge decision")
    _add_workload_flags(p_sweep)
    _add_sim_flags(p_sweep)
    p_sweep.set_defaults(func=_cmd_sweep)

    p_show = sub.add_parser("show-config", help="print the default sweep config as JSON")
    p_show.set_defaults(func=lambda args: print(json.dumps(config_to_json(SweepConfig()), indent=2)) or 0)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RuntimeError as exc:
        print(f"fatal: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
