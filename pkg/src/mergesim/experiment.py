"""Experiment runner: seeded replication sweeps over policies, merge
settings, and task counts, with mean / 95% confidence-interval reporting.

Merging on and off (and every policy) share the identical generated trace
within a replication, so comparisons are paired. Aggregation runs in a
fixed order, which makes the emitted files byte-reproducible.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

from scipy import stats

from . import engine
from .engine import SimConfig
from .scheduling import Policy
from .workload import WorkloadSpec, generate


class SweepError(RuntimeError):
    """An engine fault, annotated with the cell and seed that hit it."""


@dataclass(frozen=True)
class SweepConfig:
    task_counts: tuple[int, ...] = (200, 240, 280, 320)
    policies: tuple[Policy, ...] = (Policy.FCFS, Policy.EDF, Policy.MU)
    merge_settings: tuple[bool, ...] = (False, True)
    replications: int = 30
    base_seed: int = 1
    workload: WorkloadSpec = field(default_factory=WorkloadSpec)
    sim: SimConfig = field(default_factory=SimConfig)

    def __post_init__(self) -> None:
        if self.replications < 1:
            raise ValueError(f"replications must be >= 1, got {self.replications}")
        if not self.task_counts:
            raise ValueError("task_counts must not be empty")


@dataclass(frozen=True)
class RunRow:
    """One simulation run inside a sweep."""

    task_count: int
    replication: int
    policy: Policy
    merging: bool
    deadline_miss_rate: float
    makespan: float
    merge_total: int
    merge_rejections: int


@dataclass(frozen=True)
class CellResult:
    """Aggregate over replications for one (policy, merging, task count)."""

    policy: Policy
    merging: bool
    task_count: int
    replications: int
    dmr_mean: float
    dmr_ci95: float
    makespan_mean: float
    makespan_ci95: float
    dmr_values: tuple[float, ...]
    makespan_values: tuple[float, ...]


@dataclass
class SweepResult:
    config: SweepConfig
    cells: list[CellResult]
    rows: list[RunRow]

    def cell(self, policy: Policy, merging: bool, task_count: int) -> CellResult:
        for c in self.cells:
            if c.policy is policy and c.merging == merging and c.task_count == task_count:
                return c
        raise KeyError(f"no cell ({policy.value}, merging={merging}, n={task_count})")


def mean_ci95(values) -> tuple[float, float]:
    """Sample mean and 95% CI half-width (t-based); half-width 0 when n < 2."""
    n = len(values)
    mean = sum(values) / n
    if n < 2:
        return mean, 0.0
    var = sum((v - mean) ** 2 for v in values) / (n - 1)
    half = float(stats.t.ppf(0.975, n - 1)) * math.sqrt(var / n)
    return mean, half


def run_experiment(config: SweepConfig, progress=None, decision_sink=None) -> SweepResult:
    """Run the full sweep; each replication reuses one trace across cells.

    ``decision_sink(row, decisions)``, when given, receives every run's merge
    decisions for audit logging.
    """
    rows: list[RunRow] = []
    for count in config.task_counts:
        for rep in range(config.replications):
            seed = config.base_seed + rep
            trace = generate(replace(config.workload, task_count=count, rng_seed=seed))
            for policy in config.policies:
                for merging in config.merge_settings:
                    sim_cfg = replace(
                        config.sim, policy=policy, merge_enabled=merging, rng_seed=seed
                    )
                    try:
                        metrics = engine.run(trace, sim_cfg)
                    except Exception as exc:
                        raise SweepError(
                            f"cell (policy={policy.value}, merging={merging}, "
                            f"tasks={count}), seed {seed}: {exc}"
                        ) from exc
                    rows.append(
                        RunRow(
                            task_count=count,
                            replication=rep,
                            policy=policy,
                            merging=merging,
                            deadline_miss_rate=metrics.deadline_miss_rate,
                            makespan=metrics.makespan,
                            merge_total=metrics.merge_total,
                            merge_rejections=metrics.merge_rejections,
                        )
                    )
                    if progress is not None:
                        progress(rows[-1])
                    if decision_sink is not None:
                        decision_sink(rows[-1], metrics.merge_decisions)
    cells = []
    for policy in config.policies:
        for merging in config.merge_settings:
            for count in config.task_counts:
                sel = [
                    r
                    for r in rows
                    if r.policy is policy and r.merging == merging and r.task_count == count
                ]
                dmr = tuple(r.deadline_miss_rate for r in sel)
                mk = tuple(r.makespan for r in sel)
                dmr_mean, dmr_ci = mean_ci95(dmr)
                mk_mean, mk_ci = mean_ci95(mk)
                cells.append(
                    CellResult(
                        policy=policy,
                        merging=merging,
                        task_count=count,
                        replications=len(sel),
                        dmr_mean=dmr_mean,
                        dmr_ci95=dmr_ci,
                        makespan_mean=mk_mean,
                        makespan_ci95=mk_ci,
                        dmr_values=dmr,
                        makespan_values=mk,
                    )
                )
    return SweepResult(config=config, cells=cells, rows=rows)


# -- serialization --------------------------------------------------------

SWEEP_SCHEMA = "mergesim-sweep/1"
SUMMARY_SCHEMA = "mergesim-summary/1"


def _workload_to_json(spec: WorkloadSpec) -> dict:
    return {
        "task_count": spec.task_count,
        "arrival_window": spec.arrival_window,
        "video_count": spec.video_count,
        "gops_per_video": list(spec.gops_per_video),
        "video_duration_range": list(spec.video_duration_range),
        "exec_mean_range": {op.value: list(spec.exec_mean_range[op]) for op in spec.exec_mean_range},
        "exec_std_range": {op.value: list(spec.exec_std_range[op]) for op in spec.exec_std_range},
        "duplicate_prob": spec.duplicate_prob,
        "same_params_prob": spec.same_params_prob,
        "op_change_prob": spec.op_change_prob,
        "startup_delay": spec.startup_delay,
        "rng_seed": spec.rng_seed,
    }


def _sim_to_json(cfg: SimConfig) -> dict:
    return {
        "machine_count": cfg.machine_count,
        "queue_capacity": cfg.queue_capacity,
        "op_merge_factor": cfg.op_merge_factor,
        "data_merge_factor": cfg.data_merge_factor,
        "exec_noise": cfg.exec_noise,
    }


def config_to_json(config: SweepConfig) -> dict:
    return {
        "schema": SWEEP_SCHEMA,
        "task_counts": list(config.task_counts),
        "policies": [p.value for p in config.policies],
        "merge_settings": list(config.merge_settings),
        "replications": config.replications,
        "base_seed": config.base_seed,
        "workload": _workload_to_json(config.workload),
        "sim": _sim_to_json(config.sim),
    }


def _workload_from_json(data: dict) -> WorkloadSpec:
    from .model import OperationKind

    kwargs = dict(data)
    for key in ("gops_per_video", "video_duration_range"):
        if key in kwargs:
            kwargs[key] = tuple(kwargs[key])
    for key in ("exec_mean_range", "exec_std_range"):
        if key in kwargs:
            kwargs[key] = {
                OperationKind.parse(op): tuple(rng) for op, rng in kwargs[key].items()
            }
    return WorkloadSpec(**kwargs)


def load_sweep_config(path) -> SweepConfig:
    """Read a sweep config file (schema mergesim-sweep/1); keys are optional."""
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    schema = data.pop("schema", SWEEP_SCHEMA)
    if schema != SWEEP_SCHEMA:
        raise ValueError(f"{path}: unsupported schema {schema!r}, expected {SWEEP_SCHEMA!r}")
    kwargs: dict = {}
    if "task_counts" in data:
        kwargs["task_counts"] = tuple(int(c) for c in data.pop("task_counts"))
    if "policies" in data:
        kwargs["policies"] = tuple(Policy.parse(p) for p in data.pop("policies"))
    if "merge_settings" in data:
        kwargs["merge_settings"] = tuple(bool(m) for m in data.pop("merge_settings"))
    for key in ("replications", "base_seed"):
        if key in data:
            kwargs[key] = int(data.pop(key))
    if "workload" in data:
        kwargs["workload"] = _workload_from_json(data.pop("workload"))
    if "sim" in data:
        kwargs["sim"] = SimConfig(**data.pop("sim"))
    if data:
        raise ValueError(f"{path}: unknown config keys: {', '.join(sorted(data))}")
    return SweepConfig(**kwargs)


def emit(result: SweepResult, outdir) -> dict[str, Path]:
    """Write results.csv (cells x metrics) and summary.json; returns paths."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    csv_path = outdir / "results.csv"
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["metric", "policy", "merging", "task_count", "replications", "mean", "ci95"])
        for cell in result.cells:
            base = [cell.policy.value, "on" if cell.merging else "off", cell.task_count, cell.replications]
            writer.writerow(["dmr", *base, repr(cell.dmr_mean), repr(cell.dmr_ci95)])
            writer.writerow(["makespan", *base, repr(cell.makespan_mean), repr(cell.makespan_ci95)])
    summary_path = outdir / "summary.json"
    summary = {
        "schema": SUMMARY_SCHEMA,
        "config": config_to_json(result.config),
        "cells": [
            {
                "policy": c.policy.value,
                "merging": c.merging,
                "task_count": c.task_count,
                "replications": c.replications,
                "dmr_mean": c.dmr_mean,
                "dmr_ci95": c.dmr_ci95,
                "makespan_mean": c.makespan_mean,
                "makespan_ci95": c.makespan_ci95,
                "dmr_values": list(c.dmr_values),
                "makespan_values": list(c.makespan_values),
            }
            for c in result.cells
        ],
    }
    with open(summary_path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return {"csv": csv_path, "summary": summary_path}
