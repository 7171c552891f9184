"""Synthetic oversubscribed workloads with controllable similarity structure,
plus the line-delimited trace format.

The default execution-time ranges are synthetic placeholders, not
measurements; calibrate them per deployment through ``WorkloadSpec``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .model import OperationKind, TaskRequest

OPS = tuple(OperationKind)

_PARAM_CHOICES: dict[OperationKind, tuple[tuple[str, ...], ...]] = {
    OperationKind.REDUCE_RESOLUTION: (
        ("width=1920", "height=1080"),
        ("width=1280", "height=720"),
        ("width=854", "height=480"),
        ("width=640", "height=360"),
    ),
    OperationKind.CHANGE_CODEC: (
        ("codec=h264",),
        ("codec=h265",),
        ("codec=vp9",),
        ("codec=av1",),
    ),
    OperationKind.ADJUST_BIT_RATE: (
        ("bitrate_kbps=400",),
        ("bitrate_kbps=800",),
        ("bitrate_kbps=1500",),
        ("bitrate_kbps=3000",),
        ("bitrate_kbps=6000",),
    ),
    OperationKind.CHANGE_FRAME_RATE: (
        ("fps=15",),
        ("fps=24",),
        ("fps=30",),
        ("fps=60",),
    ),
}

DEFAULT_EXEC_MEAN_RANGE: dict[OperationKind, tuple[float, float]] = {
    OperationKind.REDUCE_RESOLUTION: (4.0, 9.0),
    OperationKind.CHANGE_CODEC: (6.0, 12.0),
    OperationKind.ADJUST_BIT_RATE: (2.5, 6.0),
    OperationKind.CHANGE_FRAME_RATE: (3.0, 7.0),
}

DEFAULT_EXEC_STD_RANGE: dict[OperationKind, tuple[float, float]] = {
    op: (0.1, 0.6) for op in OPS
}

TRACE_FIELDS = (
    "request_id",
    "video_id",
    "gop_index",
    "operation",
    "params",
    "arrival_time",
    "deadline",
    "exec_mean",
    "exec_std",
)


@dataclass(frozen=True)
class WorkloadSpec:
    """Knobs for one synthetic trace.

    ``duplicate_prob`` is the chance an arrival targets the same segment as
    some earlier request; given that, ``op_change_prob`` re-rolls the
    operation (same-data kin) and otherwise ``same_params_prob`` keeps the
    source parameters (identical kin) or re-rolls them (same-operation kin).
    """

    task_count: int = 2000
    arrival_window: float = 600.0
    video_count: int = 120
    gops_per_video: tuple[int, int] = (10, 110)
    video_duration_range: tuple[float, float] = (10.0, 600.0)
    exec_mean_range: Mapping[OperationKind, tuple[float, float]] = field(
        default_factory=lambda: dict(DEFAULT_EXEC_MEAN_RANGE)
    )
    exec_std_range: Mapping[OperationKind, tuple[float, float]] = field(
        default_factory=lambda: dict(DEFAULT_EXEC_STD_RANGE)
    )
    duplicate_prob: float = 0.3
    same_params_prob: float = 0.5
    op_change_prob: float = 0.3
    startup_delay: float = 30.0
    rng_seed: int = 0

    def validate(self) -> None:
        if self.task_count < 0:
            raise ValueError(f"task_count must be >= 0, got {self.task_count}")
        if self.arrival_window <= 0:
            raise ValueError(f"arrival_window must be > 0, got {self.arrival_window}")
        if self.video_count < 1:
            raise ValueError(f"video_count must be >= 1, got {self.video_count}")
        lo, hi = self.gops_per_video
        if not 1 <= lo <= hi:
            raise ValueError(f"gops_per_video range invalid: {self.gops_per_video}")
        lo, hi = self.video_duration_range
        if not 0 < lo <= hi:
            raise ValueError(f"video_duration_range invalid: {self.video_duration_range}")
        for name in ("duplicate_prob", "same_params_prob", "op_change_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {p}")
        if self.startup_delay < 0:
            raise ValueError(f"startup_delay must be >= 0, got {self.startup_delay}")
        for op in OPS:
            for label, ranges in (("exec_mean_range", self.exec_mean_range),
                                  ("exec_std_range", self.exec_std_range)):
                lo, hi = ranges[op]
                if not 0 <= lo <= hi:
                    raise ValueError(f"{label}[{op.value}] invalid: ({lo}, {hi})")
            if self.exec_mean_range[op][0] <= 0:
                raise ValueError(f"exec_mean_range[{op.value}] must be positive")


def generate(spec: WorkloadSpec) -> list[TaskRequest]:
    """Emit ``spec.task_count`` requests, arrival-sorted, ids in arrival order.

    Requests sharing (video, gop, operation, params) share the same
    execution-time estimates, so identical work is estimated identically.
    """
    spec.validate()
    rng = np.random.default_rng(spec.rng_seed)
    gop_counts = rng.integers(spec.gops_per_video[0], spec.gops_per_video[1] + 1, spec.video_count)
    durations = rng.uniform(*spec.video_duration_range, spec.video_count)
    arrivals = np.sort(rng.uniform(0.0, spec.arrival_window, spec.task_count))

    estimates: dict[tuple, tuple[float, float]] = {}
    chosen: list[tuple[int, int, OperationKind, tuple[str, ...]]] = []
    tasks: list[TaskRequest] = []

    def pick_params(op: OperationKind) -> tuple[str, ...]:
        options = _PARAM_CHOICES[op]
        return options[rng.integers(len(options))]

    for i in range(spec.task_count):
        duplicate = i > 0 and rng.random() < spec.duplicate_prob
        if duplicate:
            video, gop, op, params = chosen[rng.integers(i)]
            if rng.random() < spec.op_change_prob:
                op = OPS[rng.integers(len(OPS))]
                params = pick_params(op)
            elif rng.random() >= spec.same_params_prob:
                params = pick_params(op)
        else:
            video = int(rng.integers(spec.video_count))
            gop = int(rng.integers(gop_counts[video]))
            op = OPS[rng.integers(len(OPS))]
            params = pick_params(op)
        chosen.append((video, gop, op, params))

        signature = (video, gop, op, tuple(sorted(params)))
        if signature not in estimates:
            mean = rng.uniform(*spec.exec_mean_range[op])
            std = rng.uniform(*spec.exec_std_range[op])
            estimates[signature] = (float(mean), float(std))
        mean, std = estimates[signature]

        arrival = float(arrivals[i])
        gop_duration = durations[video] / gop_counts[video]
        deadline = arrival + spec.startup_delay + gop * float(gop_duration)
        tasks.append(
            TaskRequest(
                request_id=i,
                video_id=f"v{video:04d}",
                gop_index=gop,
                operation=op,
                params=params,
                arrival_time=arrival,
                deadline=deadline,
                exec_mean=mean,
                exec_std=std,
            )
        )
    return tasks


def write_trace(tasks: Sequence[TaskRequest], path) -> None:
    """Write one JSON record per line; floats keep full precision."""
    with open(path, "w", encoding="utf-8") as fh:
        for t in tasks:
            record = {
                "request_id": t.request_id,
                "video_id": t.video_id,
                "gop_index": t.gop_index,
                "operation": t.operation.value,
                "params": list(t.params),
                "arrival_time": t.arrival_time,
                "deadline": t.deadline,
                "exec_mean": t.exec_mean,
                "exec_std": t.exec_std,
            }
            fh.write(json.dumps(record) + "\n")


def read_trace(path) -> list[TaskRequest]:
    """Parse a trace file; errors name the offending line."""
    tasks: list[TaskRequest] = []
    seen: set[int] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: not valid JSON: {exc}") from None
            missing = [f for f in TRACE_FIELDS if f not in record]
            if missing:
                raise ValueError(f"{path}:{lineno}: missing fields: {', '.join(missing)}")
            try:
                task = TaskRequest(
                    request_id=int(record["request_id"]),
                    video_id=str(record["video_id"]),
                    gop_index=int(record["gop_index"]),
                    operation=OperationKind.parse(record["operation"]),
                    params=tuple(record["params"]),
                    arrival_time=float(record["arrival_time"]),
                    deadline=float(record["deadline"]),
                    exec_mean=float(record["exec_mean"]),
                    exec_std=float(record["exec_std"]),
                )
            except (TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
            if task.request_id in seen:
                raise ValueError(f"{path}:{lineno}: duplicate request_id {task.request_id}")
            seen.add(task.request_id)
            tasks.append(task)
    return tasks
