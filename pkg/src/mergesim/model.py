"""Domain types shared by every part of the simulator: requests, merged
work units, worker machines, and the merge cost model."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum


class InternalFault(RuntimeError):
    """Raised when simulator state violates an invariant; aborts the run."""


class OperationKind(Enum):
    """The four supported segment-processing operations."""

    REDUCE_RESOLUTION = "reduce_resolution"
    CHANGE_CODEC = "change_codec"
    ADJUST_BIT_RATE = "adjust_bit_rate"
    CHANGE_FRAME_RATE = "change_frame_rate"

    @classmethod
    def parse(cls, token: str) -> OperationKind:
        try:
            return cls(token)
        except ValueError:
            valid = ", ".join(kind.value for kind in cls)
            raise ValueError(f"unknown operation {token!r}; expected one of: {valid}") from None


class MergeLevel(Enum):
    """How much work two requests share.

    TASK means identical requests (one execution serves all of them),
    OPERATION means same segment and operation with different parameters,
    DATA means same segment only (just the input loading is shared).
    Detection probes in this order, most reuse first.
    """

    TASK = "task"
    OPERATION = "operation"
    DATA = "data"


class TaskState(Enum):
    IN_BATCH = "in_batch"
    IN_LOCAL = "in_local"
    EXECUTING = "executing"
    DONE = "done"


@dataclass(frozen=True)
class TaskRequest:
    """One segment-processing request as submitted by a client.

    ``params`` is an ordered tuple of ``key=value`` strings configuring the
    operation. ``exec_mean`` / ``exec_std`` are the benchmark-derived
    execution-time estimates for this request on a worker.
    """

    request_id: int
    video_id: str
    gop_index: int
    operation: OperationKind
    params: tuple[str, ...]
    arrival_time: float
    deadline: float
    exec_mean: float
    exec_std: float

    def __post_init__(self) -> None:
        rid = self.request_id
        if self.gop_index < 0:
            raise ValueError(f"request {rid}: gop_index must be >= 0, got {self.gop_index}")
        if self.deadline < self.arrival_time:
            raise ValueError(
                f"request {rid}: deadline {self.deadline} precedes arrival {self.arrival_time}"
            )
        if not self.exec_mean > 0:
            raise ValueError(f"request {rid}: exec_mean must be > 0, got {self.exec_mean}")
        if self.exec_std < 0:
            raise ValueError(f"request {rid}: exec_std must be >= 0, got {self.exec_std}")

    def signature(self) -> tuple:
        """Identity-relevant fields; equal signatures mean identical work."""
        return (self.video_id, self.gop_index, self.operation, tuple(sorted(self.params)))


@dataclass(frozen=True)
class MergeCostFactors:
    """Per-level charge for absorbing one more request into a queued unit.

    An identical request adds no work. A same-operation request adds a
    fraction of its own estimate, a same-data request adds most of it
    (only input loading is saved).
    """

    operation_factor: float = 0.5
    data_factor: float = 0.9

    def __post_init__(self) -> None:
        if not 0.0 < self.operation_factor < 1.0:
            raise ValueError(f"operation_factor must be in (0, 1), got {self.operation_factor}")
        if not 0.0 < self.data_factor <= 1.0:
            raise ValueError(f"data_factor must be in (0, 1], got {self.data_factor}")

    def for_level(self, level: MergeLevel) -> float:
        if level is MergeLevel.TASK:
            return 0.0
        if level is MergeLevel.OPERATION:
            return self.operation_factor
        return self.data_factor


def merged_exec_estimate(
    base: tuple[float, float],
    addition: tuple[float, float],
    level: MergeLevel,
    factors: MergeCostFactors,
) -> tuple[float, float]:
    """Execution-time estimate for a unit after absorbing one more request.

    The absorbed request contributes its mean scaled by the level factor;
    noise terms combine root-sum-square, assuming independent noise.
    """
    k = factors.for_level(level)
    mean = base[0] + k * addition[0]
    std = math.sqrt(base[1] ** 2 + (k * addition[1]) ** 2)
    return mean, std


class QueuedTask:
    """A schedulable unit: a root request plus any requests merged into it."""

    __slots__ = (
        "root",
        "members",
        "effective_mean",
        "effective_std",
        "effective_deadline",
        "state",
        "machine_id",
    )

    def __init__(self, root: TaskRequest):
        self.root = root
        self.members: list[tuple[TaskRequest, MergeLevel]] = []
        self.effective_mean = root.exec_mean
        self.effective_std = root.exec_std
        self.effective_deadline = root.deadline
        self.state = TaskState.IN_BATCH
        self.machine_id: int | None = None

    @property
    def unit_id(self) -> int:
        return self.root.request_id

    def requests(self):
        """Yield (request, merge level) for the root (level None) and members."""
        yield self.root, None
        yield from self.members

    def absorb(self, incoming: TaskRequest, level: MergeLevel, factors: MergeCostFactors) -> None:
        """Merge ``incoming`` into this unit, updating the effective estimates."""
        if self.state in (TaskState.EXECUTING, TaskState.DONE):
            raise InternalFault(
                f"unit {self.unit_id} absorbed request {incoming.request_id} while {self.state.value}"
            )
        self.effective_mean, self.effective_std = merged_exec_estimate(
            (self.effective_mean, self.effective_std),
            (incoming.exec_mean, incoming.exec_std),
            level,
            factors,
        )
        self.members.append((incoming, level))
        self.effective_deadline = min(self.effective_deadline, incoming.deadline)
        assert self.effective_deadline == min(r.deadline for r, _ in self.requests())
        assert self.effective_mean <= sum(r.exec_mean for r, _ in self.requests()) + 1e-9

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return (
            f"QueuedTask(unit={self.unit_id}, members={len(self.members)}, "
            f"mean={self.effective_mean:.3f}, deadline={self.effective_deadline:.3f}, "
            f"state={self.state.value})"
        )


class MachineState:
    """One emulated worker VM: the executing unit plus its short local queue."""

    __slots__ = ("machine_id", "executing", "exec_end", "local_queue")

    def __init__(self, machine_id: int):
        self.machine_id = machine_id
        self.executing: QueuedTask | None = None
        self.exec_end = 0.0
        self.local_queue: list[QueuedTask] = []

    def remaining(self, now: float) -> float:
        """Actual time left on the executing unit; 0 when idle."""
        if self.executing is None:
            return 0.0
        left = self.exec_end - now
        if left < 0:
            raise InternalFault(
                f"machine {self.machine_id}: completion at {self.exec_end} already passed {now}"
            )
        return left
