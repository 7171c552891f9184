"""Discrete-event emulation loop: arrival, admission, dispatch, completion.

Events are processed in (time, sequence) order with a globally increasing
sequence counter, so simultaneous events replay in the order they were
scheduled and every run is reproducible from its seed.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import scheduling
from .admission import SystemSnapshot, assess_merge, snapshot_system
from .metrics import MergeDecision, RequestOutcome, RunMetrics
from .model import (
    InternalFault,
    MachineState,
    MergeCostFactors,
    MergeLevel,
    QueuedTask,
    TaskRequest,
    TaskState,
)
from .scheduling import Policy
from .similarity import SimilarityIndex

MIN_DURATION = 1e-3


@dataclass(frozen=True)
class Event:
    time: float
    sequence: int
    kind: str  # "arrival" | "completion"
    request: TaskRequest | None = None
    machine_id: int | None = None


@dataclass(frozen=True)
class SimConfig:
    machine_count: int = 8
    queue_capacity: int = 1  # pending tasks per machine, beyond the executing one
    policy: Policy = Policy.FCFS
    merge_enabled: bool = True
    op_merge_factor: float = 0.5
    data_merge_factor: float = 0.9
    rng_seed: int = 0
    exec_noise: bool = True
    audit: bool = False

    def __post_init__(self) -> None:
        if self.machine_count < 1:
            raise ValueError(f"machine_count must be >= 1, got {self.machine_count}")
        if self.queue_capacity < 0:
            raise ValueError(f"queue_capacity must be >= 0, got {self.queue_capacity}")

    def factors(self) -> MergeCostFactors:
        return MergeCostFactors(self.op_merge_factor, self.data_merge_factor)


def validate_workload(workload: Sequence[TaskRequest]) -> None:
    """Reject malformed traces before simulation, naming the bad request."""
    seen: set[int] = set()
    prev: TaskRequest | None = None
    for req in workload:
        if req.request_id in seen:
            raise ValueError(f"request {req.request_id}: duplicate request_id")
        seen.add(req.request_id)
        if prev is not None:
            if req.arrival_time < prev.arrival_time:
                raise ValueError(
                    f"request {req.request_id}: arrival {req.arrival_time} out of order"
                )
            if req.arrival_time == prev.arrival_time and req.request_id < prev.request_id:
                raise ValueError(
                    f"request {req.request_id}: simultaneous arrivals must be id-ordered"
                )
        prev = req


def actual_duration(task: QueuedTask, rng: np.random.Generator, noisy: bool) -> float:
    """Wall time one execution takes; exactly the mean when noise is off.

    Noisy draws sample Normal(mean, std) with the left tail cut at
    max(MIN_DURATION, mean - 3 std) so durations stay positive.
    """
    if not noisy:
        return task.effective_mean
    draw = rng.normal(task.effective_mean, task.effective_std)
    floor = max(MIN_DURATION, task.effective_mean - 3.0 * task.effective_std)
    return max(draw, floor)


class Simulation:
    """One seeded emulation of a workload on a homogeneous machine pool."""

    def __init__(self, workload: Sequence[TaskRequest], config: SimConfig):
        validate_workload(workload)
        self.workload = list(workload)
        self.config = config
        self.factors = config.factors()
        self.clock = 0.0
        self.machines = [MachineState(i) for i in range(config.machine_count)]
        self.batch_queue: list[QueuedTask] = []
        self.index = SimilarityIndex() if config.merge_enabled else None
        self.rng = np.random.default_rng(config.rng_seed)
        self.outcomes: list[RequestOutcome] = []
        self.merge_decisions: list[MergeDecision] = []
        self.merges = {level: 0 for level in MergeLevel}
        self.merge_rejections = 0
        self.audit: list[dict] | None = [] if config.audit else None
        self._events: list[tuple[float, int, Event]] = []
        self._sequence = 0
        self._busy_time = [0.0 for _ in self.machines]
        self.unit_durations: dict[int, float] = {}
        for req in self.workload:
            self._push(Event(req.arrival_time, self._sequence, "arrival", request=req))

    # -- event plumbing -------------------------------------------------

    def _push(self, event: Event) -> None:
        heapq.heappush(self._events, (event.time, event.sequence, event))
        self._sequence += 1

    def step(self) -> Event | None:
        """Process one event; None when the simulation has drained."""
        if not self._events:
            return None
        time, _, event = heapq.heappop(self._events)
        if time < self.clock:
            raise InternalFault(f"event at {time} behind clock {self.clock}")
        self.clock = time
        if event.kind == "arrival":
            self._process_arrival(event.request)
        else:
            self._process_completion(event.machine_id)
        self._dispatch()
        self._check_conserving()
        return event

    def run(self) -> RunMetrics:
        while self.step() is not None:
            pass
        return self._finalize()

    def snapshot(self) -> SystemSnapshot:
        return snapshot_system(
            self.clock, self.machines, self.batch_queue, self.config.queue_capacity
        )

    # -- event handlers --------------------------------------------------

    def _process_arrival(self, req: TaskRequest) -> None:
        if self.index is not None:
            hit = self.index.lookup(req)
            if hit is not None:
                candidate, level = hit
                report = assess_merge(
                    candidate, req, level, self.snapshot(), self.config.policy, self.factors
                )
                self.merge_decisions.append(
                    MergeDecision(
                        time=self.clock,
                        incoming_id=req.request_id,
                        candidate_unit_id=candidate.unit_id,
                        level=level,
                        misses_with_merge=report.misses_with_merge,
                        misses_without_merge=report.misses_without_merge,
                        approved=report.approved,
                    )
                )
                if report.approved:
                    candidate.absorb(req, level, self.factors)
                    self.index.on_arrival_merged(candidate, req, level)
                    self.merges[level] += 1
                    self._note("merge", request=req.request_id, unit=candidate.unit_id, level=level.value)
                    return
                self.merge_rejections += 1
                unit = self._enqueue_fresh(req)
                self.index.on_arrival_unmerged(unit, had_match=True)
                return
            unit = self._enqueue_fresh(req)
            self.index.on_arrival_unmerged(unit, had_match=False)
            return
        self._enqueue_fresh(req)

    def _enqueue_fresh(self, req: TaskRequest) -> QueuedTask:
        unit = QueuedTask(req)
        self.batch_queue.append(unit)
        self._note("enqueue", request=req.request_id)
        return unit

    def _process_completion(self, machine_id: int) -> None:
        machine = self.machines[machine_id]
        unit = machine.executing
        if unit is None:
            raise InternalFault(f"completion event on idle machine {machine_id}")
        for req, level in unit.requests():
            self.outcomes.append(
                RequestOutcome(
                    request_id=req.request_id,
                    completion=self.clock,
                    deadline=req.deadline,
                    missed=self.clock > req.deadline,
                    unit_id=unit.unit_id,
                    merge_level=level,
                )
            )
        unit.state = TaskState.DONE
        machine.executing = None
        self._note("complete", unit=unit.unit_id, machine=machine_id)
        if self.index is not None:
            self.index.on_complete(unit)
        if machine.local_queue:
            self._start_execution(machine, machine.local_queue.pop(0))

    def _start_execution(self, machine: MachineState, unit: QueuedTask) -> None:
        duration = actual_duration(unit, self.rng, self.config.exec_noise)
        unit.state = TaskState.EXECUTING
        unit.machine_id = machine.machine_id
        machine.executing = unit
        machine.exec_end = self.clock + duration
        self._busy_time[machine.machine_id] += duration
        self.unit_durations[unit.unit_id] = duration
        self._push(
            Event(machine.exec_end, self._sequence, "completion", machine_id=machine.machine_id)
        )
        self._note("start", unit=unit.unit_id, machine=machine.machine_id, duration=duration)

    def _dispatch(self) -> None:
        scheduling.dispatch(
            self.batch_queue,
            self.machines,
            self.clock,
            self.config.policy,
            self.config.queue_capacity,
            self._start_execution,
        )

    def _check_conserving(self) -> None:
        # No machine may sit idle while admitted work waits in the batch queue.
        if self.batch_queue and any(m.executing is None for m in self.machines):
            raise InternalFault("work conservation violated: idle machine with batch backlog")

    def _note(self, kind: str, **fields) -> None:
        if self.audit is not None:
            self.audit.append({"event": kind, "time": self.clock, **fields})

    # -- results ----------------------------------------------------------

    def _finalize(self) -> RunMetrics:
        if len(self.outcomes) != len(self.workload):
            raise InternalFault(
                f"{len(self.outcomes)} outcomes for {len(self.workload)} requests"
            )
        if self.batch_queue or any(m.executing or m.local_queue for m in self.machines):
            raise InternalFault("simulation drained with work left behind")
        total = len(self.outcomes)
        missed = sum(o.missed for o in self.outcomes)
        if total:
            makespan = max(o.completion for o in self.outcomes) - min(
                r.arrival_time for r in self.workload
            )
        else:
            makespan = 0.0
        self.outcomes.sort(key=lambda o: o.request_id)
        metrics = RunMetrics(
            task_count=total,
            deadline_miss_rate=missed / total if total else 0.0,
            makespan=makespan,
            merges=dict(self.merges),
            merge_rejections=self.merge_rejections,
            outcomes=self.outcomes,
            merge_decisions=self.merge_decisions,
            audit=self.audit,
        )
        metrics.validate()
        if self.unit_durations:
            assert makespan >= max(self.unit_durations.values()) - 1e-9
        return metrics


def run(workload: Sequence[TaskRequest], config: SimConfig) -> RunMetrics:
    """Simulate ``workload`` under ``config`` until every request completes."""
    return Simulation(workload, config).run()
