"""Merge admission: completion-time estimation and the dual what-if replay.

A proposed merge is accepted only if replaying the frozen system with the
merge applied produces no more deadline misses than replaying it with the
request queued as fresh work. Misses are counted per original request, so
a late merged unit charges one miss per absorbed request.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ._drain import drain_queues
from .model import (
    InternalFault,
    MachineState,
    MergeCostFactors,
    MergeLevel,
    QueuedTask,
    TaskRequest,
    TaskState,
    merged_exec_estimate,
)
from .scheduling import Policy, order_key_values


@dataclass(frozen=True)
class UnitSnap:
    """Frozen view of one queued unit; ``members`` pairs (request id, own deadline)."""

    unit_id: int
    arrival: float
    mean: float
    std: float
    deadline: float
    members: tuple[tuple[int, float], ...]

    @property
    def charged_duration(self) -> float:
        return self.mean + 2.0 * self.std


@dataclass(frozen=True)
class MachineSnap:
    machine_id: int
    executing: UnitSnap | None
    remaining: float
    local: tuple[UnitSnap, ...]


@dataclass(frozen=True)
class SystemSnapshot:
    now: float
    queue_capacity: int
    machines: tuple[MachineSnap, ...]
    batch: tuple[UnitSnap, ...]


@dataclass(frozen=True)
class CompletionEstimate:
    """Estimated completion of one original request on a machine."""

    request_id: int
    machine_id: int
    completion: float
    deadline: float

    @property
    def misses(self) -> bool:
        return self.completion > self.deadline


@dataclass(frozen=True)
class ImpactReport:
    """Outcome of the with/without-merge comparison."""

    misses_with_merge: int
    misses_without_merge: int
    per_task: tuple[tuple[CompletionEstimate, CompletionEstimate], ...]

    @property
    def approved(self) -> bool:
        return self.misses_with_merge <= self.misses_without_merge


def snap_unit(unit: QueuedTask) -> UnitSnap:
    return UnitSnap(
        unit_id=unit.unit_id,
        arrival=unit.root.arrival_time,
        mean=unit.effective_mean,
        std=unit.effective_std,
        deadline=unit.effective_deadline,
        members=tuple((req.request_id, req.deadline) for req, _ in unit.requests()),
    )


def snap_fresh(req: TaskRequest) -> UnitSnap:
    return UnitSnap(
        unit_id=req.request_id,
        arrival=req.arrival_time,
        mean=req.exec_mean,
        std=req.exec_std,
        deadline=req.deadline,
        members=((req.request_id, req.deadline),),
    )


def snapshot_system(now, machines, batch_queue, queue_capacity) -> SystemSnapshot:
    """Deep, immutable copy of the scheduling state at ``now``."""
    snaps = []
    for m in machines:
        executing = snap_unit(m.executing) if m.executing is not None else None
        snaps.append(
            MachineSnap(
                machine_id=m.machine_id,
                executing=executing,
                remaining=m.remaining(now),
                local=tuple(snap_unit(u) for u in m.local_queue),
            )
        )
    return SystemSnapshot(
        now=now,
        queue_capacity=queue_capacity,
        machines=tuple(snaps),
        batch=tuple(snap_unit(u) for u in batch_queue),
    )


def estimate_completion(
    task: QueuedTask, machine: MachineState, queued_ahead, now: float
) -> float:
    """Estimated completion of ``task`` on ``machine`` behind ``queued_ahead``.

    Current time, plus the machine's remaining work, plus a pessimistic
    (mean + 2 std) charge for each unit ahead and for the task itself.
    """
    t = now + machine.remaining(now)
    for unit in queued_ahead:
        t += unit.effective_mean + 2.0 * unit.effective_std
    return t + task.effective_mean + 2.0 * task.effective_std


def snapshot_arrays(snapshot: SystemSnapshot, policy: Policy):
    """Flatten a snapshot into the array form the drain kernel consumes.

    Returns (units, exec_unit, exec_end, local_units, local_ptr, order, dur).
    """
    units: list[UnitSnap] = []
    n_machines = len(snapshot.machines)
    exec_unit = np.full(n_machines, -1, np.int64)
    exec_end = np.full(n_machines, snapshot.now, np.float64)
    local_ids: list[int] = []
    local_ptr = np.zeros(n_machines + 1, np.int64)
    for i, m in enumerate(snapshot.machines):
        if m.machine_id != i:
            raise InternalFault("snapshot machines out of order")
        if m.executing is not None:
            exec_unit[i] = len(units)
            exec_end[i] = snapshot.now + m.remaining
            units.append(m.executing)
        elif m.local:
            raise InternalFault(f"snapshot machine {i} idle with a non-empty local queue")
        for u in m.local:
            local_ids.append(len(units))
            units.append(u)
        local_ptr[i + 1] = len(local_ids)
    batch_ids = list(range(len(units), len(units) + len(snapshot.batch)))
    units.extend(snapshot.batch)
    if len({u.unit_id for u in units}) != len(units):
        raise InternalFault("snapshot contains duplicate units")

    def key(idx: int):
        u = units[idx]
        return order_key_values(policy, snapshot.now, u.arrival, u.unit_id, u.deadline, u.mean, u.std)

    order = np.array(sorted(batch_ids, key=key), np.int64)
    dur = np.array([u.charged_duration for u in units], np.float64)
    local_units = np.array(local_ids, np.int64)
    return units, exec_unit, exec_end, local_units, local_ptr, order, dur


def virtual_replay(snapshot: SystemSnapshot, policy: Policy) -> list[CompletionEstimate]:
    """Drain a frozen copy of the system; one estimate per original request.

    Pure: the snapshot is read-only and equal snapshots replay identically.
    Charged durations are the pessimistic mean + 2 std, consistent with
    ``estimate_completion``.
    """
    units, exec_unit, exec_end, local_units, local_ptr, order, dur = snapshot_arrays(
        snapshot, policy
    )
    comp = np.empty(len(units), np.float64)
    mach = np.full(len(units), -1, np.int64)
    if units:
        drain_queues(
            float(snapshot.now),
            int(snapshot.queue_capacity),
            exec_unit,
            exec_end,
            local_units,
            local_ptr,
            order,
            dur,
            comp,
            mach,
        )
    estimates = [
        CompletionEstimate(rid, int(mach[i]), float(comp[i]), deadline)
        for i, unit in enumerate(units)
        for rid, deadline in unit.members
    ]
    estimates.sort(key=lambda e: e.request_id)
    return estimates


def _with_merge(snapshot: SystemSnapshot, candidate_id: int, merged: UnitSnap) -> SystemSnapshot:
    """Copy of ``snapshot`` with the candidate unit swapped for ``merged``."""
    found = 0
    batch = []
    for u in snapshot.batch:
        if u.unit_id == candidate_id:
            found += 1
            batch.append(merged)
        else:
            batch.append(u)
    machines = []
    for m in snapshot.machines:
        if m.executing is not None and m.executing.unit_id == candidate_id:
            raise InternalFault(f"merge candidate {candidate_id} is executing in the snapshot")
        local = []
        for u in m.local:
            if u.unit_id == candidate_id:
                found += 1
                local.append(merged)
            else:
                local.append(u)
        machines.append(replace(m, local=tuple(local)))
    if found != 1:
        raise InternalFault(f"merge candidate {candidate_id} appears {found} times in the snapshot")
    return replace(snapshot, machines=tuple(machines), batch=tuple(batch))


def assess_merge(
    candidate: QueuedTask,
    incoming: TaskRequest,
    level: MergeLevel,
    snapshot: SystemSnapshot,
    policy: Policy,
    factors: MergeCostFactors,
) -> ImpactReport:
    """Replay the snapshot with and without the proposed merge.

    Scenario A merges ``incoming`` into the candidate (its estimates and
    deadline updated); scenario B queues it as a fresh unit. The merge is
    approved when A misses no more original-request deadlines than B. The
    live system is never touched.
    """
    if candidate.state not in (TaskState.IN_BATCH, TaskState.IN_LOCAL):
        raise InternalFault(
            f"merge candidate {candidate.unit_id} is {candidate.state.value}, not queued"
        )
    base = snap_unit(candidate)
    mean, std = merged_exec_estimate(
        (base.mean, base.std), (incoming.exec_mean, incoming.exec_std), level, factors
    )
    merged = UnitSnap(
        unit_id=base.unit_id,
        arrival=base.arrival,
        mean=mean,
        std=std,
        deadline=min(base.deadline, incoming.deadline),
        members=base.members + ((incoming.request_id, incoming.deadline),),
    )
    with_merge = virtual_replay(_with_merge(snapshot, candidate.unit_id, merged), policy)
    without = virtual_replay(
        replace(snapshot, batch=snapshot.batch + (snap_fresh(incoming),)), policy
    )
    if [e.request_id for e in with_merge] != [e.request_id for e in without]:
        raise InternalFault("with/without replays disagree on the request set")
    pairs = tuple(zip(with_merge, without))
    return ImpactReport(
        misses_with_merge=sum(e.misses for e in with_merge),
        misses_without_merge=sum(e.misses for e in without),
        per_task=pairs,
    )
