"""Batch-queue ordering policies and the dispatcher that feeds machines."""

from __future__ import annotations

from enum import Enum
from typing import Callable, Sequence

from .model import MachineState, QueuedTask, TaskState


class Policy(Enum):
    """Batch-queue ordering: arrival order, earliest deadline, or least slack."""

    FCFS = "fcfs"
    EDF = "edf"
    MU = "mu"

    @classmethod
    def parse(cls, token: str) -> Policy:
        try:
            return cls(token.lower())
        except ValueError:
            valid = ", ".join(p.value for p in cls)
            raise ValueError(f"unknown policy {token!r}; expected one of: {valid}") from None


def order_key_values(
    policy: Policy,
    now: float,
    arrival: float,
    request_id: int,
    deadline: float,
    mean: float,
    std: float,
) -> tuple[float, int]:
    """Sort key under ``policy``; smaller dispatches first, ties by request id.

    MU ranks by slack: deadline minus now minus the pessimistic duration
    (mean + 2 std). The relative order is independent of ``now``.
    """
    if policy is Policy.FCFS:
        return (arrival, request_id)
    if policy is Policy.EDF:
        return (deadline, request_id)
    slack = deadline - now - (mean + 2.0 * std)
    return (slack, request_id)


def order_key(unit: QueuedTask, now: float, policy: Policy) -> tuple[float, int]:
    return order_key_values(
        policy,
        now,
        unit.root.arrival_time,
        unit.root.request_id,
        unit.effective_deadline,
        unit.effective_mean,
        unit.effective_std,
    )


def machine_availability(machine: MachineState, now: float) -> float:
    """Absolute time at which the machine would reach one more queued unit."""
    t = machine.exec_end if machine.executing is not None else now
    for unit in machine.local_queue:
        t += unit.effective_mean + 2.0 * unit.effective_std
    return t


def has_queue_space(machine: MachineState, capacity: int) -> bool:
    if capacity == 0:
        # Direct hand-off mode: an idle machine takes exactly one unit.
        return machine.executing is None and not machine.local_queue
    return len(machine.local_queue) < capacity


def dispatch(
    batch_queue: list[QueuedTask],
    machines: Sequence[MachineState],
    now: float,
    policy: Policy,
    capacity: int,
    start_execution: Callable[[MachineState, QueuedTask], None],
) -> list[tuple[QueuedTask, MachineState]]:
    """Move batch tasks into machine local queues, then start idle machines.

    While any local queue has space, the policy-minimal batch task goes to
    the machine with the smallest estimated availability (ties by machine
    id). Execution starts only after the fill loop, so tasks assigned in
    this round stay mergeable until the machine actually picks them up.
    """
    assigned: list[tuple[QueuedTask, MachineState]] = []
    while batch_queue:
        open_machines = [m for m in machines if has_queue_space(m, capacity)]
        if not open_machines:
            break
        unit = min(batch_queue, key=lambda u: order_key(u, now, policy))
        target = min(open_machines, key=lambda m: (machine_availability(m, now), m.machine_id))
        batch_queue.remove(unit)
        target.local_queue.append(unit)
        unit.state = TaskState.IN_LOCAL
        unit.machine_id = target.machine_id
        assigned.append((unit, target))
    for machine in machines:
        if machine.executing is None and machine.local_queue:
            start_execution(machine, machine.local_queue.pop(0))
    return assigned
