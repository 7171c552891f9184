import numpy as np

from mergesim import MachineState, Policy, QueuedTask, TaskState, machine_availability, order_key
from mergesim.scheduling import dispatch

from support import make_request


def started_recorder(started):
    def start_execution(machine, unit):
        unit.state = TaskState.EXECUTING
        unit.machine_id = machine.machine_id
        machine.executing = unit
        machine.exec_end = unit.effective_mean
        started.append((unit.unit_id, machine.machine_id))
    return start_execution


def test_fcfs_orders_by_arrival():
    a = QueuedTask(make_request(0, arrival=1.0))
    b = QueuedTask(make_request(1, arrival=2.0))
    assert order_key(a, 0.0, Policy.FCFS) < order_key(b, 0.0, Policy.FCFS)


def test_edf_orders_by_effective_deadline():
    a = QueuedTask(make_request(0, deadline=50.0))
    b = QueuedTask(make_request(1, deadline=40.0))
    keys = sorted([a, b], key=lambda u: order_key(u, 0.0, Policy.EDF))
    assert keys[0] is b


def test_mu_ranks_by_slack_not_deadline():
    # A: deadline 50, duration 30 -> slack 20; B: deadline 40, duration 10 -> slack 30
    a = QueuedTask(make_request(0, deadline=50.0, mean=30.0, std=0.0))
    b = QueuedTask(make_request(1, deadline=40.0, mean=10.0, std=0.0))
    mu = sorted([a, b], key=lambda u: order_key(u, 0.0, Policy.MU))
    edf = sorted([a, b], key=lambda u: order_key(u, 0.0, Policy.EDF))
    assert mu[0] is a
    assert edf[0] is b


def test_policy_keys_are_a_strict_total_order():
    rng = np.random.default_rng(5)
    for policy in Policy:
        units = [
            QueuedTask(
                make_request(
                    rid,
                    arrival=float(rng.uniform(0, 100)),
                    deadline=float(rng.uniform(100, 300)),
                    mean=float(rng.uniform(1, 30)),
                    std=float(rng.uniform(0, 2)),
                )
            )
            for rid in range(80)
        ]
        now = float(rng.uniform(0, 50))
        keys = sorted(order_key(u, now, policy) for u in units)
        for earlier, later in zip(keys, keys[1:]):
            assert earlier < later  # antisymmetric and transitive via strict tuples


def test_degenerate_workload_makes_all_policies_agree():
    def fresh_units():
        return [QueuedTask(make_request(rid, arrival=float(rid), deadline=500.0, mean=10.0))
                for rid in range(6)]

    sequences = {}
    for policy in Policy:
        batch = fresh_units()
        machines = [MachineState(i) for i in range(2)]
        started = []
        order = []
        while batch:
            assigned = dispatch(batch, machines, 0.0, policy, 99, started_recorder(started))
            order.extend(unit.unit_id for unit, _ in assigned)
        sequences[policy] = order
    assert sequences[Policy.FCFS] == sequences[Policy.EDF] == sequences[Policy.MU]


def test_dispatch_fills_queues_then_starts_idle_machines():
    batch = [QueuedTask(make_request(rid, arrival=float(rid), mean=10.0)) for rid in range(3)]
    machines = [MachineState(0), MachineState(1)]
    started = []
    assigned = dispatch(batch, machines, 0.0, Policy.FCFS, 1, started_recorder(started))

    assert [(u.unit_id, m.machine_id) for u, m in assigned] == [(0, 0), (1, 1)]
    assert started == [(0, 0), (1, 1)]
    assert [u.unit_id for u in batch] == [2]  # third stays in the batch queue
    assert machines[0].executing.unit_id == 0
    assert machines[1].executing.unit_id == 1
    assert machines[0].local_queue == [] and machines[1].local_queue == []


def test_dispatch_with_empty_batch_assigns_nothing():
    machines = [MachineState(0)]
    assert dispatch([], machines, 0.0, Policy.FCFS, 1, started_recorder([])) == []


def test_dispatch_with_full_local_queues_assigns_nothing():
    machines = [MachineState(0)]
    machines[0].executing = QueuedTask(make_request(90))
    machines[0].exec_end = 10.0
    machines[0].local_queue = [QueuedTask(make_request(91))]
    batch = [QueuedTask(make_request(rid)) for rid in range(5)]
    assert dispatch(batch, machines, 0.0, Policy.FCFS, 1, started_recorder([])) == []
    assert len(batch) == 5


def test_direct_handoff_mode_feeds_only_idle_machines():
    # capacity 0: an idle machine takes one unit and starts it immediately
    batch = [QueuedTask(make_request(rid, arrival=float(rid))) for rid in range(3)]
    machines = [MachineState(0), MachineState(1)]
    started = []
    dispatch(batch, machines, 0.0, Policy.FCFS, 0, started_recorder(started))
    assert started == [(0, 0), (1, 1)]
    assert [u.unit_id for u in batch] == [2]
    assert machines[0].local_queue == [] and machines[1].local_queue == []
    # both busy now: nothing more fits
    assert dispatch(batch, machines, 0.0, Policy.FCFS, 0, started_recorder(started)) == []


def test_machine_availability_chains_pessimistic_estimates():
    m = MachineState(0)
    assert machine_availability(m, 5.0) == 5.0
    m.executing = QueuedTask(make_request(0, mean=10.0))
    m.exec_end = 12.0
    m.local_queue = [QueuedTask(make_request(1, mean=10.0, std=1.0)),
                     QueuedTask(make_request(2, mean=20.0, std=2.0))]
    assert machine_availability(m, 5.0) == 12.0 + 12.0 + 24.0


def test_dispatch_prefers_earliest_available_machine():
    machines = [MachineState(0), MachineState(1)]
    machines[0].executing = QueuedTask(make_request(90))
    machines[0].exec_end = 50.0
    machines[1].executing = QueuedTask(make_request(91))
    machines[1].exec_end = 8.0
    batch = [QueuedTask(make_request(0))]
    assigned = dispatch(batch, machines, 0.0, Policy.FCFS, 1, started_recorder([]))
    assert assigned[0][1].machine_id == 1
    assert machines[1].local_queue[0].unit_id == 0
