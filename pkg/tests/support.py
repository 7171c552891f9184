"""Shared fixtures-in-spirit: request factories, naive detection oracle,
random snapshot builder, and the randomized detector harness."""

from __future__ import annotations

import numpy as np

from mergesim import (
    MergeCostFactors,
    MergeLevel,
    OperationKind,
    QueuedTask,
    SimilarityIndex,
    TaskRequest,
    TaskState,
)
from mergesim.admission import MachineSnap, SystemSnapshot, UnitSnap

OPS = tuple(OperationKind)

PARAM_POOL = {
    OperationKind.REDUCE_RESOLUTION: (("width=1280", "height=720"), ("width=640", "height=360")),
    OperationKind.CHANGE_CODEC: (("codec=h264",), ("codec=vp9",)),
    OperationKind.ADJUST_BIT_RATE: (("bitrate_kbps=800",), ("bitrate_kbps=3000",)),
    OperationKind.CHANGE_FRAME_RATE: (("fps=24",), ("fps=60",)),
}


def make_request(
    rid,
    video="v0",
    gop=0,
    op=OperationKind.REDUCE_RESOLUTION,
    params=("width=1280", "height=720"),
    arrival=0.0,
    deadline=1e9,
    mean=10.0,
    std=0.0,
):
    return TaskRequest(
        request_id=rid,
        video_id=video,
        gop_index=gop,
        operation=op,
        params=tuple(params),
        arrival_time=arrival,
        deadline=deadline,
        exec_mean=mean,
        exec_std=std,
    )


def random_request(rng, rid, videos=3, gops=3, arrival=0.0):
    """Request from a deliberately small key space, to force collisions."""
    op = OPS[rng.integers(len(OPS))]
    pool = PARAM_POOL[op]
    return make_request(
        rid,
        video=f"v{rng.integers(videos)}",
        gop=int(rng.integers(gops)),
        op=op,
        params=pool[rng.integers(len(pool))],
        arrival=arrival,
        deadline=arrival + float(rng.uniform(10.0, 500.0)),
        mean=float(rng.uniform(1.0, 10.0)),
        std=float(rng.uniform(0.0, 1.0)),
    )


_SPECIFICITY = {MergeLevel.TASK: 0, MergeLevel.OPERATION: 1, MergeLevel.DATA: 2}


def naive_best_level(live_units, req) -> MergeLevel | None:
    """O(n) pairwise field comparison over every live queued request."""
    best = None
    for unit in live_units:
        if unit.state not in (TaskState.IN_BATCH, TaskState.IN_LOCAL):
            continue
        for member, _ in unit.requests():
            if member.video_id != req.video_id or member.gop_index != req.gop_index:
                continue
            if member.operation != req.operation:
                level = MergeLevel.DATA
            elif sorted(member.params) != sorted(req.params):
                level = MergeLevel.OPERATION
            else:
                level = MergeLevel.TASK
            if best is None or _SPECIFICITY[level] < _SPECIFICITY[best]:
                best = level
    return best


def matches_at_level(unit, req, level) -> bool:
    for member, _ in unit.requests():
        if member.video_id != req.video_id or member.gop_index != req.gop_index:
            continue
        if level is MergeLevel.DATA:
            return True
        if member.operation != req.operation:
            continue
        if level is MergeLevel.OPERATION:
            return True
        if sorted(member.params) == sorted(req.params):
            return True
    return False


def run_detector_harness(seed, n_arrivals, completion_prob=0.35, validate_every=5):
    """Drive the index with random arrivals/completions, merging every match.

    Asserts, at every lookup: the returned level equals the naive scan's,
    the returned unit really matches at that level, and at most 3 probes
    were spent. Returns the number of lookups performed.
    """
    rng = np.random.default_rng(seed)
    factors = MergeCostFactors(0.5, 0.9)
    index = SimilarityIndex()
    live: list[QueuedTask] = []
    lookups = 0
    events = 0
    rid = 0
    while rid < n_arrivals:
        events += 1
        if live and rng.random() < completion_prob:
            unit = live.pop(rng.integers(len(live)))
            unit.state = TaskState.DONE
            index.on_complete(unit)
        else:
            req = random_request(rng, rid)
            rid += 1
            expected = naive_best_level(live, req)
            hit = index.lookup(req)
            lookups += 1
            assert index.last_lookup_probes <= 3
            if expected is None:
                assert hit is None, f"lookup found {hit} where the scan found nothing"
                unit = QueuedTask(req)
                live.append(unit)
                index.on_arrival_unmerged(unit, had_match=False)
            else:
                assert hit is not None, f"scan found {expected} but lookup missed"
                unit, level = hit
                assert level is expected, f"lookup level {level} != scan level {expected}"
                assert matches_at_level(unit, req, level)
                unit.absorb(req, level, factors)
                index.on_arrival_merged(unit, req, level)
        if events % validate_every == 0:
            index.validate()
    index.validate()
    return lookups


def random_sigma0_trace(rng, n, window=1.0, videos=6, gops=4):
    """Arrival-sorted noise-free trace; identical signatures share estimates."""
    arrivals = np.sort(rng.uniform(0.0, window, n))
    estimates = {}
    tasks = []
    for i in range(n):
        op = OPS[rng.integers(len(OPS))]
        pool = PARAM_POOL[op]
        req = make_request(
            i,
            video=f"v{rng.integers(videos)}",
            gop=int(rng.integers(gops)),
            op=op,
            params=pool[rng.integers(len(pool))],
            arrival=float(arrivals[i]),
            deadline=float(arrivals[i] + rng.uniform(5.0, 80.0)),
            mean=1.0,
            std=0.0,
        )
        sig = req.signature()
        if sig not in estimates:
            estimates[sig] = float(rng.uniform(5.0, 20.0))
        tasks.append(
            make_request(
                i,
                video=req.video_id,
                gop=req.gop_index,
                op=req.operation,
                params=req.params,
                arrival=req.arrival_time,
                deadline=req.deadline,
                mean=estimates[sig],
                std=0.0,
            )
        )
    return tasks


def replay_error_vs_engine(seed, merging, snapshot_mode="last_arrival"):
    """Max |replay completion - engine completion| over one random instance.

    Runs a noise-free FCFS simulation, snapshots it at an arrival event, and
    compares the what-if replay of that snapshot against the completions the
    engine actually produces.
    """
    from mergesim import Policy, SimConfig, Simulation, virtual_replay

    rng = np.random.default_rng(seed)
    n = int(rng.integers(20, 70))
    trace = random_sigma0_trace(rng, n)
    cfg = SimConfig(
        machine_count=int(rng.integers(2, 5)),
        queue_capacity=int(rng.integers(0, 3)),
        policy=Policy.FCFS,
        merge_enabled=merging,
        rng_seed=seed,
        exec_noise=False,
    )
    sim = Simulation(trace, cfg)
    if snapshot_mode == "last_arrival":
        snap_id = trace[-1].request_id
    else:
        snap_id = int(rng.integers(n // 2, n))
    snapshot = None
    while snapshot is None:
        event = sim.step()
        assert event is not None, "simulation drained before the snapshot point"
        if event.kind == "arrival" and event.request.request_id == snap_id:
            snapshot = sim.snapshot()
    estimates = virtual_replay(snapshot, cfg.policy)
    assert estimates, "snapshot unexpectedly empty"
    metrics = sim.run()
    actual = {o.request_id: o.completion for o in metrics.outcomes}
    return max(abs(e.completion - actual[e.request_id]) for e in estimates)


def random_unit_snap(rng, uid, now=0.0, extra_members=0):
    deadline = now + float(rng.uniform(5.0, 300.0))
    members = [(uid, deadline)]
    for k in range(extra_members):
        members.append((uid * 1000 + k + 1, now + float(rng.uniform(5.0, 300.0))))
    return UnitSnap(
        unit_id=uid,
        arrival=float(rng.uniform(0.0, now)) if now > 0 else 0.0,
        mean=float(rng.uniform(1.0, 12.0)),
        std=float(rng.uniform(0.0, 1.5)),
        deadline=deadline,
        members=tuple(members),
    )


def random_snapshot(rng, max_machines=5, max_batch=40) -> SystemSnapshot:
    now = float(rng.uniform(0.0, 100.0))
    n_machines = int(rng.integers(1, max_machines + 1))
    capacity = int(rng.integers(0, 3))
    uid = 0
    machines = []
    for m in range(n_machines):
        executing = None
        remaining = 0.0
        local = []
        if rng.random() < 0.75:
            executing = random_unit_snap(rng, uid, now, extra_members=int(rng.integers(0, 3)))
            uid += 1
            remaining = float(rng.uniform(0.0, 15.0))
            for _ in range(int(rng.integers(0, capacity + 1)) if capacity else 0):
                local.append(random_unit_snap(rng, uid, now, extra_members=int(rng.integers(0, 2))))
                uid += 1
        machines.append(
            MachineSnap(machine_id=m, executing=executing, remaining=remaining, local=tuple(local))
        )
    batch = []
    for _ in range(int(rng.integers(0, max_batch + 1))):
        batch.append(random_unit_snap(rng, uid, now, extra_members=int(rng.integers(0, 3))))
        uid += 1
    return SystemSnapshot(now=now, queue_capacity=capacity, machines=tuple(machines), batch=tuple(batch))
