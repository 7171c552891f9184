"""Hot kernel: drain a frozen scheduling state and compute completion times.

The same function is shipped twice: compiled with numba (default) and as
the plain numpy/Python fallback. Selection is at import time through the
``MERGESIM_BACKEND`` environment variable ("numba" or "numpy"); the fallback
is also used automatically when numba is not importable.

State layout is struct-of-arrays. Semantics mirror the live engine exactly:
a fill pass packs local queues at time ``tau``, idle machines then promote
their queue head, and every subsequent completion promotes the next unit
and refills the freed slot with the policy-minimal batch unit (machine with
the smallest chained availability wins, ties by machine id).
"""

from __future__ import annotations

import os

import numpy as np

_ENV_VAR = "MERGESIM_BACKEND"
_INF = float("inf")


def _drain_queues(tau, capacity, exec_unit, exec_end, local_units, local_ptr, order, dur, comp, mach):
    """Fill ``comp``/``mach`` with per-unit completion time and machine.

    exec_unit[m] is the unit index executing on machine m (-1 when idle) and
    exec_end[m] its absolute completion time. local_units/local_ptr hold the
    pending local queues in CSR layout. ``order`` lists batch unit indices in
    dispatch order. ``dur`` is each unit's charged duration.
    """
    n_machines = exec_unit.shape[0]
    n_batch = order.shape[0]

    avail = np.empty(n_machines, np.float64)  # end of each machine's committed chain
    next_done = np.empty(n_machines, np.float64)
    busy = np.empty(n_machines, np.bool_)
    pend = np.zeros(n_machines, np.int64)

    max_local = 0
    for m in range(n_machines):
        n = local_ptr[m + 1] - local_ptr[m]
        if n > max_local:
            max_local = n
    ring_cap = capacity if capacity > max_local else max_local
    if ring_cap < 1:
        ring_cap = 1
    ring = np.empty((n_machines, ring_cap), np.int64)
    head = np.zeros(n_machines, np.int64)

    for m in range(n_machines):
        u = exec_unit[m]
        if u >= 0:
            comp[u] = exec_end[m]
            mach[u] = m
            avail[m] = exec_end[m]
            next_done[m] = exec_end[m]
            busy[m] = True
        else:
            avail[m] = tau
            next_done[m] = _INF
            busy[m] = False
        k = 0
        for j in range(local_ptr[m], local_ptr[m + 1]):
            v = local_units[j]
            avail[m] += dur[v]
            comp[v] = avail[m]
            mach[v] = m
            ring[m, k] = v
            k += 1
        pend[m] = k

    b = 0
    # fill pass at tau
    while b < n_batch:
        best = -1
        for m in range(n_machines):
            space = pend[m] < capacity or (capacity == 0 and not busy[m] and pend[m] == 0)
            if space and (best == -1 or avail[m] < avail[best]):
                best = m
        if best == -1:
            break
        u = order[b]
        b += 1
        comp[u] = avail[best] + dur[u]
        mach[u] = best
        avail[best] = comp[u]
        ring[best, (head[best] + pend[best]) % ring_cap] = u
        pend[best] += 1
    # idle machines pick up their queue head
    for m in range(n_machines):
        if not busy[m] and pend[m] > 0:
            v = ring[m, head[m] % ring_cap]
            head[m] += 1
            pend[m] -= 1
            busy[m] = True
            next_done[m] = comp[v]

    # completion-driven refills until the batch queue is drained; each event
    # promotes, refills open slots, then lets idle machines pick up a head,
    # exactly mirroring the live engine's per-event processing order
    while b < n_batch:
        mstar = -1
        for m in range(n_machines):
            if busy[m] and (mstar == -1 or next_done[m] < next_done[mstar]):
                mstar = m
        if mstar == -1:
            raise RuntimeError("drain stalled: batch tasks left but no machine is busy")
        if pend[mstar] > 0:
            v = ring[mstar, head[mstar] % ring_cap]
            head[mstar] += 1
            pend[mstar] -= 1
            next_done[mstar] = comp[v]
        else:
            busy[mstar] = False
            next_done[mstar] = _INF
        while b < n_batch:
            best = -1
            for m in range(n_machines):
                space = pend[m] < capacity or (capacity == 0 and not busy[m] and pend[m] == 0)
                if space and (best == -1 or avail[m] < avail[best]):
                    best = m
            if best == -1:
                break
            u = order[b]
            b += 1
            comp[u] = avail[best] + dur[u]
            mach[u] = best
            avail[best] = comp[u]
            ring[best, (head[best] + pend[best]) % ring_cap] = u
            pend[best] += 1
        for m in range(n_machines):
            if not busy[m] and pend[m] > 0:
                v = ring[m, head[m] % ring_cap]
                head[m] += 1
                pend[m] -= 1
                busy[m] = True
                next_done[m] = comp[v]


_njit_drain = None


def _compile_njit():
    global _njit_drain
    if _njit_drain is None:
        from numba import njit

        _njit_drain = njit(cache=True)(_drain_queues)
    return _njit_drain


def get_drain(backend: str):
    """Return the drain kernel for ``backend`` ("numba" or "numpy")."""
    if backend == "numpy":
        return _drain_queues
    if backend == "numba":
        return _compile_njit()
    raise ValueError(f"unknown backend {backend!r}; expected 'numba' or 'numpy'")


def _select_backend() -> str:
    choice = os.environ.get(_ENV_VAR, "").strip().lower()
    if choice in ("", "numba"):
        try:
            import numba  # noqa: F401
        except ImportError:
            if choice == "numba":
                raise
            return "numpy"
        return "numba"
    if choice == "numpy":
        return "numpy"
    raise ValueError(f"{_ENV_VAR}={choice!r} not understood; use 'numba' or 'numpy'")


ACTIVE_BACKEND = _select_backend()
drain_queues = get_drain(ACTIVE_BACKEND)
