"""Three-level hash index that spots mergeable requests in constant time.

One table per merge level. A lookup costs at most three probes no matter
how long the queues are; maintenance happens on arrival and completion
only, through a reverse owner index so completions stay proportional to
the number of entries a unit owns.
"""

from __future__ import annotations

from .model import InternalFault, MergeLevel, QueuedTask, TaskRequest, TaskState

PROBE_ORDER = (MergeLevel.TASK, MergeLevel.OPERATION, MergeLevel.DATA)

# States a lookup may return; executing work cannot absorb new requests.
MERGEABLE_STATES = (TaskState.IN_BATCH, TaskState.IN_LOCAL)


def canonical_params(params) -> str:
    """Order-independent rendering of a parameter list."""
    return ",".join(sorted(params))


def merge_key(req: TaskRequest, level: MergeLevel) -> str:
    """Hash key for ``req`` at ``level``; higher levels use more fields."""
    key = f"{req.video_id}|{req.gop_index}"
    if level is MergeLevel.DATA:
        return key
    key += f"|{req.operation.value}"
    if level is MergeLevel.OPERATION:
        return key
    return f"{key}|{canonical_params(req.params)}"


class SimilarityIndex:
    """The three hash tables plus the reverse owner index for cleanup."""

    def __init__(self):
        self.tables: dict[MergeLevel, dict[str, QueuedTask]] = {lv: {} for lv in MergeLevel}
        self.owners: dict[QueuedTask, list[tuple[MergeLevel, str]]] = {}
        self.last_lookup_probes = 0

    def lookup(self, req: TaskRequest) -> tuple[QueuedTask, MergeLevel] | None:
        """Most specific live match for ``req``, or None.

        Probes the task, operation, and data table in that order and
        returns the first binding that is still waiting (batch or local
        queue). Executing bindings are skipped and the probe falls through
        to the next level.
        """
        self.last_lookup_probes = 0
        for level in PROBE_ORDER:
            self.last_lookup_probes += 1
            unit = self.tables[level].get(merge_key(req, level))
            if unit is None:
                continue
            if unit.state is TaskState.DONE:
                raise InternalFault(
                    f"index entry at {level.value} points at completed unit {unit.unit_id}"
                )
            if unit.state not in MERGEABLE_STATES:
                continue
            return unit, level
        return None

    def on_arrival_merged(self, existing: QueuedTask, incoming: TaskRequest, level: MergeLevel) -> None:
        """Index maintenance after ``incoming`` was merged into ``existing``.

        A task-level merge needs no update (all three keys already resolve
        correctly). Otherwise the incoming request's keys are added pointing
        at the merged unit; keys that already exist keep their binding.
        """
        if existing.state is TaskState.DONE:
            raise InternalFault(f"merge target {existing.unit_id} already completed")
        if level is MergeLevel.TASK:
            return
        for lv in PROBE_ORDER:
            key = merge_key(incoming, lv)
            if key not in self.tables[lv]:
                self._bind(lv, key, existing)

    def on_arrival_unmerged(self, unit: QueuedTask, had_match: bool) -> None:
        """Index maintenance after ``unit`` entered the batch queue unmerged.

        All three keys are written pointing at the fresh unit. When a match
        existed but merging was declined, this redirects the stale keys to
        the newest arrival, which is the likelier merge target for future
        requests. Without a prior match any overwritten binding can only be
        an executing unit the lookup skipped.
        """
        for lv in PROBE_ORDER:
            key = merge_key(unit.root, lv)
            old = self.tables[lv].get(key)
            if old is not None and not had_match and old.state in MERGEABLE_STATES:
                raise InternalFault(
                    f"no-match insert of unit {unit.unit_id} would displace live unit {old.unit_id}"
                )
            self._bind(lv, key, unit)

    def on_complete(self, unit: QueuedTask) -> None:
        """Drop every entry owned by ``unit``; cost is the number of entries."""
        if unit.state is not TaskState.DONE:
            raise InternalFault(f"unit {unit.unit_id} removed from index while {unit.state.value}")
        for level, key in self.owners.pop(unit, ()):
            bound = self.tables[level].get(key)
            if bound is not unit:
                raise InternalFault(f"owner record of unit {unit.unit_id} out of sync at {key!r}")
            del self.tables[level][key]

    def _bind(self, level: MergeLevel, key: str, unit: QueuedTask) -> None:
        old = self.tables[level].get(key)
        if old is unit:
            return
        if old is not None:
            self.owners[old].remove((level, key))
        self.tables[level][key] = unit
        self.owners.setdefault(unit, []).append((level, key))

    def validate(self) -> None:
        """Full consistency check (tests only): owners is the exact inverse."""
        seen = set()
        for level, table in self.tables.items():
            for key, unit in table.items():
                if unit.state is TaskState.DONE:
                    raise InternalFault(f"dangling entry {key!r} at {level.value}")
                if (level, key) not in self.owners.get(unit, ()):
                    raise InternalFault(f"entry {key!r} at {level.value} missing from owners")
                seen.add((level, key))
        for unit, owned in self.owners.items():
            if len(set(owned)) != len(owned):
                raise InternalFault(f"duplicate owner records for unit {unit.unit_id}")
            for level, key in owned:
                if self.tables[level].get(key) is not unit:
                    raise InternalFault(f"owner record {key!r} of unit {unit.unit_id} is stale")
        total = sum(len(t) for t in self.tables.values())
        if total != len(seen):
            raise InternalFault("owner index does not cover all table entries")
