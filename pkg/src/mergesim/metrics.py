"""Per-run result records: request outcomes, merge decisions, run metrics."""

from __future__ import annotations

from dataclasses import dataclass

from .model import MergeLevel


@dataclass(frozen=True)
class RequestOutcome:
    """Final fate of one original request."""

    request_id: int
    completion: float
    deadline: float
    missed: bool
    unit_id: int
    merge_level: MergeLevel | None  # None for unit roots and unmerged requests


@dataclass(frozen=True)
class MergeDecision:
    """One admission-time merge assessment, kept for auditing."""

    time: float
    incoming_id: int
    candidate_unit_id: int
    level: MergeLevel
    misses_with_merge: int
    misses_without_merge: int
    approved: bool


@dataclass
class RunMetrics:
    """Aggregate results of a single simulation run."""

    task_count: int
    deadline_miss_rate: float
    makespan: float
    merges: dict[MergeLevel, int]
    merge_rejections: int
    outcomes: list[RequestOutcome]
    merge_decisions: list[MergeDecision]
    audit: list[dict] | None = None

    @property
    def merge_total(self) -> int:
        return sum(self.merges.values())

    def validate(self) -> None:
        assert 0.0 <= self.deadline_miss_rate <= 1.0
        assert len(self.outcomes) == self.task_count
        assert self.merge_total + self.merge_rejections <= self.task_count
        missed = sum(o.missed for o in self.outcomes)
        expected = missed / self.task_count if self.task_count else 0.0
        assert self.deadline_miss_rate == expected
