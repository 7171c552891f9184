"""mergesim: discrete-event simulation of merge-aware admission control
for deadline-driven, oversubscribed task backends."""

from .admission import (
    CompletionEstimate,
    ImpactReport,
    SystemSnapshot,
    assess_merge,
    estimate_completion,
    snapshot_system,
    virtual_replay,
)
from .engine import SimConfig, Simulation, actual_duration, run
from .metrics import MergeDecision, RequestOutcome, RunMetrics
from .model import (
    InternalFault,
    MachineState,
    MergeCostFactors,
    MergeLevel,
    OperationKind,
    QueuedTask,
    TaskRequest,
    TaskState,
    merged_exec_estimate,
)
from .scheduling import Policy, dispatch, machine_availability, order_key
from .similarity import SimilarityIndex, canonical_params, merge_key
from .workload import WorkloadSpec, generate, read_trace, write_trace

__version__ = "0.1.0"

__all__ = [
    "CompletionEstimate",
    "ImpactReport",
    "InternalFault",
    "MachineState",
    "MergeCostFactors",
    "MergeDecision",
    "MergeLevel",
    "OperationKind",
    "Policy",
    "QueuedTask",
    "RequestOutcome",
    "RunMetrics",
    "SimConfig",
    "SimilarityIndex",
    "Simulation",
    "SystemSnapshot",
    "TaskRequest",
    "TaskState",
    "WorkloadSpec",
    "actual_duration",
    "assess_merge",
    "canonical_params",
    "dispatch",
    "estimate_completion",
    "generate",
    "machine_availability",
    "merge_key",
    "merged_exec_estimate",
    "order_key",
    "read_trace",
    "run",
    "snapshot_system",
    "virtual_replay",
    "write_trace",
]
