"""Task-parallel reduction engine: plan entry-range tasks over input files,
skim/slim/derive on a worker pool, and account for where the time went."""

from .job import EngineConfig, EngineError, JobSpec, load_job_file
from .metrics import (
    METRICS_CSV_HEADER,
    Manifest,
    ManifestEntry,
    TaskMetrics,
    WorkloadMetrics,
    merge_metrics,
)
from .planner import Task, plan
from .runner import RunResult, TaskFailure, run

__all__ = [
    "EngineConfig",
    "EngineError",
    "JobSpec",
    "load_job_file",
    "METRICS_CSV_HEADER",
    "Manifest",
    "ManifestEntry",
    "TaskMetrics",
    "WorkloadMetrics",
    "merge_metrics",
    "Task",
    "plan",
    "RunResult",
    "TaskFailure",
    "run",
]
