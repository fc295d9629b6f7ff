"""Split a job into entry-range tasks and validate schemas up front."""

from __future__ import annotations

from dataclasses import dataclass

from .. import exprlang
from ..sources import open_source
from ..treefile import Dtype, Shape, open_file
from .job import EngineConfig, EngineError, JobSpec

Schema = dict[str, tuple[Dtype, Shape]]


@dataclass(frozen=True)
class Task:
    task_id: int
    input: str
    tree: str
    entry_start: int
    entry_stop: int
    columns: tuple[str, ...]  # closure of keep + skim + derived references

    @property
    def n_entries(self) -> int:
        return self.entry_stop - self.entry_start


def parse_job_exprs(job: JobSpec):
    """Parse skim and derived expression texts once, for planner and runner."""
    try:
        skim = exprlang.parse(job.skim) if job.skim else None
        derived = [(name, exprlang.parse(text)) for name, text in job.derived]
    except exprlang.ParseError as exc:
        raise EngineError(f"bad expression in job: {exc}") from exc
    return skim, derived


def required_columns(job: JobSpec) -> tuple[str, ...]:
    skim, derived = parse_job_exprs(job)
    names = set(job.keep_columns)
    if skim is not None:
        names |= exprlang.column_refs(skim)
    for _, expr in derived:
        names |= exprlang.column_refs(expr)
    return tuple(sorted(names))


def check_job(job: JobSpec, schema: Schema) -> None:
    """Typecheck the job's expressions; skim must be a scalar bool, derived scalars."""
    skim, derived = parse_job_exprs(job)
    try:
        if skim is not None:
            result = exprlang.typecheck(skim, schema)
            if result.jagged or result.kind is not exprlang.Kind.BOOL:
                raise EngineError(f"skim must be a scalar bool, got {result}")
        for name, expr in derived:
            result = exprlang.typecheck(expr, schema)
            if result.jagged:
                raise EngineError(f"derived column {name!r} is per-event jagged, not scalar")
    except exprlang.ExprTypeError as exc:
        raise EngineError(f"job does not typecheck: {exc}") from exc
    for name in job.keep_columns:
        if name not in schema:
            raise EngineError(f"kept column {name!r} not in tree schema")


def probe_inputs(job: JobSpec, engine: EngineConfig) -> tuple[Schema, list[int]]:
    """Read each input's directory; reject schema drift on required columns.

    Returns the required-column schema of the first input and per-file
    entry counts.
    """
    needed = required_columns(job)
    schema: Schema | None = None
    entry_counts: list[int] = []
    for path in job.inputs:
        source = open_source(path, read_ahead=engine.read_ahead)
        try:
            reader = open_file(source)
            try:
                if job.tree not in reader.trees:
                    raise EngineError(f"{path}: no tree named {job.tree!r}")
                tree = reader.tree(job.tree)
                this = {}
                for name in needed:
                    if name not in tree.branches:
                        raise EngineError(f"{path}: required column {name!r} missing")
                    meta = tree.branches[name]
                    this[name] = (meta.dtype, meta.shape)
                if schema is None:
                    schema = this
                elif this != schema:
                    raise EngineError(f"{path}: schema differs from first input on required columns")
                entry_counts.append(tree.n_entries)
            finally:
                reader.close()
        finally:
            source.close()
    if schema is None:
        schema = {}
    return schema, entry_counts


def tasks_from_counts(job: JobSpec, entry_counts: list[int]) -> list[Task]:
    columns = required_columns(job)
    tasks: list[Task] = []
    task_id = 0
    for path, n_entries in zip(job.inputs, entry_counts):
        for start in range(0, n_entries, job.partition_entries):
            stop = min(start + job.partition_entries, n_entries)
            tasks.append(Task(task_id, path, job.tree, start, stop, columns))
            task_id += 1
    return tasks


def plan(job: JobSpec, engine: EngineConfig) -> list[Task]:
    """Per file, ceil(n_entries / partition_entries) tasks in file-then-entry order."""
    schema, entry_counts = probe_inputs(job, engine)
    check_job(job, schema)
    return tasks_from_counts(job, entry_counts)
