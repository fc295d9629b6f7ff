"""Per-task and whole-job metrics, with CSV / JSON-lines / table output."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

METRICS_CSV_HEADER = "task_id,wall_s,cpu_s,read_s,decompress_s,entries_in,entries_out,bytes_fetched"


@dataclass
class TaskMetrics:
    task_id: int
    wall_s: float
    cpu_s: float  # wall minus fetch waits and decompression, clamped at 0
    read_s: float
    decompress_s: float
    entries_in: int
    entries_out: int
    bytes_fetched: int

    def csv_row(self) -> str:
        return (
            f"{self.task_id},{self.wall_s:.6f},{self.cpu_s:.6f},{self.read_s:.6f},"
            f"{self.decompress_s:.6f},{self.entries_in},{self.entries_out},{self.bytes_fetched}"
        )


@dataclass
class WorkloadMetrics:
    total_wall_s: float
    worker_count: int
    tasks: list[TaskMetrics] = field(default_factory=list)
    concurrency: list[tuple[float, int]] = field(default_factory=list)  # (t, active)
    throughput: list[tuple[float, float]] = field(default_factory=list)  # (t, bytes/s)

    @property
    def sum_wall_s(self) -> float:
        return sum(t.wall_s for t in self.tasks)

    @property
    def sum_cpu_s(self) -> float:
        return sum(t.cpu_s for t in self.tasks)

    @property
    def sum_read_s(self) -> float:
        return sum(t.read_s for t in self.tasks)

    @property
    def sum_decompress_s(self) -> float:
        return sum(t.decompress_s for t in self.tasks)

    @property
    def entries_in(self) -> int:
        return sum(t.entries_in for t in self.tasks)

    @property
    def entries_out(self) -> int:
        return sum(t.entries_out for t in self.tasks)

    @property
    def bytes_fetched(self) -> int:
        return sum(t.bytes_fetched for t in self.tasks)

    def _fraction(self, value: float) -> float:
        total = self.sum_wall_s
        return value / total if total > 0 else 0.0

    @property
    def cpu_fraction(self) -> float:
        return self._fraction(self.sum_cpu_s)

    @property
    def read_fraction(self) -> float:
        return self._fraction(self.sum_read_s)

    @property
    def decompress_fraction(self) -> float:
        return self._fraction(self.sum_decompress_s)

    def summary_table(self) -> str:
        """Breakdown of where task time went, one row per accounted bucket."""
        rows = [
            ("Total task time", self.sum_wall_s, ""),
            ("CPU time", self.sum_cpu_s, f"{self.cpu_fraction:6.1%}"),
            ("Read time", self.sum_read_s, f"{self.read_fraction:6.1%}"),
            ("Decompress time", self.sum_decompress_s, f"{self.decompress_fraction:6.1%}"),
        ]
        width = max(len(r[0]) for r in rows)
        lines = [f"{'metric':<{width}}  {'seconds':>12}  fraction"]
        for name, seconds, frac in rows:
            lines.append(f"{name:<{width}}  {seconds:12.3f}  {frac}")
        lines.append("")
        lines.append(
            f"job wall time {self.total_wall_s:.3f} s, {len(self.tasks)} tasks on "
            f"{self.worker_count} workers, {self.entries_in} -> {self.entries_out} entries, "
            f"{self.bytes_fetched} bytes fetched"
        )
        return "\n".join(lines)


def merge_metrics(
    tasks: list[TaskMetrics],
    concurrency: list[tuple[float, int]],
    throughput: list[tuple[float, float]],
    total_wall_s: float,
    worker_count: int,
) -> WorkloadMetrics:
    return WorkloadMetrics(
        total_wall_s=total_wall_s,
        worker_count=worker_count,
        tasks=sorted(tasks, key=lambda t: t.task_id),
        concurrency=list(concurrency),
        throughput=list(throughput),
    )


def write_metrics_csv(path: str | Path, tasks: list[TaskMetrics]) -> None:
    lines = [METRICS_CSV_HEADER]
    lines += [t.csv_row() for t in sorted(tasks, key=lambda t: t.task_id)]
    Path(path).write_text("\n".join(lines) + "\n")


def write_metrics_jsonl(path: str | Path, metrics: WorkloadMetrics) -> None:
    with open(path, "w") as fh:
        for task in metrics.tasks:
            fh.write(json.dumps({"type": "task", **asdict(task)}) + "\n")
        for t, active in metrics.concurrency:
            fh.write(json.dumps({"type": "concurrency", "t": t, "active": active}) + "\n")
        for t, rate in metrics.throughput:
            fh.write(json.dumps({"type": "throughput", "t": t, "bytes_per_s": rate}) + "\n")
        fh.write(
            json.dumps(
                {
                    "type": "summary",
                    "total_wall_s": metrics.total_wall_s,
                    "worker_count": metrics.worker_count,
                    "sum_wall_s": metrics.sum_wall_s,
                    "sum_cpu_s": metrics.sum_cpu_s,
                    "sum_read_s": metrics.sum_read_s,
                    "sum_decompress_s": metrics.sum_decompress_s,
                    "cpu_fraction": metrics.cpu_fraction,
                    "read_fraction": metrics.read_fraction,
                    "decompress_fraction": metrics.decompress_fraction,
                    "entries_in": metrics.entries_in,
                    "entries_out": metrics.entries_out,
                    "bytes_fetched": metrics.bytes_fetched,
                }
            )
            + "\n"
        )


@dataclass
class ManifestEntry:
    task_id: int
    path: str
    entries: int


@dataclass
class Manifest:
    entries: list[ManifestEntry] = field(default_factory=list)

    @property
    def total_entries(self) -> int:
        return sum(e.entries for e in self.entries)

    def paths(self) -> list[str]:
        return [e.path for e in self.entries]

    def table(self) -> str:
        lines = [f"{'task':>6}  {'entries':>10}  path"]
        for e in self.entries:
            lines.append(f"{e.task_id:>6}  {e.entries:>10}  {e.path}")
        lines.append(f"{'total':>6}  {self.total_entries:>10}")
        return "\n".join(lines)

    def write_jsonl(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            for e in self.entries:
                fh.write(json.dumps(asdict(e)) + "\n")

    @classmethod
    def read_jsonl(cls, path: str | Path) -> "Manifest":
        entries = []
        for line in Path(path).read_text().splitlines():
            if line.strip():
                obj = json.loads(line)
                entries.append(ManifestEntry(obj["task_id"], obj["path"], obj["entries"]))
        return cls(sorted(entries, key=lambda e: e.task_id))
