from __future__ import annotations

import csv
import io
from collections.abc import Iterable, Mapping
from dataclasses import dataclass
from pathlib import Path

from warmslice.errors import InvalidInputError, NotFinishedError

TRACE_HEADER = (
    "request_id",
    "workload",
    "policy",
    "arrival_ms",
    "route_ms",
    "resize_dispatch_ms",
    "resize_applied_ms",
    "exec_start_ms",
    "completion_ms",
    "instance_id",
    "cold_start",
)


@dataclass(frozen=True)
class TraceRecord:
    request_id: str
    workload: str
    policy: str
    arrival_ms: float
    route_ms: float
    exec_start_ms: float
    completion_ms: float | None
    instance_id: str
    cold_start: bool = False
    resize_dispatch_ms: float | None = None
    resize_applied_ms: float | None = None

    def __post_init__(self) -> None:
        if not self.arrival_ms <= self.route_ms <= self.exec_start_ms:
            raise InvalidInputError(
                f"{self.request_id}: expected arrival <= route <= exec_start"
            )
        if self.completion_ms is not None and self.completion_ms < self.exec_start_ms:
            raise InvalidInputError(
                f"{self.request_id}: completion precedes exec_start"
            )
        if (
            self.resize_dispatch_ms is not None
            and self.resize_applied_ms is not None
            and self.resize_applied_ms < self.resize_dispatch_ms
        ):
            raise InvalidInputError(
                f"{self.request_id}: resize applied before it was dispatched"
            )


@dataclass(frozen=True)
class LatencyBreakdown:
    queue_wait_ms: float
    cold_start_ms: float
    platform_overhead_ms: float
    execution_ms: float

    @property
    def total_ms(self) -> float:
        return (
            self.queue_wait_ms
            + self.cold_start_ms
            + self.platform_overhead_ms
            + self.execution_ms
        )


def request_latency(record: TraceRecord) -> float:
    if record.completion_ms is None:
        raise NotFinishedError(f"{record.request_id} has not completed")
    return record.completion_ms - record.arrival_ms


def latency_breakdown(
    record: TraceRecord, platform_overhead_ms: float
) -> LatencyBreakdown:
    """Split a request's latency into the phases it went through.

    Time between routing and execution start is launch time; it is zero for
    every request that did not trigger a cold start.
    """
    if record.completion_ms is None:
        raise NotFinishedError(f"{record.request_id} has not completed")
    return LatencyBreakdown(
        queue_wait_ms=record.route_ms - record.arrival_ms,
        cold_start_ms=record.exec_start_ms - record.route_ms,
        platform_overhead_ms=platform_overhead_ms,
        execution_ms=record.completion_ms - record.exec_start_ms - platform_overhead_ms,
    )


def _format_optional(value: float | None) -> str:
    return "" if value is None else repr(value)


def _parse_optional(raw: str) -> float | None:
    return float(raw) if raw else None


def provenance_line(fields: Mapping[str, object]) -> str:
    return "# " + " ".join(f"{key}={value}" for key, value in fields.items())


def dump_trace(
    records: Iterable[TraceRecord],
    provenance: Mapping[str, object] | None = None,
) -> str:
    buffer = io.StringIO()
    if provenance:
        buffer.write(provenance_line(provenance) + "\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(TRACE_HEADER)
    for record in records:
        writer.writerow(
            [
                record.request_id,
                record.workload,
                record.policy,
                repr(record.arrival_ms),
                repr(record.route_ms),
                _format_optional(record.resize_dispatch_ms),
                _format_optional(record.resize_applied_ms),
                repr(record.exec_start_ms),
                _format_optional(record.completion_ms),
                record.instance_id,
                "true" if record.cold_start else "false",
            ]
        )
    return buffer.getvalue()


def parse_trace(text: str) -> list[TraceRecord]:
    lines = [line for line in text.splitlines() if not line.startswith("#")]
    reader = csv.DictReader(lines)
    if tuple(reader.fieldnames or ()) != TRACE_HEADER:
        raise InvalidInputError(f"trace must start with {','.join(TRACE_HEADER)}")
    records: list[TraceRecord] = []
    for row in reader:
        try:
            records.append(
                TraceRecord(
                    request_id=row["request_id"],
                    workload=row["workload"],
                    policy=row["policy"],
                    arrival_ms=float(row["arrival_ms"]),
                    route_ms=float(row["route_ms"]),
                    exec_start_ms=float(row["exec_start_ms"]),
                    completion_ms=_parse_optional(row["completion_ms"]),
                    instance_id=row["instance_id"],
                    cold_start=row["cold_start"] == "true",
                    resize_dispatch_ms=_parse_optional(row["resize_dispatch_ms"]),
                    resize_applied_ms=_parse_optional(row["resize_applied_ms"]),
                )
            )
        except ValueError as error:
            raise InvalidInputError(
                f"trace line {reader.line_num}: {error}"
            ) from error
    return records


def read_trace(path: Path) -> list[TraceRecord]:
    return parse_trace(path.read_text(encoding="utf-8"))
