from __future__ import annotations

import json
import logging
from collections.abc import Iterable, Mapping
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from warmslice.engine import SummaryStats
from warmslice.errors import InvalidInputError
from warmslice.orchestrator import Measurement, dump_measurements
from warmslice.trace import TraceRecord, dump_trace

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SummaryDocument:
    workload: str
    policy: str
    seed: int
    runtime_ms: float
    stats: SummaryStats

    def to_json(self) -> dict[str, Any]:
        return {
            "workload": self.workload,
            "policy": self.policy,
            "seed": self.seed,
            "runtime_ms": self.runtime_ms,
            "count": self.stats.count,
            "failed": self.stats.failed,
            "cold_starts": self.stats.cold_starts,
            "mean_ms": self.stats.mean_ms,
            "std_ms": self.stats.std_ms,
            "p50": self.stats.p50,
            "p95": self.stats.p95,
            "p99": self.stats.p99,
            "relative_to_baseline": self.stats.relative_to_baseline,
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> SummaryDocument:
        try:
            stats = SummaryStats(
                count=int(data["count"]),
                mean_ms=float(data["mean_ms"]),
                std_ms=float(data["std_ms"]),
                p50=float(data["p50"]),
                p95=float(data["p95"]),
                p99=float(data["p99"]),
                relative_to_baseline=data.get("relative_to_baseline"),
                failed=int(data.get("failed", 0)),
                cold_starts=int(data.get("cold_starts", 0)),
            )
            return cls(
                workload=str(data["workload"]),
                policy=str(data["policy"]),
                seed=int(data["seed"]),
                runtime_ms=float(data["runtime_ms"]),
                stats=stats,
            )
        except (KeyError, TypeError, ValueError) as error:
            raise InvalidInputError(f"malformed summary: {error}") from error


def load_summary(path: Path) -> SummaryDocument:
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as error:
        raise InvalidInputError(f"{path} is not valid JSON: {error}") from error
    return SummaryDocument.from_json(data)


class ResultStore:
    """Write run artifacts below a single output directory."""

    def __init__(self, out_dir: str | Path) -> None:
        self.out_dir = Path(out_dir)

    def directory(self) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        return self.out_dir

    def path(self, name: str) -> Path:
        return self.directory() / name

    def write_text(self, name: str, text: str) -> Path:
        path = self.path(name)
        path.write_text(text, encoding="utf-8")
        logger.info("Wrote %s", path)
        return path

    def write_json(self, name: str, document: Any) -> Path:
        return self.write_text(name, json.dumps(document, indent=2) + "\n")

    def write_trace(
        self,
        name: str,
        records: Iterable[TraceRecord],
        provenance: Mapping[str, object],
    ) -> Path:
        return self.write_text(name, dump_trace(records, provenance))

    def write_summary(self, name: str, summary: SummaryDocument) -> Path:
        return self.write_json(name, summary.to_json())

    def write_measurements(
        self,
        name: str,
        measurements: Iterable[Measurement],
        provenance: Mapping[str, object],
    ) -> Path:
        return self.write_text(name, dump_measurements(measurements, provenance))
