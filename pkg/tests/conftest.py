from __future__ import annotations

import io
import json
import logging
from collections.abc import Iterator
from contextlib import contextmanager
from pathlib import Path
from typing import Any

from warmslice.cpu import NodeSpec, WorkloadSpec
from warmslice.engine import SummaryStats
from warmslice.policies import PolicyConfig, PolicyKind
from warmslice.results import SummaryDocument
from warmslice.scenario import ScenarioConfig
from warmslice.workloads import (
    ArrivalPlan,
    ClosedLoop,
    DriverMode,
    calibrated_overheads,
    lookup,
)


def policy(
    kind: str, workload: str = "helloworld", **overrides: Any
) -> PolicyConfig:
    """Policy with the workload's calibrated overheads unless overridden."""
    policy_kind = PolicyKind(kind)
    fields: dict[str, Any] = {}
    if policy_kind is not PolicyKind.DEFAULT:
        overheads = calibrated_overheads(workload)
        fields = {
            "cold_start_ms": overheads.cold_start_ms,
            "platform_overhead_ms": overheads.platform_overhead_ms,
        }
    fields.update(overrides)
    return PolicyConfig(kind=policy_kind, **fields)


def scenario(
    kind: str = "warm",
    workload: str | WorkloadSpec = "helloworld",
    *,
    driver: DriverMode | None = None,
    seed: int = 42,
    capacity: int = 8000,
    calibration: Any = "default",
    **policy_overrides: Any,
) -> ScenarioConfig:
    spec = lookup(workload) if isinstance(workload, str) else workload
    if isinstance(workload, str):
        policy_config = policy(kind, workload, **policy_overrides)
    else:
        policy_config = PolicyConfig(kind=PolicyKind(kind), **policy_overrides)
    return ScenarioConfig(
        node=NodeSpec(capacity=capacity),
        policy=policy_config,
        workload=spec,
        driver=ArrivalPlan(driver or ClosedLoop(vus=1, iterations=20), spec.name),
        calibration=calibration,
        seed=seed,
    )


def summary(
    workload: str,
    kind: str,
    mean_ms: float,
    *,
    runtime_ms: float = 5.31,
    **overrides: Any,
) -> SummaryDocument:
    fields: dict[str, Any] = {
        "count": 50,
        "mean_ms": mean_ms,
        "std_ms": 0.0,
        "p50": mean_ms,
        "p95": mean_ms,
        "p99": mean_ms,
    }
    fields.update(overrides)
    return SummaryDocument(
        workload=workload,
        policy=kind,
        seed=42,
        runtime_ms=runtime_ms,
        stats=SummaryStats(**fields),
    )


def write_summary(directory: Path, document: SummaryDocument) -> Path:
    path = directory / f"summary-{document.policy}-{document.workload}.json"
    path.write_text(json.dumps(document.to_json()), encoding="utf-8")
    return path


@contextmanager
def captured_logs(name: str) -> Iterator[io.StringIO]:
    stream = io.StringIO()
    logger = logging.getLogger(name)
    handler = logging.StreamHandler(stream)
    previous_level = logger.level
    logger.addHandler(handler)
    logger.setLevel(logging.DEBUG)
    try:
        yield stream
    finally:
        logger.removeHandler(handler)
        logger.setLevel(previous_level)
