"""Scenario documents: the JSON layer that configures one simulation."""

from __future__ import annotations

import json
import math
from collections.abc import Mapping
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from warmslice.config import ConfigError
from warmslice.cpu import NodeSpec, WorkloadSpec
from warmslice.errors import CalibrationError, InvalidInputError, NotFoundError
from warmslice.policies import PolicyConfig, PolicyKind
from warmslice.resize_model import (
    LoadState,
    ResizeLatencyTable,
    default_table,
    load_calibration,
)
from warmslice.rng import MAX_SEED
from warmslice.workloads import (
    ArrivalPlan,
    ClosedLoop,
    DriverMode,
    Explicit,
    Poisson,
    calibrated_overheads,
    workload_catalog,
)

DEFAULT_SEED = 42
TOP_LEVEL_KEYS = frozenset(
    {"node", "policy", "workload", "driver", "calibration", "seed", "replications"}
)
POLICY_KEYS = frozenset(
    {
        "kind",
        "stable_window_ms",
        "min_scale",
        "park_cpu",
        "active_cpu",
        "cold_start_ms",
        "platform_overhead_ms",
        "parked_pool",
        "up_load",
    }
)
DRIVER_KEYS = {
    "closed_loop": frozenset({"mode", "vus", "iterations", "think_time_ms"}),
    "poisson": frozenset({"mode", "rate_rps", "horizon_ms"}),
    "explicit": frozenset({"mode", "arrivals_ms"}),
}


class ScenarioError(ConfigError):
    """Raised when a scenario document does not validate."""


@dataclass(frozen=True)
class ScenarioConfig:
    node: NodeSpec
    policy: PolicyConfig
    workload: WorkloadSpec
    driver: ArrivalPlan
    calibration: str | Path | ResizeLatencyTable = "default"
    seed: int = DEFAULT_SEED
    replications: int = 1

    def __post_init__(self) -> None:
        if self.replications < 1:
            raise InvalidInputError("replications must be at least 1")
        if not 0 <= self.seed <= MAX_SEED:
            raise InvalidInputError("seed must fit in an unsigned 64-bit integer")
        if self.policy.active_cpu > self.node.capacity:
            raise InvalidInputError("active_cpu must not exceed the node capacity")

    def resize_table(self) -> ResizeLatencyTable:
        if isinstance(self.calibration, ResizeLatencyTable):
            return self.calibration
        if self.calibration == "default":
            return default_table(capacity=self.node.capacity)
        return load_calibration(Path(self.calibration))


def _reject_unknown(
    section: Mapping[str, Any], allowed: frozenset[str], path: str
) -> None:
    for key in section:
        if key not in allowed:
            location = f"{path}.{key}" if path else key
            raise ScenarioError(f"unknown key: {location}")


def _section(document: Mapping[str, Any], key: str) -> Mapping[str, Any]:
    value = document.get(key, {})
    if not isinstance(value, Mapping):
        raise ScenarioError(f"{key} must be an object")
    return value


def _number(section: Mapping[str, Any], key: str, path: str, default: float) -> float:
    value = section.get(key, default)
    if isinstance(value, bool) or not isinstance(value, int | float):
        raise ScenarioError(f"{path}.{key} must be a number")
    if not math.isfinite(value):
        raise ScenarioError(f"{path}.{key} must be finite, got {value}")
    return float(value)


def _integer(section: Mapping[str, Any], key: str, path: str, default: int) -> int:
    value = section.get(key, default)
    if isinstance(value, bool) or not isinstance(value, int):
        raise ScenarioError(f"{path}.{key} must be an integer")
    return value


def _parse_workload(raw: Any) -> tuple[WorkloadSpec, bool]:
    if isinstance(raw, str):
        try:
            return workload_catalog().spec(raw), True
        except NotFoundError as error:
            raise ScenarioError(f"workload: {error}") from error
    if not isinstance(raw, Mapping):
        raise ScenarioError("workload must be a catalog name or an object")
    _reject_unknown(
        raw, frozenset({"name", "runtime_ms", "cpu_bound_fraction"}), "workload"
    )
    name = raw.get("name")
    if not isinstance(name, str):
        raise ScenarioError("workload.name must be a string")
    if "runtime_ms" not in raw:
        raise ScenarioError("workload.runtime_ms is required for inline workloads")
    try:
        return (
            WorkloadSpec(
                name=name,
                runtime_at_1000m=_number(raw, "runtime_ms", "workload", 0.0),
                cpu_bound_fraction=_number(raw, "cpu_bound_fraction", "workload", 1.0),
            ),
            False,
        )
    except InvalidInputError as error:
        raise ScenarioError(f"workload: {error}") from error


def _parse_policy(
    raw: Mapping[str, Any], workload: WorkloadSpec, in_catalog: bool
) -> PolicyConfig:
    _reject_unknown(raw, POLICY_KEYS, "policy")
    try:
        kind = PolicyKind(raw["kind"])
    except KeyError as error:
        raise ScenarioError("policy.kind is required") from error
    except ValueError as error:
        valid = ", ".join(kind.value for kind in PolicyKind)
        raise ScenarioError(f"policy.kind must be one of {valid}") from error
    try:
        up_load = LoadState(raw.get("up_load", LoadState.IDLE))
    except ValueError as error:
        raise ScenarioError(f"policy.up_load: {error}") from error

    cold_start_ms = platform_overhead_ms = 0.0
    if kind is not PolicyKind.DEFAULT and in_catalog:
        overheads = calibrated_overheads(workload.name)
        cold_start_ms = overheads.cold_start_ms
        platform_overhead_ms = overheads.platform_overhead_ms

    try:
        return PolicyConfig(
            kind=kind,
            stable_window_ms=_number(raw, "stable_window_ms", "policy", 6000.0),
            min_scale=_integer(raw, "min_scale", "policy", 1),
            park_cpu=_integer(raw, "park_cpu", "policy", 1),
            active_cpu=_integer(raw, "active_cpu", "policy", 1000),
            cold_start_ms=_number(raw, "cold_start_ms", "policy", cold_start_ms),
            platform_overhead_ms=_number(
                raw, "platform_overhead_ms", "policy", platform_overhead_ms
            ),
            parked_pool=_integer(raw, "parked_pool", "policy", 1),
            up_load=up_load,
        )
    except InvalidInputError as error:
        raise ScenarioError(f"policy: {error}") from error


def _parse_driver(raw: Mapping[str, Any]) -> DriverMode:
    mode = raw.get("mode", "closed_loop")
    if mode not in DRIVER_KEYS:
        raise ScenarioError(f"driver.mode must be one of {', '.join(DRIVER_KEYS)}")
    _reject_unknown(raw, DRIVER_KEYS[mode], "driver")
    try:
        if mode == "closed_loop":
            return ClosedLoop(
                vus=_integer(raw, "vus", "driver", 1),
                iterations=_integer(raw, "iterations", "driver", 50),
                think_time_ms=_number(raw, "think_time_ms", "driver", 0.0),
            )
        if mode == "poisson":
            if "rate_rps" not in raw or "horizon_ms" not in raw:
                raise ScenarioError(
                    "driver.rate_rps and driver.horizon_ms are required"
                )
            return Poisson(
                rate_rps=_number(raw, "rate_rps", "driver", 0.0),
                horizon_ms=_number(raw, "horizon_ms", "driver", 0.0),
            )
        arrivals = raw.get("arrivals_ms", [])
        if not isinstance(arrivals, list) or any(
            isinstance(at, bool)
            or not isinstance(at, int | float)
            or not math.isfinite(at)
            for at in arrivals
        ):
            raise ScenarioError("driver.arrivals_ms must be a list of finite numbers")
        return Explicit(tuple(float(at) for at in arrivals))
    except InvalidInputError as error:
        raise ScenarioError(f"driver: {error}") from error


def parse_scenario(
    document: Mapping[str, Any], *, base_dir: Path | None = None
) -> ScenarioConfig:
    """Validate a scenario document and fill in every default.

    Relative calibration paths resolve against ``base_dir`` when given.
    """
    if not isinstance(document, Mapping):
        raise ScenarioError("scenario must be an object")
    _reject_unknown(document, TOP_LEVEL_KEYS, "")
    if "workload" not in document:
        raise ScenarioError("workload is required")
    if "policy" not in document:
        raise ScenarioError("policy is required")

    node_raw = _section(document, "node")
    _reject_unknown(node_raw, frozenset({"capacity_mcpu"}), "node")
    workload, in_catalog = _parse_workload(document["workload"])
    policy = _parse_policy(_section(document, "policy"), workload, in_catalog)
    driver = _parse_driver(_section(document, "driver"))

    calibration = document.get("calibration", "default")
    if not isinstance(calibration, str):
        raise ScenarioError("calibration must be 'default' or a path")
    if calibration != "default":
        path = Path(calibration)
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        calibration = path

    try:
        config = ScenarioConfig(
            node=NodeSpec(
                capacity=_integer(node_raw, "capacity_mcpu", "node", 8000)
            ),
            policy=policy,
            workload=workload,
            driver=ArrivalPlan(mode=driver, workload=workload.name),
            calibration=calibration,
            seed=_integer(document, "seed", "scenario", DEFAULT_SEED),
            replications=_integer(document, "replications", "scenario", 1),
        )
    except InvalidInputError as error:
        raise ScenarioError(str(error)) from error
    if isinstance(config.calibration, Path):
        try:
            config.resize_table()
        except (OSError, CalibrationError) as error:
            raise ScenarioError(f"calibration: {error}") from error
    return config


def load_scenario(path: Path) -> ScenarioConfig:
    try:
        document = json.loads(path.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as error:
        raise ScenarioError(f"{path} is not valid JSON: {error}") from error
    return parse_scenario(document, base_dir=path.parent)
