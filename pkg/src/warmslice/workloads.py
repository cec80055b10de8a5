from __future__ import annotations

import csv
import io
import itertools
import json
from collections.abc import Iterator
from dataclasses import dataclass
from enum import StrEnum
from functools import cache
from importlib.resources import files
from pathlib import Path

from warmslice.cpu import MilliCpu, WorkloadSpec, require_millicpu
from warmslice.errors import InvalidInputError, NotFoundError
from warmslice.resize_model import Direction

PLAN_HEADER = ("step_index", "from_mcpu", "to_mcpu", "timed")


@dataclass(frozen=True)
class ReferenceRatios:
    """Measured mean latency of each policy relative to the always-on baseline."""

    cold: float
    inplace: float
    warm: float


@dataclass(frozen=True)
class CatalogEntry:
    spec: WorkloadSpec
    definition: str
    reference: ReferenceRatios


@dataclass(frozen=True)
class Overheads:
    platform_overhead_ms: float
    cold_start_ms: float


@dataclass(frozen=True)
class WorkloadCatalog:
    _entries: dict[str, CatalogEntry]

    @classmethod
    def load(cls) -> WorkloadCatalog:
        resource = files("warmslice").joinpath("data", "workloads.json")
        raw = json.loads(resource.read_text(encoding="utf-8"))
        entries = {
            name: CatalogEntry(
                spec=WorkloadSpec(name=name, runtime_at_1000m=item["runtime_ms"]),
                definition=item["definition"],
                reference=ReferenceRatios(**item["reference_ratios"]),
            )
            for name, item in raw.items()
        }
        return cls(_entries=entries)

    def __iter__(self) -> Iterator[str]:
        return iter(self._entries)

    def names(self) -> tuple[str, ...]:
        return tuple(self._entries)

    def entry(self, name: str) -> CatalogEntry:
        try:
            return self._entries[name]
        except KeyError as error:
            raise NotFoundError(f"unknown workload: {name}") from error

    def spec(self, name: str) -> WorkloadSpec:
        return self.entry(name).spec


@cache
def workload_catalog() -> WorkloadCatalog:
    return WorkloadCatalog.load()


def catalog() -> tuple[WorkloadSpec, ...]:
    loaded = workload_catalog()
    return tuple(loaded.spec(name) for name in loaded)


def lookup(name: str) -> WorkloadSpec:
    return workload_catalog().spec(name)


def calibrated_overheads(name: str) -> Overheads:
    """Per-request platform overhead and launch cost implied by the references.

    The warm ratio above 1.00 is the platform's per-request cost; the gap
    between the cold and warm ratios is the launch cost.
    """
    entry = workload_catalog().entry(name)
    runtime = entry.spec.runtime_at_1000m
    return Overheads(
        platform_overhead_ms=(entry.reference.warm - 1) * runtime,
        cold_start_ms=(entry.reference.cold - entry.reference.warm) * runtime,
    )


@dataclass(frozen=True)
class ClosedLoop:
    """k6-style virtual users, each sending its next request after a response."""

    vus: int = 1
    iterations: int = 50
    think_time_ms: float = 0.0

    def __post_init__(self) -> None:
        if self.vus < 1:
            raise InvalidInputError("vus must be at least 1")
        if self.iterations < 1:
            raise InvalidInputError("iterations must be at least 1")
        if self.think_time_ms < 0:
            raise InvalidInputError("think_time_ms must not be negative")


@dataclass(frozen=True)
class Poisson:
    rate_rps: float
    horizon_ms: float

    def __post_init__(self) -> None:
        if self.rate_rps <= 0:
            raise InvalidInputError("rate_rps must be positive")
        if self.horizon_ms <= 0:
            raise InvalidInputError("horizon_ms must be positive")


@dataclass(frozen=True)
class Explicit:
    arrivals_ms: tuple[float, ...]

    def __post_init__(self) -> None:
        if any(at < 0 for at in self.arrivals_ms):
            raise InvalidInputError("arrival times must not be negative")
        if list(self.arrivals_ms) != sorted(self.arrivals_ms):
            raise InvalidInputError("arrival times must be in ascending order")


type DriverMode = ClosedLoop | Poisson | Explicit


@dataclass(frozen=True)
class ArrivalPlan:
    mode: DriverMode
    workload: str


class Pattern(StrEnum):
    INCREMENTAL = "incremental"
    CUMULATIVE = "cumulative"
    CUSTOM = "custom"


@dataclass(frozen=True)
class ResizeStep:
    index: int
    from_cpu: MilliCpu
    to_cpu: MilliCpu
    timed: bool = True


@dataclass(frozen=True)
class ResizePlan:
    steps: tuple[ResizeStep, ...]
    step_size: MilliCpu
    pattern: Pattern
    direction: Direction
    initial: MilliCpu
    target: MilliCpu
    name: str | None = None

    @property
    def plan_id(self) -> str:
        if self.name:
            return self.name
        return (
            f"{self.step_size}m-{self.pattern}-{self.direction}-"
            f"{self.initial}m-{self.target}m"
        )

    @property
    def timed_steps(self) -> tuple[ResizeStep, ...]:
        return tuple(step for step in self.steps if step.timed)


def _boundaries(
    step: MilliCpu, initial: MilliCpu, target: MilliCpu
) -> list[MilliCpu]:
    if step > abs(target - initial):
        return [target]
    if target > initial:
        first = (initial // step + 1) * step
        return [*range(first, target, step), target]
    first = (initial - 1) // step * step
    return [*range(first, target, -step), target]


def resize_plan(
    step: MilliCpu,
    pattern: Pattern,
    direction: Direction,
    initial: MilliCpu,
    target: MilliCpu,
) -> ResizePlan:
    """Stepped resize sequence between ``initial`` and ``target``.

    Intermediate values are the multiples of ``step`` strictly between the two
    ends, so a 100m plan starting at 1m first scales to 100m.
    """
    if step <= 0:
        raise InvalidInputError("step must be positive")
    require_millicpu(initial, name="initial")
    require_millicpu(target, name="target")
    if initial == target:
        raise InvalidInputError("initial and target must differ")
    expected = Direction.UP if target > initial else Direction.DOWN
    if direction is not expected:
        raise InvalidInputError(
            f"a plan from {initial}m to {target}m scales {expected}, not {direction}"
        )
    if pattern is Pattern.CUSTOM:
        raise InvalidInputError("custom plans are loaded from a file")

    steps: list[ResizeStep] = []
    previous = initial
    for position, boundary in enumerate(_boundaries(step, initial, target)):
        if pattern is Pattern.INCREMENTAL:
            steps.append(ResizeStep(len(steps), previous, boundary))
        else:
            if position > 0:
                steps.append(ResizeStep(len(steps), previous, initial, timed=False))
            steps.append(ResizeStep(len(steps), initial, boundary))
        previous = boundary
    return ResizePlan(
        steps=tuple(steps),
        step_size=step,
        pattern=pattern,
        direction=direction,
        initial=initial,
        target=target,
    )


def fine_plan() -> tuple[ResizePlan, ResizePlan]:
    """5m-granularity incremental plans between 5m and 1000m, up then down."""
    return (
        resize_plan(5, Pattern.INCREMENTAL, Direction.UP, 5, 1000),
        resize_plan(5, Pattern.INCREMENTAL, Direction.DOWN, 1000, 5),
    )


def table2_suite(*, table_variant: bool = False) -> list[ResizePlan]:
    """The eight step-size x pattern x direction resize experiments.

    The cumulative downward 100m experiment starts at 100m by default; with
    ``table_variant`` it starts at 1000m instead.
    """
    cumulative_down_start = 1000 if table_variant else 100
    return [
        resize_plan(100, Pattern.INCREMENTAL, Direction.UP, 1, 1000),
        resize_plan(100, Pattern.INCREMENTAL, Direction.DOWN, 1000, 1),
        resize_plan(100, Pattern.CUMULATIVE, Direction.UP, 1, 1000),
        resize_plan(
            100, Pattern.CUMULATIVE, Direction.DOWN, cumulative_down_start, 1
        ),
        resize_plan(1000, Pattern.INCREMENTAL, Direction.UP, 1, 6000),
        resize_plan(1000, Pattern.INCREMENTAL, Direction.DOWN, 6000, 1),
        resize_plan(1000, Pattern.CUMULATIVE, Direction.UP, 1, 6000),
        resize_plan(1000, Pattern.CUMULATIVE, Direction.DOWN, 6000, 1),
    ]


def dump_plan(plan: ResizePlan) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(PLAN_HEADER)
    for step in plan.steps:
        writer.writerow([step.index, step.from_cpu, step.to_cpu, int(step.timed)])
    return buffer.getvalue()


def _infer_pattern(steps: list[ResizeStep], initial: MilliCpu) -> Pattern:
    timed = [step for step in steps if step.timed]
    chained = all(
        current.from_cpu == previous.to_cpu
        for previous, current in itertools.pairwise(steps)
    )
    if chained and len(timed) == len(steps):
        return Pattern.INCREMENTAL
    if all(step.from_cpu == initial for step in timed):
        return Pattern.CUMULATIVE
    return Pattern.CUSTOM


def load_plan(path: Path) -> ResizePlan:
    reader = csv.DictReader(io.StringIO(path.read_text(encoding="utf-8")))
    if tuple(reader.fieldnames or ()) != PLAN_HEADER:
        raise InvalidInputError(
            f"{path} must start with the header {','.join(PLAN_HEADER)}"
        )
    steps: list[ResizeStep] = []
    for row in reader:
        try:
            step = ResizeStep(
                index=int(row["step_index"]),
                from_cpu=require_millicpu(int(row["from_mcpu"]), name="from_mcpu"),
                to_cpu=require_millicpu(int(row["to_mcpu"]), name="to_mcpu"),
                timed=row["timed"].strip().lower() in {"1", "true", "yes"},
            )
        except ValueError as error:
            raise InvalidInputError(
                f"{path} line {reader.line_num}: {error}"
            ) from error
        steps.append(step)
    timed = [step for step in steps if step.timed]
    if not timed:
        raise InvalidInputError(f"{path} has no timed steps")

    initial = steps[0].from_cpu
    target = timed[-1].to_cpu
    return ResizePlan(
        steps=tuple(steps),
        step_size=abs(timed[0].to_cpu - timed[0].from_cpu),
        pattern=_infer_pattern(steps, initial),
        direction=Direction.UP if target > initial else Direction.DOWN,
        initial=initial,
        target=target,
        name=path.stem,
    )
