"""Calibrated in-place resize durations.

A table maps a bucketed (direction, load, from, to) transition to the mean and
standard deviation of the dispatch-to-visible duration in milliseconds.
Samples come from a normal distribution truncated below at ``floor_ms``.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from enum import StrEnum
from pathlib import Path
from types import MappingProxyType

import numpy as np
from scipy.special import ndtr, ndtri

from warmslice.cpu import DEFAULT_NODE_CAPACITY, ONE_CPU, MilliCpu
from warmslice.errors import CalibrationError, CalibrationFormatError
from warmslice.rng import SeededGenerator

CALIBRATION_HEADER = ("direction", "load", "from_mcpu", "to_mcpu", "mean_ms", "std_ms")

IDLE_UP_MEAN_MS = 56.44
IDLE_UP_STD_MS = 8.53
DEFAULT_FLOOR_MS = 1.0

# Stress-CPU multipliers keyed by (from, to) bucket. Resizes that stay inside a
# bucket share the factor of the interval that ends at the next boundary.
STRESS_UP_FACTORS: dict[str, dict[tuple[MilliCpu, MilliCpu], float]] = {
    "incremental": {(1, 1): 6.06, (1, 100): 6.06, (100, 100): 2.88, (100, 200): 2.88},
    "cumulative": {(1, 1): 6.83, (1, 100): 6.83, (1, 200): 3.44},
}


class LoadState(StrEnum):
    IDLE = "idle"
    STRESS_CPU = "stress_cpu"
    STRESS_IO = "stress_io"


class Direction(StrEnum):
    UP = "up"
    DOWN = "down"
    NONE = "none"


def bucket_floor(value: MilliCpu) -> MilliCpu:
    """Lower boundary of the bucket holding ``value``.

    Below 1000m the partition steps by 100m (with 1m as the first boundary);
    above it steps by 1000m.
    """
    if value < 100:
        return 1
    if value < ONE_CPU:
        return value // 100 * 100
    return value // ONE_CPU * ONE_CPU


def bucket_boundaries(capacity: MilliCpu = DEFAULT_NODE_CAPACITY) -> list[MilliCpu]:
    lower = [1, *range(100, ONE_CPU, 100)]
    upper = list(range(ONE_CPU, capacity + 1, ONE_CPU))
    return lower + upper


@dataclass(frozen=True, order=True)
class BucketKey:
    direction: Direction
    load: LoadState
    from_bucket: MilliCpu
    to_bucket: MilliCpu

    @property
    def is_identity(self) -> bool:
        return self.direction is Direction.NONE

    def describe(self) -> str:
        return (
            f"{self.direction}/{self.load} "
            f"{self.from_bucket}m->{self.to_bucket}m"
        )


@dataclass(frozen=True)
class LatencyStats:
    mean_ms: float
    std_ms: float


@dataclass(frozen=True)
class ResizeSample:
    latency_ms: float
    bucket: BucketKey
    rng_draw_index: int


def interval_bucket(from_cpu: MilliCpu, to_cpu: MilliCpu, load: LoadState) -> BucketKey:
    if to_cpu > from_cpu:
        direction = Direction.UP
    elif to_cpu < from_cpu:
        direction = Direction.DOWN
    else:
        direction = Direction.NONE
    return BucketKey(direction, load, bucket_floor(from_cpu), bucket_floor(to_cpu))


@dataclass(frozen=True, eq=False)
class ResizeLatencyTable:
    entries: Mapping[BucketKey, LatencyStats]
    floor_ms: float = DEFAULT_FLOOR_MS
    _sorted_keys: tuple[BucketKey, ...] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "entries", MappingProxyType(dict(self.entries)))
        object.__setattr__(self, "_sorted_keys", tuple(sorted(self.entries)))
        _validate(self)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ResizeLatencyTable):
            return NotImplemented
        return self.floor_ms == other.floor_ms and dict(self.entries) == dict(
            other.entries
        )

    __hash__ = None  # type: ignore[assignment]

    def keys(self) -> tuple[BucketKey, ...]:
        return self._sorted_keys

    def lookup(self, key: BucketKey) -> LatencyStats:
        try:
            return self.entries[key]
        except KeyError as error:
            raise CalibrationError(
                f"no calibration for bucket {key.describe()}"
            ) from error

    def with_entries(
        self, updates: Mapping[BucketKey, LatencyStats]
    ) -> ResizeLatencyTable:
        return ResizeLatencyTable({**self.entries, **updates}, floor_ms=self.floor_ms)


def _validate(table: ResizeLatencyTable) -> None:
    if not math.isfinite(table.floor_ms) or table.floor_ms < 0:
        raise CalibrationError("floor_ms must be a finite non-negative number")
    for key, stats in table.entries.items():
        if key.is_identity:
            raise CalibrationError("identity buckets cannot be calibrated")
        if not math.isfinite(stats.mean_ms) or stats.mean_ms <= 0:
            raise CalibrationError(
                f"mean_ms must be finite and positive for {key.describe()}"
            )
        if not math.isfinite(stats.std_ms) or stats.std_ms < 0:
            raise CalibrationError(
                f"std_ms must be finite and non-negative for {key.describe()}"
            )

    down_keys = sorted(
        (key for key in table.entries if key.direction is Direction.DOWN),
        key=lambda key: (key.load, key.to_bucket),
    )
    for load, group in itertools.groupby(down_keys, key=lambda key: key.load):
        lowest_so_far: tuple[float, BucketKey] | None = None
        for _, target_group in itertools.groupby(
            group, key=lambda key: key.to_bucket
        ):
            same_target = list(target_group)
            if lowest_so_far is not None:
                for key in same_target:
                    if table.entries[key].mean_ms > lowest_so_far[0]:
                        raise CalibrationError(
                            f"{load} down latency must not grow with the target: "
                            f"{lowest_so_far[1].describe()} is faster than "
                            f"{key.describe()}"
                        )
            for key in same_target:
                mean = table.entries[key].mean_ms
                if lowest_so_far is None or mean < lowest_so_far[0]:
                    lowest_so_far = (mean, key)


def _up_stats(
    load: LoadState, from_bucket: MilliCpu, to_bucket: MilliCpu, busy_pattern: str
) -> LatencyStats:
    factor = 1.0
    if load is LoadState.STRESS_CPU:
        factor = STRESS_UP_FACTORS[busy_pattern].get((from_bucket, to_bucket), 1.0)
    return LatencyStats(IDLE_UP_MEAN_MS * factor, IDLE_UP_STD_MS * factor)


def _down_stats(load: LoadState, to_bucket: MilliCpu) -> LatencyStats:
    if load is LoadState.STRESS_CPU:
        if to_bucket == 1:
            return LatencyStats(2950.0, 500.0)
        base = IDLE_UP_MEAN_MS * 1.1
        if to_bucket >= ONE_CPU:
            return LatencyStats(base, base * 0.15)
        mean = base + (600.0 - base) * ((ONE_CPU - to_bucket) / 900) ** 2
        return LatencyStats(mean, mean * 0.15)
    factor = 1.0
    if to_bucket < ONE_CPU:
        factor += 1.5 * (ONE_CPU - to_bucket) / ONE_CPU
    return LatencyStats(IDLE_UP_MEAN_MS * factor, IDLE_UP_STD_MS * factor)


def default_table(
    busy_pattern: str = "incremental",
    capacity: MilliCpu = DEFAULT_NODE_CAPACITY,
) -> ResizeLatencyTable:
    """Built-in calibration covering every bucket pair up to ``capacity``.

    Upward resizes take 56.44 ms on average whatever the starting value; CPU
    stress only slows the 1m->100m and 100m->200m intervals. Downward resizes
    slow down as the target shrinks, sharply so under CPU stress.
    """
    if busy_pattern not in STRESS_UP_FACTORS:
        raise CalibrationError(f"unknown busy pattern: {busy_pattern}")
    boundaries = bucket_boundaries(capacity)
    entries: dict[BucketKey, LatencyStats] = {}
    for load in LoadState:
        for from_bucket, to_bucket in itertools.product(boundaries, repeat=2):
            if to_bucket >= from_bucket:
                entries[BucketKey(Direction.UP, load, from_bucket, to_bucket)] = (
                    _up_stats(load, from_bucket, to_bucket, busy_pattern)
                )
            if to_bucket <= from_bucket:
                entries[BucketKey(Direction.DOWN, load, from_bucket, to_bucket)] = (
                    _down_stats(load, to_bucket)
                )
    return ResizeLatencyTable(entries, floor_ms=DEFAULT_FLOOR_MS)


def dump_calibration(table: ResizeLatencyTable) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CALIBRATION_HEADER)
    writer.writerow(["floor", "", "", "", repr(table.floor_ms), ""])
    for key in table.keys():
        stats = table.entries[key]
        writer.writerow(
            [
                key.direction.value,
                key.load.value,
                key.from_bucket,
                key.to_bucket,
                repr(stats.mean_ms),
                repr(stats.std_ms),
            ]
        )
    return buffer.getvalue()


def _parse_number(raw: str, column: str, line_number: int, kind: type) -> float:
    try:
        value = kind(raw)
    except ValueError as error:
        raise CalibrationFormatError(
            f"{column} is not a valid number: {raw!r}", line_number=line_number
        ) from error
    if not math.isfinite(value):
        raise CalibrationFormatError(
            f"{column} must be finite: {raw!r}", line_number=line_number
        )
    return value


def load_calibration(source: Path | str | Iterable[str]) -> ResizeLatencyTable:
    """Parse a calibration CSV from a path, CSV text or an iterable of lines."""
    if isinstance(source, Path):
        data = source.read_bytes()
        try:
            lines: Iterable[str] = data.decode("utf-8").splitlines()
        except UnicodeDecodeError as error:
            raise CalibrationFormatError(
                "calibration is not valid UTF-8",
                line_number=data.count(b"\n", 0, error.start) + 1,
            ) from error
    elif isinstance(source, str):
        lines = source.splitlines()
    else:
        lines = source

    reader = csv.reader(lines)
    try:
        header = next(reader)
    except StopIteration as error:
        raise CalibrationFormatError("calibration is empty", line_number=1) from error
    if tuple(column.strip() for column in header) != CALIBRATION_HEADER:
        raise CalibrationFormatError(
            f"expected header {','.join(CALIBRATION_HEADER)}", line_number=1
        )

    floor_ms = DEFAULT_FLOOR_MS
    entries: dict[BucketKey, LatencyStats] = {}
    for row in reader:
        line_number = reader.line_num
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(CALIBRATION_HEADER):
            raise CalibrationFormatError(
                f"expected {len(CALIBRATION_HEADER)} columns, got {len(row)}",
                line_number=line_number,
            )
        direction_raw, load_raw, from_raw, to_raw, mean_raw, std_raw = (
            cell.strip() for cell in row
        )
        if direction_raw == "floor":
            floor_ms = _parse_number(mean_raw, "floor", line_number, float)
            continue
        try:
            direction = Direction(direction_raw)
            load = LoadState(load_raw)
        except ValueError as error:
            raise CalibrationFormatError(str(error), line_number=line_number) from error
        key = BucketKey(
            direction,
            load,
            int(_parse_number(from_raw, "from_mcpu", line_number, int)),
            int(_parse_number(to_raw, "to_mcpu", line_number, int)),
        )
        if key in entries:
            raise CalibrationError(f"duplicate calibration for {key.describe()}")
        entries[key] = LatencyStats(
            _parse_number(mean_raw, "mean_ms", line_number, float),
            _parse_number(std_raw, "std_ms", line_number, float),
        )
    return ResizeLatencyTable(entries, floor_ms=floor_ms)


def _truncated_draw(stats: LatencyStats, floor_ms: float, uniform: float) -> float:
    if stats.std_ms == 0:
        return max(stats.mean_ms, floor_ms)
    lower = (floor_ms - stats.mean_ms) / stats.std_ms
    tail = float(ndtr(-lower))
    if tail <= 0:
        return floor_ms
    z = -float(ndtri((1.0 - uniform) * tail))
    return max(floor_ms, stats.mean_ms + stats.std_ms * z)


def sample_resize_latency(
    table: ResizeLatencyTable,
    from_cpu: MilliCpu,
    to_cpu: MilliCpu,
    load: LoadState,
    rng: SeededGenerator,
) -> ResizeSample:
    key = interval_bucket(from_cpu, to_cpu, load)
    if key.is_identity:
        return ResizeSample(latency_ms=0.0, bucket=key, rng_draw_index=-1)
    stats = table.lookup(key)
    uniform, index = rng.random()
    return ResizeSample(
        latency_ms=_truncated_draw(stats, table.floor_ms, uniform),
        bucket=key,
        rng_draw_index=index,
    )


def sample_resize_latencies(
    table: ResizeLatencyTable,
    from_cpu: MilliCpu,
    to_cpu: MilliCpu,
    load: LoadState,
    rng: SeededGenerator,
    size: int,
) -> np.ndarray:
    """Vectorized form of :func:`sample_resize_latency` for Monte-Carlo runs."""
    key = interval_bucket(from_cpu, to_cpu, load)
    if key.is_identity:
        return np.zeros(size)
    stats = table.lookup(key)
    uniforms = rng.random_batch(size)
    if stats.std_ms == 0:
        return np.full(size, max(stats.mean_ms, table.floor_ms))
    lower = (table.floor_ms - stats.mean_ms) / stats.std_ms
    tail = ndtr(-lower)
    if tail <= 0:
        return np.full(size, table.floor_ms)
    z = -ndtri((1.0 - uniforms) * tail)
    return np.maximum(table.floor_ms, stats.mean_ms + stats.std_ms * z)


def truncated_mean(mean_ms: float, std_ms: float, floor_ms: float) -> float:
    """Expectation of a normal(mean, std) truncated below at ``floor_ms``."""
    if std_ms == 0:
        return max(mean_ms, floor_ms)
    lower = (floor_ms - mean_ms) / std_ms
    tail = float(ndtr(-lower))
    if tail <= 0:
        return floor_ms
    density = float(np.exp(-0.5 * lower**2) / np.sqrt(2 * np.pi))
    return mean_ms + std_ms * density / tail
