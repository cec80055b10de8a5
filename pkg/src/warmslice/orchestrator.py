"""Wall-clock resize harness.

A fake container is a directory holding a CPU-limit file. Patches are applied
to that file on a timer after an injected latency while a watcher polls it
and reports the dispatch-to-visible duration.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import threading
import time
from collections import Counter
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Self

from warmslice.backends.file import FileLimitBackend
from warmslice.cpu import MilliCpu, require_millicpu
from warmslice.errors import (
    AlreadyExistsError,
    InvalidInputError,
    NotFoundError,
    WatchTimeoutError,
)
from warmslice.resize_model import (
    LoadState,
    ResizeLatencyTable,
    sample_resize_latency,
)
from warmslice.rng import SeededGenerator
from warmslice.trace import provenance_line
from warmslice.workloads import ResizePlan

logger = logging.getLogger(__name__)

MEASUREMENT_HEADER = (
    "plan_id",
    "step_index",
    "from_mcpu",
    "to_mcpu",
    "repetition",
    "injected_ms",
    "measured_ms",
)
DEFAULT_POLL_US = 1000
DEFAULT_SLACK_MS = 20.0
NANOS_PER_MS = 1_000_000


class LimitBackend(Protocol):
    name: str

    def limit_path(self, directory: Path) -> Path: ...

    def write(self, directory: Path, limit: MilliCpu) -> None: ...

    def read(self, directory: Path) -> MilliCpu: ...


class LatencySource(Protocol):
    def next_latency(self, from_cpu: MilliCpu, to_cpu: MilliCpu) -> float: ...


@dataclass(frozen=True)
class FixedLatency:
    latency_ms: float

    def __post_init__(self) -> None:
        if self.latency_ms < 0:
            raise InvalidInputError("latency_ms must not be negative")

    def next_latency(self, from_cpu: MilliCpu, to_cpu: MilliCpu) -> float:
        return self.latency_ms


class SampledLatency:
    """Draws each injected latency from a calibration table."""

    def __init__(
        self,
        table: ResizeLatencyTable,
        load: LoadState,
        generator: SeededGenerator,
    ) -> None:
        self._table = table
        self._load = load
        self._generator = generator

    def next_latency(self, from_cpu: MilliCpu, to_cpu: MilliCpu) -> float:
        return sample_resize_latency(
            self._table, from_cpu, to_cpu, self._load, self._generator
        ).latency_ms


@dataclass
class ContainerHandle:
    id: str
    directory: Path
    limit_file: Path
    current_limit: MilliCpu


@dataclass
class _PatchQueue:
    """Tickets handed out per container; applies happen in ticket order."""

    condition: threading.Condition = field(default_factory=threading.Condition)
    dispatched: int = 0
    applied: int = 0

    def take_ticket(self) -> int:
        with self.condition:
            self.dispatched += 1
            return self.dispatched


@dataclass(frozen=True)
class PatchRecord:
    container_id: str
    dispatch_ns: int
    target: MilliCpu
    injected_latency_ms: float

    def __post_init__(self) -> None:
        if self.injected_latency_ms < 0:
            raise InvalidInputError("injected_latency_ms must not be negative")


@dataclass(frozen=True)
class WatchRecord:
    detect_ns: int
    observed_value: MilliCpu
    poll_interval_us: int


@dataclass(frozen=True)
class Measurement:
    plan_id: str
    step_index: int
    from_cpu: MilliCpu
    to_cpu: MilliCpu
    repetition: int
    injected_ms: float
    measured_ms: float


class MockOrchestrator:
    """Owns fake containers under ``workdir``; patches are serialized per container."""

    def __init__(
        self,
        workdir: Path,
        *,
        backend: LimitBackend | None = None,
        watch_timeout_seconds: float = 30.0,
        slack_ms: float = DEFAULT_SLACK_MS,
    ) -> None:
        self._workdir = Path(workdir)
        self._backend = backend or FileLimitBackend()
        self._watch_timeout_seconds = watch_timeout_seconds
        self.slack_ms = slack_ms
        self._containers: dict[str, ContainerHandle] = {}
        self._queues: dict[str, _PatchQueue] = {}
        self._plan_runs: Counter[str] = Counter()
        self._closed = False
        self._registry_lock = threading.Lock()
        self._timers: list[threading.Timer] = []

    def __enter__(self) -> Self:
        return self

    def __exit__(self, *exc_info: object) -> None:
        self.close()

    def close(self) -> None:
        """Cancel patches that have not been applied yet."""
        with self._registry_lock:
            self._closed = True
            timers, self._timers = self._timers, []
            queues = list(self._queues.values())
        for timer in timers:
            timer.cancel()
        for queue in queues:
            with queue.condition:
                queue.condition.notify_all()

    def create_container(
        self, container_id: str, initial_limit: MilliCpu
    ) -> ContainerHandle:
        require_millicpu(initial_limit, name="initial_limit")
        directory = self._workdir / container_id
        with self._registry_lock:
            if container_id in self._containers:
                raise AlreadyExistsError(f"container {container_id} already exists")
            try:
                directory.mkdir(parents=True)
            except FileExistsError as error:
                raise AlreadyExistsError(
                    f"container {container_id} already exists in {self._workdir}"
                ) from error
            self._backend.write(directory, initial_limit)
            handle = ContainerHandle(
                id=container_id,
                directory=directory,
                limit_file=self._backend.limit_path(directory),
                current_limit=initial_limit,
            )
            self._containers[container_id] = handle
            self._queues[container_id] = _PatchQueue()
        return handle

    def container(self, container_id: str) -> ContainerHandle:
        try:
            return self._containers[container_id]
        except KeyError as error:
            raise NotFoundError(f"unknown container {container_id}") from error

    def read_limit(self, handle: ContainerHandle) -> MilliCpu:
        return self._backend.read(self.container(handle.id).directory)

    def set_limit(self, handle: ContainerHandle, limit: MilliCpu) -> None:
        """Write ``limit`` right away, outside of any measurement."""
        container = self.container(handle.id)
        ticket = self._queues[container.id].take_ticket()
        self._apply(container, limit, ticket, not_before_ns=0)

    def _apply(
        self,
        handle: ContainerHandle,
        limit: MilliCpu,
        ticket: int,
        not_before_ns: int,
    ) -> None:
        wait_ns = not_before_ns - time.perf_counter_ns()
        if wait_ns > 0:
            time.sleep(wait_ns / 1e9)
        queue = self._queues[handle.id]
        with queue.condition:
            queue.condition.wait_for(
                lambda: self._closed or queue.applied == ticket - 1
            )
            if self._closed:
                return
            self._backend.write(handle.directory, limit)
            handle.current_limit = limit
            queue.applied = ticket
            queue.condition.notify_all()

    def patch_cpu_limit(
        self,
        handle: ContainerHandle,
        to: MilliCpu,
        injected_latency_ms: float,
    ) -> PatchRecord:
        """Dispatch a patch and return at once; the file changes later.

        A patch never lands before one dispatched earlier to the same container.
        """
        container = self.container(handle.id)
        require_millicpu(to, name="to")
        dispatch_ns = time.perf_counter_ns()
        record = PatchRecord(container.id, dispatch_ns, to, injected_latency_ms)
        not_before_ns = dispatch_ns + math.ceil(injected_latency_ms * NANOS_PER_MS)
        ticket = self._queues[container.id].take_ticket()
        if injected_latency_ms == 0:
            self._apply(container, to, ticket, not_before_ns)
            return record
        timer = threading.Timer(
            injected_latency_ms / 1000,
            self._apply,
            args=(container, to, ticket, not_before_ns),
        )
        timer.daemon = True
        with self._registry_lock:
            self._timers = [pending for pending in self._timers if pending.is_alive()]
            self._timers.append(timer)
        timer.start()
        return record

    def watch(
        self,
        handle: ContainerHandle,
        expected: MilliCpu,
        *,
        poll_interval_us: int = DEFAULT_POLL_US,
    ) -> WatchRecord:
        """Poll the limit file until it shows ``expected``."""
        container = self.container(handle.id)
        deadline = time.perf_counter() + self._watch_timeout_seconds
        while True:
            observed = self._backend.read(container.directory)
            if observed == expected:
                return WatchRecord(time.perf_counter_ns(), observed, poll_interval_us)
            if time.perf_counter() > deadline:
                raise WatchTimeoutError(
                    f"{container.id} did not reach {expected}m within "
                    f"{self._watch_timeout_seconds}s (last seen {observed}m)"
                )
            time.sleep(poll_interval_us / 1e6)

    def measure_resize(
        self,
        handle: ContainerHandle,
        to: MilliCpu,
        injected_latency_ms: float,
        poll_interval_us: int = DEFAULT_POLL_US,
    ) -> float:
        if poll_interval_us <= 0:
            raise InvalidInputError("poll_interval_us must be positive")
        current = self.read_limit(handle)
        if current == to:
            raise InvalidInputError(f"{handle.id} is already at {to}m")
        patch = self.patch_cpu_limit(handle, to, injected_latency_ms)
        seen = self.watch(handle, to, poll_interval_us=poll_interval_us)
        duration_ms = (seen.detect_ns - patch.dispatch_ns) / NANOS_PER_MS
        overrun_ms = duration_ms - injected_latency_ms
        if overrun_ms > poll_interval_us / 1000 + self.slack_ms:
            logger.warning(
                "Resize of %s to %sm took %.3f ms over its injected %.3f ms",
                handle.id,
                to,
                overrun_ms,
                injected_latency_ms,
            )
        return duration_ms

    def run_plan(
        self,
        plan: ResizePlan,
        latency_source: LatencySource,
        poll_interval_us: int = DEFAULT_POLL_US,
        repetitions: int = 1,
    ) -> list[Measurement]:
        """Measure every timed step ``repetitions`` times.

        Each repetition starts from a fresh container at the plan's initial
        value, named ``<plan>-run<n>-r<repetition>`` where ``n`` counts earlier
        runs of the same plan. Untimed reset steps are applied but not measured.
        """
        if repetitions < 1:
            raise InvalidInputError("repetitions must be at least 1")
        with self._registry_lock:
            run = self._plan_runs[plan.plan_id]
            self._plan_runs[plan.plan_id] += 1
        measurements: list[Measurement] = []
        for repetition in range(repetitions):
            handle = self.create_container(
                f"{plan.plan_id}-run{run}-r{repetition}", plan.steps[0].from_cpu
            )
            for step in plan.steps:
                if not step.timed:
                    self.set_limit(handle, step.to_cpu)
                    continue
                injected = latency_source.next_latency(step.from_cpu, step.to_cpu)
                try:
                    measured = self.measure_resize(
                        handle, step.to_cpu, injected, poll_interval_us
                    )
                except WatchTimeoutError as error:
                    raise WatchTimeoutError(
                        str(error), step_index=step.index
                    ) from error
                measurements.append(
                    Measurement(
                        plan_id=plan.plan_id,
                        step_index=step.index,
                        from_cpu=step.from_cpu,
                        to_cpu=step.to_cpu,
                        repetition=repetition,
                        injected_ms=injected,
                        measured_ms=measured,
                    )
                )
            logger.info(
                "Plan %s repetition %d: %d steps measured",
                plan.plan_id,
                repetition,
                len(plan.timed_steps),
            )
        return measurements


def dump_measurements(
    measurements: Iterable[Measurement],
    provenance: Mapping[str, object] | None = None,
) -> str:
    buffer = io.StringIO()
    if provenance:
        buffer.write(provenance_line(provenance) + "\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(MEASUREMENT_HEADER)
    for item in measurements:
        writer.writerow(
            [
                item.plan_id,
                item.step_index,
                item.from_cpu,
                item.to_cpu,
                item.repetition,
                repr(item.injected_ms),
                repr(item.measured_ms),
            ]
        )
    return buffer.getvalue()


def parse_measurements(text: str) -> list[Measurement]:
    lines = [line for line in text.splitlines() if not line.startswith("#")]
    reader = csv.DictReader(lines)
    if tuple(reader.fieldnames or ()) != MEASUREMENT_HEADER:
        raise InvalidInputError(
            f"measurements must start with {','.join(MEASUREMENT_HEADER)}"
        )
    try:
        return [
            Measurement(
                plan_id=row["plan_id"],
                step_index=int(row["step_index"]),
                from_cpu=int(row["from_mcpu"]),
                to_cpu=int(row["to_mcpu"]),
                repetition=int(row["repetition"]),
                injected_ms=float(row["injected_ms"]),
                measured_ms=float(row["measured_ms"]),
            )
            for row in reader
        ]
    except ValueError as error:
        raise InvalidInputError(f"measurements: {error}") from error
