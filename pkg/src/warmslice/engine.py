"""Deterministic discrete-event simulator for one node and one policy.

The engine owns a virtual clock in milliseconds and a heap of events ordered
by ``(at, seq)``. Whenever an event may have changed the CPU configuration,
the remaining work of every running task is integrated at its old rate and
CPU is shared again with :func:`~warmslice.cpu.cfs_allocate`; completion
events whose rate changed are retracted by bumping the task version.
"""

from __future__ import annotations

import heapq
import itertools
import logging
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from enum import StrEnum

import numpy as np

from warmslice.cpu import (
    advance_work,
    cfs_allocate,
    relative_latency,
    task_duration_at,
)
from warmslice.errors import EmptyInputError, ProtocolError
from warmslice.policies import (
    SERVING,
    DispatchResize,
    Enqueue,
    Fleet,
    LaunchInstance,
    Note,
    PolicyDecision,
    RouteTo,
    ScheduleIdleExpiry,
    Terminate,
    initial_fleet,
    on_arrival,
    on_exec_complete,
    on_idle_expiry,
    on_instance_ready,
    on_resize_applied,
)
from warmslice.resize_model import sample_resize_latency
from warmslice.rng import SeededGenerator, replication_seeds, seeded_generator
from warmslice.scenario import ScenarioConfig
from warmslice.trace import TraceRecord, request_latency
from warmslice.workloads import ClosedLoop, Explicit, Poisson

logger = logging.getLogger(__name__)

__all__ = [
    "AllocationSnapshot",
    "EventKind",
    "FailedRequest",
    "RateSegment",
    "SimEvent",
    "SimulationResult",
    "Simulator",
    "SummaryStats",
    "run_scenario",
    "seeded_generator",
    "simulate",
    "simulate_replications",
    "summarize",
]


class EventKind(StrEnum):
    ARRIVAL = "arrival"
    RESIZE_APPLIED = "resize_applied"
    EXEC_COMPLETE = "exec_complete"
    IDLE_EXPIRY = "idle_expiry"
    INSTANCE_READY = "instance_ready"


@dataclass(frozen=True)
class SimEvent:
    at: float
    seq: int
    kind: EventKind
    instance_id: str | None = None
    token: int = 0
    vu: int | None = None


@dataclass(frozen=True)
class RateSegment:
    request_id: str
    instance_id: str
    start_ms: float
    end_ms: float
    rate: float

    @property
    def work(self) -> float:
        return self.rate * (self.end_ms - self.start_ms)


@dataclass(frozen=True)
class AllocationSnapshot:
    at_ms: float
    rates: Mapping[str, float]

    @property
    def total(self) -> float:
        return sum(self.rates.values())


@dataclass(frozen=True)
class FailedRequest:
    request_id: str
    arrival_ms: float
    reason: str


@dataclass(frozen=True)
class SimulationResult:
    seed: int
    records: tuple[TraceRecord, ...]
    failures: tuple[FailedRequest, ...]
    notes: tuple[str, ...]
    segments: tuple[RateSegment, ...]
    allocations: tuple[AllocationSnapshot, ...]

    def segments_for(self, request_id: str) -> list[RateSegment]:
        return [
            segment for segment in self.segments if segment.request_id == request_id
        ]


@dataclass
class _Request:
    id: str
    arrival_ms: float
    vu: int | None = None
    route_ms: float | None = None
    instance_id: str | None = None
    cold_start: bool = False
    resize_dispatch_ms: float | None = None
    resize_applied_ms: float | None = None
    exec_start_ms: float | None = None


@dataclass
class _Task:
    request_id: str
    remaining: float
    since: float
    rate: float = 0.0
    version: int = 0
    segments: list[RateSegment] = field(default_factory=list)


class Simulator:
    """One run of one scenario; not reusable once :meth:`run` returns."""

    def __init__(self, config: ScenarioConfig, *, seed: int | None = None) -> None:
        self._config = config
        self._policy = config.policy
        self._seed = config.seed if seed is None else seed
        self._arrival_rng, self._resize_rng = seeded_generator(self._seed).spawn(2)
        self._table = config.resize_table()
        self._fleet: Fleet = initial_fleet(config.policy, config.node.capacity)
        self._heap: list[tuple[float, int, SimEvent]] = []
        self._seq = itertools.count()
        self._request_ids = itertools.count(1)
        self._now = 0.0
        self._requests: dict[str, _Request] = {}
        self._tasks: dict[str, _Task] = {}
        self._up_resizes: dict[tuple[str, int], str] = {}
        self._iterations_left: dict[int, int] = {}
        self._records: list[TraceRecord] = []
        self._notes: list[str] = []
        self._segments: list[RateSegment] = []
        self._allocations: list[AllocationSnapshot] = []

    @property
    def resize_rng(self) -> SeededGenerator:
        return self._resize_rng

    def _schedule(self, at: float, kind: EventKind, **fields: object) -> None:
        if at < self._now:
            raise ProtocolError(f"{kind} scheduled at {at} before now {self._now}")
        event = SimEvent(at=at, seq=next(self._seq), kind=kind, **fields)
        heapq.heappush(self._heap, (event.at, event.seq, event))

    def _seed_arrivals(self) -> None:
        mode = self._config.driver.mode
        match mode:
            case ClosedLoop(vus=vus, iterations=iterations):
                for vu in range(vus):
                    self._iterations_left[vu] = iterations
                    self._schedule(0.0, EventKind.ARRIVAL, vu=vu)
            case Poisson(rate_rps=rate_rps, horizon_ms=horizon_ms):
                at = 0.0
                while True:
                    at += self._arrival_rng.exponential(1000.0 / rate_rps)
                    if at >= horizon_ms:
                        break
                    self._schedule(at, EventKind.ARRIVAL)
            case Explicit(arrivals_ms=arrivals_ms):
                for at in arrivals_ms:
                    self._schedule(at, EventKind.ARRIVAL)

    def run(self) -> SimulationResult:
        logger.info(
            "Simulating %s under %s with seed %d",
            self._config.workload.name,
            self._policy.kind,
            self._seed,
        )
        self._seed_arrivals()
        while self._heap:
            at, _, event = heapq.heappop(self._heap)
            self._advance_to(at)
            logger.debug("%.6f %s %s", at, event.kind, event.instance_id or "")
            self._dispatch(event)
            self._reallocate()

        failures = tuple(
            FailedRequest(request_id, self._requests[request_id].arrival_ms, "capacity")
            for request_id in self._fleet.queue
        )
        for failure in failures:
            logger.warning("Request %s never found capacity", failure.request_id)
        records = sorted(self._records, key=lambda record: record.request_id)
        logger.info(
            "Finished %d requests (%d failed) at %.3f ms",
            len(records),
            len(failures),
            self._now,
        )
        return SimulationResult(
            seed=self._seed,
            records=tuple(records),
            failures=failures,
            notes=tuple(self._notes),
            segments=tuple(self._segments),
            allocations=tuple(self._allocations),
        )

    def _dispatch(self, event: SimEvent) -> None:
        policy, fleet, now = self._policy, self._fleet, self._now
        match event.kind:
            case EventKind.ARRIVAL:
                request_id = f"r{next(self._request_ids):06d}"
                self._requests[request_id] = _Request(request_id, now, vu=event.vu)
                if event.vu is not None:
                    self._iterations_left[event.vu] -= 1
                self._apply(on_arrival(policy, fleet, request_id, now))
            case EventKind.INSTANCE_READY:
                self._apply(on_instance_ready(policy, fleet, event.instance_id, now))
                instance = self._fleet.require(event.instance_id)
                self._start_task(event.instance_id, instance.bound_request)
            case EventKind.RESIZE_APPLIED:
                decision = on_resize_applied(
                    policy, fleet, event.instance_id, event.token, now
                )
                stale = any(isinstance(action, Note) for action in decision.actions)
                key = (event.instance_id, event.token)
                request_id = self._up_resizes.pop(key, None)
                if request_id is not None and not stale:
                    self._requests[request_id].resize_applied_ms = now
                self._apply(decision)
            case EventKind.EXEC_COMPLETE:
                task = self._tasks.get(event.instance_id)
                if task is None or task.version != event.token:
                    return
                self._complete(event.instance_id, task)
            case EventKind.IDLE_EXPIRY:
                self._apply(on_idle_expiry(policy, fleet, event.instance_id, now))

    def _apply(self, decision: PolicyDecision) -> None:
        self._fleet = decision.fleet
        now = self._now
        for action in decision.actions:
            match action:
                case LaunchInstance(instance_id=instance_id, request_id=request_id):
                    self._requests[request_id].cold_start = True
                    self._schedule(
                        now + action.ready_after_ms,
                        EventKind.INSTANCE_READY,
                        instance_id=instance_id,
                    )
                case RouteTo(instance_id=instance_id, request_id=request_id):
                    request = self._requests[request_id]
                    request.route_ms = now
                    request.instance_id = instance_id
                    if self._fleet.require(instance_id).phase in SERVING:
                        self._start_task(instance_id, request_id)
                case DispatchResize():
                    self._dispatch_resize(action)
                case ScheduleIdleExpiry(instance_id=instance_id, at=at):
                    self._schedule(at, EventKind.IDLE_EXPIRY, instance_id=instance_id)
                case Terminate(instance_id=instance_id):
                    logger.debug("Terminated %s at %.3f", instance_id, now)
                case Enqueue(request_id=request_id, capacity_failure=True):
                    logger.warning("Queued %s until capacity frees up", request_id)
                case Enqueue():
                    pass
                case Note(message=message):
                    self._notes.append(message)
                    logger.debug("%s", message)

    def _dispatch_resize(self, action: DispatchResize) -> None:
        sample = sample_resize_latency(
            self._table, action.from_cpu, action.target, action.load, self._resize_rng
        )
        self._schedule(
            self._now + sample.latency_ms,
            EventKind.RESIZE_APPLIED,
            instance_id=action.instance_id,
            token=action.token,
        )
        if action.target > action.from_cpu:
            request_id = self._fleet.require(action.instance_id).bound_request
            if request_id is not None:
                self._requests[request_id].resize_dispatch_ms = self._now
                self._up_resizes[(action.instance_id, action.token)] = request_id

    def _start_task(self, instance_id: str, request_id: str | None) -> None:
        if request_id is None:
            raise ProtocolError(f"{instance_id} has no request to execute")
        self._requests[request_id].exec_start_ms = self._now
        self._tasks[instance_id] = _Task(
            request_id=request_id,
            remaining=self._config.workload.work,
            since=self._now,
        )

    def _advance_to(self, at: float) -> None:
        for instance_id, task in self._tasks.items():
            elapsed = at - task.since
            if elapsed > 0:
                task.segments.append(
                    RateSegment(task.request_id, instance_id, task.since, at, task.rate)
                )
                task.remaining = advance_work(task.remaining, task.rate, elapsed)
            task.since = at
        self._now = at

    def _reallocate(self) -> None:
        if not self._tasks:
            return
        instance_ids = list(self._tasks)
        limits = [self._fleet.require(iid).current_cpu for iid in instance_ids]
        allocation = cfs_allocate(limits, self._config.node.capacity)
        rates = dict(zip(instance_ids, allocation.rates, strict=True))
        for instance_id, rate in rates.items():
            task = self._tasks[instance_id]
            if task.version and rate == task.rate:
                continue
            task.rate = rate
            task.version += 1
            self._schedule(
                self._now + task_duration_at(task.remaining, rate),
                EventKind.EXEC_COMPLETE,
                instance_id=instance_id,
                token=task.version,
            )
        snapshot = {self._tasks[iid].request_id: rate for iid, rate in rates.items()}
        if not self._allocations or self._allocations[-1].rates != snapshot:
            self._allocations.append(AllocationSnapshot(self._now, snapshot))

    def _complete(self, instance_id: str, task: _Task) -> None:
        del self._tasks[instance_id]
        self._segments.extend(task.segments)
        request = self._requests[task.request_id]
        if request.route_ms is None or request.exec_start_ms is None:
            raise ProtocolError(f"{request.id} completed before it was routed")
        workload = self._config.workload
        completion = (
            self._now + workload.fixed_ms + self._policy.platform_overhead_ms
        )
        self._records.append(
            TraceRecord(
                request_id=request.id,
                workload=workload.name,
                policy=self._policy.kind.value,
                arrival_ms=request.arrival_ms,
                route_ms=request.route_ms,
                exec_start_ms=request.exec_start_ms,
                completion_ms=completion,
                instance_id=instance_id,
                cold_start=request.cold_start,
                resize_dispatch_ms=request.resize_dispatch_ms,
                resize_applied_ms=request.resize_applied_ms,
            )
        )
        self._apply(on_exec_complete(self._policy, self._fleet, instance_id, self._now))
        if request.vu is not None and self._iterations_left[request.vu] > 0:
            think_time = self._config.driver.mode.think_time_ms
            self._schedule(completion + think_time, EventKind.ARRIVAL, vu=request.vu)


def simulate(config: ScenarioConfig, *, seed: int | None = None) -> SimulationResult:
    return Simulator(config, seed=seed).run()


def simulate_replications(config: ScenarioConfig) -> list[SimulationResult]:
    """One result per replication; replication 0 runs with the scenario seed."""
    return [
        simulate(config, seed=seed)
        for seed in replication_seeds(config.seed, config.replications)
    ]


def run_scenario(config: ScenarioConfig) -> list[TraceRecord]:
    return list(simulate(config).records)


@dataclass(frozen=True)
class SummaryStats:
    count: int
    mean_ms: float
    std_ms: float
    p50: float
    p95: float
    p99: float
    relative_to_baseline: float | None = None
    failed: int = 0
    cold_starts: int = 0


def summarize(
    trace: Sequence[TraceRecord],
    baseline_mean: float | None = None,
    *,
    failed: int = 0,
) -> SummaryStats:
    if not trace:
        raise EmptyInputError("cannot summarize an empty trace")
    latencies = np.array([request_latency(record) for record in trace])
    p50, p95, p99 = np.percentile(latencies, [50, 95, 99])
    mean = float(latencies.mean())
    relative = None
    if baseline_mean is not None:
        relative = relative_latency(mean, baseline_mean)
    return SummaryStats(
        count=len(trace),
        mean_ms=mean,
        std_ms=float(latencies.std()),
        p50=float(p50),
        p95=float(p95),
        p99=float(p99),
        relative_to_baseline=relative,
        failed=failed,
        cold_starts=sum(1 for record in trace if record.cold_start),
    )
