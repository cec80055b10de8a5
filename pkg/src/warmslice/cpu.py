"""CPU quantities and the arithmetic the simulator is built on.

Rates are milliCPU; work is milliCPU·milliseconds, so a task of ``work`` units
running at ``rate`` finishes in ``work / rate`` milliseconds. Runtimes measured
with one full CPU anchor the model at 1000m.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

from warmslice.errors import InvalidInputError

type MilliCpu = int
type CpuWork = float

ONE_CPU: MilliCpu = 1000
DEFAULT_NODE_CAPACITY: MilliCpu = 8000


def require_millicpu(
    value: int, *, name: str = "value", capacity: int | None = None
) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise InvalidInputError(f"{name} must be an integer milliCPU value")
    if value < 1:
        raise InvalidInputError(f"{name} must be at least 1m")
    if capacity is not None and value > capacity:
        raise InvalidInputError(f"{name} must not exceed the node capacity {capacity}m")
    return value


@dataclass(frozen=True)
class NodeSpec:
    capacity: MilliCpu = DEFAULT_NODE_CAPACITY

    def __post_init__(self) -> None:
        require_millicpu(self.capacity, name="capacity")
        if self.capacity < ONE_CPU:
            raise InvalidInputError("capacity must be at least 1000m")


@dataclass(frozen=True)
class WorkloadSpec:
    name: str
    runtime_at_1000m: float
    cpu_bound_fraction: float = 1.0

    def __post_init__(self) -> None:
        if not self.name:
            raise InvalidInputError("workload name must not be empty")
        if self.runtime_at_1000m < 0:
            raise InvalidInputError("runtime_at_1000m must not be negative")
        if not 0 <= self.cpu_bound_fraction <= 1:
            raise InvalidInputError("cpu_bound_fraction must be between 0 and 1")

    @property
    def work(self) -> CpuWork:
        return self.runtime_at_1000m * ONE_CPU * self.cpu_bound_fraction

    @property
    def fixed_ms(self) -> float:
        """Share of the runtime that does not scale with CPU."""
        return self.runtime_at_1000m * (1 - self.cpu_bound_fraction)


@dataclass(frozen=True)
class Allocation:
    rates: tuple[float, ...]

    @property
    def total(self) -> float:
        return sum(self.rates)

    def __len__(self) -> int:
        return len(self.rates)

    def __getitem__(self, index: int) -> float:
        return self.rates[index]


def cfs_share(
    weights: Sequence[float],
    capacity: float,
    caps: Sequence[float] | None = None,
) -> Allocation:
    """Split ``capacity`` in proportion to ``weights``, honouring optional caps.

    Claimants whose proportional share reaches their cap are pinned there and
    the surplus is split again among the rest until nothing else saturates.
    """
    if not weights:
        raise InvalidInputError("at least one claimant is required")
    if capacity < 1:
        raise InvalidInputError("capacity must be at least 1m")
    if any(weight <= 0 for weight in weights):
        raise InvalidInputError("weights must be positive")
    if caps is not None and len(caps) != len(weights):
        raise InvalidInputError("caps and weights must have the same length")

    rates = [0.0] * len(weights)
    active = set(range(len(weights)))
    remaining = float(capacity)
    while active:
        total_weight = sum(weights[index] for index in active)
        saturated = [
            index
            for index in active
            if caps is not None
            and remaining * weights[index] / total_weight >= caps[index]
        ]
        if not saturated:
            for index in active:
                rates[index] = remaining * weights[index] / total_weight
            break
        for index in saturated:
            rates[index] = float(caps[index])
            remaining -= caps[index]
            active.discard(index)
    return Allocation(tuple(rates))


def cfs_allocate(limits: Sequence[MilliCpu], capacity: MilliCpu) -> Allocation:
    """Water-fill ``capacity`` over instances using each limit as weight and cap."""
    if not limits:
        raise InvalidInputError("limits must not be empty")
    for limit in limits:
        require_millicpu(limit, name="limit")
    return cfs_share(limits, capacity, caps=limits)


def task_duration_at(work: CpuWork, rate: float) -> float:
    if rate <= 0:
        raise InvalidInputError("rate must be positive")
    if work < 0:
        raise InvalidInputError("work must not be negative")
    return work / rate


def advance_work(remaining: CpuWork, rate: float, dt: float) -> CpuWork:
    if dt < 0:
        raise InvalidInputError("dt must not be negative")
    if rate < 0:
        raise InvalidInputError("rate must not be negative")
    return max(0.0, remaining - rate * dt)


def relative_latency(policy_mean: float, default_mean: float) -> float:
    if default_mean <= 0:
        raise InvalidInputError("default_mean must be positive")
    return policy_mean / default_mean
