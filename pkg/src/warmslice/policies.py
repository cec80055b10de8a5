"""Cold, Warm, In-place and Default scheduling policies.

Every handler is a pure transition: it takes the current :class:`Fleet` and an
event and returns a :class:`PolicyDecision` holding the next fleet and the
ordered actions the simulator must carry out. Instances serve one request at
a time.
"""

from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass, field, replace
from enum import StrEnum
from types import MappingProxyType

from warmslice.cpu import ONE_CPU, MilliCpu
from warmslice.errors import InvalidInputError, ProtocolError
from warmslice.resize_model import LoadState


class PolicyKind(StrEnum):
    COLD = "cold"
    WARM = "warm"
    INPLACE = "inplace"
    DEFAULT = "default"


class Phase(StrEnum):
    LAUNCHING = "launching"
    IDLE = "idle"
    BUSY = "busy"
    SCALING_UP = "scaling_up"
    PARKED = "parked"
    SCALING_DOWN = "scaling_down"
    TERMINATED = "terminated"


RESIZING = frozenset({Phase.SCALING_UP, Phase.SCALING_DOWN})
SERVING = frozenset({Phase.BUSY, Phase.SCALING_UP})


@dataclass(frozen=True)
class PolicyConfig:
    kind: PolicyKind
    stable_window_ms: float = 6000.0
    min_scale: int = 1
    park_cpu: MilliCpu = 1
    active_cpu: MilliCpu = ONE_CPU
    cold_start_ms: float = 0.0
    platform_overhead_ms: float = 0.0
    parked_pool: int = 1
    up_load: LoadState = LoadState.IDLE

    def __post_init__(self) -> None:
        if self.park_cpu < 1:
            raise InvalidInputError("park_cpu must be at least 1m")
        if self.park_cpu >= self.active_cpu:
            raise InvalidInputError("park_cpu must be lower than active_cpu")
        if self.stable_window_ms <= 0:
            raise InvalidInputError("stable_window_ms must be positive")
        if self.min_scale < 1:
            raise InvalidInputError("min_scale must be at least 1")
        if self.cold_start_ms < 0:
            raise InvalidInputError("cold_start_ms must not be negative")
        if self.platform_overhead_ms < 0:
            raise InvalidInputError("platform_overhead_ms must not be negative")
        if self.parked_pool < 0:
            raise InvalidInputError("parked_pool must not be negative")


@dataclass(frozen=True)
class InstanceState:
    id: str
    phase: Phase
    current_cpu: MilliCpu
    pending_target: MilliCpu | None = None
    idle_deadline: float | None = None
    bound_request: str | None = None
    awaiting_request: str | None = None
    resize_token: int = 0

    def __post_init__(self) -> None:
        if (self.pending_target is not None) != (self.phase in RESIZING):
            raise ProtocolError(
                f"{self.id}: pending_target must be set exactly while resizing"
            )
        if (self.bound_request is not None) != (self.phase in SERVING):
            raise ProtocolError(
                f"{self.id}: bound_request must be set exactly while serving"
            )

    @property
    def live(self) -> bool:
        return self.phase is not Phase.TERMINATED

    @property
    def reserved_cpu(self) -> MilliCpu:
        if not self.live:
            return 0
        return max(self.current_cpu, self.pending_target or 0)


@dataclass(frozen=True)
class Fleet:
    capacity: MilliCpu
    instances: Mapping[str, InstanceState] = field(default_factory=dict)
    queue: tuple[str, ...] = ()
    launched: int = 0
    terminated: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "instances", MappingProxyType(dict(self.instances)))

    def get(self, instance_id: str) -> InstanceState | None:
        return self.instances.get(instance_id)

    def require(self, instance_id: str) -> InstanceState:
        instance = self.instances.get(instance_id)
        if instance is None:
            raise ProtocolError(f"unknown instance {instance_id}")
        return instance

    def first_in(self, *phases: Phase) -> InstanceState | None:
        for phase in phases:
            for instance in self.instances.values():
                if instance.phase is phase:
                    return instance
        return None

    def live_count(self) -> int:
        return sum(1 for instance in self.instances.values() if instance.live)

    def reserved_cpu(self) -> MilliCpu:
        return sum(instance.reserved_cpu for instance in self.instances.values())

    def put(self, instance: InstanceState) -> Fleet:
        return replace(self, instances={**self.instances, instance.id: instance})

    def retire(self, instance_id: str) -> Fleet:
        """Drop a terminated instance; only the count of retirements is kept."""
        self.require(instance_id)
        instances = {
            key: value for key, value in self.instances.items() if key != instance_id
        }
        return replace(self, instances=instances, terminated=self.terminated + 1)

    def spawn(self, phase: Phase, cpu: MilliCpu, **fields: object) -> tuple[Fleet, str]:
        instance_id = f"i{self.launched + 1:04d}"
        instance = InstanceState(id=instance_id, phase=phase, current_cpu=cpu, **fields)
        fleet = replace(
            self,
            instances={**self.instances, instance_id: instance},
            launched=self.launched + 1,
        )
        return fleet, instance_id


@dataclass(frozen=True)
class LaunchInstance:
    instance_id: str
    cpu: MilliCpu
    request_id: str
    ready_after_ms: float


@dataclass(frozen=True)
class RouteTo:
    instance_id: str
    request_id: str


@dataclass(frozen=True)
class DispatchResize:
    instance_id: str
    from_cpu: MilliCpu
    target: MilliCpu
    load: LoadState
    token: int


@dataclass(frozen=True)
class ScheduleIdleExpiry:
    instance_id: str
    at: float


@dataclass(frozen=True)
class Terminate:
    instance_id: str


@dataclass(frozen=True)
class Enqueue:
    request_id: str
    capacity_failure: bool = False


@dataclass(frozen=True)
class Note:
    message: str


type Action = (
    LaunchInstance
    | RouteTo
    | DispatchResize
    | ScheduleIdleExpiry
    | Terminate
    | Enqueue
    | Note
)


@dataclass(frozen=True)
class PolicyDecision:
    fleet: Fleet
    actions: tuple[Action, ...] = ()

    def then(self, other: PolicyDecision) -> PolicyDecision:
        return PolicyDecision(other.fleet, self.actions + other.actions)


def initial_fleet(policy: PolicyConfig, capacity: MilliCpu) -> Fleet:
    """Instances that exist before the first request arrives."""
    fleet = Fleet(capacity=capacity)
    if policy.kind in {PolicyKind.WARM, PolicyKind.DEFAULT}:
        for _ in range(policy.min_scale):
            fleet, _ = fleet.spawn(Phase.IDLE, policy.active_cpu)
    elif policy.kind is PolicyKind.INPLACE:
        for _ in range(policy.parked_pool):
            fleet, _ = fleet.spawn(Phase.PARKED, policy.park_cpu)
    if fleet.reserved_cpu() > capacity:
        raise InvalidInputError("pre-provisioned instances exceed the node capacity")
    return fleet


def _route(fleet: Fleet, instance: InstanceState, request_id: str) -> PolicyDecision:
    busy = replace(
        instance,
        phase=Phase.BUSY,
        idle_deadline=None,
        bound_request=request_id,
    )
    return PolicyDecision(fleet.put(busy), (RouteTo(instance.id, request_id),))


def _launch(
    policy: PolicyConfig, fleet: Fleet, request_id: str, *, from_queue: bool
) -> PolicyDecision:
    if fleet.reserved_cpu() + policy.active_cpu > fleet.capacity:
        if from_queue:
            return PolicyDecision(replace(fleet, queue=(request_id, *fleet.queue)))
        queued = replace(fleet, queue=(*fleet.queue, request_id))
        return PolicyDecision(
            queued,
            (
                Note(f"capacity exhausted launching an instance for {request_id}"),
                Enqueue(request_id, capacity_failure=True),
            ),
        )
    fleet, instance_id = fleet.spawn(
        Phase.LAUNCHING, policy.active_cpu, awaiting_request=request_id
    )
    return PolicyDecision(
        fleet,
        (
            LaunchInstance(
                instance_id, policy.active_cpu, request_id, policy.cold_start_ms
            ),
            RouteTo(instance_id, request_id),
        ),
    )


def _claim_parked(
    policy: PolicyConfig, fleet: Fleet, instance: InstanceState, request_id: str
) -> PolicyDecision:
    # A scale-down still in flight is superseded: the instance counts as parked.
    token = instance.resize_token + 1
    scaling = replace(
        instance,
        phase=Phase.SCALING_UP,
        current_cpu=policy.park_cpu,
        pending_target=policy.active_cpu,
        bound_request=request_id,
        resize_token=token,
    )
    return PolicyDecision(
        fleet.put(scaling),
        (
            DispatchResize(
                instance.id, policy.park_cpu, policy.active_cpu, policy.up_load, token
            ),
            RouteTo(instance.id, request_id),
        ),
    )


def _admit(
    policy: PolicyConfig,
    fleet: Fleet,
    request_id: str,
    *,
    from_queue: bool = False,
) -> PolicyDecision:
    if policy.kind is PolicyKind.INPLACE:
        parked = fleet.first_in(Phase.PARKED, Phase.SCALING_DOWN)
        if parked is not None:
            return _claim_parked(policy, fleet, parked, request_id)
        return _launch(policy, fleet, request_id, from_queue=from_queue)

    idle = fleet.first_in(Phase.IDLE)
    if idle is not None:
        return _route(fleet, idle, request_id)
    if policy.kind is PolicyKind.COLD:
        return _launch(policy, fleet, request_id, from_queue=from_queue)
    if from_queue:
        return PolicyDecision(replace(fleet, queue=(request_id, *fleet.queue)))
    return PolicyDecision(
        replace(fleet, queue=(*fleet.queue, request_id)), (Enqueue(request_id),)
    )


def on_arrival(
    policy: PolicyConfig, fleet: Fleet, request_id: str, now: float
) -> PolicyDecision:
    """Place a new request: warm hit, in-place claim, cold launch or queue."""
    return _admit(policy, fleet, request_id)


def _drain_queue(policy: PolicyConfig, decision: PolicyDecision) -> PolicyDecision:
    fleet = decision.fleet
    if not fleet.queue:
        return decision
    head, *rest = fleet.queue
    admitted = _admit(policy, replace(fleet, queue=tuple(rest)), head, from_queue=True)
    return decision.then(admitted)


def on_instance_ready(
    policy: PolicyConfig, fleet: Fleet, instance_id: str, now: float
) -> PolicyDecision:
    instance = fleet.require(instance_id)
    if instance.phase is not Phase.LAUNCHING or instance.awaiting_request is None:
        raise ProtocolError(f"{instance_id} became ready while {instance.phase}")
    # The request was routed at launch time; execution starts now.
    busy = replace(
        instance,
        phase=Phase.BUSY,
        bound_request=instance.awaiting_request,
        awaiting_request=None,
    )
    return PolicyDecision(fleet.put(busy))


def on_resize_applied(
    policy: PolicyConfig,
    fleet: Fleet,
    instance_id: str,
    token: int,
    now: float,
) -> PolicyDecision:
    instance = fleet.get(instance_id)
    if (
        instance is None
        or instance.phase not in RESIZING
        or instance.resize_token != token
    ):
        return PolicyDecision(fleet, (Note(f"stale resize event for {instance_id}"),))
    if instance.phase is Phase.SCALING_UP:
        updated = replace(
            instance,
            phase=Phase.BUSY,
            current_cpu=instance.pending_target or policy.active_cpu,
            pending_target=None,
        )
    else:
        updated = replace(
            instance,
            phase=Phase.PARKED,
            current_cpu=policy.park_cpu,
            pending_target=None,
        )
    return PolicyDecision(fleet.put(updated))


def on_exec_complete(
    policy: PolicyConfig, fleet: Fleet, instance_id: str, now: float
) -> PolicyDecision:
    """Release an instance whose task finished and hand it the next queued request."""
    instance = fleet.require(instance_id)
    if instance.phase not in SERVING or instance.bound_request is None:
        raise ProtocolError(f"{instance_id} completed a task while {instance.phase}")

    if policy.kind is PolicyKind.INPLACE:
        token = instance.resize_token + 1
        # An up-resize still in flight lands before the scale-down.
        from_cpu = instance.pending_target or instance.current_cpu
        released = replace(
            instance,
            phase=Phase.SCALING_DOWN,
            current_cpu=from_cpu,
            pending_target=policy.park_cpu,
            bound_request=None,
            resize_token=token,
        )
        decision = PolicyDecision(
            fleet.put(released),
            (
                DispatchResize(
                    instance_id, from_cpu, policy.park_cpu, LoadState.IDLE, token
                ),
            ),
        )
    elif policy.kind is PolicyKind.DEFAULT:
        released = replace(instance, phase=Phase.IDLE, bound_request=None)
        decision = PolicyDecision(fleet.put(released))
    else:
        deadline = now + policy.stable_window_ms
        released = replace(
            instance,
            phase=Phase.IDLE,
            bound_request=None,
            idle_deadline=deadline,
        )
        decision = PolicyDecision(
            fleet.put(released), (ScheduleIdleExpiry(instance_id, deadline),)
        )
    return _drain_queue(policy, decision)


def on_idle_expiry(
    policy: PolicyConfig, fleet: Fleet, instance_id: str, now: float
) -> PolicyDecision:
    instance = fleet.get(instance_id)
    if (
        instance is None
        or instance.phase is not Phase.IDLE
        or instance.idle_deadline != now
    ):
        return PolicyDecision(fleet)
    if policy.kind is PolicyKind.WARM and fleet.live_count() - 1 < policy.min_scale:
        return PolicyDecision(fleet.put(replace(instance, idle_deadline=None)))
    if policy.kind not in {PolicyKind.COLD, PolicyKind.WARM}:
        return PolicyDecision(fleet)
    decision = PolicyDecision(fleet.retire(instance_id), (Terminate(instance_id),))
    return _drain_queue(policy, decision)
