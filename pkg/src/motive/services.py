"""Service catalog, beacons, and matching of provided against required services."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from motive.errors import InvalidDescriptor
from motive.identity import PeerId
from motive.mobility import TrajectoryPlan


class ServiceKind(str, Enum):
    DATA_TOPIC = "DataTopic"
    NAMED_FUNCTION = "NamedFunction"


class Unit(str, Enum):
    PER_CHUNK = "PerChunk"
    PER_TASK = "PerTask"


KIND_ORDER = {ServiceKind.DATA_TOPIC: 0, ServiceKind.NAMED_FUNCTION: 1}

DATA_TOPICS = ("speed", "vehicleCount", "chargeAvailability")
NAMED_FUNCTIONS = ("objectDetection",)


@dataclass(frozen=True)
class ServiceDescriptor:
    kind: ServiceKind
    name: str
    price_per_unit: int = 0
    unit: Unit = Unit.PER_CHUNK
    min_duration: int = 1

    def __post_init__(self):
        if not self.name:
            raise InvalidDescriptor("service name must be non-empty")
        if not isinstance(self.price_per_unit, int) or self.price_per_unit < 0:
            raise InvalidDescriptor(f"price_per_unit must be a non-negative integer, got {self.price_per_unit!r}")
        if not isinstance(self.min_duration, int) or self.min_duration <= 0:
            raise InvalidDescriptor(f"min_duration must be a positive integer, got {self.min_duration!r}")

    @property
    def key(self) -> tuple[ServiceKind, str]:
        return (self.kind, self.name)


def standard_catalog(price: int = 5, min_duration: int = 2) -> list[ServiceDescriptor]:
    """The seed catalog: a few data topics plus the named compute functions."""
    out = [ServiceDescriptor(ServiceKind.DATA_TOPIC, n, price, Unit.PER_CHUNK, min_duration) for n in DATA_TOPICS]
    out += [ServiceDescriptor(ServiceKind.NAMED_FUNCTION, n, price, Unit.PER_TASK, min_duration)
            for n in NAMED_FUNCTIONS]
    return out


@dataclass(frozen=True)
class Beacon:
    sender: PeerId
    provided: tuple[ServiceDescriptor, ...]
    required: tuple[ServiceDescriptor, ...]
    claimed_plan: TrajectoryPlan
    tick: int

    def __post_init__(self):
        if not self.provided and not self.required:
            raise InvalidDescriptor("a beacon must advertise at least one provided or required service")
        for side in (self.provided, self.required):
            keys = [d.key for d in side]
            if len(set(keys)) != len(keys):
                raise InvalidDescriptor("duplicate service in beacon")


@dataclass(frozen=True)
class Match:
    provider: PeerId
    consumer: PeerId
    descriptor: ServiceDescriptor
    quantity: int = 1

    def __post_init__(self):
        if self.quantity < 1:
            raise InvalidDescriptor("quantity must be positive")


def _one_way(provider: Beacon, consumer: Beacon) -> list[Match]:
    wanted = {d.key for d in consumer.required}
    return [Match(provider.sender, consumer.sender, d) for d in provider.provided if d.key in wanted]


def match_services(mine: Beacon, theirs: Beacon) -> list[Match]:
    """All provider/consumer pairings between two beacons, in both directions.

    Ordered by (kind, name, provider id), which makes the result independent
    of argument order.
    """
    if mine.sender == theirs.sender:
        raise ValueError("cannot match a beacon against itself")
    out = _one_way(mine, theirs) + _one_way(theirs, mine)
    out.sort(key=lambda m: (KIND_ORDER[m.descriptor.kind], m.descriptor.name, m.provider))
    return out
