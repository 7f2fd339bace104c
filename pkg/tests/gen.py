"""Seeded generators of valid domain objects for round-trip and fuzz tests."""

import random
import string

from motive.mobility import TrajectoryPlan
from motive.services import Beacon, ServiceDescriptor, ServiceKind, Unit

_ALPHABET = string.ascii_letters + string.digits + "_-é中"


def random_descriptor(rng: random.Random, name=None) -> ServiceDescriptor:
    kind = rng.choice(list(ServiceKind))
    return ServiceDescriptor(
        kind,
        name or "".join(rng.choice(_ALPHABET) for _ in range(rng.randint(1, 12))),
        rng.randint(0, 2**40),
        rng.choice(list(Unit)),
        rng.randint(1, 2**31),
    )


def random_plan(rng: random.Random, horizon=None) -> TrajectoryPlan:
    horizon = horizon or rng.uniform(1, 500)
    n = rng.randint(1, 5)
    starts = [0.0] + sorted(rng.uniform(0.01, horizon * 0.99) for _ in range(n - 1))
    starts = sorted(set(starts))
    legs = [(s, (rng.uniform(-40, 40), rng.uniform(-40, 40))) for s in starts]
    return TrajectoryPlan.from_waypoints((rng.uniform(-1e4, 1e4), rng.uniform(-1e4, 1e4)), legs, horizon)


def _unique(rng, count):
    out, keys = [], set()
    while len(out) < count:
        d = random_descriptor(rng)
        if d.key not in keys:
            keys.add(d.key)
            out.append(d)
    return tuple(out)


def random_beacon(rng: random.Random) -> Beacon:
    provided = _unique(rng, rng.randint(0, 4))
    required = _unique(rng, rng.randint(0 if provided else 1, 4))
    return Beacon(rng.randint(0, 2**64 - 1), provided, required, random_plan(rng), rng.randint(0, 2**64 - 1))
