"""Scenario files: JSON documents describing peers, trajectories and parameters.

See docs/scenario.md for the schema. Every validation failure raises
ConfigError naming the offending field path (and the line, for syntax
errors).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any, Mapping

from motive.compute import BUILTINS
from motive.errors import ConfigError, InvalidDescriptor, InvalidPlan
from motive.identity import Credential, PeerKind, RatingParams
from motive.mobility import RadioModel, Segment, TrajectoryPlan
from motive.negotiation import AdmissionPolicy
from motive.services import ServiceDescriptor, ServiceKind, Unit


class Behavior(str, Enum):
    HONEST = "Honest"
    DEADBEAT_BUYER = "DeadbeatBuyer"
    DEFECTING_SELLER = "DefectingSeller"
    LAZY_COMPUTER = "LazyComputer"
    TRAJECTORY_LIAR = "TrajectoryLiar"


@dataclass(frozen=True)
class BehaviorSpec:
    kind: Behavior = Behavior.HONEST
    skip_fraction: float = 0.0

    @property
    def label(self) -> str:
        if self.kind is Behavior.LAZY_COMPUTER:
            return f"LazyComputer({self.skip_fraction:g})"
        return self.kind.value

    @property
    def honest(self) -> bool:
        return self.kind is Behavior.HONEST


@dataclass(frozen=True)
class Demand:
    kind: ServiceKind
    name: str
    quantity: int = 1
    agreements: int = 1
    subtasks: int = 10

    @property
    def key(self) -> tuple[ServiceKind, str]:
        return (self.kind, self.name)

    def descriptor(self) -> ServiceDescriptor:
        unit = Unit.PER_CHUNK if self.kind is ServiceKind.DATA_TOPIC else Unit.PER_TASK
        return ServiceDescriptor(self.kind, self.name, 0, unit, 1)


@dataclass(frozen=True)
class PeerSpec:
    name: str
    credential: Credential
    balance: int
    plan: TrajectoryPlan
    claimed_plan: TrajectoryPlan
    provides: tuple[ServiceDescriptor, ...]
    requires: tuple[Demand, ...]
    behavior: BehaviorSpec = BehaviorSpec()
    capacity: int = 1


@dataclass(frozen=True)
class Economics:
    deposit_percent: int = 20
    window_w: int = 3
    chunk_price: int = 5
    probe_fraction: float = 0.1
    probe_bank_size: int = 64
    beacon_interval: int = 1
    max_beacon_bytes: int = 1024


@dataclass(frozen=True)
class Scenario:
    name: str
    seed: int
    ticks: int
    tick_seconds: float
    radio: RadioModel
    speed_limit: float
    peers: tuple[PeerSpec, ...]
    policy: AdmissionPolicy = AdmissionPolicy()
    ratings: RatingParams = RatingParams()
    economics: Economics = Economics()
    functions: Mapping[str, str] = field(default_factory=lambda: {"objectDetection": "hash_classifier"})

    @property
    def horizon(self) -> float:
        return self.ticks * self.tick_seconds

    def with_seed(self, seed: int) -> Scenario:
        return replace(self, seed=seed)


# -- parsing ---------------------------------------------------------------

class _Obj:
    """Dict wrapper that tracks the field path and rejects unknown keys."""

    def __init__(self, data: Any, path: str):
        if not isinstance(data, dict):
            raise ConfigError("expected an object", path)
        self.data = data
        self.path = path
        self.used: set[str] = set()

    def sub(self, key: str) -> str:
        return f"{self.path}.{key}" if self.path else key

    def get(self, key: str, default: Any = ...) -> Any:
        self.used.add(key)
        if key not in self.data:
            if default is ...:
                raise ConfigError("missing required field", self.sub(key))
            return default
        return self.data[key]

    def obj(self, key: str, default: Any = ...) -> _Obj:
        raw = self.get(key, {} if default is ... else default)
        return _Obj(raw, self.sub(key))

    def int(self, key: str, default: Any = ..., lo: int | None = None) -> int:
        v = self.get(key, default)
        if isinstance(v, bool) or not isinstance(v, int):
            raise ConfigError(f"expected an integer, got {v!r}", self.sub(key))
        if lo is not None and v < lo:
            raise ConfigError(f"must be >= {lo}, got {v}", self.sub(key))
        return v

    def num(self, key: str, default: Any = ..., lo: float | None = None, positive: bool = False) -> float:
        v = self.get(key, default)
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise ConfigError(f"expected a finite number, got {v!r}", self.sub(key))
        if lo is not None and v < lo:
            raise ConfigError(f"must be >= {lo}, got {v}", self.sub(key))
        if positive and v <= 0:
            raise ConfigError(f"must be > 0, got {v}", self.sub(key))
        return float(v)

    def str(self, key: str, default: Any = ...) -> str:
        v = self.get(key, default)
        if not isinstance(v, str):
            raise ConfigError(f"expected a string, got {v!r}", self.sub(key))
        return v

    def list(self, key: str, default: Any = ...) -> list:
        v = self.get(key, default)
        if not isinstance(v, list):
            raise ConfigError("expected a list", self.sub(key))
        return v

    def done(self) -> None:
        extra = sorted(set(self.data) - self.used)
        if extra:
            raise ConfigError(f"unknown field(s) {', '.join(extra)}", self.path or None)


def _enum(enum_cls, value, path):
    try:
        return enum_cls(value)
    except ValueError:
        allowed = ", ".join(e.value for e in enum_cls)
        raise ConfigError(f"{value!r} is not one of {allowed}", path) from None


def _vec(v, path) -> tuple[float, float]:
    if (not isinstance(v, list) or len(v) != 2
            or not all(isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x) for x in v)):
        raise ConfigError("expected [x, y] with finite numbers", path)
    return (float(v[0]), float(v[1]))


def parse_plan(raw: Any, path: str, horizon: float, speed_limit: float) -> TrajectoryPlan:
    o = _Obj(raw, path)
    try:
        if "segments" in o.data:
            segs = []
            for i, s in enumerate(o.list("segments")):
                so = _Obj(s, f"{path}.segments[{i}]")
                segs.append(Segment(so.num("start", lo=0), _vec(so.get("position"), so.sub("position")),
                                    _vec(so.get("velocity", [0, 0]), so.sub("velocity"))))
                so.done()
            plan = TrajectoryPlan(tuple(segs), horizon)
        elif "legs" in o.data:
            start = _vec(o.get("position"), o.sub("position"))
            legs = []
            for i, leg in enumerate(o.list("legs")):
                lo = _Obj(leg, f"{path}.legs[{i}]")
                legs.append((lo.num("start", lo=0), _vec(lo.get("velocity"), lo.sub("velocity"))))
                lo.done()
            plan = TrajectoryPlan.from_waypoints(start, legs, horizon)
        else:
            plan = TrajectoryPlan.linear(_vec(o.get("position"), o.sub("position")),
                                         _vec(o.get("velocity", [0, 0]), o.sub("velocity")), horizon)
        o.done()
        plan.check_speed(speed_limit)
    except InvalidPlan as e:
        raise ConfigError(str(e), path) from None
    return plan


def _parse_provides(raw: list, path: str, econ: Economics) -> tuple[ServiceDescriptor, ...]:
    out = []
    for i, d in enumerate(raw):
        p = f"{path}[{i}]"
        o = _Obj(d, p)
        kind = _enum(ServiceKind, o.str("kind"), o.sub("kind"))
        default_unit = Unit.PER_CHUNK if kind is ServiceKind.DATA_TOPIC else Unit.PER_TASK
        unit = _enum(Unit, o.str("unit", default_unit.value), o.sub("unit"))
        try:
            out.append(ServiceDescriptor(kind, o.str("name"), o.int("price", econ.chunk_price, lo=0), unit,
                                         o.int("min_duration", 1, lo=1)))
        except InvalidDescriptor as e:
            raise ConfigError(str(e), p) from None
        o.done()
    return tuple(out)


def _parse_requires(raw: list, path: str) -> tuple[Demand, ...]:
    out = []
    for i, d in enumerate(raw):
        o = _Obj(d, f"{path}[{i}]")
        kind = _enum(ServiceKind, o.str("kind"), o.sub("kind"))
        name = o.str("name")
        if not name:
            raise ConfigError("service name must be non-empty", o.sub("name"))
        out.append(Demand(kind, name, o.int("quantity", 1, lo=1), o.int("agreements", 1, lo=0),
                          o.int("subtasks", 10, lo=1)))
        o.done()
    return tuple(out)


def _parse_behavior(raw: Any, path: str) -> BehaviorSpec:
    if isinstance(raw, str):
        kind = _enum(Behavior, raw, path)
        if kind is Behavior.LAZY_COMPUTER:
            raise ConfigError("LazyComputer needs {\"type\": ..., \"skip_fraction\": ...}", path)
        return BehaviorSpec(kind)
    o = _Obj(raw, path)
    kind = _enum(Behavior, o.str("type"), o.sub("type"))
    skip = 0.0
    if kind is Behavior.LAZY_COMPUTER:
        skip = o.num("skip_fraction", lo=0)
        if skip > 1:
            raise ConfigError("skip_fraction must be <= 1", o.sub("skip_fraction"))
    o.done()
    return BehaviorSpec(kind, skip)


def scenario_from_dict(data: Any) -> Scenario:
    root = _Obj(data, "")
    name = root.str("name", "scenario")
    seed = root.int("seed", 0, lo=0)
    ticks = root.int("ticks", lo=1)
    tick_seconds = root.num("tick_seconds", 0.1, positive=True)
    radio = RadioModel(root.num("radio_range", positive=True))
    speed_limit = root.num("speed_limit", 40.0, positive=True)
    horizon = ticks * tick_seconds

    po = root.obj("policy")
    try:
        policy = AdmissionPolicy(po.num("rating_threshold", 0.5), po.num("safety_margin", 0.2),
                                 po.num("min_balance_factor", 1.0))
    except ValueError as e:
        raise ConfigError(str(e), "policy") from None
    po.done()

    ro = root.obj("ratings")
    ratings = RatingParams(ro.num("default_rating", 0.6, lo=0), ro.num("threshold", 0.5, lo=0),
                           ro.int("min_ratings", 3, lo=1))
    if ratings.default_rating > 1 or ratings.threshold > 1:
        raise ConfigError("ratings must lie in [0, 1]", "ratings")
    ro.done()

    eo = root.obj("economics")
    econ = Economics(
        deposit_percent=eo.int("deposit_percent", 20, lo=0),
        window_w=eo.int("window_w", 3, lo=1),
        chunk_price=eo.int("chunk_price", 5, lo=0),
        probe_fraction=eo.num("probe_fraction", 0.1, lo=0),
        probe_bank_size=eo.int("probe_bank_size", 64, lo=1),
        beacon_interval=eo.int("beacon_interval", 1, lo=1),
        max_beacon_bytes=eo.int("max_beacon_bytes", 1024, lo=64),
    )
    eo.done()

    fo = root.obj("functions", {"objectDetection": "hash_classifier"})
    functions = {}
    for fname, builtin in fo.data.items():
        fo.used.add(fname)
        if builtin not in BUILTINS:
            raise ConfigError(f"unknown builtin {builtin!r} (have {', '.join(sorted(BUILTINS))})", fo.sub(fname))
        functions[fname] = builtin

    peers = []
    seen_creds = set()
    raw_peers = root.list("peers")
    if len(raw_peers) < 1:
        raise ConfigError("at least one peer is required", "peers")
    for i, raw in enumerate(raw_peers):
        path = f"peers[{i}]"
        o = _Obj(raw, path)
        kind = _enum(PeerKind, o.str("kind", "Vehicle"), o.sub("kind"))
        cred = Credential(o.str("license"), o.str("plate"), kind)
        if not cred.license_token or not cred.plate_token:
            raise ConfigError("license and plate must be non-empty", path)
        if cred.key in seen_creds:
            raise ConfigError("duplicate credential", path)
        seen_creds.add(cred.key)
        plan = parse_plan(o.get("plan"), o.sub("plan"), horizon, speed_limit)
        claimed = plan
        if "claimed_plan" in o.data:
            claimed = parse_plan(o.get("claimed_plan"), o.sub("claimed_plan"), horizon, speed_limit)
        provides = _parse_provides(o.list("provides", []), o.sub("provides"), econ)
        requires = _parse_requires(o.list("requires", []), o.sub("requires"))
        for j, d in enumerate(provides):
            if d.kind is ServiceKind.NAMED_FUNCTION and d.name not in functions:
                raise ConfigError(f"function {d.name!r} not declared in functions", f"{path}.provides[{j}]")
        for j, d in enumerate(requires):
            if d.kind is ServiceKind.NAMED_FUNCTION and d.name not in functions:
                raise ConfigError(f"function {d.name!r} not declared in functions", f"{path}.requires[{j}]")
        for what, items in (("provides", [d.key for d in provides]), ("requires", [d.key for d in requires])):
            if len(set(items)) != len(items):
                raise ConfigError("duplicate service", o.sub(what))
        peers.append(PeerSpec(
            name=o.str("name", f"peer{i + 1}"),
            credential=cred,
            balance=o.int("balance", 0, lo=0),
            plan=plan,
            claimed_plan=claimed,
            provides=provides,
            requires=requires,
            behavior=_parse_behavior(o.get("behavior", "Honest"), o.sub("behavior")),
            capacity=o.int("capacity", 1, lo=1),
        ))
        o.done()
    root.done()
    return Scenario(name, seed, ticks, tick_seconds, radio, speed_limit, tuple(peers), policy, ratings, econ,
                    functions)


def load_scenario(path: str | Path) -> Scenario:
    text = Path(path).read_text(encoding="utf-8")
    return loads_scenario(text)


def loads_scenario(text: str) -> Scenario:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(e.msg, line=e.lineno) from None
    return scenario_from_dict(data)


def builtin_scenarios() -> dict[str, Path]:
    """Shipped scenario files keyed by stem."""
    root = Path(__file__).resolve().parent.parent / "scenarios"
    return {p.stem: p for p in sorted(root.glob("*.json"))}
