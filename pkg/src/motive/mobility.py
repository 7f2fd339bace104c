"""Kinematic world model and link prediction.

Trajectories are piecewise-constant-velocity paths on a plane. Time here is
continuous (seconds) and positions are in meters; the simulator converts to
integer ticks. Two peers are in contact while their distance is at most the
radio range, so on every interval where both velocities are constant the
contact set is the sublevel set of a quadratic in time and can be solved
exactly.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from typing import Sequence

from motive.errors import InvalidPlan, OutOfHorizon

Vec = tuple[float, float]

CONTINUITY_TOL = 1e-6
# windows closer than this are treated as touching and merged
MERGE_TOL = 1e-9


@dataclass(frozen=True)
class Segment:
    start: float
    position: Vec
    velocity: Vec

    def position_at(self, t: float) -> Vec:
        dt = t - self.start
        return (self.position[0] + self.velocity[0] * dt, self.position[1] + self.velocity[1] * dt)

    @property
    def speed(self) -> float:
        return math.hypot(*self.velocity)


@dataclass(frozen=True)
class TrajectoryPlan:
    segments: tuple[Segment, ...]
    horizon: float

    def __post_init__(self):
        if not self.segments:
            raise InvalidPlan("plan needs at least one segment")
        if not math.isfinite(self.horizon) or self.horizon < 0:
            raise InvalidPlan(f"bad horizon {self.horizon}")
        if self.segments[0].start != 0:
            raise InvalidPlan("first segment must start at t=0")
        for seg in self.segments:
            vals = (seg.start, *seg.position, *seg.velocity)
            if not all(math.isfinite(v) for v in vals):
                raise InvalidPlan("non-finite value in segment")
        for prev, seg in zip(self.segments, self.segments[1:]):
            if seg.start <= prev.start:
                raise InvalidPlan("segment start times must be strictly increasing")
            if seg.start > self.horizon:
                raise InvalidPlan("segment starts after the horizon")
            end = prev.position_at(seg.start)
            if not math.dist(end, seg.position) <= CONTINUITY_TOL:
                raise InvalidPlan(f"position jump at t={seg.start}")

    @classmethod
    def stationary(cls, position: Vec, horizon: float) -> TrajectoryPlan:
        return cls((Segment(0.0, position, (0.0, 0.0)),), horizon)

    @classmethod
    def linear(cls, position: Vec, velocity: Vec, horizon: float) -> TrajectoryPlan:
        return cls((Segment(0.0, position, velocity),), horizon)

    @classmethod
    def from_waypoints(cls, start: Vec, legs: Sequence[tuple[float, Vec]], horizon: float) -> TrajectoryPlan:
        """Build a continuous plan from ``(start_time, velocity)`` legs."""
        segs: list[Segment] = []
        pos = start
        for t0, vel in legs:
            if segs:
                pos = segs[-1].position_at(t0)
            segs.append(Segment(float(t0), pos, vel))
        return cls(tuple(segs), horizon)

    def check_speed(self, speed_limit: float) -> None:
        for seg in self.segments:
            if seg.speed > speed_limit + 1e-9:
                raise InvalidPlan(f"segment at t={seg.start} exceeds speed limit {speed_limit}")

    def translated(self, offset: Vec) -> TrajectoryPlan:
        return TrajectoryPlan(
            tuple(Segment(s.start, (s.position[0] + offset[0], s.position[1] + offset[1]), s.velocity)
                  for s in self.segments),
            self.horizon,
        )

    def segment_at(self, t: float) -> Segment:
        idx = bisect.bisect_right([s.start for s in self.segments], t) - 1
        return self.segments[max(idx, 0)]


@dataclass(frozen=True)
class RadioModel:
    range_r: float

    def __post_init__(self):
        if not self.range_r > 0:
            raise ValueError("radio range must be positive")


@dataclass(frozen=True)
class ContactWindow:
    start: float
    end: float

    @property
    def duration(self) -> float:
        return self.end - self.start

    def contains(self, t: float) -> bool:
        return self.start <= t <= self.end


def position_at(plan: TrajectoryPlan, t: float) -> Vec:
    if not (0 <= t <= plan.horizon):
        raise OutOfHorizon(f"t={t} outside [0, {plan.horizon}]")
    return plan.segment_at(t).position_at(t)


def distance(a: TrajectoryPlan, b: TrajectoryPlan, t: float) -> float:
    return math.dist(position_at(a, t), position_at(b, t))


def _breakpoints(a: TrajectoryPlan, b: TrajectoryPlan, horizon: float) -> list[float]:
    pts = {0.0, horizon}
    pts.update(s.start for s in a.segments if s.start < horizon)
    pts.update(s.start for s in b.segments if s.start < horizon)
    return sorted(pts)


def _solve_interval(d: Vec, u: Vec, r: float, length: float) -> tuple[float, float] | None:
    """Sub-interval of [0, length] where |d + u*s| <= r, or None."""
    a = u[0] * u[0] + u[1] * u[1]
    half_b = d[0] * u[0] + d[1] * u[1]
    c = d[0] * d[0] + d[1] * d[1] - r * r
    if a == 0.0:
        return (0.0, length) if c <= 0.0 else None
    disc = half_b * half_b - a * c
    if disc <= 0.0:
        # tangency or miss; a single touching instant carries no contact
        return None
    # numerically stable pair of roots
    q = -(half_b + math.copysign(math.sqrt(disc), half_b))
    r1 = q / a
    r2 = c / q if q != 0.0 else -r1
    lo, hi = min(r1, r2), max(r1, r2)
    lo, hi = max(lo, 0.0), min(hi, length)
    if hi <= lo:
        return None
    return (lo, hi)


def contact_windows(a: TrajectoryPlan, b: TrajectoryPlan, radio: RadioModel) -> list[ContactWindow]:
    """Exact contact windows of two plans, merged, sorted, clipped to the horizon."""
    horizon = min(a.horizon, b.horizon)
    pts = _breakpoints(a, b, horizon)
    raw: list[tuple[float, float]] = []
    for t0, t1 in zip(pts, pts[1:]):
        sa, sb = a.segment_at(t0), b.segment_at(t0)
        pa, pb = sa.position_at(t0), sb.position_at(t0)
        d = (pa[0] - pb[0], pa[1] - pb[1])
        u = (sa.velocity[0] - sb.velocity[0], sa.velocity[1] - sb.velocity[1])
        sol = _solve_interval(d, u, radio.range_r, t1 - t0)
        if sol is not None:
            lo = t0 + sol[0]
            hi = t1 if sol[1] == t1 - t0 else t0 + sol[1]
            raw.append((lo, hi))
    merged: list[list[float]] = []
    for lo, hi in raw:
        if merged and lo <= merged[-1][1] + MERGE_TOL:
            merged[-1][1] = max(merged[-1][1], hi)
        else:
            merged.append([lo, hi])
    return [ContactWindow(lo, hi) for lo, hi in merged]


def remaining_contact(a: TrajectoryPlan, b: TrajectoryPlan, radio: RadioModel, now: float) -> float:
    """Time left in the contact window containing ``now`` (0 if none)."""
    return remaining_from_windows(contact_windows(a, b, radio), now)


def remaining_from_windows(windows: Sequence[ContactWindow], now: float) -> float:
    for w in windows:
        if w.start <= now < w.end:
            return w.end - now
    return 0.0
