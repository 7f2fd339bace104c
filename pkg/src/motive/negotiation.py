"""Admission control and provider-side scheduling of admitted requests."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Sequence

from motive.identity import Standing
from motive.services import Match

# slack on float comparisons of contact durations
DURATION_EPS = 1e-9


class Gate(str, Enum):
    STANDING = "standing"
    DURATION = "duration"
    RATING = "rating"
    BALANCE = "balance"


@dataclass(frozen=True)
class AdmissionPolicy:
    rating_threshold: float = 0.5
    safety_margin: float = 0.2
    min_balance_factor: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.rating_threshold <= 1.0:
            raise ValueError("rating_threshold must lie in [0, 1]")
        if self.safety_margin < 0:
            raise ValueError("safety_margin must be >= 0")
        if self.min_balance_factor < 1:
            raise ValueError("min_balance_factor must be >= 1")


@dataclass(frozen=True)
class Decision:
    accepted: bool
    reason: Gate | None = None

    def __bool__(self) -> bool:
        return self.accepted


ACCEPT = Decision(True)


@dataclass(frozen=True)
class ServiceRequest:
    match: Match
    capacity_units: int = 1

    def __post_init__(self):
        if self.capacity_units < 1:
            raise ValueError("capacity_units must be positive")

    @property
    def total_price(self) -> int:
        return self.match.descriptor.price_per_unit * self.match.quantity

    @property
    def required_duration(self) -> int:
        return self.match.descriptor.min_duration * self.match.quantity

    @property
    def density(self) -> Fraction:
        return Fraction(self.total_price, self.required_duration * self.capacity_units)


class AgreementStatus(str, Enum):
    SCHEDULED = "Scheduled"
    IN_PROGRESS = "InProgress"
    COMPLETED = "Completed"
    ABORTED = "Aborted"


@dataclass
class Agreement:
    agreement_id: int
    request: ServiceRequest
    admitted_at: int
    deadline: int
    status: AgreementStatus = AgreementStatus.SCHEDULED
    started_at: int | None = None

    def __post_init__(self):
        if self.deadline <= self.admitted_at:
            raise ValueError("deadline must come after admission")

    @property
    def provider(self) -> int:
        return self.request.match.provider

    @property
    def consumer(self) -> int:
        return self.request.match.consumer

    def fits(self, now: int) -> bool:
        return now + self.request.required_duration <= self.deadline


def admit(request: ServiceRequest, remaining_contact: float, consumer_rating: float,
          consumer_standing: Standing, consumer_balance: int, policy: AdmissionPolicy) -> Decision:
    """Three-gate check (plus membership), reporting the first failed gate.

    Gates are tried in the fixed order standing, duration, rating, balance.
    """
    if consumer_standing is Standing.REMOVED:
        return Decision(False, Gate.STANDING)
    if remaining_contact + DURATION_EPS < request.required_duration * (1 + policy.safety_margin):
        return Decision(False, Gate.DURATION)
    if consumer_rating < policy.rating_threshold:
        return Decision(False, Gate.RATING)
    if consumer_balance < request.total_price * policy.min_balance_factor:
        return Decision(False, Gate.BALANCE)
    return ACCEPT


def _priority(a: Agreement):
    return (-a.request.density, a.deadline, a.agreement_id)


def schedule(pending: Sequence[Agreement], capacity: int, now: int) -> list[Agreement]:
    """Pick agreements to start at ``now`` within ``capacity`` free units.

    Greedy by revenue density (ties: earlier deadline, then lower id). The
    greedy pick is compared against the single most valuable feasible
    agreement and the better of the two is returned, which guarantees at
    least half the optimal revenue. Every selected agreement runs from
    ``now`` and finishes by its deadline.
    """
    feasible = sorted((a for a in pending if a.fits(now) and a.request.capacity_units <= capacity),
                      key=_priority)
    picked: list[Agreement] = []
    used = 0
    for a in feasible:
        if used + a.request.capacity_units <= capacity:
            picked.append(a)
            used += a.request.capacity_units
    if feasible:
        best = min(feasible, key=lambda a: (-a.request.total_price, a.deadline, a.agreement_id))
        if best.request.total_price > revenue(picked):
            return [best]
    return picked


def revenue(plan: Sequence[Agreement]) -> int:
    return sum(a.request.total_price for a in plan)


def optimal_revenue(pending: Sequence[Agreement], capacity: int, now: int) -> tuple[int, list[Agreement]]:
    """Exhaustive-subset optimum of the same selection problem (small inputs only)."""
    feasible = [a for a in pending if a.fits(now)]
    best: tuple[int, list[Agreement]] = (0, [])
    for r in range(1, len(feasible) + 1):
        for combo in itertools.combinations(feasible, r):
            if sum(a.request.capacity_units for a in combo) <= capacity:
                rev = revenue(combo)
                if rev > best[0]:
                    best = (rev, list(combo))
    return best
