import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from motive.identity import Standing
from motive.negotiation import (AdmissionPolicy, Agreement, Decision, Gate, ServiceRequest, admit,
                                optimal_revenue, revenue, schedule)
from motive.services import Match, ServiceDescriptor, ServiceKind, Unit
from oracles import knapsack_best

POLICY = AdmissionPolicy(0.5, 0.2, 1.0)


def request(price, duration, cap=1, consumer=2):
    d = ServiceDescriptor(ServiceKind.NAMED_FUNCTION, "objectDetection", price, Unit.PER_TASK, duration)
    return ServiceRequest(Match(1, consumer, d), cap)


def agreement(aid, price, duration, cap=1, deadline=100, admitted=0):
    return Agreement(aid, request(price, duration, cap), admitted, deadline)


def test_admission_examples():
    assert admit(request(10, 10), 15, 0.8, Standing.ACTIVE, 100, POLICY) == Decision(True)
    assert admit(request(10, 10), 11, 0.8, Standing.ACTIVE, 100, POLICY) == Decision(False, Gate.DURATION)
    assert admit(request(10, 10), 15, 0.8, Standing.REMOVED, 100, POLICY) == Decision(False, Gate.STANDING)
    assert admit(request(10, 10), 15, 0.4, Standing.ACTIVE, 100, POLICY) == Decision(False, Gate.RATING)
    assert admit(request(10, 10), 15, 0.8, Standing.ACTIVE, 9, POLICY) == Decision(False, Gate.BALANCE)


def test_gate_order_reports_first_failure():
    d = admit(request(10, 10), 1, 0.0, Standing.REMOVED, 0, POLICY)
    assert d.reason is Gate.STANDING
    d = admit(request(10, 10), 1, 0.0, Standing.ACTIVE, 0, POLICY)
    assert d.reason is Gate.DURATION


def test_worked_schedule():
    a, b, c = agreement(1, 10, 5), agreement(2, 8, 5), agreement(3, 12, 5, cap=2)
    assert [x.request.density for x in (a, b, c)] == [Fraction(2), Fraction("1.6"), Fraction("1.2")]
    picked = schedule([c, b, a], 2, 0)
    assert {x.agreement_id for x in picked} == {1, 2}
    assert revenue(picked) == 18
    assert optimal_revenue([a, b, c], 2, 0)[0] == 18
    assert knapsack_best([(1, 10), (1, 8), (2, 12)], 2) == 18


def test_single_request_and_tie_break():
    only = agreement(1, 5, 3, deadline=10)
    assert schedule([only], 1, 0) == [only]
    late, early = agreement(1, 6, 3, deadline=8), agreement(2, 6, 3, deadline=6)
    assert schedule([late, early], 1, 0) == [early]


def test_infeasible_requests_skipped():
    assert schedule([agreement(1, 10, 20, deadline=10)], 5, 0) == []
    assert schedule([agreement(1, 10, 2, cap=3)], 2, 0) == []


def test_best_single_beats_greedy_trap():
    # high-density small item blocks a large valuable one
    small, big = agreement(1, 3, 1), agreement(2, 10, 5, cap=2)
    picked = schedule([small, big], 2, 0)
    assert revenue(picked) == 10


def random_instance(rng, n):
    now = rng.randint(0, 5)
    items = []
    for i in range(n):
        dur = rng.randint(1, 10)
        items.append(agreement(i + 1, rng.randint(0, 50), dur, rng.randint(1, 4),
                               deadline=now + rng.randint(1, 15), admitted=now - 1))
    return items, rng.randint(1, 8), now


def test_greedy_half_optimal_against_dp():
    rng = random.Random(99)
    for _ in range(200):
        items, cap, now = random_instance(rng, rng.randint(1, 12))
        feas = [(a.request.capacity_units, a.request.total_price) for a in items if a.fits(now)]
        opt = knapsack_best(feas, cap)
        assert optimal_revenue(items, cap, now)[0] == opt
        assert revenue(schedule(items, cap, now)) >= 0.5 * opt


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 2**32), st.integers(1, 12))
def test_plans_respect_capacity_and_deadlines(seed, n):
    items, cap, now = random_instance(random.Random(seed), n)
    picked = schedule(items, cap, now)
    assert sum(a.request.capacity_units for a in picked) <= cap
    assert all(now + a.request.required_duration <= a.deadline for a in picked)
    assert len({a.agreement_id for a in picked}) == len(picked)


@settings(max_examples=300, deadline=None)
@given(st.integers(1, 20), st.integers(1, 20), st.floats(0, 40), st.floats(0, 1), st.integers(0, 50),
       st.floats(0, 10), st.floats(0, 1), st.integers(0, 50))
def test_admission_monotone(price, dur, rc, rating, bal, d_rc, d_rating, d_bal):
    req = request(price, dur)
    before = admit(req, rc, rating, Standing.ACTIVE, bal, POLICY)
    after = admit(req, rc + d_rc, min(1.0, rating + d_rating), Standing.ACTIVE, bal + d_bal, POLICY)
    if before.accepted:
        assert after.accepted
    assert before == admit(req, rc, rating, Standing.ACTIVE, bal, POLICY)


def test_policy_validation():
    with pytest.raises(ValueError):
        AdmissionPolicy(1.5, 0.2, 1.0)
    with pytest.raises(ValueError):
        AdmissionPolicy(0.5, -0.1, 1.0)
    with pytest.raises(ValueError):
        Agreement(1, request(1, 1), 5, 5)
