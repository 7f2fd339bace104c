import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from motive.errors import InvalidDescriptor
from motive.mobility import TrajectoryPlan
from motive.services import (DATA_TOPICS, NAMED_FUNCTIONS, Beacon, Match, ServiceDescriptor, ServiceKind,
                             match_services, standard_catalog)
from gen import random_beacon

PLAN = TrajectoryPlan.stationary((0, 0), 10)


def topic(name):
    return ServiceDescriptor(ServiceKind.DATA_TOPIC, name, 5)


def beacon(sender, provided=(), required=()):
    return Beacon(sender, tuple(provided), tuple(required), PLAN, 0)


def test_catalog_seeds():
    names = {(d.kind, d.name) for d in standard_catalog()}
    assert {n for k, n in names if k is ServiceKind.DATA_TOPIC} == set(DATA_TOPICS)
    assert {n for k, n in names if k is ServiceKind.NAMED_FUNCTION} == set(NAMED_FUNCTIONS)


def test_descriptor_validation():
    with pytest.raises(InvalidDescriptor):
        topic("")
    with pytest.raises(InvalidDescriptor):
        ServiceDescriptor(ServiceKind.DATA_TOPIC, "x", -1)
    with pytest.raises(InvalidDescriptor):
        ServiceDescriptor(ServiceKind.DATA_TOPIC, "x", 1, min_duration=0)


def test_empty_beacon_rejected():
    with pytest.raises(InvalidDescriptor):
        beacon(1)


def test_speed_match():
    a = beacon(1, provided=[topic("speed")])
    b = beacon(2, required=[topic("speed")])
    assert match_services(a, b) == [Match(1, 2, topic("speed"))]


def test_disjoint_and_bidirectional():
    a = beacon(1, provided=[topic("speed")])
    b = beacon(2, provided=[topic("vehicleCount")])
    assert match_services(a, b) == []
    a = beacon(1, provided=[topic("vehicleCount")], required=[topic("vehicleCount")])
    b = beacon(2, provided=[topic("vehicleCount")], required=[topic("vehicleCount")])
    got = match_services(a, b)
    assert {(m.provider, m.consumer) for m in got} == {(1, 2), (2, 1)}


def test_kind_must_agree():
    a = beacon(1, provided=[topic("objectDetection")])
    b = beacon(2, required=[ServiceDescriptor(ServiceKind.NAMED_FUNCTION, "objectDetection", 0)])
    assert match_services(a, b) == []


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 2**32), st.integers(0, 2**32))
def test_swap_symmetry_and_provenance(s1, s2):
    a, b = random_beacon(random.Random(s1)), random_beacon(random.Random(s2))
    b = Beacon(a.sender + 1 if a.sender < 2**64 - 1 else 0, b.provided, b.required, b.claimed_plan, b.tick)
    ab, ba = match_services(a, b), match_services(b, a)
    assert sorted(ab, key=repr) == sorted(ba, key=repr)
    for m in ab:
        prov = a if m.provider == a.sender else b
        cons = b if prov is a else a
        assert m.descriptor in prov.provided
        assert any(r.key == m.descriptor.key for r in cons.required)
