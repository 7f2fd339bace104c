import random
from fractions import Fraction

import pytest

from motive.errors import CorruptLog
from motive.compute import detection_probability, skip_count
from motive.sim import Engine, builtin_scenarios, load_scenario, replay, report_from_events
from motive.sim.metrics import dumps_events, loads_events

SHIPPED = builtin_scenarios()


def run(name, seed=None):
    sc = load_scenario(SHIPPED[name])
    if seed is not None:
        sc = sc.with_seed(seed)
    return Engine(sc).run()


def events_of(res, kind):
    return [e for e in res.events if e["type"] == kind]


def test_happy_path():
    res = run("happy_path")
    r = res.report
    seller, buyer = r.by_name("rsu-speed"), r.by_name("car-a")
    (adm,) = events_of(res, "admit")
    assert r.agreements_completed == 1 and r.agreements_aborted == 0
    assert seller.revenue == adm["price"] == buyer.spent
    assert {e["score"] for e in events_of(res, "rating")} == {1.0}
    assert len(events_of(res, "rating")) == 2


def test_trajectory_liar():
    res = run("trajectory_liar")
    (adm,) = events_of(res, "admit")
    (abort,) = events_of(res, "abort")
    assert abort["reason"] == "disconnect" and abort["fault"] == "provider"
    # true plan leaves a 250 m range at 5 s; claimed plan would have stayed until 50 s
    assert abort["tick"] == 51
    liar, buyer = res.report.by_name("liar"), res.report.by_name("parked-car")
    assert liar.final_rating == 0.0
    assert events_of(res, "escrow")[-1]["state"] == "Expired"
    assert buyer.net == 0 and buyer.final_locked == 0


def test_lazy_computer_removed_then_rejected():
    res = run("lazy_computer")
    lazy = res.report.by_name("lazy-rsu")
    (removed,) = events_of(res, "removed")
    assert removed["peer"] == lazy.peer and lazy.standing == "Removed" and lazy.final_rating < 0.5
    cause = [e for e in events_of(res, "rating") if e["ratee"] == lazy.peer][-1]
    assert cause["agreement_id"] < 50
    later = [e for e in events_of(res, "admission") if e["provider"] == lazy.peer and e["i"] > removed["i"]]
    assert later and all(not e["accepted"] and e["reason"] == "standing" for e in later)
    assert not [e for e in events_of(res, "admit") if e["provider"] == lazy.peer and e["i"] > removed["i"]]
    for p in res.report.peers:
        if p.behavior == "Honest":
            assert p.final_rating >= 0.9


def test_lazy_detection_frequency_pooled():
    n_real, k = 40, 4
    n = n_real + k
    expected = float(detection_probability(n, k, skip_count(n, 0.3)))
    assert expected == pytest.approx(float(1 - Fraction(40 * 39 * 38 * 37, 44 * 43 * 42 * 41)
                                           * Fraction(31 * 30 * 29 * 28, 40 * 39 * 38 * 37)), abs=0)
    det = tot = 0
    for seed in range(1, 21):
        r = run("lazy_computer_calibration", seed).report
        det += dict(r.detections).get("LazyComputer(0.3)", 0)
        tot += dict(r.verifications)["LazyComputer(0.3)"]
    assert tot == 1000
    assert abs(det / tot - expected) <= 0.05


def test_deadbeat_exposure_exact():
    for seed in range(1, 21):
        r = run("deadbeat_buyer", seed).report
        assert r.by_name("seller").unpaid_exposure == 3 * 5


def test_defecting_seller_removed_and_buyer_served():
    r = run("defecting_seller").report
    assert r.by_name("defector").standing == "Removed"
    assert r.by_name("buyer").completed > 0
    assert r.by_name("buyer").burned == 0


def test_removed_peers_never_admitted():
    for name in SHIPPED:
        res = run(name)
        removed = set()
        for e in res.events:
            if e["type"] == "removed":
                removed.add(e["peer"])
            elif e["type"] == "admit":
                assert e["provider"] not in removed and e["consumer"] not in removed


def test_honest_loss_bounded_everywhere():
    for name in SHIPPED:
        r = run(name).report
        assert r.honest_loss_bounded
        assert r.conservation_ok


def test_capacity_never_exceeded():
    res = run("mixed_market")
    caps = {e["peer"]: e["capacity"] for e in events_of(res, "register")}
    running = dict.fromkeys(caps, 0)
    provider_of = {e["agreement_id"]: e["provider"] for e in events_of(res, "admit")}
    started = set()
    for e in res.events:
        if e["type"] == "start":
            p = provider_of[e["agreement_id"]]
            running[p] += 1
            started.add(e["agreement_id"])
            assert running[p] <= caps[p]
        elif e["type"] in ("complete", "abort") and e["agreement_id"] in started:
            running[provider_of[e["agreement_id"]]] -= 1


def test_beacons_fit_frame():
    res = run("mixed_market")
    assert all(e["bytes"] <= 1024 for e in events_of(res, "beacon"))


def test_determinism_and_replay():
    a, b = run("mixed_market", 5), run("mixed_market", 5)
    assert dumps_events(a.events) == dumps_events(b.events)
    assert replay(loads_events(dumps_events(a.events))) == a.report
    assert run("lazy_computer", 6).report.log_digest != run("lazy_computer", 7).report.log_digest


def test_tampered_logs():
    res = run("defecting_seller")
    events = loads_events(dumps_events(res.events))
    rng = random.Random(0)
    for _ in range(20):
        cut = rng.randrange(len(events))
        damaged = events[:cut] + events[cut + 1:]
        with pytest.raises(CorruptLog):
            report_from_events(damaged)
    ledger_idx = next(i for i, e in enumerate(events) if e["type"] == "ledger")
    forged = [dict(e) for e in events]
    forged[ledger_idx]["amount"] += 1
    with pytest.raises(CorruptLog):
        report_from_events(forged)
    with pytest.raises(CorruptLog):
        loads_events('{"i": 0,\n')


def test_empty_log():
    r = report_from_events([])
    assert r.peers == () and r.events == 0 and r.conservation_ok
