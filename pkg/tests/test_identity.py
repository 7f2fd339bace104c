import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from motive.errors import (DuplicateCredential, DuplicateRating, InvalidCredential, NotAParty,
                           ScoreOutOfRange, SelfRating, UnknownPeer)
from motive.identity import Credential, PeerKind, RatingParams, Registry, Standing, mean_score, standing_of
from oracles import fold_mean


def cred(i):
    return Credential(f"L{i}", f"P{i}", PeerKind.VEHICLE)


def registry_with(n, params=None):
    reg = Registry(params)
    ids = [reg.add_user(cred(i)) for i in range(n)]
    return reg, ids


def rate_all(reg, ratee, scores, rater_pool):
    for aid, s in enumerate(scores, 1):
        rater = rater_pool[aid % len(rater_pool)]
        reg.record_agreement(aid, rater, ratee)
        reg.rate_user(rater, ratee, aid, s)


def test_add_user_assigns_ids_and_rejects_duplicates():
    reg = Registry()
    assert reg.add_user(Credential("L1", "P1", PeerKind.VEHICLE)) == 1
    with pytest.raises(DuplicateCredential):
        reg.add_user(Credential("L1", "P1", PeerKind.VEHICLE))
    with pytest.raises(InvalidCredential):
        reg.add_user(Credential("", "P2", PeerKind.VEHICLE))


def test_distinct_credentials_distinct_ids():
    reg, ids = registry_with(50)
    assert len(set(ids)) == 50


def test_rating_mean_and_default():
    reg, (a, b, c) = registry_with(3)
    assert reg.get_rating(a) == 0.6
    rate_all(reg, a, [1.0, 0.0, 1.0], [b, c])
    assert reg.get_rating(a) == pytest.approx(2 / 3, abs=1e-9)


def test_thousand_binary_scores_match_fold():
    rng = random.Random(42)
    scores = [float(rng.randint(0, 1)) for _ in range(1000)]
    assert mean_score(scores, 0.6) == fold_mean(scores, 0.6)


def test_self_rating_rejected():
    reg, (a,) = registry_with(1)
    with pytest.raises(SelfRating):
        reg.rate_user(a, a, 7, 1.0)


def test_rating_requires_shared_agreement():
    reg, (a, b, c) = registry_with(3)
    with pytest.raises(NotAParty):
        reg.rate_user(a, b, 1, 1.0)
    reg.record_agreement(1, a, b)
    with pytest.raises(NotAParty):
        reg.rate_user(c, b, 1, 1.0)
    reg.rate_user(a, b, 1, 1.0)
    with pytest.raises(DuplicateRating):
        reg.rate_user(a, b, 1, 1.0)
    with pytest.raises(ScoreOutOfRange):
        reg.rate_user(b, a, 1, 1.5)
    with pytest.raises(UnknownPeer):
        reg.get_rating(99)


def test_removal_and_provisional():
    p = RatingParams(threshold=0.5, min_ratings=3)
    assert standing_of([0.2, 0.1, 0.3], p) is Standing.REMOVED
    assert standing_of([0.2, 0.1], p) is Standing.PROVISIONAL
    assert standing_of([0.9, 0.8, 0.7], p) is Standing.ACTIVE


def test_removal_is_sticky():
    reg, (a, b) = registry_with(2)
    rate_all(reg, a, [0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0], [b])
    assert reg.standing(a) is Standing.REMOVED
    assert reg.recompute_standing(a) is Standing.REMOVED


def test_to_json_round_trips_through_json():
    reg, (a, b) = registry_with(2)
    rate_all(reg, a, [1.0], [b])
    doc = json.loads(json.dumps(reg.to_json()))
    assert doc["peers"][0]["id"] == a
    assert doc["peers"][0]["standing"] == "Provisional"
    assert doc["peers"][0]["ratings_received"][0]["score"] == 1.0


scores_st = st.lists(st.floats(0, 1, allow_nan=False), max_size=30)


@settings(max_examples=200, deadline=None)
@given(scores_st, st.randoms(use_true_random=False))
def test_rating_permutation_invariant(scores, rnd):
    shuffled = scores[:]
    rnd.shuffle(shuffled)
    assert mean_score(scores, 0.6) == mean_score(shuffled, 0.6)


@settings(max_examples=200, deadline=None)
@given(scores_st, st.floats(0, 1), st.integers(1, 5))
def test_incremental_standing_equals_recompute(scores, threshold, min_ratings):
    params = RatingParams(0.6, threshold, min_ratings)
    reg, ids = registry_with(2, params)
    rate_all(reg, ids[0], scores, [ids[1]])
    assert reg.standing(ids[0]) is reg.recompute_standing(ids[0])
    assert (reg.standing(ids[0]) is Standing.PROVISIONAL) == (len(scores) < min_ratings)


def test_export_matches_documented_schema():
    jsonschema = pytest.importorskip("jsonschema")
    import re
    from pathlib import Path

    doc = (Path(__file__).parent.parent / "docs" / "registry.md").read_text(encoding="utf-8")
    schema = json.loads(re.findall(r"```json\n(.*?)```", doc, re.S)[1])
    reg, (a, b, c) = registry_with(3)
    rate_all(reg, a, [1.0, 0.0, 0.5, 0.0], [b, c])
    jsonschema.validate(reg.to_json(), schema)
