"""Permissioned peer registry: credential registration, ratings, standing.

The registry exposes the three calls a ratings contract needs (``add_user``,
``get_rating``, ``rate_user``) plus bookkeeping for which agreements a peer
took part in, so that only counterparties of a finished agreement can rate
each other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

from motive.errors import (
    DuplicateCredential,
    DuplicateRating,
    InvalidCredential,
    NotAParty,
    ScoreOutOfRange,
    SelfRating,
    UnknownPeer,
)

PeerId = int


class PeerKind(str, Enum):
    VEHICLE = "Vehicle"
    INFRASTRUCTURE = "Infrastructure"


class Standing(str, Enum):
    PROVISIONAL = "Provisional"
    ACTIVE = "Active"
    REMOVED = "Removed"


@dataclass(frozen=True)
class Credential:
    license_token: str
    plate_token: str
    kind: PeerKind = PeerKind.VEHICLE

    @property
    def key(self) -> tuple[str, str]:
        return (self.license_token, self.plate_token)


@dataclass(frozen=True)
class RatingEntry:
    rater: PeerId
    ratee: PeerId
    agreement_id: int
    score: float
    tick: int

    def __post_init__(self):
        assert self.rater != self.ratee, "rating entry with rater == ratee"


@dataclass(frozen=True)
class RatingParams:
    default_rating: float = 0.6
    threshold: float = 0.5
    min_ratings: int = 3


@dataclass
class PeerRecord:
    id: PeerId
    credential: Credential
    ratings_received: list[RatingEntry] = field(default_factory=list)
    standing: Standing = Standing.PROVISIONAL


def mean_score(scores: Sequence[float], default: float) -> float:
    """Arithmetic mean of ``scores`` (correctly rounded, order independent)."""
    if not scores:
        return default
    return math.fsum(scores) / len(scores)


def standing_of(scores: Iterable[float], params: RatingParams) -> Standing:
    """Standing after receiving ``scores`` in order.

    Removal is sticky: once some prefix of at least ``min_ratings`` scores
    averages below the threshold, later ratings cannot restore the peer.
    """
    seen: list[float] = []
    for s in scores:
        seen.append(s)
        if len(seen) >= params.min_ratings and mean_score(seen, params.default_rating) < params.threshold:
            return Standing.REMOVED
    if len(seen) < params.min_ratings:
        return Standing.PROVISIONAL
    return Standing.ACTIVE


class Registry:
    """Single-writer registry of peers and their received ratings."""

    def __init__(self, params: RatingParams | None = None):
        self.params = params or RatingParams()
        self._peers: dict[PeerId, PeerRecord] = {}
        self._by_credential: dict[tuple[str, str], PeerId] = {}
        self._agreements: dict[int, frozenset[PeerId]] = {}
        self._rated: set[tuple[PeerId, int]] = set()
        self._next_id = 1

    def __contains__(self, peer: PeerId) -> bool:
        return peer in self._peers

    def __len__(self) -> int:
        return len(self._peers)

    @property
    def peers(self) -> list[PeerRecord]:
        return [self._peers[k] for k in sorted(self._peers)]

    def add_user(self, credential: Credential) -> PeerId:
        if not credential.license_token or not credential.plate_token:
            raise InvalidCredential("license and plate tokens must be non-empty")
        if credential.key in self._by_credential:
            raise DuplicateCredential(f"credential {credential.key!r} already registered")
        pid = self._next_id
        self._next_id += 1
        self._peers[pid] = PeerRecord(id=pid, credential=credential)
        self._by_credential[credential.key] = pid
        return pid

    def record(self, peer: PeerId) -> PeerRecord:
        try:
            return self._peers[peer]
        except KeyError:
            raise UnknownPeer(f"peer {peer} is not registered") from None

    def get_rating(self, peer: PeerId) -> float:
        rec = self.record(peer)
        return mean_score([r.score for r in rec.ratings_received], self.params.default_rating)

    def standing(self, peer: PeerId) -> Standing:
        return self.record(peer).standing

    def record_agreement(self, agreement_id: int, *parties: PeerId) -> None:
        """Register a finished (completed or aborted) agreement and its parties."""
        for p in parties:
            self.record(p)
        self._agreements[agreement_id] = frozenset(parties)

    def rate_user(self, rater: PeerId, ratee: PeerId, agreement_id: int, score: float,
                  tick: int = 0) -> Standing:
        if rater == ratee:
            raise SelfRating(f"peer {rater} cannot rate itself")
        self.record(rater)
        rec = self.record(ratee)
        parties = self._agreements.get(agreement_id, frozenset())
        if rater not in parties or ratee not in parties:
            raise NotAParty(f"peers {rater},{ratee} are not both parties to agreement {agreement_id}")
        if (rater, agreement_id) in self._rated:
            raise DuplicateRating(f"peer {rater} already rated agreement {agreement_id}")
        if not (0.0 <= score <= 1.0) or math.isnan(score):
            raise ScoreOutOfRange(f"score {score} outside [0, 1]")
        rec.ratings_received.append(RatingEntry(rater, ratee, agreement_id, float(score), tick))
        self._rated.add((rater, agreement_id))
        rec.standing = self._next_standing(rec)
        return rec.standing

    def _next_standing(self, rec: PeerRecord) -> Standing:
        if rec.standing is Standing.REMOVED:
            return Standing.REMOVED
        n = len(rec.ratings_received)
        if n < self.params.min_ratings:
            return Standing.PROVISIONAL
        if self.get_rating(rec.id) < self.params.threshold:
            return Standing.REMOVED
        return Standing.ACTIVE

    def recompute_standing(self, peer: PeerId) -> Standing:
        return standing_of([r.score for r in self.record(peer).ratings_received], self.params)

    def to_json(self) -> dict:
        """Export peers, ratings and standings (schema in docs/registry.md)."""
        return {
            "params": {
                "default_rating": self.params.default_rating,
                "threshold": self.params.threshold,
                "min_ratings": self.params.min_ratings,
            },
            "peers": [
                {
                    "id": rec.id,
                    "credential": {
                        "license_token": rec.credential.license_token,
                        "plate_token": rec.credential.plate_token,
                        "kind": rec.credential.kind.value,
                    },
                    "rating": self.get_rating(rec.id),
                    "standing": rec.standing.value,
                    "ratings_received": [
                        {
                            "rater": r.rater,
                            "agreement_id": r.agreement_id,
                            "score": r.score,
                            "tick": r.tick,
                        }
                        for r in rec.ratings_received
                    ],
                }
                for rec in self.peers
            ],
        }

