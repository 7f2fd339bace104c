"""Metrics derived purely from an event log, plus log (de)serialization.

``report_from_events`` is the only way a report gets built, both at the end
of a live run and when replaying a stored log, so the two can never drift.
"""

from __future__ import annotations

import hashlib
import json
from collections import Counter
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Iterable

from motive.errors import CorruptLog, MotiveError, PaymentError
from motive.identity import Credential, PeerKind, RatingParams, Registry
from motive.payments import EntryKind, LedgerEntry, Wallet, _apply_op

EVENT_TYPES = frozenset({
    "run_start", "register", "link_up", "link_down", "beacon", "beacon_error", "admission", "admit",
    "fund_failed", "escrow", "ledger", "schedule", "start", "chunk", "window_refused", "verify",
    "stream_closed", "complete", "abort", "rating", "removed", "run_end",
})


def canonical_line(event: dict) -> str:
    return json.dumps(event, sort_keys=True, separators=(",", ":"))


def dumps_events(events: Iterable[dict]) -> str:
    return "".join(canonical_line(e) + "\n" for e in events)


def loads_events(text: str) -> list[dict]:
    out = []
    for n, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            e = json.loads(line)
        except json.JSONDecodeError as err:
            raise CorruptLog(f"line {n}: {err.msg}") from None
        if not isinstance(e, dict):
            raise CorruptLog(f"line {n}: event is not an object")
        out.append(e)
    return out


def load_events(path: str | Path) -> list[dict]:
    return loads_events(Path(path).read_text(encoding="utf-8"))


def log_digest(events: Iterable[dict]) -> str:
    return hashlib.sha256(dumps_events(events).encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class PeerMetrics:
    peer: int
    name: str
    kind: str
    behavior: str
    completed: int
    aborted: int
    revenue: int
    spent: int
    burned: int
    deposits_posted: int
    unpaid_exposure: int
    initial_balance: int
    final_balance: int
    final_locked: int
    net: int
    final_rating: float
    ratings_count: int
    standing: str


PEER_COLUMNS = tuple(f.name for f in fields(PeerMetrics))


@dataclass(frozen=True)
class MetricsReport:
    scenario: str
    seed: int
    ticks: int
    peers: tuple[PeerMetrics, ...]
    agreements_admitted: int
    agreements_completed: int
    agreements_aborted: int
    ledger_entries: int
    total_minted: int
    total_burned: int
    conservation_ok: bool
    conservation_violations: int
    verifications: tuple[tuple[str, int], ...]
    detections: tuple[tuple[str, int], ...]
    removed: tuple[int, ...]
    honest_loss_bounded: bool
    events: int
    log_digest: str

    def peer(self, pid: int) -> PeerMetrics:
        for p in self.peers:
            if p.peer == pid:
                return p
        raise KeyError(pid)

    def by_name(self, name: str) -> PeerMetrics:
        for p in self.peers:
            if p.name == name:
                return p
        raise KeyError(name)

    def detection_rate(self, label: str) -> float | None:
        n = dict(self.verifications).get(label, 0)
        return dict(self.detections).get(label, 0) / n if n else None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["verifications"] = dict(self.verifications)
        d["detections"] = dict(self.detections)
        d["removed"] = list(self.removed)
        return d

    def summary_row(self) -> dict:
        """Flat scalar view, one row per run in sweep output."""
        d = self.to_dict()
        del d["peers"]
        for key in ("verifications", "detections"):
            d[key] = ";".join(f"{k}={v}" for k, v in sorted(d[key].items()))
        d["removed"] = ";".join(str(x) for x in self.removed)
        return d


def empty_report() -> MetricsReport:
    return MetricsReport("", 0, 0, (), 0, 0, 0, 0, 0, 0, True, 0, (), (), (), True, 0, log_digest([]))


class _PeerAcc:
    def __init__(self, pid: int, ev: dict):
        self.pid = pid
        self.name = ev["name"]
        self.kind = ev["kind"]
        self.behavior = ev["behavior"]
        self.initial = int(ev["balance"])
        self.completed = self.aborted = 0
        self.revenue = self.spent = self.burned = 0
        self.deposits = self.exposure = 0


def _check_structure(events: list[dict]) -> None:
    for n, e in enumerate(events):
        if e.get("i") != n:
            raise CorruptLog(f"event index gap at position {n} (found i={e.get('i')!r})")
        if e.get("type") not in EVENT_TYPES:
            raise CorruptLog(f"event {n}: unknown type {e.get('type')!r}")
        if not isinstance(e.get("tick"), int):
            raise CorruptLog(f"event {n}: missing tick")
    if events[0]["type"] != "run_start":
        raise CorruptLog("log does not begin with run_start")
    if events[-1]["type"] != "run_end":
        raise CorruptLog("log does not end with run_end (truncated?)")


def report_from_events(events: list[dict]) -> MetricsReport:
    """Recompute every metric from the log. Raises CorruptLog on damage."""
    if not events:
        return empty_report()
    _check_structure(events)
    try:
        return _build(events)
    except (KeyError, TypeError, ValueError, MotiveError) as e:
        if isinstance(e, CorruptLog):
            raise
        raise CorruptLog(f"inconsistent log: {type(e).__name__}: {e}") from None


def _build(events: list[dict]) -> MetricsReport:
    start = events[0]
    rp = start["ratings"]
    registry = Registry(RatingParams(rp["default_rating"], rp["threshold"], rp["min_ratings"]))
    peers: dict[int, _PeerAcc] = {}
    wallets: dict[int, Wallet] = {}
    minted = burned = 0
    violations = 0
    next_seq = 0
    parties: dict[int, tuple[int, int]] = {}
    recorded: set[int] = set()
    admitted = completed = aborted = 0
    verifications: Counter = Counter()
    detections: Counter = Counter()
    removed: list[int] = []

    for e in events:
        kind = e["type"]
        if kind == "register":
            pid = registry.add_user(Credential(f"replay-{e['peer']}", f"replay-{e['peer']}", PeerKind(e["kind"])))
            if pid != e["peer"]:
                raise CorruptLog(f"register events out of order at peer {e['peer']}")
            peers[pid] = _PeerAcc(pid, e)
            wallets[pid] = Wallet(pid, int(e["balance"]))
            minted += int(e["balance"])
        elif kind == "ledger":
            entry = LedgerEntry.from_json(e)
            if entry.seq != next_seq:
                raise CorruptLog(f"ledger seq gap: expected {next_seq}, got {entry.seq}")
            next_seq += 1
            try:
                b = _apply_op(wallets, (entry.kind, entry.from_, entry.to, entry.amount))
            except PaymentError as err:
                raise CorruptLog(f"ledger entry {entry.seq} cannot apply: {err}") from None
            burned += b
            if sum(w.total for w in wallets.values()) + burned != minted:
                violations += 1
            if entry.kind is EntryKind.TRANSFER:
                peers[entry.from_].spent += entry.amount
                peers[entry.to].revenue += entry.amount
            elif entry.kind is EntryKind.BURN:
                peers[entry.from_].burned += entry.amount
        elif kind == "admit":
            admitted += 1
            parties[e["agreement_id"]] = (e["provider"], e["consumer"])
        elif kind == "escrow" and e["state"] == "Funded":
            peers[e["buyer"]].deposits += e["buyer_deposit"]
            peers[e["seller"]].deposits += e["seller_deposit"]
        elif kind == "stream_closed":
            peers[e["seller"]].exposure += e["exposure"]
        elif kind == "verify":
            label = peers[e["provider"]].behavior
            verifications[label] += 1
            if e["verdict"] == "CheatDetected":
                detections[label] += 1
        elif kind in ("complete", "abort"):
            p, c = parties[e["agreement_id"]]
            if kind == "complete":
                completed += 1
                peers[p].completed += 1
                peers[c].completed += 1
            else:
                aborted += 1
                peers[p].aborted += 1
                peers[c].aborted += 1
        elif kind == "rating":
            aid = e["agreement_id"]
            if aid not in recorded:
                registry.record_agreement(aid, *parties[aid])
                recorded.add(aid)
            standing = registry.rate_user(e["rater"], e["ratee"], aid, float(e["score"]), e["tick"])
            if standing.value != e["standing"] or registry.get_rating(e["ratee"]) != e["rating"]:
                raise CorruptLog(f"event {e['i']}: logged rating disagrees with recomputation")
        elif kind == "removed":
            removed.append(e["peer"])

    # every contract is closed by run_end, so nothing may stay locked
    stuck = {pid: w.locked for pid, w in wallets.items() if w.locked}
    if stuck:
        raise CorruptLog(f"funds still locked at run end: {stuck}")
    pms = []
    for pid in sorted(peers):
        a, w = peers[pid], wallets[pid]
        rec = registry.record(pid)
        pms.append(PeerMetrics(
            peer=pid, name=a.name, kind=a.kind, behavior=a.behavior,
            completed=a.completed, aborted=a.aborted, revenue=a.revenue, spent=a.spent,
            burned=a.burned, deposits_posted=a.deposits, unpaid_exposure=a.exposure,
            initial_balance=a.initial, final_balance=w.balance, final_locked=w.locked,
            net=w.total - a.initial, final_rating=registry.get_rating(pid), ratings_count=len(rec.ratings_received),
            standing=rec.standing.value,
        ))
    honest_ok = all(p.burned <= p.deposits_posted for p in pms if p.behavior == "Honest")
    return MetricsReport(
        scenario=start["scenario"], seed=start["seed"], ticks=start["ticks"], peers=tuple(pms),
        agreements_admitted=admitted, agreements_completed=completed, agreements_aborted=aborted,
        ledger_entries=next_seq, total_minted=minted, total_burned=burned,
        conservation_ok=violations == 0, conservation_violations=violations,
        verifications=tuple(sorted(verifications.items())), detections=tuple(sorted(detections.items())),
        removed=tuple(removed), honest_loss_bounded=honest_ok, events=len(events),
        log_digest=log_digest(events),
    )


def replay(events: list[dict]) -> MetricsReport:
    return report_from_events(events)
