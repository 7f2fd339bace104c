"""Wallets, the transaction ledger, double escrow, and streaming payments.

Every balance change goes through ``Bank.apply``, which appends a batch of
ledger entries atomically and re-checks conservation afterwards: the sum of
``balance + locked`` over all wallets plus everything burned must equal the
total minted when wallets were opened.

Entry semantics (``from`` is always the wallet debited):

    Lock      balance -> locked        (from)
    Release   locked  -> balance       (from)
    Transfer  balance -> to.balance    (from, to)
    Burn      locked  -> destroyed     (from)
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Mapping, Sequence

from motive.errors import ConservationViolation, IllegalState, InsufficientFunds, PaymentError
from motive.identity import PeerId


class EntryKind(str, Enum):
    LOCK = "Lock"
    RELEASE = "Release"
    TRANSFER = "Transfer"
    BURN = "Burn"


@dataclass(frozen=True)
class LedgerEntry:
    seq: int
    tick: int
    kind: EntryKind
    from_: PeerId
    to: PeerId | None
    amount: int
    agreement_id: int

    def to_json(self) -> dict:
        return {
            "seq": self.seq,
            "tick": self.tick,
            "kind": self.kind.value,
            "from": self.from_,
            "to": self.to,
            "amount": self.amount,
            "agreement_id": self.agreement_id,
        }

    @classmethod
    def from_json(cls, d: Mapping) -> LedgerEntry:
        return cls(int(d["seq"]), int(d["tick"]), EntryKind(d["kind"]), int(d["from"]),
                   None if d["to"] is None else int(d["to"]), int(d["amount"]), int(d["agreement_id"]))


@dataclass
class Wallet:
    owner: PeerId
    balance: int = 0
    locked: int = 0

    @property
    def total(self) -> int:
        return self.balance + self.locked


Op = tuple[EntryKind, PeerId, "PeerId | None", int]


def _apply_op(wallets: dict[PeerId, Wallet], op: Op) -> int:
    """Apply one op in place; returns the amount burned. Raises on underflow."""
    kind, src, dst, amount = op
    if amount < 0:
        raise PaymentError(f"negative amount {amount}")
    w = wallets.get(src)
    if w is None:
        raise PaymentError(f"no wallet for peer {src}")
    if kind is EntryKind.LOCK:
        if w.balance < amount:
            raise InsufficientFunds(src, amount, w.balance)
        w.balance -= amount
        w.locked += amount
    elif kind is EntryKind.RELEASE:
        if w.locked < amount:
            raise IllegalState(f"peer {src} releases {amount} but only {w.locked} is locked")
        w.locked -= amount
        w.balance += amount
    elif kind is EntryKind.TRANSFER:
        if dst not in wallets:
            raise PaymentError(f"no wallet for peer {dst}")
        if w.balance < amount:
            raise InsufficientFunds(src, amount, w.balance)
        w.balance -= amount
        wallets[dst].balance += amount
    elif kind is EntryKind.BURN:
        if w.locked < amount:
            raise IllegalState(f"peer {src} burns {amount} but only {w.locked} is locked")
        w.locked -= amount
        return amount
    return 0


class Bank:
    """In-memory wallets plus the single append point of the ledger."""

    def __init__(self):
        self.wallets: dict[PeerId, Wallet] = {}
        self.entries: list[LedgerEntry] = []
        self.burned = 0
        self.minted = 0
        self.listeners: list[Callable[[LedgerEntry], None]] = []

    def open_wallet(self, owner: PeerId, balance: int) -> Wallet:
        if owner in self.wallets:
            raise PaymentError(f"peer {owner} already has a wallet")
        if balance < 0:
            raise PaymentError("opening balance must be non-negative")
        w = self.wallets[owner] = Wallet(owner, balance)
        self.minted += balance
        return w

    def wallet(self, owner: PeerId) -> Wallet:
        try:
            return self.wallets[owner]
        except KeyError:
            raise PaymentError(f"no wallet for peer {owner}") from None

    def balance(self, owner: PeerId) -> int:
        return self.wallet(owner).balance

    def apply(self, ops: Sequence[Op], tick: int, agreement_id: int) -> list[LedgerEntry]:
        """Append ``ops`` as one atomic batch: either all land or none do."""
        scratch = {p: Wallet(w.owner, w.balance, w.locked) for p, w in self.wallets.items()}
        burned = 0
        for op in ops:
            burned += _apply_op(scratch, op)
        self.wallets = scratch
        self.burned += burned
        new = []
        for kind, src, dst, amount in ops:
            e = LedgerEntry(len(self.entries), tick, kind, src, dst, amount, agreement_id)
            self.entries.append(e)
            new.append(e)
        self.check_conservation()
        for e in new:
            for fn in self.listeners:
                fn(e)
        return new

    def total(self) -> int:
        return sum(w.total for w in self.wallets.values()) + self.burned

    def check_conservation(self) -> None:
        if self.total() != self.minted:
            raise ConservationViolation(f"holdings+burned={self.total()} but minted={self.minted}")

    def to_jsonl(self) -> str:
        return "".join(json.dumps(e.to_json(), sort_keys=True) + "\n" for e in self.entries)


def replay_ledger(initial: Mapping[PeerId, int], entries: Iterable[LedgerEntry]) -> tuple[dict[PeerId, Wallet], int]:
    """Rebuild wallets from opening balances; returns (wallets, burned)."""
    wallets = {p: Wallet(p, b) for p, b in initial.items()}
    burned = 0
    expected = 0
    for e in entries:
        if e.seq != expected:
            raise PaymentError(f"ledger gap: expected seq {expected}, got {e.seq}")
        expected += 1
        burned += _apply_op(wallets, (e.kind, e.from_, e.to, e.amount))
    return wallets, burned


def load_jsonl(text: str) -> list[LedgerEntry]:
    return [LedgerEntry.from_json(json.loads(line)) for line in text.splitlines() if line.strip()]


# -- double escrow ---------------------------------------------------------

class EscrowState(str, Enum):
    PROPOSED = "Proposed"
    FUNDED = "Funded"
    DELIVERED = "Delivered"
    ACCEPTED = "Accepted"
    DISPUTED = "Disputed"
    SETTLED = "Settled"
    EXPIRED = "Expired"


class Outcome(str, Enum):
    ACCEPTED = "Accepted"
    DISPUTED = "Disputed"
    EXPIRED = "Expired"


_LEGAL = {
    EscrowState.PROPOSED: {EscrowState.FUNDED, EscrowState.EXPIRED},
    EscrowState.FUNDED: {EscrowState.DELIVERED, EscrowState.EXPIRED},
    EscrowState.DELIVERED: {EscrowState.ACCEPTED, EscrowState.DISPUTED},
    EscrowState.ACCEPTED: {EscrowState.SETTLED},
    EscrowState.DISPUTED: {EscrowState.SETTLED},
    EscrowState.SETTLED: set(),
    EscrowState.EXPIRED: set(),
}


def deposit_for(price: int, percent: int) -> int:
    return price * percent // 100


@dataclass
class EscrowContract:
    agreement_id: int
    buyer: PeerId
    seller: PeerId
    price: int
    buyer_deposit: int
    seller_deposit: int
    timeout: int
    state: EscrowState = EscrowState.PROPOSED
    history: list[EscrowState] = field(default_factory=lambda: [EscrowState.PROPOSED])

    @classmethod
    def propose(cls, agreement_id: int, buyer: PeerId, seller: PeerId, price: int, timeout: int,
                deposit_percent: int = 20) -> EscrowContract:
        d = deposit_for(price, deposit_percent)
        return cls(agreement_id, buyer, seller, price, d, d, timeout)

    @property
    def closed(self) -> bool:
        return self.state in (EscrowState.SETTLED, EscrowState.EXPIRED)

    def _move(self, new: EscrowState) -> None:
        if new not in _LEGAL[self.state]:
            raise IllegalState(f"escrow {self.agreement_id}: {self.state.value} -> {new.value} not allowed")
        self.state = new
        self.history.append(new)


def fund(contract: EscrowContract, bank: Bank, tick: int = 0) -> list[LedgerEntry]:
    """Lock price + buyer deposit from the buyer and the seller's deposit."""
    if contract.state is not EscrowState.PROPOSED:
        raise IllegalState(f"escrow {contract.agreement_id} is {contract.state.value}, not Proposed")
    c = contract
    entries = bank.apply([
        (EntryKind.LOCK, c.buyer, None, c.price + c.buyer_deposit),
        (EntryKind.LOCK, c.seller, None, c.seller_deposit),
    ], tick, c.agreement_id)
    c._move(EscrowState.FUNDED)
    return entries


def mark_delivered(contract: EscrowContract) -> None:
    contract._move(EscrowState.DELIVERED)


def settle(contract: EscrowContract, outcome: Outcome, bank: Bank, tick: int = 0) -> list[LedgerEntry]:
    c = contract
    outcome = Outcome(outcome)
    if outcome is Outcome.EXPIRED:
        if c.state not in (EscrowState.PROPOSED, EscrowState.FUNDED):
            raise IllegalState(f"escrow {c.agreement_id} cannot expire from {c.state.value}")
        ops = []
        if c.state is EscrowState.FUNDED:
            ops = [
                (EntryKind.RELEASE, c.buyer, None, c.price + c.buyer_deposit),
                (EntryKind.RELEASE, c.seller, None, c.seller_deposit),
            ]
        entries = bank.apply(ops, tick, c.agreement_id) if ops else []
        c._move(EscrowState.EXPIRED)
        return entries
    if c.state is not EscrowState.DELIVERED:
        raise IllegalState(f"escrow {c.agreement_id} must be Delivered to settle as {outcome.value}")
    if outcome is Outcome.ACCEPTED:
        ops = [
            (EntryKind.RELEASE, c.buyer, None, c.price + c.buyer_deposit),
            (EntryKind.RELEASE, c.seller, None, c.seller_deposit),
            (EntryKind.TRANSFER, c.buyer, c.seller, c.price),
        ]
        nxt = EscrowState.ACCEPTED
    else:
        ops = [
            (EntryKind.RELEASE, c.buyer, None, c.price),
            (EntryKind.BURN, c.buyer, None, c.buyer_deposit),
            (EntryKind.BURN, c.seller, None, c.seller_deposit),
        ]
        nxt = EscrowState.DISPUTED
    entries = bank.apply(ops, tick, c.agreement_id)
    c._move(nxt)
    c._move(EscrowState.SETTLED)
    return entries


def expire_if_due(contract: EscrowContract, bank: Bank, now: int) -> list[LedgerEntry]:
    if now >= contract.timeout and contract.state in (EscrowState.PROPOSED, EscrowState.FUNDED):
        return settle(contract, Outcome.EXPIRED, bank, now)
    return []


# -- moving-window streaming ----------------------------------------------

class StreamEvent(str, Enum):
    DELIVER_CHUNK = "DeliverChunk"
    PAY_CHUNK = "PayChunk"
    HALT = "Halt"


class StepResult(str, Enum):
    DELIVERED = "Delivered"
    REFUSED_BY_WINDOW = "RefusedByWindow"
    PAID = "Paid"
    HALTED = "Halted"


class SessionState(str, Enum):
    OPEN = "Open"
    CLOSED = "Closed"


@dataclass
class StreamSession:
    agreement_id: int
    buyer: PeerId
    seller: PeerId
    chunk_price: int
    window_w: int
    total_chunks: int | None = None
    chunks_delivered: int = 0
    chunks_paid: int = 0
    state: SessionState = SessionState.OPEN

    def __post_init__(self):
        if self.window_w < 1:
            raise ValueError("window_w must be positive")

    @property
    def unpaid(self) -> int:
        return self.chunks_delivered - self.chunks_paid

    @property
    def exposure(self) -> int:
        """Value delivered to the buyer but not yet paid for."""
        return self.unpaid * self.chunk_price

    @property
    def finished(self) -> bool:
        return self.total_chunks is not None and self.chunks_paid >= self.total_chunks


def stream_step(session: StreamSession, event: StreamEvent, bank: Bank, tick: int = 0) -> StepResult:
    """Advance one step. The seller refuses to run more than ``window_w`` chunks ahead."""
    s = session
    if s.state is not SessionState.OPEN:
        raise IllegalState(f"stream {s.agreement_id} is closed")
    event = StreamEvent(event)
    if event is StreamEvent.DELIVER_CHUNK:
        if s.total_chunks is not None and s.chunks_delivered >= s.total_chunks:
            raise IllegalState(f"stream {s.agreement_id}: all {s.total_chunks} chunks already delivered")
        if s.unpaid >= s.window_w:
            return StepResult.REFUSED_BY_WINDOW
        s.chunks_delivered += 1
        return StepResult.DELIVERED
    if event is StreamEvent.PAY_CHUNK:
        if s.unpaid <= 0:
            raise IllegalState(f"stream {s.agreement_id}: nothing delivered to pay for")
        bank.apply([(EntryKind.TRANSFER, s.buyer, s.seller, s.chunk_price)], tick, s.agreement_id)
        s.chunks_paid += 1
        return StepResult.PAID
    s.state = SessionState.CLOSED
    return StepResult.HALTED
