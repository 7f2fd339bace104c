import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from motive.errors import ConservationViolation, IllegalState, InsufficientFunds, PaymentError
from motive.payments import (Bank, EntryKind, EscrowContract, EscrowState, LedgerEntry, Outcome, StepResult,
                             StreamEvent, StreamSession, expire_if_due, fund, load_jsonl, mark_delivered,
                             replay_ledger, settle, stream_step)
from oracles import all_sequences, escrow_model

BUYER, SELLER = 1, 2


def bank_with(buyer=15, seller=5):
    bank = Bank()
    bank.open_wallet(BUYER, buyer)
    bank.open_wallet(SELLER, seller)
    return bank


def contract(price=10, pct=20, timeout=50):
    return EscrowContract.propose(7, BUYER, SELLER, price, timeout, pct)


def totals(bank):
    return bank.wallet(BUYER).total, bank.wallet(SELLER).total


def test_funding_locks_price_and_deposits():
    bank, c = bank_with(), contract()
    assert (c.buyer_deposit, c.seller_deposit) == (2, 2)
    fund(c, bank)
    assert (bank.wallet(BUYER).locked, bank.wallet(SELLER).locked) == (12, 2)
    with pytest.raises(IllegalState):
        fund(c, bank)


def test_funding_is_atomic():
    bank, c = bank_with(buyer=11), contract()
    with pytest.raises(InsufficientFunds) as e:
        fund(c, bank)
    assert e.value.party == BUYER
    assert bank.entries == [] and c.state is EscrowState.PROPOSED
    assert totals(bank) == (11, 5) and bank.wallet(BUYER).locked == 0


def test_accept_dispute_expire_nets():
    bank, c = bank_with(), contract()
    fund(c, bank)
    mark_delivered(c)
    settle(c, Outcome.ACCEPTED, bank)
    assert totals(bank) == (5, 15) and c.state is EscrowState.SETTLED

    bank, c = bank_with(), contract()
    fund(c, bank)
    mark_delivered(c)
    settle(c, Outcome.DISPUTED, bank)
    assert totals(bank) == (13, 3) and bank.burned == 4

    bank, c = bank_with(), contract()
    settle(c, Outcome.EXPIRED, bank)
    assert totals(bank) == (15, 5) and bank.entries == []

    bank, c = bank_with(), contract(timeout=5)
    fund(c, bank)
    assert expire_if_due(c, bank, 4) == []
    expire_if_due(c, bank, 5)
    assert c.state is EscrowState.EXPIRED and totals(bank) == (15, 5)
    assert bank.wallet(BUYER).locked == bank.wallet(SELLER).locked == 0


def test_no_backward_moves():
    bank, c = bank_with(), contract()
    fund(c, bank)
    mark_delivered(c)
    with pytest.raises(IllegalState):
        settle(c, Outcome.EXPIRED, bank)
    settle(c, Outcome.ACCEPTED, bank)
    for bad in (lambda: mark_delivered(c), lambda: fund(c, bank), lambda: settle(c, Outcome.DISPUTED, bank)):
        with pytest.raises(IllegalState):
            bad()


def drive(actions, price, buyer0, seller0, pct=20):
    bank = bank_with(buyer0, seller0)
    c = contract(price, pct)
    steps = {
        "fund": lambda: fund(c, bank),
        "deliver": lambda: mark_delivered(c),
        "accept": lambda: settle(c, Outcome.ACCEPTED, bank),
        "dispute": lambda: settle(c, Outcome.DISPUTED, bank),
        "expire": lambda: settle(c, Outcome.EXPIRED, bank),
    }
    for a in actions:
        try:
            steps[a]()
        except (IllegalState, InsufficientFunds):
            pass
        bank.check_conservation()
    return bank, c


def test_escrow_enumeration_matches_model_and_bounds_loss():
    price, dep = 10, 2
    for buyer0, seller0 in ((15, 5), (11, 5), (15, 1)):
        for seq in all_sequences(6):
            bank, c = drive(seq, price, buyer0, seller0)
            state, b_tot, s_tot, burned, b_lock, s_lock, received = escrow_model(seq, price, dep, buyer0, seller0)
            assert c.state.value == state
            assert totals(bank) == (b_tot, s_tot) and bank.burned == burned
            assert (bank.wallet(BUYER).locked, bank.wallet(SELLER).locked) == (b_lock, s_lock)
            if c.closed:
                assert b_lock == s_lock == 0
            buyer_loss = buyer0 - b_tot - (price if received else 0)
            seller_loss = seller0 - s_tot
            assert buyer_loss <= dep and seller_loss <= dep


def test_window_refuses_fourth_unpaid_chunk():
    bank = bank_with(100, 0)
    s = StreamSession(1, BUYER, SELLER, 5, 3)
    results = [stream_step(s, StreamEvent.DELIVER_CHUNK, bank) for _ in range(4)]
    assert results == [StepResult.DELIVERED] * 3 + [StepResult.REFUSED_BY_WINDOW]
    assert s.exposure == 15
    with pytest.raises(IllegalState):
        stream_step(StreamSession(2, BUYER, SELLER, 5, 3), StreamEvent.PAY_CHUNK, bank)


def test_lockstep_hundred_chunks():
    bank = bank_with(1000, 0)
    s = StreamSession(1, BUYER, SELLER, 5, 3)
    for _ in range(100):
        assert stream_step(s, StreamEvent.DELIVER_CHUNK, bank) is StepResult.DELIVERED
        assert stream_step(s, StreamEvent.PAY_CHUNK, bank) is StepResult.PAID
    assert s.chunks_delivered == s.chunks_paid == 100
    assert totals(bank) == (500, 500)
    stream_step(s, StreamEvent.HALT, bank)
    with pytest.raises(IllegalState):
        stream_step(s, StreamEvent.DELIVER_CHUNK, bank)


@settings(max_examples=300, deadline=None)
@given(st.lists(st.sampled_from(list(StreamEvent)), max_size=40), st.integers(1, 5), st.integers(0, 60))
def test_stream_window_invariant(events, w, balance):
    bank = bank_with(balance, 0)
    s = StreamSession(1, BUYER, SELLER, 3, w)
    for ev in events:
        if s.state.value == "Closed":
            break
        try:
            stream_step(s, ev, bank)
        except (IllegalState, InsufficientFunds):
            pass
        assert 0 <= s.unpaid <= w
        assert s.exposure <= w * 3
        # pay-after-delivery: the buyer never pays for an undelivered chunk
        assert bank.wallet(SELLER).total == 3 * s.chunks_paid
    bank.check_conservation()


def test_ledger_replay_and_jsonl():
    rng = random.Random(3)
    bank = Bank()
    for p in range(1, 5):
        bank.open_wallet(p, 100)
    for aid in range(60):
        b, s = rng.sample(range(1, 5), 2)
        c = EscrowContract.propose(aid, b, s, rng.randint(1, 20), 10)
        try:
            fund(c, bank, aid)
        except InsufficientFunds:
            continue
        if rng.random() < 0.3:
            settle(c, Outcome.EXPIRED, bank, aid)
            continue
        mark_delivered(c)
        settle(c, rng.choice([Outcome.ACCEPTED, Outcome.DISPUTED]), bank, aid)
    entries = load_jsonl(bank.to_jsonl())
    assert entries == bank.entries
    wallets, burned = replay_ledger({p: 100 for p in range(1, 5)}, entries)
    assert burned == bank.burned
    assert {p: (w.balance, w.locked) for p, w in wallets.items()} == \
        {p: (w.balance, w.locked) for p, w in bank.wallets.items()}
    with pytest.raises(PaymentError):
        replay_ledger({p: 100 for p in range(1, 5)}, entries[:3] + entries[4:])


def test_entry_json_keys():
    e = LedgerEntry(0, 3, EntryKind.TRANSFER, 1, 2, 5, 9)
    assert json.loads(json.dumps(e.to_json())) == {"seq": 0, "tick": 3, "kind": "Transfer", "from": 1,
                                                   "to": 2, "amount": 5, "agreement_id": 9}


def test_conservation_violation_detected():
    bank = bank_with()
    bank.wallet(BUYER).balance += 1
    with pytest.raises(ConservationViolation):
        bank.check_conservation()
