"""Tick-driven, single-threaded, deterministic simulation engine.

Each tick runs the phases move, beacon, match, admit, schedule, serve,
settle, rate in that order, visiting peers in ascending id and agreements in
ascending id. Every state change lands in the event log; the metrics report
is computed from the log alone and then cross-checked against live state.
"""

from __future__ import annotations

import hashlib
import math
import random
from dataclasses import dataclass, field, replace

from motive.compute import (
    ComputeTask,
    FunctionRegistry,
    ProbeBank,
    ProbeSet,
    Verdict,
    decode_task,
    default_probe_count,
    embed_probes,
    encode_task,
    execute_honest,
    execute_lazy,
    skip_count,
    verify,
)
from motive.errors import ConservationViolation, InsufficientFunds, InvariantViolation, OversizeBeacon
from motive.identity import Registry, Standing
from motive.mobility import ContactWindow, contact_windows, position_at, remaining_from_windows
from motive.negotiation import Agreement, AgreementStatus, Decision, Gate, ServiceRequest, admit, schedule
from motive.payments import (
    Bank,
    EscrowContract,
    EscrowState,
    LedgerEntry,
    Outcome,
    StepResult,
    StreamEvent,
    StreamSession,
    fund,
    mark_delivered,
    settle,
    stream_step,
)
from motive.services import Beacon, Match, Unit, match_services
from motive.sim.metrics import MetricsReport, report_from_events
from motive.sim.scenario import Behavior, Demand, PeerSpec, Scenario
from motive.wire import decode_beacon, encode_beacon

TICK_EPS = 1e-9
# claimed and true positions further apart than this mean the plan was a lie
PLAN_TOL = 1e-6


def derive_seed(seed: int, *labels) -> int:
    h = hashlib.sha256(repr((seed,) + labels).encode()).digest()
    return int.from_bytes(h[:8], "little")


def derive_rng(seed: int, *labels) -> random.Random:
    return random.Random(derive_seed(seed, *labels))


@dataclass
class Peer:
    id: int
    spec: PeerSpec
    remaining: dict = field(default_factory=dict)
    active: dict = field(default_factory=dict)
    queue: list[Agreement] = field(default_factory=list)
    running_units: int = 0

    @property
    def behavior(self) -> Behavior:
        return self.spec.behavior.kind


@dataclass
class Deal:
    agreement: Agreement
    demand: Demand
    escrow: EscrowContract | None = None
    session: StreamSession | None = None
    task: ComputeTask | None = None
    probes: ProbeSet | None = None
    next_chunk_at: int = 0
    finish_at: int = 0
    done: bool = False
    closing: str | None = None
    fault: str | None = None

    @property
    def mode(self) -> str:
        return "escrow" if self.escrow is not None else "stream"


@dataclass
class RunResult:
    events: list[dict]
    report: MetricsReport
    registry: Registry
    bank: Bank


class Engine:
    def __init__(self, scenario: Scenario):
        self.sc = scenario
        self.registry = Registry(scenario.ratings)
        self.bank = Bank()
        self.functions = FunctionRegistry(scenario.functions)
        self.events: list[dict] = []
        self.peers: dict[int, Peer] = {}
        self.deals: dict[int, Deal] = {}
        self._next_aid = 1
        self._links: set[tuple[int, int]] = set()
        self._windows: dict[tuple[int, int], list[ContactWindow]] = {}
        self._last_decision: dict[tuple, tuple] = {}
        self._probe_banks: dict[str, ProbeBank] = {}
        self.bank.listeners.append(self._on_ledger)

    # -- logging -----------------------------------------------------------

    def emit(self, tick: int, event_type: str, /, **fields) -> None:
        self.events.append({**fields, "i": len(self.events), "tick": tick, "type": event_type})

    def _on_ledger(self, e: LedgerEntry) -> None:
        fields = e.to_json()
        del fields["tick"]
        self.emit(e.tick, "ledger", **fields)

    # -- setup -------------------------------------------------------------

    def _setup(self) -> None:
        sc = self.sc
        self.emit(0, "run_start", scenario=sc.name, seed=sc.seed, ticks=sc.ticks, tick_seconds=sc.tick_seconds,
                  radio_range=sc.radio.range_r,
                  ratings={"default_rating": sc.ratings.default_rating, "threshold": sc.ratings.threshold,
                           "min_ratings": sc.ratings.min_ratings},
                  policy={"rating_threshold": sc.policy.rating_threshold,
                          "safety_margin": sc.policy.safety_margin,
                          "min_balance_factor": sc.policy.min_balance_factor})
        for spec in sc.peers:
            pid = self.registry.add_user(spec.credential)
            self.bank.open_wallet(pid, spec.balance)
            peer = Peer(pid, spec)
            for d in spec.requires:
                peer.remaining[d.key] = d.agreements
            self.peers[pid] = peer
            self.emit(0, "register", peer=pid, name=spec.name, kind=spec.credential.kind.value,
                      behavior=spec.behavior.label, balance=spec.balance, capacity=spec.capacity)
        for fname in sorted(self.functions.bindings()):
            self._probe_banks[fname] = ProbeBank.build(
                fname, self.functions.get(fname), sc.economics.probe_bank_size,
                derive_seed(sc.seed, "probe-bank", fname))

    # -- phases ------------------------------------------------------------

    def _move(self, t: int) -> set[tuple[int, int]]:
        now = t * self.sc.tick_seconds
        pos = {pid: position_at(p.spec.plan, now) for pid, p in self.peers.items()}
        ids = sorted(self.peers)
        links = set()
        for i, a in enumerate(ids):
            for b in ids[i + 1:]:
                if math.dist(pos[a], pos[b]) <= self.sc.radio.range_r:
                    links.add((a, b))
        for a, b in sorted(links - self._links):
            self.emit(t, "link_up", a=a, b=b)
        for a, b in sorted(self._links - links):
            self.emit(t, "link_down", a=a, b=b)
        self._links = links
        return links

    def _linked(self, a: int, b: int) -> bool:
        return (min(a, b), max(a, b)) in self._links

    def _beacon(self, t: int) -> dict[int, Beacon]:
        econ = self.sc.economics
        out: dict[int, Beacon] = {}
        if t % econ.beacon_interval:
            return out
        for pid in sorted(self.peers):
            p = self.peers[pid]
            wanted = tuple(d.descriptor() for d in p.spec.requires
                           if p.remaining[d.key] > 0 and d.key not in p.active)
            if not p.spec.provides and not wanted:
                continue
            b = Beacon(pid, p.spec.provides, wanted, p.spec.claimed_plan, t)
            try:
                raw = encode_beacon(b, econ.max_beacon_bytes)
            except OversizeBeacon as e:
                self.emit(t, "beacon_error", sender=pid, error=str(e))
                continue
            receivers = [q for q in sorted(self.peers) if q != pid and self._linked(pid, q)]
            # one broadcast frame, decoded once on behalf of every receiver
            out[pid] = decode_beacon(raw, econ.max_beacon_bytes)
            self.emit(t, "beacon", sender=pid, bytes=len(raw), receivers=receivers)
        return out

    def _match(self, beacons: dict[int, Beacon]) -> dict[int, list[Match]]:
        per_consumer: dict[int, list[Match]] = {}
        for a, b in sorted(self._links):
            if a in beacons and b in beacons:
                for m in match_services(beacons[a], beacons[b]):
                    per_consumer.setdefault(m.consumer, []).append(m)
        return per_consumer

    def _remaining_ticks(self, provider: int, consumer: int, claimed: dict[int, Beacon], t: int) -> int:
        key = (min(provider, consumer), max(provider, consumer))
        if key not in self._windows:
            self._windows[key] = contact_windows(claimed[key[0]].claimed_plan, claimed[key[1]].claimed_plan,
                                                 self.sc.radio)
        rc = remaining_from_windows(self._windows[key], t * self.sc.tick_seconds)
        return math.floor(rc / self.sc.tick_seconds + TICK_EPS)

    def _log_decision(self, t, consumer, provider, key, side, decision: Decision) -> None:
        memo = (consumer, provider, key)
        state = (side, decision.accepted, decision.reason)
        if self._last_decision.get(memo) == state:
            return
        self._last_decision[memo] = state
        self.emit(t, "admission", consumer=consumer, provider=provider, service=key[1], side=side,
                  accepted=decision.accepted, reason=None if decision.reason is None else decision.reason.value)

    def _admit(self, t: int, matches: dict[int, list[Match]], beacons: dict[int, Beacon]) -> None:
        for cid in sorted(matches):
            consumer = self.peers[cid]
            for demand in consumer.spec.requires:
                if consumer.remaining[demand.key] <= 0 or demand.key in consumer.active:
                    continue
                cands = sorted((m for m in matches[cid] if m.descriptor.key == demand.key), key=lambda m: m.provider)
                for m in cands:
                    if self._try_admit(t, consumer, demand, m, beacons):
                        break

    def _try_admit(self, t: int, consumer: Peer, demand: Demand, m: Match, beacons) -> bool:
        pid, cid = m.provider, consumer.id
        # consumer side: never deal with a provider removed from the platform
        if self.registry.standing(pid) is Standing.REMOVED:
            self._log_decision(t, cid, pid, demand.key, "consumer", Decision(False, Gate.STANDING))
            return False
        quantity = demand.quantity if m.descriptor.unit is Unit.PER_CHUNK else 1
        req = ServiceRequest(replace(m, quantity=quantity), 1)
        rc = self._remaining_ticks(pid, cid, beacons, t)
        dec = admit(req, rc, self.registry.get_rating(cid), self.registry.standing(cid),
                    self.bank.balance(cid), self.sc.policy)
        self._log_decision(t, cid, pid, demand.key, "provider", dec)
        if not dec.accepted:
            return False
        aid = self._next_aid
        self._next_aid += 1
        agreement = Agreement(aid, req, t, t + rc)
        deal = Deal(agreement, demand)
        desc = req.match.descriptor
        self.emit(t, "admit", agreement_id=aid, provider=pid, consumer=cid, kind=desc.kind.value,
                  service=desc.name, unit=desc.unit.value, quantity=quantity, price=req.total_price,
                  required_duration=req.required_duration, deadline=agreement.deadline,
                  mode="stream" if desc.unit is Unit.PER_CHUNK else "escrow")
        consumer.remaining[demand.key] -= 1
        if desc.unit is Unit.PER_TASK:
            deal.escrow = EscrowContract.propose(aid, cid, pid, req.total_price, agreement.deadline,
                                                 self.sc.economics.deposit_percent)
            try:
                fund(deal.escrow, self.bank, t)
            except InsufficientFunds as e:
                agreement.status = AgreementStatus.ABORTED
                self.emit(t, "fund_failed", agreement_id=aid, party=e.party, needed=e.needed,
                          available=e.available)
                self.emit(t, "abort", agreement_id=aid, reason="funding", fault=None)
                return True
            self.emit(t, "escrow", agreement_id=aid, state=deal.escrow.state.value,
                      buyer=cid, seller=pid, buyer_deposit=deal.escrow.buyer_deposit,
                      seller_deposit=deal.escrow.seller_deposit)
        self.deals[aid] = deal
        consumer.active[demand.key] = aid
        self.peers[pid].queue.append(agreement)
        return True

    def _schedule(self, t: int) -> None:
        for pid in sorted(self.peers):
            p = self.peers[pid]
            if not p.queue:
                continue
            free = p.spec.capacity - p.running_units
            picked = schedule(p.queue, free, t)
            if not picked:
                continue
            self.emit(t, "schedule", provider=pid, free=free,
                      pending=[a.agreement_id for a in p.queue], selected=[a.agreement_id for a in picked])
            for a in picked:
                self._start(t, p, self.deals[a.agreement_id])

    def _start(self, t: int, provider: Peer, deal: Deal) -> None:
        a = deal.agreement
        provider.queue.remove(a)
        provider.running_units += a.request.capacity_units
        a.status = AgreementStatus.IN_PROGRESS
        a.started_at = t
        desc = a.request.match.descriptor
        if deal.escrow is None:
            deal.session = StreamSession(a.agreement_id, a.consumer, a.provider, desc.price_per_unit,
                                         self.sc.economics.window_w, total_chunks=a.request.match.quantity)
            deal.next_chunk_at = t + desc.min_duration
            self.emit(t, "start", agreement_id=a.agreement_id, mode="stream", chunks=a.request.match.quantity)
            return
        seed = self.sc.seed
        frames = derive_rng(seed, "frames", a.agreement_id)
        n_real = deal.demand.subtasks
        task = ComputeTask(desc.name, tuple(frames.randbytes(16) for _ in range(n_real)))
        k = default_probe_count(n_real, self.sc.economics.probe_fraction)
        augmented, probes = embed_probes(task, k, derive_rng(seed, "probes", a.agreement_id),
                                         self._probe_banks.get(desc.name))
        payload = encode_task(augmented)
        # what the provider sees: the bytes, with no trace of probe positions
        deal.task = decode_task(payload)
        deal.probes = probes
        deal.finish_at = t + a.request.required_duration
        self.emit(t, "start", agreement_id=a.agreement_id, mode="escrow", n_real=n_real, k=k,
                  n_total=augmented.n, payload_bytes=len(payload))

    def _serve(self, t: int) -> None:
        for aid in sorted(self.deals):
            deal = self.deals[aid]
            a = deal.agreement
            if a.status is not AgreementStatus.IN_PROGRESS or deal.done or deal.closing:
                continue
            if not self._linked(a.provider, a.consumer):
                continue
            if deal.session is not None:
                self._serve_stream(t, deal)
            else:
                self._serve_compute(t, deal)

    def _serve_stream(self, t: int, deal: Deal) -> None:
        a, s = deal.agreement, deal.session
        provider, consumer = self.peers[a.provider], self.peers[a.consumer]
        desc = a.request.match.descriptor
        if (provider.behavior is not Behavior.DEFECTING_SELLER and t >= deal.next_chunk_at
                and s.chunks_delivered < s.total_chunks):
            r = stream_step(s, StreamEvent.DELIVER_CHUNK, self.bank, t)
            if r is StepResult.DELIVERED:
                deal.next_chunk_at += desc.min_duration
                self.emit(t, "chunk", agreement_id=a.agreement_id, delivered=s.chunks_delivered)
            else:
                self.emit(t, "window_refused", agreement_id=a.agreement_id, unpaid=s.unpaid)
                deal.closing, deal.fault = "window", "consumer"
                return
        if consumer.behavior is not Behavior.DEADBEAT_BUYER:
            while s.unpaid > 0:
                try:
                    stream_step(s, StreamEvent.PAY_CHUNK, self.bank, t)
                except InsufficientFunds:
                    deal.closing, deal.fault = "unpaid", "consumer"
                    return
        if s.finished:
            deal.done = True

    def _serve_compute(self, t: int, deal: Deal) -> None:
        a = deal.agreement
        if t < deal.finish_at or deal.escrow.state is not EscrowState.FUNDED:
            return
        provider = self.peers[a.provider]
        if provider.behavior is Behavior.DEFECTING_SELLER:
            return
        fn = self.functions.get(deal.task.function_name)
        skipped = 0
        if provider.behavior is Behavior.LAZY_COMPUTER:
            skipped = skip_count(deal.task.n, provider.spec.behavior.skip_fraction)
            result = execute_lazy(deal.task, fn, skipped, derive_rng(self.sc.seed, "lazy", a.agreement_id))
        else:
            result = execute_honest(deal.task, fn)
        mark_delivered(deal.escrow)
        verdict = verify(result, deal.probes)
        self.emit(t, "verify", agreement_id=a.agreement_id, provider=a.provider, consumer=a.consumer,
                  verdict=verdict.value, n_total=deal.task.n, k=deal.probes.k, skipped=skipped)
        if verdict is Verdict.VERIFIED:
            settle(deal.escrow, Outcome.ACCEPTED, self.bank, t)
            deal.done = True
        else:
            settle(deal.escrow, Outcome.DISPUTED, self.bank, t)
            deal.closing, deal.fault = "dispute", "provider"
        self.emit(t, "escrow", agreement_id=a.agreement_id, state=deal.escrow.state.value,
                  outcome=deal.escrow.history[-2].value)

    def _disconnect_fault(self, t: int, a: Agreement) -> str | None:
        now = t * self.sc.tick_seconds
        p, c = self.peers[a.provider].spec, self.peers[a.consumer].spec
        predicted = math.dist(position_at(p.claimed_plan, now), position_at(c.claimed_plan, now))
        if predicted > self.sc.radio.range_r:
            return None
        liars = [role for role, spec in (("provider", p), ("consumer", c))
                 if math.dist(position_at(spec.claimed_plan, now), position_at(spec.plan, now)) > PLAN_TOL]
        if len(liars) == 1:
            return liars[0]
        return "both" if liars else None

    def _settle(self, t: int) -> list[Deal]:
        finished = []
        for aid in sorted(self.deals):
            deal = self.deals[aid]
            a = deal.agreement
            if deal.done:
                self._finish(t, deal, completed=True, reason="completed")
            elif deal.closing:
                self._finish(t, deal, completed=False, reason=deal.closing)
            elif not self._linked(a.provider, a.consumer):
                deal.fault = self._disconnect_fault(t, a)
                self._finish(t, deal, completed=False, reason="disconnect")
            elif t >= a.deadline:
                if a.status is AgreementStatus.IN_PROGRESS:
                    deal.fault = "provider"
                self._finish(t, deal, completed=False, reason="deadline")
            elif (a.status is AgreementStatus.IN_PROGRESS
                  and t >= a.started_at + a.request.required_duration):
                deal.fault = "provider"
                self._finish(t, deal, completed=False, reason="overdue")
            elif a.status is AgreementStatus.SCHEDULED and not a.fits(t):
                self._finish(t, deal, completed=False, reason="unschedulable")
            else:
                continue
            finished.append(deal)
        for deal in finished:
            del self.deals[deal.agreement.agreement_id]
        return finished

    def _finish(self, t: int, deal: Deal, completed: bool, reason: str) -> None:
        a = deal.agreement
        provider, consumer = self.peers[a.provider], self.peers[a.consumer]
        if deal.session is not None:
            s = deal.session
            stream_step(s, StreamEvent.HALT, self.bank, t)
            self.emit(t, "stream_closed", agreement_id=a.agreement_id, seller=a.provider, buyer=a.consumer,
                      delivered=s.chunks_delivered, paid=s.chunks_paid, exposure=s.exposure)
        if deal.escrow is not None and deal.escrow.state in (EscrowState.PROPOSED, EscrowState.FUNDED):
            settle(deal.escrow, Outcome.EXPIRED, self.bank, t)
            self.emit(t, "escrow", agreement_id=a.agreement_id, state=deal.escrow.state.value)
        if a.status is AgreementStatus.IN_PROGRESS:
            provider.running_units -= a.request.capacity_units
        elif a in provider.queue:
            provider.queue.remove(a)
        consumer.active.pop(deal.demand.key, None)
        a.status = AgreementStatus.COMPLETED if completed else AgreementStatus.ABORTED
        if completed:
            self.emit(t, "complete", agreement_id=a.agreement_id)
        else:
            self.emit(t, "abort", agreement_id=a.agreement_id, reason=reason, fault=deal.fault)

    def _rate(self, t: int, finished: list[Deal]) -> None:
        for deal in finished:
            a = deal.agreement
            if a.started_at is None:
                continue
            self.registry.record_agreement(a.agreement_id, a.provider, a.consumer)
            for rater, ratee, role in ((a.consumer, a.provider, "provider"), (a.provider, a.consumer, "consumer")):
                score = 0.0 if deal.fault in (role, "both") else 1.0
                before = self.registry.standing(ratee)
                standing = self.registry.rate_user(rater, ratee, a.agreement_id, score, t)
                self.emit(t, "rating", rater=rater, ratee=ratee, agreement_id=a.agreement_id, score=score,
                          rating=self.registry.get_rating(ratee), standing=standing.value)
                if standing is Standing.REMOVED and before is not Standing.REMOVED:
                    self.emit(t, "removed", peer=ratee)

    # -- driver ------------------------------------------------------------

    def run(self) -> RunResult:
        self._setup()
        try:
            for t in range(self.sc.ticks + 1):
                self._move(t)
                beacons = self._beacon(t)
                matches = self._match(beacons)
                self._admit(t, matches, beacons)
                self._schedule(t)
                self._serve(t)
                finished = self._settle(t)
                self._rate(t, finished)
                self.bank.check_conservation()
            if self.deals:
                raise InvariantViolation(f"agreements still open after the horizon: {sorted(self.deals)}")
        except ConservationViolation as e:
            raise InvariantViolation(f"conservation violated: {e}") from e
        self.emit(self.sc.ticks, "run_end", agreements=self._next_aid - 1, ledger_entries=len(self.bank.entries))
        report = report_from_events(self.events)
        self._cross_check(report)
        return RunResult(self.events, report, self.registry, self.bank)

    def _cross_check(self, report: MetricsReport) -> None:
        """The log-derived report must agree with the engine's live state."""
        for pm in report.peers:
            w = self.bank.wallet(pm.peer)
            live = (w.balance, w.locked, self.registry.get_rating(pm.peer), self.registry.standing(pm.peer).value)
            logged = (pm.final_balance, pm.final_locked, pm.final_rating, pm.standing)
            if live != logged:
                raise InvariantViolation(f"peer {pm.peer}: live state {live} != log-derived {logged}")
            if self.registry.recompute_standing(pm.peer).value != pm.standing:
                raise InvariantViolation(f"peer {pm.peer}: incremental standing disagrees with recomputation")
        if not report.conservation_ok:
            raise InvariantViolation("log replay found a conservation violation")
        if report.total_burned != self.bank.burned:
            raise InvariantViolation("burn totals disagree")


def run(scenario: Scenario) -> tuple[list[dict], MetricsReport]:
    result = Engine(scenario).run()
    return result.events, result.report
