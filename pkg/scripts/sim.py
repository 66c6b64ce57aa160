#!/usr/bin/env python3
"""
Deterministic discrete-event simulation of an attributable oracle network.

Petitioners submit queries, the contract routes and schedules them on the
oracle calendar, sources answer through the optimistic propose/dispute/finalize
path, audits probe sources against reference oracles and adversaries try to
bend the outcome. Every state change is appended to an event log; the metrics
report is always recomputed from that log.
"""

import csv
import heapq
import itertools
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Optional, Tuple

import numpy as np
from numpy.random import Generator

from adversaries import ActionKind, AnswerRequest, WorldView, adversary_step
from config import (
    CHALLENGER_ID,
    CONTRACT_SOURCE,
    DEFAULT_WORKERS,
    NONCE_BYTES,
    REFERENCE_VOTE_SOURCE,
    TRUTH_RANGE,
)
from errors import FeeUnpaid, InvalidConfig, TrustModelError
from querylex import QueryCategory
from scenario import AdversaryConfig, AdversaryKind, PetitionerConfig, ScenarioConfig, validate
from streams import UINT64_LIMIT, agent_stream, draw_u64
from trustmodel import (
    AnswerState,
    AuditAnswer,
    AuditVerdict,
    ConsultationRequest,
    FinalizeSignal,
    Mode,
    PendingAnswer,
    Query,
    ReputationEvent,
    RoutingDecision,
    ServiceQueue,
    ServiceSlot,
    TrustModel,
    differs,
    fallback_vote,
    fee_for,
    route,
    schedule,
)
from urn import attest, count_valid_attestations, make_urn_pair, reveal_verify, select

logger = logging.getLogger(__name__)

URN_OPTIONS = (b"yes", b"no")


class EventKind(str, Enum):
    REGISTER = "Register"
    SUBMIT = "Submit"
    ROUTE = "Route"
    FEE_PAID = "FeePaid"
    REFUND = "Refund"
    SERVE = "Serve"
    REPORT = "Report"
    ABSTAIN = "Abstain"
    PROPOSE = "Propose"
    PROPOSE_REJECTED = "ProposeRejected"
    DISPUTE = "Dispute"
    RESOLVE = "Resolve"
    FINALIZE = "Finalize"
    AUDIT = "Audit"
    EXPEL = "Expel"
    BIAS_CHANGE = "BiasChange"
    TAKEOVER = "Takeover"
    URN_COMMIT = "UrnCommit"
    URN_ATTEST = "UrnAttest"
    URN_SELECT = "UrnSelect"
    URN_REVEAL = "UrnReveal"


@dataclass(frozen=True)
class Event:
    at: int
    seq: int
    kind: EventKind
    payload: Dict[str, Any]

    def to_dict(self) -> Dict[str, Any]:
        return {"at": self.at, "seq": self.seq, "kind": self.kind.value, "payload": self.payload}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Event":
        return cls(at=data["at"], seq=data["seq"], kind=EventKind(data["kind"]), payload=data["payload"])


class EventLog:
    """Append-only; `at` never decreases."""

    def __init__(self):
        self.events: List[Event] = []

    def append(self, at: int, kind: EventKind, **payload) -> Event:
        if self.events and at < self.events[-1].at:
            raise AssertionError(f"{kind.value} at t={at} after t={self.events[-1].at}")
        event = Event(at=at, seq=len(self.events), kind=kind, payload=payload)
        self.events.append(event)
        return event


@dataclass(frozen=True)
class MetricsReport:
    run_seed: int
    per_category: Dict[str, Dict[str, Any]]
    accepted_answers: int
    manipulation_success_rate: float
    corrupted_sources: int
    detection_rate: float
    mean_detection_latency_days: Optional[float]
    expulsions: int
    audits: int
    disputes: int
    refunds: int
    fee_revenue: float
    freeloader_copy_rate: float
    lazy_constant_rate: float
    sybil_registrations_accepted: int
    sybil_registrations_rejected: int
    urn_consultations: int
    urn_accepted: int

    def to_dict(self) -> Dict[str, Any]:
        return {name: getattr(self, name) for name in self.__dataclass_fields__}


# Top-level numeric metrics aggregated by replicate
SCALAR_METRICS = [
    "accepted_answers",
    "manipulation_success_rate",
    "corrupted_sources",
    "detection_rate",
    "mean_detection_latency_days",
    "expulsions",
    "audits",
    "disputes",
    "refunds",
    "fee_revenue",
    "freeloader_copy_rate",
    "lazy_constant_rate",
    "sybil_registrations_accepted",
    "sybil_registrations_rejected",
    "urn_consultations",
    "urn_accepted",
]


@dataclass
class QueryState:
    id: str
    petitioner_id: str
    category: QueryCategory
    topic: Optional[str]
    truth: Optional[float]
    submitted_at: int
    urn: bool = False
    reports: Dict[str, float] = field(default_factory=dict)


class Simulation:
    """One seeded run. Not reusable: call run() once."""

    def __init__(self, config: ScenarioConfig):
        diagnostics = validate(config)
        if diagnostics:
            raise InvalidConfig(diagnostics)

        self.config = config
        self.calendar = config.calendar
        self.log = EventLog()
        whitelist = [s.id for s in config.sources] if config.mode is Mode.ATTRIBUTABLE else None
        self.model = TrustModel(mode=config.mode, whitelist=whitelist)
        self.queue = ServiceQueue()
        self.references = config.reference_ids()
        self.queries: Dict[str, QueryState] = {}
        self.controllers: Dict[str, AdversaryConfig] = {}

        self._streams: Dict[str, Generator] = {}
        self._heap: List[Tuple[int, int, Callable, tuple]] = []
        self._heap_seq = itertools.count()
        self._last_key = (-1, -1)
        self._query_counts: Dict[str, int] = {}
        self._request_seq = itertools.count()
        self._witness_secrets: Optional[Dict[str, bytes]] = None

    # Plumbing

    def stream(self, name: str) -> Generator:
        if name not in self._streams:
            self._streams[name] = agent_stream(self.config.seed, name)
        return self._streams[name]

    def push(self, at: int, action: Callable, *args):
        heapq.heappush(self._heap, (at, next(self._heap_seq), action, args))

    def drain(self, until: Optional[int] = None):
        while self._heap and (until is None or self._heap[0][0] <= until):
            at, seq, action, args = heapq.heappop(self._heap)
            if (at, seq) <= self._last_key:
                raise AssertionError(f"Event ({at}, {seq}) processed after {self._last_key}")
            self._last_key = (at, seq)
            action(at, *args)

    @property
    def witness_secrets(self) -> Dict[str, bytes]:
        if self._witness_secrets is None:
            self._witness_secrets = {
                f"witness-{i + 1}": self.stream(f"witness-{i + 1}").bytes(NONCE_BYTES)
                for i in range(self.config.witness_count)
            }
        return self._witness_secrets

    # Main loop

    def run(self) -> Tuple[MetricsReport, List[Event]]:
        logger.info("Starting run %s (seed=%d, %d days)", self.config.name or "<unnamed>",
                    self.config.seed, self.config.duration_days)
        self.register_sources()
        for day in range(self.config.duration_days):
            self.step_adversaries(day)
            self.apply_source_windows(day)
            self.submit_queries(day)
            self.run_audits(day)
            self.drain(day)
            for slot in self.queue.pop_day(day):
                self.push(day, self.serve, slot)
            self.drain(day)
        self.drain()

        report = report_from_log(self.log.events, self.config.seed)
        logger.info("Finished run: %d events, %d accepted answers", len(self.log.events), report.accepted_answers)
        return report, list(self.log.events)

    # Sources and adversaries

    def register_sources(self):
        for source in self.config.sources:
            self.model.register_source(source.id, source.domain_tags, latency_days=source.latency_days)
            self.log.append(0, EventKind.REGISTER, source_id=source.id, accepted=True, sybil=False)
            if source.bias and source.corrupt_from is None:
                self.set_bias(0, source.id, source.bias, cause=source.id)

    def apply_source_windows(self, day: int):
        for source in self.config.sources:
            if source.corrupt_from == day:
                self.set_bias(day, source.id, source.bias, cause=source.id)
            elif source.corrupt_to == day:
                self.set_bias(day, source.id, 0.0, cause=source.id)

    def set_bias(self, day: int, source_id: str, bias: float, cause: str):
        if not self.model.get(source_id).is_active:
            return
        self.model.set_bias(source_id, bias)
        self.log.append(day, EventKind.BIAS_CHANGE, source_id=source_id, bias=bias,
                        corrupt=abs(bias) > self.config.tolerance, cause=cause)

    def step_adversaries(self, day: int):
        for adversary in self.config.adversaries:
            view = WorldView(day=day, calendar=self.calendar, mode=self.config.mode)
            for action in adversary_step(adversary, view, self.stream(f"adversary:{adversary.id}")):
                if action.kind is ActionKind.SET_BIAS:
                    self.set_bias(day, action.source_id, action.value, cause=adversary.id)
                elif action.kind is ActionKind.REGISTER:
                    self.register_sybil(day, adversary, action.source_id, action.value or 0.0)
                elif action.kind is ActionKind.TAKEOVER:
                    self.controllers[action.source_id] = adversary
                    self.log.append(day, EventKind.TAKEOVER, source_id=action.source_id,
                                    adversary=adversary.id, behavior=adversary.kind.value)

    def register_sybil(self, day: int, adversary: AdversaryConfig, identity: str, bias: float):
        try:
            self.model.register_source(identity)
        except TrustModelError as e:
            self.log.append(day, EventKind.REGISTER, source_id=identity, accepted=False, sybil=True,
                            adversary=adversary.id, reason=type(e).__name__)
            return
        self.log.append(day, EventKind.REGISTER, source_id=identity, accepted=True, sybil=True,
                        adversary=adversary.id)
        if bias:
            self.set_bias(day, identity, bias, cause=adversary.id)

    def source_value(self, day: int, source_id: str, truth: float, topic: Optional[str],
                     query_id: str, visible: Tuple[float, ...] = ()) -> Tuple[Optional[float], str]:
        """What a source reports for a query or probe, and how it arrived at it."""
        adversary = self.controllers.get(source_id)
        if adversary is not None:
            view = WorldView(day=day, calendar=self.calendar, mode=self.config.mode,
                             request=AnswerRequest(query_id, visible))
            action = adversary_step(adversary, view, self.stream(f"adversary:{adversary.id}"))[0]
            if action.kind is ActionKind.ABSTAIN:
                return None, "abstain"
            return action.value, "copy" if action.kind is ActionKind.COPY else "constant"

        source = self.model.get(source_id)
        value = truth * (1.0 + source.bias)
        if self.config.off_domain_error and not source.covers(topic):
            value *= 1.0 + self.config.off_domain_error
        return value, "honest" if source.bias == 0 else "biased"

    # Petitioners

    def next_query_id(self, petitioner_id: str) -> str:
        n = self._query_counts.get(petitioner_id, 0) + 1
        self._query_counts[petitioner_id] = n
        return f"{petitioner_id}-q{n}"

    def submit_queries(self, day: int):
        for petitioner in self.config.petitioners:
            rng = self.stream(f"petitioner:{petitioner.id}")
            categories = [c for c, _ in petitioner.query_mix]
            weights = np.array([w for _, w in petitioner.query_mix], dtype=float)
            weights /= weights.sum()
            for _ in range(int(rng.poisson(petitioner.queries_per_month / self.calendar.month_length))):
                category = categories[int(rng.choice(len(categories), p=weights))]
                complex_ = bool(rng.random() < petitioner.complex_fraction)
                extraordinary = complex_ and bool(rng.random() < petitioner.extraordinary_fraction)
                topic = petitioner.topics[int(rng.integers(len(petitioner.topics)))] if petitioner.topics else None
                truth = float(rng.uniform(*TRUTH_RANGE))
                self.submit(day, petitioner, category, topic, complex_, extraordinary, truth)
            if petitioner.urn_rate and rng.random() < petitioner.urn_rate:
                self.submit(day, petitioner, QueryCategory.SANCTIONED, None, False, False, None, urn=True)

    def submit(self, day: int, petitioner: PetitionerConfig, category: QueryCategory, topic: Optional[str],
               complex_: bool, extraordinary: bool, truth: Optional[float], urn: bool = False):
        query = Query(id=self.next_query_id(petitioner.id), text=f"{category.value} query", topic=topic,
                      complex=complex_)
        self.log.append(day, EventKind.SUBMIT, query_id=query.id, petitioner_id=petitioner.id,
                        category=category.value, tier=petitioner.tier.value, topic=topic, complex=complex_,
                        extraordinary=extraordinary, urn=urn, ground_truth=truth)

        decision = route(query, category)
        self.log.append(day, EventKind.ROUTE, query_id=query.id, decision=decision.value)
        fee = fee_for(petitioner.tier, decision, extraordinary, self.config.fees)
        self.log.append(day, EventKind.FEE_PAID, query_id=query.id, petitioner_id=petitioner.id, amount=fee)
        if decision is RoutingDecision.REJECT:
            self.log.append(day, EventKind.REFUND, query_id=query.id, petitioner_id=petitioner.id,
                            amount=fee, reason=decision.value)
            return

        request = ConsultationRequest(
            petitioner_id=petitioner.id,
            query=query,
            category=category,
            tier=petitioner.tier,
            fee_paid=fee,
            submitted_at=day,
            extraordinary=extraordinary,
            seq=next(self._request_seq),
        )
        try:
            slot = schedule(request, day, self.calendar, minimum_fee=self.config.fees["minimum"])
        except FeeUnpaid:
            self.log.append(day, EventKind.REFUND, query_id=query.id, petitioner_id=petitioner.id,
                            amount=fee, reason="FeeUnpaid")
            return
        self.queries[query.id] = QueryState(query.id, petitioner.id, category, topic, truth, day, urn=urn)
        self.queue.push(slot)

    # Service

    def serve(self, day: int, slot: ServiceSlot):
        state = self.queries[slot.request.query.id]
        decision = route(None, state.category)
        self.log.append(day, EventKind.SERVE, query_id=state.id, petitioner_id=state.petitioner_id,
                        tier=slot.request.tier.value, service=slot.service, latency_days=day - state.submitted_at)

        if state.urn:
            self.serve_urn(day, state)
        elif decision is RoutingDecision.COMPUTE_PATH:
            self.log.append(day, EventKind.FINALIZE, query_id=state.id, source_id=CONTRACT_SOURCE,
                            value=state.truth, proposed_at=day, contributors=[])
        elif self.config.mode is Mode.OPEN:
            active = self.model.active_sources()
            delay = max((s.latency_days for s in active), default=0)
            self.push(day + delay, self.answer_open, state)
        else:
            source = self.model.designated_source(state.topic)
            if source is None:
                self.fallback(day, state, reason="NoActiveSource")
            else:
                self.push(day + source.latency_days, self.answer_attributable, state, source.id)

    def answer_attributable(self, day: int, state: QueryState, source_id: str):
        if not self.model.get(source_id).is_active:
            self.fallback(day, state, reason="SourceExpelled")
            return
        value, behavior = self.source_value(day, source_id, state.truth, state.topic, state.id)
        if value is None:
            self.log.append(day, EventKind.ABSTAIN, query_id=state.id, source_id=source_id)
            self.fallback(day, state, reason="Abstained")
            return

        self.log.append(day, EventKind.REPORT, query_id=state.id, source_id=source_id, value=value,
                        behavior=behavior)
        state.reports[source_id] = value
        try:
            pending = self.model.propose(state.id, source_id, value, day, self.config.dispute_window_days)
        except TrustModelError as e:
            self.log.append(day, EventKind.PROPOSE_REJECTED, query_id=state.id, source_id=source_id,
                            reason=type(e).__name__)
            self.fallback(day, state, reason=type(e).__name__)
            return
        self.proposed(day, state, pending)

    def answer_open(self, day: int, state: QueryState):
        active = self.model.active_sources()
        freeloaders = [s for s in active if self.controller_kind(s.id) is AdversaryKind.FREELOADER]
        reporters = [s for s in active if s not in freeloaders]

        values: List[float] = []
        for source in reporters + freeloaders:
            value, behavior = self.source_value(day, source.id, state.truth, state.topic, state.id, tuple(values))
            if value is None:
                self.log.append(day, EventKind.ABSTAIN, query_id=state.id, source_id=source.id)
                continue
            self.log.append(day, EventKind.REPORT, query_id=state.id, source_id=source.id, value=value,
                            behavior=behavior)
            state.reports[source.id] = value
            values.append(value)

        if not values:
            self.fallback(day, state, reason="NoReports")
            return
        pending = self.model.propose_pool(state.id, sorted(state.reports), fallback_vote(values), day,
                                          self.config.dispute_window_days)
        self.proposed(day, state, pending)

    def controller_kind(self, source_id: str) -> Optional[AdversaryKind]:
        adversary = self.controllers.get(source_id)
        return adversary.kind if adversary else None

    def proposed(self, day: int, state: QueryState, pending: PendingAnswer):
        self.log.append(day, EventKind.PROPOSE, query_id=state.id, source_id=pending.source_id,
                        value=pending.value, proposed_at=pending.proposed_at, window_end=pending.window_end,
                        contributors=list(pending.contributors))

        window = self.config.dispute_window_days
        rng = self.stream("challenger")
        vigilant = rng.random() < self.config.challenger_vigilance
        offset = int(rng.integers(window)) if window > 0 else 0
        if window > 0 and vigilant and differs(pending.value, state.truth, self.config.tolerance):
            self.push(day + offset, self.dispute, state, pending)
        self.push(pending.window_end, self.finalize, state, pending)

    def reference_answers(self, truth: float) -> List[float]:
        return [truth for _ in self.references]

    def dispute(self, day: int, state: QueryState, pending: PendingAnswer):
        if self.model.current(pending).state is not AnswerState.PENDING:
            return
        escalated = self.model.dispute(pending, CHALLENGER_ID, day)
        self.log.append(day, EventKind.DISPUTE, query_id=state.id, source_id=pending.source_id,
                        challenger_id=CHALLENGER_ID, value=pending.value)

        resolved = self.model.resolve_dispute(escalated, self.reference_answers(state.truth), self.config.tolerance)
        reputation = {}
        for source_id in resolved.contributors:
            if not self.model.get(source_id).is_active:
                continue
            if differs(state.reports[source_id], resolved.resolved_value, self.config.tolerance):
                reputation[source_id] = self.model.update_reputation(source_id, ReputationEvent.OVERTURNED).reputation
        self.log.append(day, EventKind.RESOLVE, query_id=state.id, source_id=pending.source_id,
                        value=resolved.resolved_value, overturned=resolved.overturned, via="Dispute",
                        contributors=list(resolved.contributors), reputation=reputation)

    def finalize(self, day: int, state: QueryState, pending: PendingAnswer):
        finalized, signal = self.model.finalize(pending, day)
        if signal is not FinalizeSignal.FINALIZED:
            return
        reputation = {}
        for source_id in finalized.contributors:
            if not differs(state.reports[source_id], finalized.value, self.config.tolerance):
                reputation[source_id] = self.model.update_reputation(source_id, ReputationEvent.SUCCESS).reputation
        self.log.append(day, EventKind.FINALIZE, query_id=state.id, source_id=finalized.source_id,
                        value=finalized.value, proposed_at=finalized.proposed_at,
                        contributors=list(finalized.contributors), reputation=reputation)

    def fallback(self, day: int, state: QueryState, reason: str):
        """Answer straight from the reference vote when no source answer can stand."""
        value = fallback_vote(self.reference_answers(state.truth))
        self.log.append(day, EventKind.RESOLVE, query_id=state.id, source_id=REFERENCE_VOTE_SOURCE,
                        value=value, overturned=None, via=reason, contributors=[], reputation={})

    def serve_urn(self, day: int, state: QueryState):
        pair, openings = make_urn_pair(*URN_OPTIONS, self.stream("urn"), created_at=day)
        self.log.append(day, EventKind.URN_COMMIT, query_id=state.id, **pair.to_dict())

        secrets = self.witness_secrets
        attestations = [attest(wid, secret, pair, day) for wid, secret in sorted(secrets.items())]
        for attestation in attestations:
            self.log.append(day, EventKind.URN_ATTEST, query_id=state.id, **attestation.to_dict())
        valid = count_valid_attestations(attestations, secrets, pair)
        if valid < self.config.witness_quorum:
            self.log.append(day, EventKind.URN_REVEAL, query_id=state.id, status="QuorumNotMet",
                            accepted=False, valid_attestations=valid)
            return

        selection = select(pair, draw_u64(self.stream("beacon")))
        self.log.append(day, EventKind.URN_SELECT, query_id=state.id, **selection.proof())
        opening = openings.side(selection.chosen)
        outcome = reveal_verify(pair, selection, opening.message, opening.nonce)
        self.log.append(day, EventKind.URN_REVEAL, query_id=state.id, status="Completed",
                        accepted=outcome.accepted, message=opening.message.decode("utf-8"),
                        **outcome.to_dict())

    # Audits

    def run_audits(self, day: int):
        if self.calendar.day_of_month(day) != self.config.audit_day:
            return
        month_index = day // self.calendar.month_length
        for source in self.model.active_sources():
            if self.stream(f"audit:{source.id}").random() >= self.config.audit_probability_per_month:
                continue
            probe_id = f"probe-{source.id}-{month_index}"
            truth = float(self.stream(f"probe:{source.id}").uniform(*TRUTH_RANGE))
            value, _ = self.source_value(day, source.id, truth, None, probe_id)

            subject = AuditAnswer(source.id, value, day)
            references = [AuditAnswer(r, answer, day) for r, answer in zip(self.references, self.reference_answers(truth))]
            invalidated = self.model.pending_involving(source.id)
            report = self.model.audit(subject, references, probe_id, day, self.config.tolerance)
            self.log.append(day, EventKind.AUDIT, **report.to_dict())

            if report.verdict is AuditVerdict.MANIPULATION_DETECTED:
                self.log.append(day, EventKind.EXPEL, source_id=source.id, reason=report.verdict.value,
                                invalidated=[p.query_id for p in invalidated])
                for pending in invalidated:
                    self.fallback(day, self.queries[pending.query_id], reason="Invalidated")


def run(config: ScenarioConfig) -> Tuple[MetricsReport, List[Event]]:
    return Simulation(config).run()


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

def _rate(numerator: int, denominator: int) -> float:
    return numerator / denominator if denominator else 0.0


def report_from_log(events: Iterable[Event], seed: int) -> MetricsReport:
    """Recompute every metric from the raw event log."""
    submits: Dict[str, Dict[str, Any]] = {}
    per_category: Dict[str, Dict[str, Any]] = {}
    latencies: Dict[str, List[int]] = {}
    corrupted_at: Dict[str, int] = {}
    expelled_at: Dict[str, int] = {}
    counts = {kind: 0 for kind in EventKind}
    accepted = manipulated = 0
    fees_paid = refunded = 0.0
    reports = copies = constants = 0
    sybil_accepted = sybil_rejected = urn_accepted = 0

    for event in events:
        p = event.payload
        counts[event.kind] += 1
        if event.kind is EventKind.SUBMIT:
            submits[p["query_id"]] = p
            stats = per_category.setdefault(p["category"], {"queries": 0, "served": 0})
            stats["queries"] += 1
        elif event.kind is EventKind.SERVE:
            category = submits[p["query_id"]]["category"]
            per_category[category]["served"] += 1
            latencies.setdefault(category, []).append(p["latency_days"])
        elif event.kind in (EventKind.FINALIZE, EventKind.RESOLVE):
            truth = submits[p["query_id"]]["ground_truth"]
            accepted += 1
            if p["value"] != truth:
                manipulated += 1
        elif event.kind is EventKind.FEE_PAID:
            fees_paid += p["amount"]
        elif event.kind is EventKind.REFUND:
            refunded += p["amount"]
        elif event.kind is EventKind.REPORT:
            reports += 1
            copies += p["behavior"] == "copy"
            constants += p["behavior"] == "constant"
        elif event.kind is EventKind.BIAS_CHANGE:
            if p["corrupt"]:
                corrupted_at.setdefault(p["source_id"], event.at)
        elif event.kind is EventKind.TAKEOVER:
            corrupted_at.setdefault(p["source_id"], event.at)
        elif event.kind is EventKind.EXPEL:
            expelled_at.setdefault(p["source_id"], event.at)
        elif event.kind is EventKind.REGISTER and p["sybil"]:
            if p["accepted"]:
                sybil_accepted += 1
            else:
                sybil_rejected += 1
        elif event.kind is EventKind.URN_REVEAL and p["accepted"]:
            urn_accepted += 1

    for category, stats in per_category.items():
        served = latencies.get(category, [])
        stats["mean_latency_days"] = sum(served) / len(served) if served else None

    detection_latencies = [
        expelled_at[source_id] - start
        for source_id, start in sorted(corrupted_at.items())
        if source_id in expelled_at and expelled_at[source_id] >= start
    ]

    return MetricsReport(
        run_seed=seed,
        per_category={c: per_category[c] for c in sorted(per_category)},
        accepted_answers=accepted,
        manipulation_success_rate=_rate(manipulated, accepted),
        corrupted_sources=len(corrupted_at),
        detection_rate=_rate(len(detection_latencies), len(corrupted_at)),
        mean_detection_latency_days=(
            sum(detection_latencies) / len(detection_latencies) if detection_latencies else None
        ),
        expulsions=counts[EventKind.EXPEL],
        audits=counts[EventKind.AUDIT],
        disputes=counts[EventKind.DISPUTE],
        refunds=counts[EventKind.REFUND],
        fee_revenue=fees_paid - refunded,
        freeloader_copy_rate=_rate(copies, reports),
        lazy_constant_rate=_rate(constants, reports),
        sybil_registrations_accepted=sybil_accepted,
        sybil_registrations_rejected=sybil_rejected,
        urn_consultations=counts[EventKind.URN_COMMIT],
        urn_accepted=urn_accepted,
    )


# ---------------------------------------------------------------------------
# Replication
# ---------------------------------------------------------------------------

def _run_seed(config: ScenarioConfig, seed: int) -> Dict[str, Any]:
    report, _ = run(config.with_seed(seed))
    return report.to_dict()


def replicate(config: ScenarioConfig, n_runs: int, workers: int = DEFAULT_WORKERS) -> Dict[str, Any]:
    """
    Run seeds seed, seed+1, ... and summarize each scalar metric by its mean and
    sample standard deviation. Runs that report no value for a metric (e.g. no
    detections, so no latency) are left out of that metric's summary.
    """
    diagnostics = validate(config)
    if n_runs < 1:
        diagnostics.append(("runs", "must be >= 1"))
    elif config.seed + n_runs > UINT64_LIMIT:
        diagnostics.append(("seed", "seed + runs exceeds the 64-bit range"))
    if workers < 1:
        diagnostics.append(("workers", "must be >= 1"))
    if diagnostics:
        raise InvalidConfig(diagnostics)

    seeds = [config.seed + i for i in range(n_runs)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            reports = list(executor.map(_run_seed, [config] * n_runs, seeds, chunksize=max(1, n_runs // (workers * 4))))
    else:
        reports = [_run_seed(config, seed) for seed in seeds]

    metrics = {}
    for name in SCALAR_METRICS:
        values = np.array([r[name] for r in reports if r[name] is not None], dtype=float)
        if values.size == 0:
            metrics[name] = {"mean": None, "std": None, "n": 0}
            continue
        std = float(values.std(ddof=1)) if values.size > 1 else 0.0
        metrics[name] = {"mean": float(values.mean()), "std": std, "n": int(values.size)}

    logger.info("Replicated %d runs from seed %d", n_runs, config.seed)
    return {"runs": n_runs, "seed": config.seed, "metrics": metrics}


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------

def to_json(data: Any) -> str:
    return json.dumps(data, indent=2, sort_keys=True) + "\n"


def write_event_log(events: Iterable[Event], path: Path):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for event in events:
            f.write(json.dumps(event.to_dict()) + "\n")


def read_event_log(path: Path) -> List[Event]:
    with open(path, encoding="utf-8") as f:
        return [Event.from_dict(json.loads(line)) for line in f if line.strip()]


def write_summary_csv(report: MetricsReport, path: Path):
    row = report.to_dict()
    columns = ["run_seed"] + SCALAR_METRICS
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        writer.writerow(["" if row[c] is None else row[c] for c in columns])
