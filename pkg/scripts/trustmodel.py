#!/usr/bin/env python3
"""
Trust model for attributable oracle sources.

Sources register against a whitelist, answers are proposed optimistically and
finalize once their dispute window has elapsed, disputes escalate to a
multi-source fallback vote, scheduled audits compare a subject against
reference oracles, and proven manipulation expels a source for good.
Reputation moves up and down; no currency is ever taken from a source.
"""

import logging
import math
import statistics
from collections import Counter
from dataclasses import asdict, dataclass, replace
from enum import Enum
from typing import Any, Dict, FrozenSet, Iterable, List, Optional, Sequence, Set, Tuple, Union

from config import (
    AUDIT_EPSILON,
    CONSULTATION_DAY,
    DEFAULT_FEES,
    INITIAL_REPUTATION,
    MIN_AUDIT_REFERENCES,
    MONTH_LENGTH,
    MONTHS_PER_YEAR,
    OFF_SEASON_MONTHS,
    OVERTURN_MULTIPLIER,
    REPUTATION_CAP,
    SUCCESS_MULTIPLIER,
)
from errors import (
    AlreadyResolved,
    AuditTimingMismatch,
    DuplicateIdentity,
    FeeUnpaid,
    IdentityExpelled,
    NotWhitelisted,
    SourceExpelled,
    SourceInactive,
    TooFewReferences,
    UnknownSource,
    WindowClosed,
)
from querylex import QueryCategory

logger = logging.getLogger(__name__)

Answer = Union[float, str]

POOL_ID = "pool"


class Mode(str, Enum):
    ATTRIBUTABLE = "attributable"
    OPEN = "open"


class SourceStatus(str, Enum):
    ACTIVE = "Active"
    EXPELLED = "Expelled"


class AnswerState(str, Enum):
    PENDING = "Pending"
    FINALIZED = "Finalized"
    ESCALATED = "Escalated"
    INVALIDATED = "Invalidated"


class FinalizeSignal(str, Enum):
    FINALIZED = "Finalized"
    NOT_YET_FINAL = "NotYetFinal"
    ESCALATED = "Escalated"
    INVALIDATED = "Invalidated"


class RoutingDecision(str, Enum):
    STANDARD_PATH = "StandardPath"
    LOW_RELIABILITY_FLAG = "LowReliabilityFlag"
    REJECT = "Reject"
    COMPUTE_PATH = "ComputePath"


class Tier(str, Enum):
    PROMANTEIA = "Promanteia"
    STANDARD = "Standard"


class AuditVerdict(str, Enum):
    PASS = "Pass"
    MANIPULATION_DETECTED = "ManipulationDetected"


class ReputationEvent(str, Enum):
    SUCCESS = "Success"
    OVERTURNED = "Overturned"


@dataclass(frozen=True)
class OracleSource:
    id: str
    domain_tags: FrozenSet[str] = frozenset()
    status: SourceStatus = SourceStatus.ACTIVE
    reputation: float = INITIAL_REPUTATION
    # simulation-only behavior knobs
    bias: float = 0.0
    latency_days: int = 0

    @property
    def is_active(self) -> bool:
        return self.status is SourceStatus.ACTIVE

    def covers(self, topic: Optional[str]) -> bool:
        return topic is None or topic in self.domain_tags

    def to_dict(self) -> Dict[str, Any]:
        return {
            "id": self.id,
            "domain_tags": sorted(self.domain_tags),
            "status": self.status.value,
            "reputation": self.reputation,
            "bias": self.bias,
            "latency_days": self.latency_days,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "OracleSource":
        return cls(
            id=data["id"],
            domain_tags=frozenset(data.get("domain_tags", [])),
            status=SourceStatus(data.get("status", SourceStatus.ACTIVE.value)),
            reputation=float(data.get("reputation", INITIAL_REPUTATION)),
            bias=float(data.get("bias", 0.0)),
            latency_days=int(data.get("latency_days", 0)),
        )


@dataclass(frozen=True)
class PendingAnswer:
    query_id: str
    source_id: str
    value: Answer
    proposed_at: int
    window_end: int
    disputed: bool = False
    state: AnswerState = AnswerState.PENDING
    contributors: Tuple[str, ...] = ()
    challenger_id: Optional[str] = None
    disputed_at: Optional[int] = None
    finalized_at: Optional[int] = None
    resolved_value: Optional[Answer] = None
    overturned: Optional[bool] = None

    @property
    def key(self) -> Tuple[str, str]:
        return self.query_id, self.source_id

    @property
    def accepted_value(self) -> Optional[Answer]:
        if self.state is AnswerState.FINALIZED:
            return self.value
        if self.state is AnswerState.ESCALATED and self.resolved_value is not None:
            return self.resolved_value
        return None

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["state"] = self.state.value
        data["contributors"] = list(self.contributors)
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "PendingAnswer":
        data = dict(data)
        data["state"] = AnswerState(data["state"])
        data["contributors"] = tuple(data.get("contributors", ()))
        return cls(**data)


@dataclass(frozen=True)
class Calendar:
    """Day 0 is the first day of month 1; months and days-of-month are 1-based."""

    month_length: int = MONTH_LENGTH
    months_per_year: int = MONTHS_PER_YEAR
    consultation_day: int = CONSULTATION_DAY
    off_season: FrozenSet[int] = frozenset(OFF_SEASON_MONTHS)
    minor_in_off_season: bool = False

    def __post_init__(self):
        if self.month_length < 1 or self.months_per_year < 1:
            raise ValueError("Calendar needs at least one day per month and one month per year")
        if not 1 <= self.consultation_day <= self.month_length:
            raise ValueError("consultation_day must fall inside the month")
        if any(not 1 <= m <= self.months_per_year for m in self.off_season):
            raise ValueError("off_season months must be within the year")
        if len(self.off_season) >= self.months_per_year:
            raise ValueError("At least one month per year must be in season")

    def month_of(self, day: int) -> int:
        return (day // self.month_length) % self.months_per_year + 1

    def day_of_month(self, day: int) -> int:
        return day % self.month_length + 1

    def is_active(self, day: int) -> bool:
        return self.month_of(day) not in self.off_season

    def is_consultation_day(self, day: int) -> bool:
        return self.is_active(day) and self.day_of_month(day) == self.consultation_day

    def next_active_day(self, day: int, minor: bool = False) -> int:
        if minor and self.minor_in_off_season:
            return day
        while not self.is_active(day):
            day = (day // self.month_length + 1) * self.month_length
        return day

    def next_consultation_day(self, day: int) -> int:
        month_start = (day // self.month_length) * self.month_length
        candidate = month_start + self.consultation_day - 1
        if candidate < day:
            candidate += self.month_length
        while not self.is_active(candidate):
            candidate += self.month_length
        return candidate

    def to_dict(self) -> Dict[str, Any]:
        return {
            "month_length": self.month_length,
            "months_per_year": self.months_per_year,
            "consultation_day": self.consultation_day,
            "off_season": sorted(self.off_season),
            "minor_in_off_season": self.minor_in_off_season,
        }


@dataclass(frozen=True)
class Query:
    id: str
    text: str
    topic: Optional[str] = None
    complex: bool = False


@dataclass(frozen=True)
class ConsultationRequest:
    petitioner_id: str
    query: Query
    category: QueryCategory
    tier: Tier
    fee_paid: float
    submitted_at: int
    extraordinary: bool = False
    seq: int = 0


@dataclass(frozen=True)
class ServiceSlot:
    day: int
    request: ConsultationRequest
    service: str  # "minor", "consultation" or "extraordinary"

    @property
    def sort_key(self) -> Tuple[int, int, int, str, int]:
        tier_rank = 0 if self.request.tier is Tier.PROMANTEIA else 1
        return (self.day, tier_rank, self.request.submitted_at, self.request.petitioner_id, self.request.seq)


class ServiceQueue:
    """Slots waiting for their service day, released in priority order."""

    def __init__(self):
        self._slots: Dict[int, List[ServiceSlot]] = {}

    def push(self, slot: ServiceSlot):
        self._slots.setdefault(slot.day, []).append(slot)

    def pop_day(self, day: int) -> List[ServiceSlot]:
        return sorted(self._slots.pop(day, []), key=lambda s: s.sort_key)

    def __len__(self) -> int:
        return sum(len(slots) for slots in self._slots.values())


@dataclass(frozen=True)
class AuditAnswer:
    source_id: str
    value: Optional[float]
    answered_at: int


@dataclass(frozen=True)
class AuditReport:
    subject_id: str
    probe_query: str
    scheduled_time: int
    subject_value: Optional[float]
    reference_values: Tuple[float, ...]
    reference_median: float
    deviation: float
    tolerance: float
    verdict: AuditVerdict

    def to_dict(self) -> Dict[str, Any]:
        return {
            "subject_id": self.subject_id,
            "probe_query": self.probe_query,
            "scheduled_time": self.scheduled_time,
            "subject_value": self.subject_value,
            "reference_values": list(self.reference_values),
            "reference_median": self.reference_median,
            "deviation": self.deviation if math.isfinite(self.deviation) else None,
            "tolerance": self.tolerance,
            "verdict": self.verdict.value,
        }


# ---------------------------------------------------------------------------
# Routing, fees, scheduling
# ---------------------------------------------------------------------------

_ROUTES = {
    QueryCategory.DISCERNIBLE: RoutingDecision.STANDARD_PATH,
    QueryCategory.SANCTIONED: RoutingDecision.STANDARD_PATH,
    QueryCategory.AMBIGUOUS: RoutingDecision.LOW_RELIABILITY_FLAG,
    QueryCategory.RECONDITE: RoutingDecision.LOW_RELIABILITY_FLAG,
    QueryCategory.NON_EVENT: RoutingDecision.REJECT,
    QueryCategory.COMPUTATIONAL: RoutingDecision.COMPUTE_PATH,
}


def route(query: Optional[Query], category: QueryCategory) -> RoutingDecision:
    """Public or domain-specific questions take the standard path; the rest are flagged or refused."""
    decision = _ROUTES[category]
    if query is not None:
        logger.debug("Routed %s (%s) -> %s", query.id, category.value, decision.value)
    return decision


def fee_for(tier: Tier, decision: RoutingDecision, extraordinary: bool = False,
            fees: Optional[Dict[str, float]] = None) -> float:
    schedule_ = {**DEFAULT_FEES, **(fees or {})}
    amount = schedule_["promanteia"] if tier is Tier.PROMANTEIA else schedule_["base"]
    if decision is RoutingDecision.LOW_RELIABILITY_FLAG:
        amount *= schedule_["low_reliability_multiplier"]
    if extraordinary:
        amount *= schedule_["extraordinary_multiplier"]
    return amount


def schedule(request: ConsultationRequest, now: int, calendar: Calendar,
             minimum_fee: float = DEFAULT_FEES["minimum"]) -> ServiceSlot:
    """
    Minor (simple) queries go to the next active day; complex ones wait for the
    next in-season consultation day unless flagged extraordinary.
    """
    if request.fee_paid < minimum_fee:
        raise FeeUnpaid(
            f"{request.petitioner_id} paid {request.fee_paid} for {request.query.id}, minimum is {minimum_fee}"
        )
    if not request.query.complex:
        return ServiceSlot(calendar.next_active_day(now, minor=True), request, "minor")
    if request.extraordinary:
        return ServiceSlot(calendar.next_active_day(now), request, "extraordinary")
    return ServiceSlot(calendar.next_consultation_day(now), request, "consultation")


# ---------------------------------------------------------------------------
# Votes and audits
# ---------------------------------------------------------------------------

def fallback_vote(values: Sequence[Answer]) -> Answer:
    """Median for numeric answers, plurality for categorical ones (ties -> smallest label)."""
    if not values:
        raise TooFewReferences("Fallback vote needs at least one reference value")
    if all(isinstance(v, str) for v in values):
        counts = Counter(values)
        best = max(counts.values())
        return min(label for label, count in counts.items() if count == best)
    if any(isinstance(v, str) for v in values):
        raise ValueError("Cannot vote over mixed numeric and categorical answers")
    return float(statistics.median(values))


def relative_deviation(value: Optional[float], reference: float) -> float:
    if value is None:
        return math.inf
    return abs(value - reference) / max(abs(reference), AUDIT_EPSILON)


def differs(value: Answer, reference: Answer, tolerance: float) -> bool:
    if isinstance(value, str) or isinstance(reference, str):
        return value != reference
    return relative_deviation(value, reference) > tolerance


def croesus_audit(subject: AuditAnswer, references: Sequence[AuditAnswer], probe: str,
                  scheduled_time: int, tolerance: float) -> AuditReport:
    """
    Compare a subject's answer to a probe against reference oracles asked at the
    same predetermined moment. A subject that gives no answer fails.
    """
    if len(references) < MIN_AUDIT_REFERENCES:
        raise TooFewReferences(f"Audit needs at least {MIN_AUDIT_REFERENCES} references, got {len(references)}")
    late = [a.source_id for a in (subject, *references) if a.answered_at != scheduled_time]
    if late:
        raise AuditTimingMismatch(f"Answers not given at t={scheduled_time}: {', '.join(late)}")

    reference_values = tuple(float(a.value) for a in references if a.value is not None)
    if len(reference_values) < MIN_AUDIT_REFERENCES:
        raise TooFewReferences("Too few references answered the probe")
    median = float(statistics.median(reference_values))
    deviation = relative_deviation(subject.value, median)
    verdict = AuditVerdict.MANIPULATION_DETECTED if deviation > tolerance else AuditVerdict.PASS
    return AuditReport(
        subject_id=subject.source_id,
        probe_query=probe,
        scheduled_time=scheduled_time,
        subject_value=subject.value,
        reference_values=reference_values,
        reference_median=median,
        deviation=deviation,
        tolerance=tolerance,
        verdict=verdict,
    )


# ---------------------------------------------------------------------------
# State machine
# ---------------------------------------------------------------------------

class TrustModel:
    """
    Single-writer state for one oracle network: the registry, pending answers
    and the permanent expulsion list. Every mutation goes through a method here.
    """

    def __init__(self, mode: Mode = Mode.ATTRIBUTABLE, whitelist: Optional[Iterable[str]] = None):
        self.mode = Mode(mode)
        self.whitelist: Set[str] = set(whitelist or [])
        self.sources: Dict[str, OracleSource] = {}
        self.expelled_ids: Set[str] = set()
        self.answers: Dict[Tuple[str, str], PendingAnswer] = {}

    # Registry

    def register_source(self, source_id: str, domain_tags: Iterable[str] = (),
                        bias: float = 0.0, latency_days: int = 0) -> OracleSource:
        if source_id in self.expelled_ids:
            raise IdentityExpelled(f"{source_id} was expelled and can never serve again")
        if source_id in self.sources or source_id == POOL_ID:
            raise DuplicateIdentity(f"{source_id} is already registered")
        if self.mode is Mode.ATTRIBUTABLE and source_id not in self.whitelist:
            raise NotWhitelisted(f"{source_id} is not a whitelisted source")

        source = OracleSource(id=source_id, domain_tags=frozenset(domain_tags), bias=bias, latency_days=latency_days)
        self.sources[source_id] = source
        logger.debug("Registered source %s", source_id)
        return source

    def get(self, source_id: str) -> OracleSource:
        try:
            return self.sources[source_id]
        except KeyError:
            raise UnknownSource(f"Unknown source: {source_id}")

    def active_sources(self) -> List[OracleSource]:
        return [s for _, s in sorted(self.sources.items()) if s.is_active]

    def set_bias(self, source_id: str, bias: float) -> OracleSource:
        source = replace(self.get(source_id), bias=bias)
        self.sources[source_id] = source
        return source

    def designated_source(self, topic: Optional[str]) -> Optional[OracleSource]:
        """In-domain first, then higher reputation, then lexicographic id."""
        active = self.active_sources()
        if not active:
            return None
        return min(active, key=lambda s: (not s.covers(topic), -s.reputation, s.id))

    def _require_active(self, source_id: str) -> OracleSource:
        if source_id in self.expelled_ids:
            raise SourceExpelled(f"{source_id} has been expelled")
        source = self.sources.get(source_id)
        if source is None or not source.is_active:
            raise SourceInactive(f"{source_id} is not an active source")
        return source

    # Optimistic answers

    def propose(self, query_id: str, source_id: str, value: Answer, now: int, dispute_window: int) -> PendingAnswer:
        self._require_active(source_id)
        return self._store_proposal(query_id, source_id, (source_id,), value, now, dispute_window)

    def propose_pool(self, query_id: str, contributors: Sequence[str], value: Answer, now: int,
                     dispute_window: int) -> PendingAnswer:
        """Open-mode answer aggregated from several active reporters."""
        for source_id in contributors:
            self._require_active(source_id)
        return self._store_proposal(query_id, POOL_ID, tuple(sorted(contributors)), value, now, dispute_window)

    def _store_proposal(self, query_id: str, source_id: str, contributors: Tuple[str, ...], value: Answer,
                        now: int, dispute_window: int) -> PendingAnswer:
        if dispute_window < 0:
            raise ValueError("dispute_window must be non-negative")
        if (query_id, source_id) in self.answers:
            raise AlreadyResolved(f"{source_id} already answered {query_id}")
        pending = PendingAnswer(
            query_id=query_id,
            source_id=source_id,
            value=value,
            proposed_at=now,
            window_end=now + dispute_window,
            contributors=contributors,
        )
        self.answers[pending.key] = pending
        return pending

    def current(self, pending: PendingAnswer) -> PendingAnswer:
        return self.answers.get(pending.key, pending)

    def dispute(self, pending: PendingAnswer, challenger_id: str, now: int) -> PendingAnswer:
        pending = self.current(pending)
        if pending.state is not AnswerState.PENDING:
            raise AlreadyResolved(f"{pending.query_id} from {pending.source_id} is {pending.state.value}")
        if now >= pending.window_end:
            raise WindowClosed(f"Dispute window for {pending.query_id} closed at t={pending.window_end}")
        escalated = replace(pending, disputed=True, state=AnswerState.ESCALATED,
                            challenger_id=challenger_id, disputed_at=now)
        self.answers[escalated.key] = escalated
        return escalated

    def resolve_dispute(self, pending: PendingAnswer, reference_values: Sequence[Answer],
                        tolerance: float) -> PendingAnswer:
        """Settle an escalated answer by the reference vote."""
        pending = self.current(pending)
        if pending.state is not AnswerState.ESCALATED or pending.resolved_value is not None:
            raise AlreadyResolved(f"{pending.query_id} from {pending.source_id} has nothing to resolve")
        vote = fallback_vote(reference_values)
        overturned = differs(pending.value, vote, tolerance)
        # an expelled contributor's value never stands, even when upheld
        barred = any(c in self.expelled_ids for c in pending.contributors)
        resolved_value = vote if overturned or barred else pending.value
        resolved = replace(pending, resolved_value=resolved_value, overturned=overturned)
        self.answers[resolved.key] = resolved
        return resolved

    def finalize(self, pending: PendingAnswer, now: int) -> Tuple[PendingAnswer, FinalizeSignal]:
        """Time is the acceptance threshold: nothing finalizes before window_end."""
        pending = self.current(pending)
        if pending.state is AnswerState.ESCALATED:
            return pending, FinalizeSignal.ESCALATED
        if pending.state is AnswerState.INVALIDATED:
            return pending, FinalizeSignal.INVALIDATED
        if pending.state is AnswerState.FINALIZED:
            return pending, FinalizeSignal.FINALIZED
        if now < pending.window_end or pending.disputed:
            return pending, FinalizeSignal.NOT_YET_FINAL

        finalized = replace(pending, state=AnswerState.FINALIZED, finalized_at=now)
        self.answers[finalized.key] = finalized
        return finalized, FinalizeSignal.FINALIZED

    def pending_involving(self, source_id: str) -> List[PendingAnswer]:
        return [
            a for _, a in sorted(self.answers.items())
            if a.state is AnswerState.PENDING and source_id in a.contributors
        ]

    # Accountability

    def audit(self, subject: AuditAnswer, references: Sequence[AuditAnswer], probe: str,
              scheduled_time: int, tolerance: float) -> AuditReport:
        report = croesus_audit(subject, references, probe, scheduled_time, tolerance)
        if report.verdict is AuditVerdict.MANIPULATION_DETECTED and subject.source_id in self.sources:
            self.expel(subject.source_id)
        return report

    def expel(self, source_id: str) -> OracleSource:
        """Permanent: the id is barred and every pending answer it touches is void."""
        source = self.get(source_id)
        if not source.is_active:
            return source
        expelled = replace(source, status=SourceStatus.EXPELLED)
        self.sources[source_id] = expelled
        self.expelled_ids.add(source_id)
        self.whitelist.discard(source_id)
        for pending in self.pending_involving(source_id):
            self.answers[pending.key] = replace(pending, state=AnswerState.INVALIDATED)
        logger.info("Expelled source %s", source_id)
        return expelled

    def update_reputation(self, source_id: str, event: ReputationEvent) -> OracleSource:
        source = self.get(source_id)
        if not source.is_active:
            raise SourceExpelled(f"{source_id} has been expelled")
        if event is ReputationEvent.SUCCESS:
            reputation = min(source.reputation * SUCCESS_MULTIPLIER, REPUTATION_CAP)
        else:
            reputation = source.reputation * OVERTURN_MULTIPLIER
        updated = replace(source, reputation=reputation)
        self.sources[source_id] = updated
        return updated

    # Checkpointing

    def to_dict(self) -> Dict[str, Any]:
        return {
            "mode": self.mode.value,
            "whitelist": sorted(self.whitelist),
            "sources": [s.to_dict() for _, s in sorted(self.sources.items())],
            "expelled_ids": sorted(self.expelled_ids),
            "answers": [a.to_dict() for _, a in sorted(self.answers.items())],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "TrustModel":
        model = cls(mode=Mode(data["mode"]), whitelist=data.get("whitelist", []))
        for raw in data.get("sources", []):
            source = OracleSource.from_dict(raw)
            model.sources[source.id] = source
        model.expelled_ids = set(data.get("expelled_ids", []))
        for raw in data.get("answers", []):
            answer = PendingAnswer.from_dict(raw)
            model.answers[answer.key] = answer
        return model
