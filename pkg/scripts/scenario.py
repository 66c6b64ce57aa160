#!/usr/bin/env python3
"""
Scenario configuration for the oracle-network simulator.

Scenarios are JSON files whose keys match the ScenarioConfig field names.
Loading collects every problem it finds, each tagged with the offending
field path (e.g. ``sources[1].bias``), and raises InvalidConfig once.
"""

import json
import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple

from config import (
    DEFAULT_AUDIT_DAY,
    DEFAULT_FEES,
    DEFAULT_REFERENCE_ORACLES,
    DEFAULT_TOLERANCE,
    DEFAULT_WITNESS_COUNT,
    DEFAULT_WITNESS_QUORUM,
    MIN_AUDIT_REFERENCES,
)
from errors import InvalidConfig, UnknownCategory
from querylex import QueryCategory
from streams import UINT64_LIMIT
from trustmodel import POOL_ID, Calendar, Mode, Tier

logger = logging.getLogger(__name__)

REFERENCE_PREFIX = "reference-"


class AdversaryKind(str, Enum):
    BRIBER = "Briber"
    SYBIL = "Sybil"
    FREELOADER = "Freeloader"
    LAZY = "Lazy"


@dataclass(frozen=True)
class SourceConfig:
    id: str
    domain_tags: Tuple[str, ...] = ()
    bias: float = 0.0
    corrupt_from: Optional[int] = None
    corrupt_to: Optional[int] = None
    latency_days: int = 0


@dataclass(frozen=True)
class PetitionerConfig:
    id: str
    tier: Tier = Tier.STANDARD
    query_mix: Tuple[Tuple[QueryCategory, float], ...] = ((QueryCategory.DISCERNIBLE, 1.0),)
    queries_per_month: float = 4.0
    complex_fraction: float = 0.3
    extraordinary_fraction: float = 0.0
    topics: Tuple[str, ...] = ()
    urn_rate: float = 0.0


@dataclass(frozen=True)
class AdversaryConfig:
    id: str
    kind: AdversaryKind
    target: Optional[str] = None
    bias: float = 0.0
    corrupt_from: int = 0
    corrupt_to: Optional[int] = None
    registrations_per_month: int = 1
    constant: float = 100.0


@dataclass(frozen=True)
class ScenarioConfig:
    duration_days: int
    seed: int = 0
    calendar: Calendar = field(default_factory=Calendar)
    dispute_window_days: int = 3
    audit_probability_per_month: float = 0.0
    tolerance: float = DEFAULT_TOLERANCE
    sources: Tuple[SourceConfig, ...] = ()
    petitioners: Tuple[PetitionerConfig, ...] = ()
    adversaries: Tuple[AdversaryConfig, ...] = ()
    witness_count: int = DEFAULT_WITNESS_COUNT
    witness_quorum: int = DEFAULT_WITNESS_QUORUM
    fees: Mapping[str, float] = field(default_factory=lambda: dict(DEFAULT_FEES))
    mode: Mode = Mode.ATTRIBUTABLE
    reference_oracles: int = DEFAULT_REFERENCE_ORACLES
    audit_day: int = DEFAULT_AUDIT_DAY
    challenger_vigilance: float = 0.0
    off_domain_error: float = 0.0
    name: str = ""

    def with_seed(self, seed: int) -> "ScenarioConfig":
        return replace(self, seed=seed)

    def reference_ids(self) -> List[str]:
        return [f"{REFERENCE_PREFIX}{i + 1}" for i in range(self.reference_oracles)]


_MISSING = object()


class _Reader:
    """Pulls typed fields out of one JSON object, recording diagnostics instead of raising."""

    def __init__(self, data: Any, path: str, diagnostics: List[Tuple[str, str]]):
        self.path = path
        self.diagnostics = diagnostics
        self.ok = isinstance(data, dict)
        self.data: Dict[str, Any] = data if self.ok else {}
        self.seen = set()
        if not self.ok:
            self.error(None, "expected an object")

    def field_path(self, key: Optional[str]) -> str:
        if key is None:
            return self.path or "<root>"
        return f"{self.path}.{key}" if self.path else key

    def error(self, key: Optional[str], message: str):
        self.diagnostics.append((self.field_path(key), message))

    def get(self, key: str, kind: type, default: Any = _MISSING) -> Any:
        self.seen.add(key)
        if key not in self.data:
            if default is _MISSING:
                if self.ok:
                    self.error(key, "required field is missing")
                return None
            return default

        value = self.data[key]
        if value is None and default is None:
            return None
        if kind is float and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        if not isinstance(value, kind) or (kind in (int, float) and isinstance(value, bool)):
            self.error(key, f"expected {kind.__name__}, got {type(value).__name__}")
            return None if default is _MISSING else default
        return value

    def finish(self):
        for key in sorted(set(self.data) - self.seen):
            self.error(key, "unknown field")


def _check(reader: _Reader, key: str, value: Any, condition: bool, message: str):
    if value is not None and not condition:
        reader.error(key, message)


def _parse_source(data: Any, path: str, diags: List[Tuple[str, str]]) -> Optional[SourceConfig]:
    r = _Reader(data, path, diags)
    source_id = r.get("id", str)
    tags = r.get("domain_tags", list, [])
    bias = r.get("bias", float, 0.0)
    corrupt_from = r.get("corrupt_from", int, None)
    corrupt_to = r.get("corrupt_to", int, None)
    latency = r.get("latency_days", int, 0)
    r.finish()

    _check(r, "id", source_id, bool(source_id), "must be a non-empty string")
    if tags is not None and not all(isinstance(t, str) for t in tags):
        r.error("domain_tags", "expected a list of strings")
    _check(r, "corrupt_from", corrupt_from, corrupt_from is not None and corrupt_from >= 0, "must be >= 0")
    if corrupt_from is not None and corrupt_to is not None and corrupt_to <= corrupt_from:
        r.error("corrupt_to", "must be greater than corrupt_from")
    if corrupt_to is not None and corrupt_from is None:
        r.error("corrupt_from", "required when corrupt_to is set")
    _check(r, "latency_days", latency, latency is not None and latency >= 0, "must be >= 0")
    if not r.ok or source_id is None:
        return None
    return SourceConfig(
        id=source_id,
        domain_tags=tuple(t for t in (tags or []) if isinstance(t, str)),
        bias=bias or 0.0,
        corrupt_from=corrupt_from,
        corrupt_to=corrupt_to,
        latency_days=latency or 0,
    )


def _parse_query_mix(raw: Any, r: _Reader) -> Tuple[Tuple[QueryCategory, float], ...]:
    if raw is None:
        return PetitionerConfig.query_mix
    mix = []
    for name, weight in sorted(raw.items()):
        try:
            category = QueryCategory.parse(name)
        except UnknownCategory:
            r.error(f"query_mix.{name}", "unknown query category")
            continue
        if isinstance(weight, bool) or not isinstance(weight, (int, float)) or weight < 0:
            r.error(f"query_mix.{name}", "weight must be a non-negative number")
            continue
        mix.append((category, float(weight)))
    if raw and sum(w for _, w in mix) <= 0:
        r.error("query_mix", "weights must sum to more than zero")
    if not raw:
        r.error("query_mix", "must name at least one category")
    return tuple(mix)


def _parse_petitioner(data: Any, path: str, diags: List[Tuple[str, str]]) -> Optional[PetitionerConfig]:
    r = _Reader(data, path, diags)
    petitioner_id = r.get("id", str)
    tier_name = r.get("tier", str, Tier.STANDARD.value)
    raw_mix = r.get("query_mix", dict, None)
    rate = r.get("queries_per_month", float, 4.0)
    complex_fraction = r.get("complex_fraction", float, 0.3)
    extraordinary_fraction = r.get("extraordinary_fraction", float, 0.0)
    topics = r.get("topics", list, [])
    urn_rate = r.get("urn_rate", float, 0.0)
    r.finish()

    _check(r, "id", petitioner_id, bool(petitioner_id), "must be a non-empty string")
    tier = Tier.STANDARD
    try:
        tier = Tier(tier_name)
    except ValueError:
        r.error("tier", f"must be one of {', '.join(t.value for t in Tier)}")
    mix = _parse_query_mix(raw_mix, r)
    _check(r, "queries_per_month", rate, rate is not None and rate >= 0, "must be >= 0")
    for key, value in (("complex_fraction", complex_fraction),
                       ("extraordinary_fraction", extraordinary_fraction),
                       ("urn_rate", urn_rate)):
        _check(r, key, value, value is not None and 0.0 <= value <= 1.0, "must be within [0, 1]")
    if topics is not None and not all(isinstance(t, str) for t in topics):
        r.error("topics", "expected a list of strings")
    if not r.ok or petitioner_id is None:
        return None
    return PetitionerConfig(
        id=petitioner_id,
        tier=tier,
        query_mix=mix,
        queries_per_month=rate if rate is not None else 4.0,
        complex_fraction=complex_fraction if complex_fraction is not None else 0.3,
        extraordinary_fraction=extraordinary_fraction or 0.0,
        topics=tuple(t for t in (topics or []) if isinstance(t, str)),
        urn_rate=urn_rate or 0.0,
    )


def _parse_adversary(data: Any, path: str, diags: List[Tuple[str, str]]) -> Optional[AdversaryConfig]:
    r = _Reader(data, path, diags)
    adversary_id = r.get("id", str)
    kind_name = r.get("kind", str)
    target = r.get("target", str, None)
    bias = r.get("bias", float, 0.0)
    corrupt_from = r.get("corrupt_from", int, 0)
    corrupt_to = r.get("corrupt_to", int, None)
    registrations = r.get("registrations_per_month", int, 1)
    constant = r.get("constant", float, 100.0)
    r.finish()

    _check(r, "id", adversary_id, bool(adversary_id), "must be a non-empty string")
    kind = None
    if kind_name is not None:
        try:
            kind = AdversaryKind(kind_name)
        except ValueError:
            r.error("kind", f"must be one of {', '.join(k.value for k in AdversaryKind)}")
    if kind in (AdversaryKind.BRIBER, AdversaryKind.FREELOADER, AdversaryKind.LAZY) and target is None:
        r.error("target", f"required for {kind.value}")
    _check(r, "corrupt_from", corrupt_from, corrupt_from is not None and corrupt_from >= 0, "must be >= 0")
    if corrupt_to is not None and corrupt_from is not None and corrupt_to <= corrupt_from:
        r.error("corrupt_to", "must be greater than corrupt_from")
    _check(r, "registrations_per_month", registrations, registrations is not None and registrations >= 0,
           "must be >= 0")
    if not r.ok or adversary_id is None or kind is None:
        return None
    return AdversaryConfig(
        id=adversary_id,
        kind=kind,
        target=target,
        bias=bias or 0.0,
        corrupt_from=corrupt_from or 0,
        corrupt_to=corrupt_to,
        registrations_per_month=registrations if registrations is not None else 1,
        constant=constant if constant is not None else 100.0,
    )


def _parse_calendar(data: Any, diags: List[Tuple[str, str]]) -> Calendar:
    if data is None:
        return Calendar()
    r = _Reader(data, "calendar", diags)
    defaults = Calendar()
    month_length = r.get("month_length", int, defaults.month_length)
    months_per_year = r.get("months_per_year", int, defaults.months_per_year)
    consultation_day = r.get("consultation_day", int, defaults.consultation_day)
    off_season = r.get("off_season", list, sorted(defaults.off_season))
    minor = r.get("minor_in_off_season", bool, defaults.minor_in_off_season)
    r.finish()

    if off_season is not None and not all(isinstance(m, int) and not isinstance(m, bool) for m in off_season):
        r.error("off_season", "expected a list of month numbers")
        off_season = None
    try:
        return Calendar(
            month_length=month_length or defaults.month_length,
            months_per_year=months_per_year or defaults.months_per_year,
            consultation_day=consultation_day or defaults.consultation_day,
            off_season=frozenset(off_season if off_season is not None else defaults.off_season),
            minor_in_off_season=bool(minor),
        )
    except ValueError as e:
        r.error(None, str(e))
        return defaults


def _parse_fees(data: Any, diags: List[Tuple[str, str]]) -> Dict[str, float]:
    fees = dict(DEFAULT_FEES)
    if data is None:
        return fees
    r = _Reader(data, "fees", diags)
    for key in DEFAULT_FEES:
        value = r.get(key, float, DEFAULT_FEES[key])
        _check(r, key, value, value is not None and value >= 0, "must be >= 0")
        if value is not None:
            fees[key] = value
    r.finish()
    return fees


def _parse_list(raw: Any, key: str, parser, diags: List[Tuple[str, str]]) -> list:
    items = []
    for i, entry in enumerate(raw or []):
        item = parser(entry, f"{key}[{i}]", diags)
        if item is not None:
            items.append(item)
    return items


def parse_scenario(data: Any) -> ScenarioConfig:
    """Build a ScenarioConfig from decoded JSON, raising InvalidConfig with every diagnostic."""
    diags: List[Tuple[str, str]] = []
    r = _Reader(data, "", diags)
    name = r.get("name", str, "")
    duration = r.get("duration_days", int)
    seed = r.get("seed", int, 0)
    calendar = _parse_calendar(r.get("calendar", dict, None), diags)
    window = r.get("dispute_window_days", int, 3)
    p = r.get("audit_probability_per_month", float, 0.0)
    tolerance = r.get("tolerance", float, DEFAULT_TOLERANCE)
    sources = _parse_list(r.get("sources", list, []), "sources", _parse_source, diags)
    petitioners = _parse_list(r.get("petitioners", list, []), "petitioners", _parse_petitioner, diags)
    adversaries = _parse_list(r.get("adversaries", list, []), "adversaries", _parse_adversary, diags)
    witness_count = r.get("witness_count", int, DEFAULT_WITNESS_COUNT)
    witness_quorum = r.get("witness_quorum", int, DEFAULT_WITNESS_QUORUM)
    fees = _parse_fees(r.get("fees", dict, None), diags)
    mode_name = r.get("mode", str, Mode.ATTRIBUTABLE.value)
    references = r.get("reference_oracles", int, DEFAULT_REFERENCE_ORACLES)
    audit_day = r.get("audit_day", int, DEFAULT_AUDIT_DAY)
    vigilance = r.get("challenger_vigilance", float, 0.0)
    off_domain = r.get("off_domain_error", float, 0.0)
    r.finish()

    mode = Mode.ATTRIBUTABLE
    try:
        mode = Mode(mode_name)
    except ValueError:
        r.error("mode", f"must be one of {', '.join(m.value for m in Mode)}")

    if not r.ok:
        raise InvalidConfig(diags)

    config = ScenarioConfig(
        duration_days=duration if duration is not None else 0,
        seed=seed if seed is not None else 0,
        calendar=calendar,
        dispute_window_days=window if window is not None else -1,
        audit_probability_per_month=p if p is not None else -1.0,
        tolerance=tolerance if tolerance is not None else -1.0,
        sources=tuple(sources),
        petitioners=tuple(petitioners),
        adversaries=tuple(adversaries),
        witness_count=witness_count if witness_count is not None else -1,
        witness_quorum=witness_quorum if witness_quorum is not None else 0,
        fees=fees,
        mode=mode,
        reference_oracles=references if references is not None else 0,
        audit_day=audit_day if audit_day is not None else 0,
        challenger_vigilance=vigilance if vigilance is not None else -1.0,
        off_domain_error=off_domain if off_domain is not None else 0.0,
        name=name or "",
    )
    # Type errors above already produced diagnostics; skip the range checks they would duplicate
    typed = {path for path, _ in diags}
    diags.extend(d for d in validate(config) if d[0] not in typed)
    if diags:
        raise InvalidConfig(diags)
    return config


def validate(config: ScenarioConfig) -> List[Tuple[str, str]]:
    """Range and cross-reference checks; returns (field_path, message) pairs."""
    diags: List[Tuple[str, str]] = []

    def check(path: str, condition: bool, message: str):
        if not condition:
            diags.append((path, message))

    check("duration_days", config.duration_days >= 1, "must be >= 1")
    check("seed", 0 <= config.seed < UINT64_LIMIT, "must be a 64-bit unsigned integer")
    check("dispute_window_days", config.dispute_window_days >= 0, "must be >= 0")
    check("audit_probability_per_month", 0.0 <= config.audit_probability_per_month <= 1.0,
          "must be within [0, 1]")
    check("tolerance", config.tolerance >= 0, "must be >= 0")
    check("witness_count", config.witness_count >= 0, "must be >= 0")
    check("witness_quorum", config.witness_quorum >= 1, "must be >= 1")
    check("reference_oracles", config.reference_oracles >= MIN_AUDIT_REFERENCES,
          f"must be >= {MIN_AUDIT_REFERENCES}")
    check("audit_day", 1 <= config.audit_day <= config.calendar.month_length, "must fall inside the month")
    check("challenger_vigilance", 0.0 <= config.challenger_vigilance <= 1.0, "must be within [0, 1]")
    check("off_domain_error", config.off_domain_error >= 0, "must be >= 0")

    seen: Dict[str, str] = {}
    groups = (("sources", config.sources), ("petitioners", config.petitioners), ("adversaries", config.adversaries))
    for key, items in groups:
        for i, item in enumerate(items):
            path = f"{key}[{i}].id"
            if item.id in seen:
                diags.append((path, f"duplicate id {item.id!r} (first used at {seen[item.id]})"))
            elif item.id == POOL_ID or item.id.startswith(REFERENCE_PREFIX):
                diags.append((path, f"id {item.id!r} is reserved"))
            else:
                seen[item.id] = path

    source_ids = {s.id for s in config.sources}
    controlled: Dict[str, str] = {}
    for i, adversary in enumerate(config.adversaries):
        if adversary.target is None:
            continue
        path = f"adversaries[{i}].target"
        if adversary.target not in source_ids:
            diags.append((path, f"unknown source {adversary.target!r}"))
        elif adversary.kind in (AdversaryKind.FREELOADER, AdversaryKind.LAZY):
            if adversary.target in controlled:
                diags.append((path, f"{adversary.target!r} is already controlled by {controlled[adversary.target]}"))
            controlled[adversary.target] = adversary.id
    return diags


def load_scenario(path: Path, seed: Optional[int] = None) -> ScenarioConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise InvalidConfig([("scenario", f"file not found: {path}")])
    except UnicodeDecodeError as e:
        raise InvalidConfig([("scenario", f"not valid UTF-8: byte {e.start}")])
    except json.JSONDecodeError as e:
        raise InvalidConfig([("scenario", f"invalid JSON at line {e.lineno}: {e.msg}")])

    config = parse_scenario(data)
    if seed is not None:
        config = config.with_seed(seed)
        diags = [d for d in validate(config) if d[0] == "seed"]
        if diags:
            raise InvalidConfig(diags)
    logger.debug("Loaded scenario %s from %s", config.name or path.stem, path)
    return config
