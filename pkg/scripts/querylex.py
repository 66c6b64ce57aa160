#!/usr/bin/env python3
"""
Lexical analysis of oracle queries and answers.

Tokenizes answers, computes the six per-answer metrics (word count, Shannon
entropy, modal density, hedge density, polarity, subjectivity), classifies
queries by who could answer them in principle, and aggregates a corpus into
per-category means.
"""

import csv
import io
import json
import logging
import math
from collections import Counter
from dataclasses import asdict, dataclass
from enum import Enum
from functools import lru_cache
from pathlib import Path
from types import MappingProxyType
from typing import Dict, FrozenSet, Iterable, List, Mapping, NewType, Optional, Sequence, Tuple

from config import (
    AGGREGATE_COLUMNS,
    CSV_DECIMALS,
    DATA_DIR,
    HEDGE_FILE,
    LEXICA_DIR_NAME,
    MODAL_FILE,
    NEGATION_FACTOR,
    NEGATOR_FILE,
    SENTIMENT_FILE,
)
from errors import DuplicateId, LexiconUnavailable, MalformedCorpusLine, UnknownCategory

logger = logging.getLogger(__name__)

Token = NewType("Token", str)


class QueryCategory(str, Enum):
    DISCERNIBLE = "Discernible"
    SANCTIONED = "Sanctioned"
    RECONDITE = "Recondite"
    AMBIGUOUS = "Ambiguous"
    NON_EVENT = "NonEvent"
    COMPUTATIONAL = "Computational"

    @classmethod
    def parse(cls, name: str) -> "QueryCategory":
        try:
            return cls(name)
        except ValueError:
            valid = ", ".join(c.value for c in cls)
            raise UnknownCategory(f"Unknown query category '{name}' (expected one of: {valid})")


class AnswerableBy(str, Enum):
    MANY_OBSERVERS = "ManyObservers"
    AUTHORITY_SUBSET = "AuthoritySubset"
    SINGLE_EXCLUSIVE_SOURCE = "SingleExclusiveSource"
    NO_ONE = "NoOne"


@dataclass(frozen=True)
class QueryFeatures:
    answerable_by: AnswerableBy
    is_pure_computation: bool = False
    honest_interpretation_conflict: bool = False

    def __post_init__(self):
        if self.answerable_by is AnswerableBy.NO_ONE and self.is_pure_computation:
            raise ValueError("A pure computation always has someone able to answer it")


@dataclass(frozen=True)
class LexicalProfile:
    word_count: int = 0
    shannon_entropy: float = 0.0
    modal_density: float = 0.0
    hedge_density: float = 0.0
    polarity: float = 0.0
    subjectivity: float = 0.0


@dataclass(frozen=True)
class CorpusRecord:
    id: str
    category: QueryCategory
    question: str
    answer: str


@dataclass(frozen=True)
class CategoryAggregate:
    category: QueryCategory
    occurrences: int
    avg_word_count: float
    avg_entropy: float
    avg_modal_density: float
    avg_hedge_density: float
    avg_polarity: float
    avg_subjectivity: float

    def as_row(self) -> Dict[str, object]:
        row = asdict(self)
        row["category"] = self.category.value
        return row


@dataclass(frozen=True)
class Lexica:
    """Immutable word lists and sentiment table shared by every metric."""

    modals: FrozenSet[str]
    hedges: FrozenSet[str]
    negators: FrozenSet[str]
    sentiment: Mapping[str, Tuple[float, float]]


# ---------------------------------------------------------------------------
# Lexicon loading
# ---------------------------------------------------------------------------

def _read_word_list(path: Path) -> FrozenSet[str]:
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise LexiconUnavailable(f"Cannot read word list {path}: {e}")
    words = [line.strip().lower() for line in lines]
    return frozenset(w for w in words if w and not w.startswith("#"))


def _read_sentiment_table(path: Path) -> Mapping[str, Tuple[float, float]]:
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise LexiconUnavailable(f"Cannot read sentiment lexicon {path}: {e}")

    table: Dict[str, Tuple[float, float]] = {}
    for number, line in enumerate(lines, start=1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise LexiconUnavailable(f"{path}:{number}: expected token<TAB>polarity<TAB>subjectivity")
        token, polarity_raw, subjectivity_raw = parts
        try:
            polarity = float(polarity_raw)
            subjectivity = float(subjectivity_raw)
        except ValueError:
            raise LexiconUnavailable(f"{path}:{number}: non-numeric score")
        if not -1.0 <= polarity <= 1.0 or not 0.0 <= subjectivity <= 1.0:
            raise LexiconUnavailable(f"{path}:{number}: score out of range")
        table[token.strip().lower()] = (polarity, subjectivity)
    return MappingProxyType(table)


@lru_cache(maxsize=8)
def load_lexica(lexica_dir: Optional[Path] = None) -> Lexica:
    """Load modal/hedge/negator lists and the sentiment table from a lexica directory."""
    base = Path(lexica_dir) if lexica_dir else DATA_DIR / LEXICA_DIR_NAME
    lexica = Lexica(
        modals=_read_word_list(base / MODAL_FILE),
        hedges=_read_word_list(base / HEDGE_FILE),
        negators=_read_word_list(base / NEGATOR_FILE),
        sentiment=_read_sentiment_table(base / SENTIMENT_FILE),
    )
    overlap = lexica.negators & set(lexica.sentiment)
    if overlap:
        raise LexiconUnavailable(f"Negators must not carry sentiment: {sorted(overlap)}")
    logger.debug("Loaded lexica from %s (%d sentiment entries)", base, len(lexica.sentiment))
    return lexica


def _lexica(lexica: Optional[Lexica]) -> Lexica:
    return lexica if lexica is not None else load_lexica()


# ---------------------------------------------------------------------------
# Tokens and metrics
# ---------------------------------------------------------------------------

def _is_word_char(ch: str) -> bool:
    return ch.isalnum() or ch == "'"


def tokenize(text: str) -> List[Token]:
    """
    Split on whitespace, strip edge punctuation (apostrophes survive), lowercase.

    Only the edges of a fragment are stripped: "war,peace" stays one token.
    """
    tokens: List[Token] = []
    for fragment in text.split():
        start, end = 0, len(fragment)
        while start < end and not _is_word_char(fragment[start]):
            start += 1
        while end > start and not _is_word_char(fragment[end - 1]):
            end -= 1
        word = fragment[start:end].lower()
        if any(ch.isalnum() for ch in word):
            tokens.append(Token(word))
    return tokens


def shannon_entropy(tokens: Sequence[str]) -> float:
    """Word-level entropy in bits over the token frequency distribution."""
    total = len(tokens)
    if total <= 1:
        return 0.0
    entropy = 0.0
    for count in Counter(tokens).values():
        probability = count / total
        entropy -= probability * math.log2(probability)
    return entropy


def _density(tokens: Sequence[str], vocabulary: FrozenSet[str]) -> float:
    if not tokens:
        return 0.0
    hits = sum(1 for token in tokens if token in vocabulary)
    return hits / len(tokens)


def modal_density(tokens: Sequence[str], lexica: Optional[Lexica] = None) -> float:
    return _density(tokens, _lexica(lexica).modals)


def hedge_density(tokens: Sequence[str], lexica: Optional[Lexica] = None) -> float:
    return _density(tokens, _lexica(lexica).hedges)


def sentiment(tokens: Sequence[str], lexica: Optional[Lexica] = None) -> Tuple[float, float]:
    """
    Lexicon-mean sentiment.

    A negator right before a matched entry scales that entry's polarity by -0.5.
    Texts without any lexicon match score (0.0, 0.0).
    """
    lex = _lexica(lexica)
    polarities: List[float] = []
    subjectivities: List[float] = []
    for index, token in enumerate(tokens):
        entry = lex.sentiment.get(token)
        if entry is None:
            continue
        polarity, subjectivity = entry
        if index > 0 and tokens[index - 1] in lex.negators:
            polarity *= NEGATION_FACTOR
        polarities.append(polarity)
        subjectivities.append(subjectivity)

    if not polarities:
        return 0.0, 0.0
    return sum(polarities) / len(polarities), sum(subjectivities) / len(subjectivities)


def profile(text: str, lexica: Optional[Lexica] = None) -> LexicalProfile:
    tokens = tokenize(text)
    if not tokens:
        return LexicalProfile()
    lex = _lexica(lexica)
    polarity, subjectivity = sentiment(tokens, lex)
    return LexicalProfile(
        word_count=len(tokens),
        shannon_entropy=shannon_entropy(tokens),
        modal_density=modal_density(tokens, lex),
        hedge_density=hedge_density(tokens, lex),
        polarity=polarity,
        subjectivity=subjectivity,
    )


# ---------------------------------------------------------------------------
# Taxonomy
# ---------------------------------------------------------------------------

_ANSWERER_CATEGORY = {
    AnswerableBy.SINGLE_EXCLUSIVE_SOURCE: QueryCategory.RECONDITE,
    AnswerableBy.AUTHORITY_SUBSET: QueryCategory.SANCTIONED,
    AnswerableBy.MANY_OBSERVERS: QueryCategory.DISCERNIBLE,
}


def classify(features: QueryFeatures) -> QueryCategory:
    """Decision order: computation, no one, honest conflict, then who can answer."""
    if features.is_pure_computation:
        return QueryCategory.COMPUTATIONAL
    if features.answerable_by is AnswerableBy.NO_ONE:
        return QueryCategory.NON_EVENT
    if features.honest_interpretation_conflict:
        return QueryCategory.AMBIGUOUS
    return _ANSWERER_CATEGORY[features.answerable_by]


def features_from_flags(answerable_by: str, pure_computation: bool = False,
                        interpretation_conflict: bool = False) -> QueryFeatures:
    try:
        who = AnswerableBy(answerable_by)
    except ValueError:
        valid = ", ".join(a.value for a in AnswerableBy)
        raise UnknownCategory(f"Unknown answerer '{answerable_by}' (expected one of: {valid})")
    try:
        return QueryFeatures(
            answerable_by=who,
            is_pure_computation=pure_computation,
            honest_interpretation_conflict=interpretation_conflict,
        )
    except ValueError as e:
        raise UnknownCategory(str(e))


# ---------------------------------------------------------------------------
# Corpus
# ---------------------------------------------------------------------------

def load_corpus(path: Path) -> List[CorpusRecord]:
    """Parse a JSON Lines corpus; errors carry the 1-based line number."""
    records: List[CorpusRecord] = []
    seen: Dict[str, int] = {}
    with open(path, "rb") as f:
        for number, raw_line in enumerate(f, start=1):
            try:
                line = raw_line.decode("utf-8")
            except UnicodeDecodeError:
                raise MalformedCorpusLine(number, "invalid UTF-8")
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as e:
                raise MalformedCorpusLine(number, f"invalid JSON ({e.msg})")
            if not isinstance(raw, dict):
                raise MalformedCorpusLine(number, "expected a JSON object")

            missing = [k for k in ("id", "category", "question", "answer") if k not in raw]
            if missing:
                raise MalformedCorpusLine(number, f"missing keys: {', '.join(missing)}")
            if not all(isinstance(raw[k], str) for k in ("id", "category", "question", "answer")):
                raise MalformedCorpusLine(number, "id, category, question and answer must be strings")
            if not raw["answer"].strip():
                raise MalformedCorpusLine(number, "answer must be non-empty")
            try:
                category = QueryCategory.parse(raw["category"])
            except UnknownCategory as e:
                raise MalformedCorpusLine(number, str(e))

            record_id = raw["id"]
            if record_id in seen:
                raise DuplicateId(record_id, number)
            seen[record_id] = number
            records.append(CorpusRecord(record_id, category, raw["question"], raw["answer"]))

    logger.info("Loaded %d corpus records from %s", len(records), path)
    return records


def aggregate(corpus: Iterable[CorpusRecord], lexica: Optional[Lexica] = None) -> List[CategoryAggregate]:
    """Per-category means of per-answer profiles, ordered by category name."""
    lex = _lexica(lexica)
    seen = set()
    grouped: Dict[QueryCategory, List[LexicalProfile]] = {}
    for record in corpus:
        if record.id in seen:
            raise DuplicateId(record.id)
        seen.add(record.id)
        grouped.setdefault(record.category, []).append(profile(record.answer, lex))

    def mean(values: List[float]) -> float:
        return sum(values) / len(values)

    aggregates = []
    for category in sorted(grouped, key=lambda c: c.value):
        profiles = grouped[category]
        aggregates.append(CategoryAggregate(
            category=category,
            occurrences=len(profiles),
            avg_word_count=mean([p.word_count for p in profiles]),
            avg_entropy=mean([p.shannon_entropy for p in profiles]),
            avg_modal_density=mean([p.modal_density for p in profiles]),
            avg_hedge_density=mean([p.hedge_density for p in profiles]),
            avg_polarity=mean([p.polarity for p in profiles]),
            avg_subjectivity=mean([p.subjectivity for p in profiles]),
        ))
    return aggregates


def aggregates_to_csv(aggregates: Sequence[CategoryAggregate]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(AGGREGATE_COLUMNS)
    for agg in aggregates:
        row = agg.as_row()
        writer.writerow(
            [row["category"], row["occurrences"]]
            + [f"{row[column]:.{CSV_DECIMALS}f}" for column in AGGREGATE_COLUMNS[2:]]
        )
    return buffer.getvalue()


def aggregates_to_json(aggregates: Sequence[CategoryAggregate]) -> str:
    return json.dumps([agg.as_row() for agg in aggregates], indent=2) + "\n"
