"""
Configuration for oraclesim.
Centralizes constants, calendar/fee defaults, and local data paths.
"""

import logging
import os
import sys
from pathlib import Path
from typing import Optional

from dotenv import load_dotenv

# Paths
PROJECT_DIR = Path(__file__).parent.parent
DATA_DIR = PROJECT_DIR / "data"
CORPUS_DIR_NAME = "corpus"
LEXICA_DIR_NAME = "lexica"
SCENARIOS_DIR_NAME = "scenarios"

SAMPLE_CORPUS_FILE = "sample_corpus.jsonl"
SAMPLE_REFERENCE_FILE = "sample_reference.csv"
MODAL_FILE = "modal.txt"
HEDGE_FILE = "hedge.txt"
NEGATOR_FILE = "negators.txt"
SENTIMENT_FILE = "sentiment.tsv"

# Environment
DATA_DIR_ENV = "ORACLESIM_DATA_DIR"
LOG_LEVEL_ENV = "ORACLESIM_LOG_LEVEL"

load_dotenv(PROJECT_DIR / ".env")

# Lexical analysis
NEGATION_FACTOR = -0.5
CSV_DECIMALS = 2
AGGREGATE_COLUMNS = [
    "category",
    "occurrences",
    "avg_word_count",
    "avg_entropy",
    "avg_modal_density",
    "avg_hedge_density",
    "avg_polarity",
    "avg_subjectivity",
]

# Sealed urn
NONCE_BYTES = 32
DIGEST_BYTES = 32
DEFAULT_WITNESS_QUORUM = 3
DEFAULT_WITNESS_COUNT = 3

# Calendar (30-day months, consultation on the seventh, months 10-12 dark)
MONTH_LENGTH = 30
MONTHS_PER_YEAR = 12
CONSULTATION_DAY = 7
OFF_SEASON_MONTHS = (10, 11, 12)

# Reputation (direction matters, magnitudes are calibration)
INITIAL_REPUTATION = 1.0
SUCCESS_MULTIPLIER = 1.01
OVERTURN_MULTIPLIER = 0.8
REPUTATION_CAP = 10.0

# Audits and disputes
AUDIT_EPSILON = 1e-9
DEFAULT_TOLERANCE = 0.01
MIN_AUDIT_REFERENCES = 3
DEFAULT_REFERENCE_ORACLES = 3
DEFAULT_AUDIT_DAY = 15

# Fees (currency units)
DEFAULT_FEES = {
    "minimum": 1.0,
    "base": 1.0,
    "promanteia": 3.0,
    "low_reliability_multiplier": 2.0,
    "extraordinary_multiplier": 3.0,
}

# Simulation (hidden per-query truths are drawn uniformly from this range)
TRUTH_RANGE = (50.0, 150.0)
CONTRACT_SOURCE = "contract"
REFERENCE_VOTE_SOURCE = "reference-vote"
CHALLENGER_ID = "challenger"

# Replication
DEFAULT_WORKERS = 1


def resolve_data_dir(cli_value: Optional[str] = None) -> Path:
    """Environment beats --data-dir, which beats the bundled data path."""
    env_value = os.environ.get(DATA_DIR_ENV)
    if env_value:
        return Path(env_value)
    if cli_value:
        return Path(cli_value)
    return DATA_DIR


def setup_logging(level: Optional[str] = None) -> None:
    """Send all diagnostics to stderr so stdout stays machine-readable."""
    level_name = (level or os.environ.get(LOG_LEVEL_ENV) or "WARNING").upper()
    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    root.addHandler(handler)
    root.setLevel(getattr(logging, level_name, logging.WARNING))
