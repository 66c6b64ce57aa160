#!/usr/bin/env python3
"""
oraclesim command-line entry point.

    python scripts/run.py oraclesim.py sim run --scenario briber
    python scripts/run.py oraclesim.py sim replicate --scenario briber --runs 500 --workers 4
    python scripts/run.py oraclesim.py lex analyze --corpus data/corpus/sample_corpus.jsonl
    python scripts/run.py oraclesim.py lex classify --answerable-by SingleExclusiveSource
    python scripts/run.py oraclesim.py urn demo --m-gold "go" --m-silver "stay" --tamper

Reports go to stdout (or --out); status lines and logs go to stderr.
Exit codes: 0 success, 1 domain error, 2 usage error.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from config import (
    CORPUS_DIR_NAME,
    DEFAULT_WITNESS_COUNT,
    DEFAULT_WITNESS_QUORUM,
    DEFAULT_WORKERS,
    LEXICA_DIR_NAME,
    SAMPLE_CORPUS_FILE,
    SCENARIOS_DIR_NAME,
    resolve_data_dir,
    setup_logging,
)
from errors import OracleSimError
from querylex import (
    AnswerableBy,
    aggregate,
    aggregates_to_csv,
    aggregates_to_json,
    classify,
    features_from_flags,
    load_corpus,
    load_lexica,
)
from scenario import load_scenario
from sim import replicate, run, to_json, write_event_log, write_summary_csv
from streams import UINT64_LIMIT, agent_stream, draw_u64
from trustmodel import route
from urn import run_protocol

logger = logging.getLogger(__name__)


def resolve_scenario_path(value: str, data_dir: Path) -> Path:
    """Accept a path, or the bare name of a bundled scenario (with or without .json)."""
    path = Path(value)
    if path.exists():
        return path
    bundled = data_dir / SCENARIOS_DIR_NAME / (value if value.endswith(".json") else f"{value}.json")
    return bundled if bundled.exists() else path


def emit(text: str, out: Optional[str]):
    if out:
        Path(out).write_text(text, encoding="utf-8")
        print(f"✅ Wrote {out}", file=sys.stderr)
    else:
        sys.stdout.write(text)


def cmd_sim_run(args, data_dir: Path) -> int:
    config = load_scenario(resolve_scenario_path(args.scenario, data_dir), seed=args.seed)
    report, events = run(config)
    if args.log:
        write_event_log(events, Path(args.log))
        print(f"✅ Event log: {args.log} ({len(events)} events)", file=sys.stderr)
    if args.csv:
        write_summary_csv(report, Path(args.csv))
        print(f"✅ Summary CSV: {args.csv}", file=sys.stderr)
    emit(to_json(report.to_dict()), args.out)
    return 0


def cmd_sim_replicate(args, data_dir: Path) -> int:
    config = load_scenario(resolve_scenario_path(args.scenario, data_dir), seed=args.seed)
    summary = replicate(config, args.runs, workers=args.workers)
    emit(to_json(summary), args.out)
    return 0


def cmd_lex_analyze(args, data_dir: Path) -> int:
    corpus_path = Path(args.corpus) if args.corpus else data_dir / CORPUS_DIR_NAME / SAMPLE_CORPUS_FILE
    lexica = load_lexica(data_dir / LEXICA_DIR_NAME)
    aggregates = aggregate(load_corpus(corpus_path), lexica)
    text = aggregates_to_json(aggregates) if args.format == "json" else aggregates_to_csv(aggregates)
    emit(text, args.out)
    return 0


def cmd_lex_classify(args, data_dir: Path) -> int:
    features = features_from_flags(args.answerable_by, args.pure_computation, args.interpretation_conflict)
    category = classify(features)
    result = {
        "answerable_by": features.answerable_by.value,
        "is_pure_computation": features.is_pure_computation,
        "honest_interpretation_conflict": features.honest_interpretation_conflict,
        "category": category.value,
        "routing": route(None, category).value,
    }
    sys.stdout.write(json.dumps(result, indent=2) + "\n")
    return 0


def cmd_urn_demo(args, data_dir: Path) -> int:
    witness_secrets = {
        f"witness-{i + 1}": agent_stream(args.seed, f"witness-{i + 1}").bytes(32)
        for i in range(args.witnesses)
    }
    transcript = run_protocol(
        args.m_gold.encode("utf-8"),
        args.m_silver.encode("utf-8"),
        witness_secrets,
        agent_stream(args.seed, "petitioner"),
        draw_u64(agent_stream(args.seed, "beacon")),
        quorum=args.quorum,
        tamper=args.tamper,
    )
    sys.stdout.write(to_json(transcript))
    return 0


def non_negative_int(value: str) -> int:
    number = int(value)
    if number < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return number


def positive_int(value: str) -> int:
    number = int(value)
    if number < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return number


def seed_int(value: str) -> int:
    number = non_negative_int(value)
    if number >= UINT64_LIMIT:
        raise argparse.ArgumentTypeError("must be < 2**64")
    return number


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="oraclesim", description="Oracle-network simulator and query analysis")
    parser.add_argument("--data-dir", help="Data directory (ORACLESIM_DATA_DIR overrides)")
    parser.add_argument("--log-level", help="Logging level for stderr (default: WARNING)")
    subparsers = parser.add_subparsers(dest="command", required=True, help="Commands")

    # sim
    sim_parser = subparsers.add_parser("sim", help="Run the oracle-network simulator")
    sim_sub = sim_parser.add_subparsers(dest="action", required=True)

    run_parser = sim_sub.add_parser("run", help="Run one scenario")
    run_parser.add_argument("--scenario", required=True, help="Scenario JSON path or bundled scenario name")
    run_parser.add_argument("--seed", type=seed_int, help="Override the scenario seed")
    run_parser.add_argument("--out", help="Report JSON path (default: stdout)")
    run_parser.add_argument("--log", help="Event log path (JSON Lines)")
    run_parser.add_argument("--csv", help="One-row summary CSV path")

    replicate_parser = sim_sub.add_parser("replicate", help="Run a scenario over consecutive seeds")
    replicate_parser.add_argument("--scenario", required=True, help="Scenario JSON path or bundled scenario name")
    replicate_parser.add_argument("--runs", type=positive_int, required=True, help="Number of runs")
    replicate_parser.add_argument("--seed", type=seed_int, help="First seed (default: scenario seed)")
    replicate_parser.add_argument("--workers", type=positive_int, default=DEFAULT_WORKERS,
                                  help="Parallel worker processes")
    replicate_parser.add_argument("--out", help="Summary JSON path (default: stdout)")

    # lex
    lex_parser = subparsers.add_parser("lex", help="Lexical analysis of oracle queries")
    lex_sub = lex_parser.add_subparsers(dest="action", required=True)

    analyze_parser = lex_sub.add_parser("analyze", help="Per-category lexical aggregates")
    analyze_parser.add_argument("--corpus", help="Corpus JSON Lines path (default: bundled sample)")
    analyze_parser.add_argument("--format", choices=["csv", "json"], default="csv", help="Output format")
    analyze_parser.add_argument("--out", help="Output path (default: stdout)")

    classify_parser = lex_sub.add_parser("classify", help="Classify a query from its features")
    classify_parser.add_argument("--answerable-by", required=True, choices=[a.value for a in AnswerableBy],
                                 help="Who could answer in principle")
    classify_parser.add_argument("--pure-computation", action="store_true", help="Answer is a pure computation")
    classify_parser.add_argument("--interpretation-conflict", action="store_true",
                                 help="Honest parties may interpret the answer differently")

    # urn
    urn_parser = subparsers.add_parser("urn", help="Sealed-urn commit-reveal protocol")
    urn_sub = urn_parser.add_subparsers(dest="action", required=True)

    demo_parser = urn_sub.add_parser("demo", help="Print a full commit/attest/select/reveal transcript")
    demo_parser.add_argument("--m-gold", required=True, help="Gold urn message")
    demo_parser.add_argument("--m-silver", required=True, help="Silver urn message")
    demo_parser.add_argument("--witnesses", type=non_negative_int, default=DEFAULT_WITNESS_COUNT,
                             help="Number of witnesses")
    demo_parser.add_argument("--quorum", type=positive_int, default=DEFAULT_WITNESS_QUORUM,
                             help="Attestations required before selection")
    demo_parser.add_argument("--seed", type=seed_int, default=0, help="Seed for nonces, witnesses and beacon")
    demo_parser.add_argument("--tamper", action="store_true", help="Flip a bit of the revealed message")

    return parser


COMMANDS = {
    ("sim", "run"): cmd_sim_run,
    ("sim", "replicate"): cmd_sim_replicate,
    ("lex", "analyze"): cmd_lex_analyze,
    ("lex", "classify"): cmd_lex_classify,
    ("urn", "demo"): cmd_urn_demo,
}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.log_level)
    data_dir = resolve_data_dir(args.data_dir)

    try:
        return COMMANDS[(args.command, args.action)](args, data_dir)
    except OracleSimError as e:
        print(f"❌ {e}", file=sys.stderr)
        return 1
    except FileNotFoundError as e:
        print(f"❌ File not found: {e.filename}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"❌ {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
