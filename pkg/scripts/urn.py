#!/usr/bin/env python3
"""
Sealed-urn commit-reveal protocol.

A petitioner commits to two messages (gold and silver urn) with fresh nonces,
witnesses co-sign the pair, a seeded beacon picks one urn, and the reveal is
accepted only if the opening recomputes the chosen commitment.
"""

import hashlib
import hmac
import itertools
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Iterator, List, Mapping, Optional

from config import DEFAULT_WITNESS_QUORUM, DIGEST_BYTES, NONCE_BYTES
from errors import BadNonceLength, RngExhausted
from streams import UINT64_LIMIT

logger = logging.getLogger(__name__)


class Side(str, Enum):
    GOLD = "Gold"
    SILVER = "Silver"


class Verdict(str, Enum):
    ACCEPTED = "Accepted"
    REJECTED = "Rejected"


@dataclass(frozen=True)
class Commitment:
    digest: bytes

    def __post_init__(self):
        if len(self.digest) != DIGEST_BYTES:
            raise ValueError(f"Commitment digest must be {DIGEST_BYTES} bytes")

    @property
    def hex(self) -> str:
        return self.digest.hex()


@dataclass(frozen=True)
class UrnPair:
    gold: Commitment
    silver: Commitment
    created_at: int = 0

    def __post_init__(self):
        if self.gold.digest == self.silver.digest:
            raise ValueError("Gold and silver commitments must differ")

    def side(self, side: Side) -> Commitment:
        return self.gold if side is Side.GOLD else self.silver

    def to_dict(self) -> Dict[str, Any]:
        return {"gold": self.gold.hex, "silver": self.silver.hex, "created_at": self.created_at}


@dataclass(frozen=True)
class Opening:
    message: bytes
    nonce: bytes


@dataclass(frozen=True)
class UrnOpenings:
    """Kept privately by the petitioner until the reveal."""

    gold: Opening
    silver: Opening

    def side(self, side: Side) -> Opening:
        return self.gold if side is Side.GOLD else self.silver


@dataclass(frozen=True)
class WitnessAttestation:
    witness_id: str
    tag: bytes
    timestamp: int

    def to_dict(self) -> Dict[str, Any]:
        return {"witness_id": self.witness_id, "tag": self.tag.hex(), "timestamp": self.timestamp}


@dataclass(frozen=True)
class Selection:
    chosen: Side
    beacon_seed: int
    draw: int

    def proof(self) -> Dict[str, Any]:
        return {"chosen": self.chosen.value, "beacon_seed": self.beacon_seed, "draw": self.draw}


@dataclass(frozen=True)
class RevealOutcome:
    verdict: Verdict
    recomputed: Optional[bytes] = None
    expected: Optional[bytes] = None

    @property
    def accepted(self) -> bool:
        return self.verdict is Verdict.ACCEPTED

    def to_dict(self) -> Dict[str, Any]:
        payload: Dict[str, Any] = {"verdict": self.verdict.value}
        if not self.accepted:
            payload["evidence"] = {
                "recomputed": self.recomputed.hex() if self.recomputed else None,
                "expected": self.expected.hex() if self.expected else None,
            }
        return payload


def commit(message: bytes, nonce: bytes) -> Commitment:
    """SHA-256(message || nonce); the fixed nonce width makes the split unambiguous."""
    if len(nonce) != NONCE_BYTES:
        raise BadNonceLength(f"Nonce must be {NONCE_BYTES} bytes, got {len(nonce)}")
    return Commitment(hashlib.sha256(bytes(message) + bytes(nonce)).digest())


def verify_commitment(commitment: Commitment, message: bytes, nonce: bytes) -> bool:
    if len(nonce) != NONCE_BYTES:
        return False
    return hmac.compare_digest(commit(message, nonce).digest, commitment.digest)


def _fresh_nonce(rng) -> bytes:
    nonce = rng.bytes(NONCE_BYTES)
    if not isinstance(nonce, (bytes, bytearray)) or len(nonce) != NONCE_BYTES:
        raise RngExhausted(f"Generator did not return {NONCE_BYTES} bytes")
    return bytes(nonce)


def make_urn_pair(m_gold: bytes, m_silver: bytes, rng, created_at: int = 0):
    """Commit to both messages; returns (UrnPair, UrnOpenings)."""
    gold_nonce = _fresh_nonce(rng)
    silver_nonce = _fresh_nonce(rng)
    gold = commit(m_gold, gold_nonce)
    silver = commit(m_silver, silver_nonce)
    if gold.digest == silver.digest:
        raise RngExhausted("Generator repeated a nonce for identical messages")

    pair = UrnPair(gold=gold, silver=silver, created_at=created_at)
    openings = UrnOpenings(gold=Opening(bytes(m_gold), gold_nonce), silver=Opening(bytes(m_silver), silver_nonce))
    return pair, openings


def _attestation_tag(secret: bytes, pair: UrnPair, timestamp: int) -> bytes:
    return hashlib.sha256(
        bytes(secret) + pair.gold.digest + pair.silver.digest + int(timestamp).to_bytes(8, "big")
    ).digest()


def attest(witness_id: str, witness_secret: bytes, pair: UrnPair, t: int) -> WitnessAttestation:
    return WitnessAttestation(witness_id=witness_id, tag=_attestation_tag(witness_secret, pair, t), timestamp=t)


def verify_attestation(attestation: WitnessAttestation, witness_secret: bytes, pair: UrnPair) -> bool:
    expected = _attestation_tag(witness_secret, pair, attestation.timestamp)
    return hmac.compare_digest(expected, attestation.tag)


def count_valid_attestations(attestations: List[WitnessAttestation],
                             witness_secrets: Mapping[str, bytes], pair: UrnPair) -> int:
    """Distinct witnesses whose tag verifies; unknown witnesses never count."""
    valid = set()
    for att in attestations:
        secret = witness_secrets.get(att.witness_id)
        if secret is not None and verify_attestation(att, secret, pair):
            valid.add(att.witness_id)
    return len(valid)


def beacon_stream(beacon_seed: int) -> Iterator[int]:
    """Byte stream of SHA-256(seed_be64 || counter_be32) blocks."""
    if not 0 <= beacon_seed < UINT64_LIMIT:
        raise ValueError(f"Beacon seed must be a 64-bit unsigned value, got {beacon_seed}")
    seed_bytes = beacon_seed.to_bytes(8, "big")
    for counter in itertools.count():
        yield from hashlib.sha256(seed_bytes + counter.to_bytes(4, "big")).digest()


def select(pair: UrnPair, beacon_seed: int) -> Selection:
    """Blind choice: reads the beacon only, never the urn contents."""
    draw = next(beacon_stream(beacon_seed))
    chosen = Side.GOLD if draw % 2 == 0 else Side.SILVER
    return Selection(chosen=chosen, beacon_seed=beacon_seed, draw=draw)


def reveal_verify(pair: UrnPair, selection: Selection, message: bytes, nonce: bytes) -> RevealOutcome:
    expected = pair.side(selection.chosen).digest
    recomputed = hashlib.sha256(bytes(message) + bytes(nonce)).digest()
    if len(nonce) == NONCE_BYTES and hmac.compare_digest(recomputed, expected):
        return RevealOutcome(Verdict.ACCEPTED)
    return RevealOutcome(Verdict.REJECTED, recomputed=recomputed, expected=expected)


def tamper_message(message: bytes) -> bytes:
    if not message:
        return b"\x00"
    return bytes([message[0] ^ 0x01]) + message[1:]


def run_protocol(
    m_gold: bytes,
    m_silver: bytes,
    witness_secrets: Mapping[str, bytes],
    rng,
    beacon_seed: int,
    quorum: int = DEFAULT_WITNESS_QUORUM,
    committed_at: int = 0,
    tamper: bool = False,
) -> Dict[str, Any]:
    """
    Full commit -> attest -> select -> reveal run.

    Returns a JSON-ready transcript. When fewer than `quorum` witnesses attest,
    the transcript stops with status QuorumNotMet and no selection.
    """
    pair, openings = make_urn_pair(m_gold, m_silver, rng, created_at=committed_at)
    attestations = [
        attest(witness_id, secret, pair, committed_at)
        for witness_id, secret in sorted(witness_secrets.items())
    ]
    valid = count_valid_attestations(attestations, witness_secrets, pair)

    transcript: Dict[str, Any] = {
        "commit": pair.to_dict(),
        "attestations": [a.to_dict() for a in attestations],
        "valid_attestations": valid,
        "quorum": quorum,
    }
    if valid < quorum:
        logger.warning("Urn quorum not met: %d of %d attestations", valid, quorum)
        transcript["status"] = "QuorumNotMet"
        return transcript

    selection = select(pair, beacon_seed)
    opening = openings.side(selection.chosen)
    message = tamper_message(opening.message) if tamper else opening.message
    outcome = reveal_verify(pair, selection, message, opening.nonce)

    transcript.update({
        "status": "Completed",
        "selection": selection.proof(),
        "reveal": {
            "message": message.decode("utf-8", errors="replace"),
            "message_hex": message.hex(),
            "nonce": opening.nonce.hex(),
            "tampered": tamper,
        },
        "outcome": outcome.to_dict(),
    })
    return transcript
