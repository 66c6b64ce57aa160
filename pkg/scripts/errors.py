"""
Exception hierarchy for oraclesim.
Every domain failure derives from OracleSimError so the CLI can map it to exit 1.
"""

from typing import List, Optional, Tuple


class OracleSimError(Exception):
    """Root of all domain errors."""


# querylex

class LexiconUnavailable(OracleSimError):
    pass


class CorpusError(OracleSimError):
    pass


class DuplicateId(CorpusError):
    def __init__(self, record_id: str, line: Optional[int] = None):
        self.record_id = record_id
        self.line = line
        where = f" (line {line})" if line else ""
        super().__init__(f"Duplicate corpus id: {record_id}{where}")


class MalformedCorpusLine(CorpusError):
    def __init__(self, line: int, reason: str):
        self.line = line
        self.reason = reason
        super().__init__(f"Malformed corpus line {line}: {reason}")


class UnknownCategory(OracleSimError):
    pass


# urn

class BadNonceLength(OracleSimError):
    pass


class RngExhausted(OracleSimError):
    pass


# trustmodel

class TrustModelError(OracleSimError):
    pass


class NotWhitelisted(TrustModelError):
    pass


class DuplicateIdentity(TrustModelError):
    pass


class IdentityExpelled(TrustModelError):
    pass


class UnknownSource(TrustModelError):
    pass


class SourceExpelled(TrustModelError):
    pass


class SourceInactive(TrustModelError):
    pass


class WindowClosed(TrustModelError):
    pass


class AlreadyResolved(TrustModelError):
    pass


class FeeUnpaid(TrustModelError):
    pass


class TooFewReferences(TrustModelError):
    pass


class AuditTimingMismatch(TrustModelError):
    pass


# sim

class InvalidConfig(OracleSimError):
    """Scenario validation failure with one diagnostic per offending field."""

    def __init__(self, diagnostics: List[Tuple[str, str]]):
        self.diagnostics = list(diagnostics)
        lines = [f"{path}: {message}" for path, message in self.diagnostics]
        super().__init__("Invalid scenario config:\n  " + "\n  ".join(lines))
