#!/usr/bin/env python3
"""
Adversary behaviors for the simulator.

Each adversary is stepped once per simulated day and, for the kinds that take
over a source, once more whenever that source is asked for an answer. A step
only returns actions; the simulator applies them and logs the outcome.
"""

from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Tuple

from numpy.random import Generator

from scenario import AdversaryConfig, AdversaryKind
from trustmodel import Calendar, Mode


class ActionKind(str, Enum):
    SET_BIAS = "SetBias"
    REGISTER = "Register"
    TAKEOVER = "Takeover"
    ANSWER = "Answer"
    COPY = "Copy"
    ABSTAIN = "Abstain"


@dataclass(frozen=True)
class Action:
    kind: ActionKind
    source_id: str
    value: Optional[float] = None


@dataclass(frozen=True)
class AnswerRequest:
    """A query or audit probe put to a controlled source, with the reports it can see."""

    query_id: str
    visible: Tuple[float, ...] = ()


@dataclass(frozen=True)
class WorldView:
    day: int
    calendar: Calendar
    mode: Mode
    request: Optional[AnswerRequest] = None

    @property
    def month_start(self) -> bool:
        return self.calendar.day_of_month(self.day) == 1

    @property
    def month_index(self) -> int:
        return self.day // self.calendar.month_length


def sybil_identity(adversary_id: str, month_index: int, n: int) -> str:
    return f"{adversary_id}-sybil-{month_index}-{n}"


def _briber(adversary: AdversaryConfig, view: WorldView) -> List[Action]:
    if view.day == adversary.corrupt_from:
        return [Action(ActionKind.SET_BIAS, adversary.target, adversary.bias)]
    if adversary.corrupt_to is not None and view.day == adversary.corrupt_to:
        return [Action(ActionKind.SET_BIAS, adversary.target, 0.0)]
    return []


def _sybil(adversary: AdversaryConfig, view: WorldView) -> List[Action]:
    if not view.month_start:
        return []
    return [
        Action(ActionKind.REGISTER, sybil_identity(adversary.id, view.month_index, n), adversary.bias)
        for n in range(adversary.registrations_per_month)
    ]


def _freeloader(adversary: AdversaryConfig, view: WorldView) -> List[Action]:
    if view.request is None:
        return [Action(ActionKind.TAKEOVER, adversary.target)] if view.day == 0 else []
    if not view.request.visible:
        return [Action(ActionKind.ABSTAIN, adversary.target)]
    return [Action(ActionKind.COPY, adversary.target, view.request.visible[-1])]


def _lazy(adversary: AdversaryConfig, view: WorldView) -> List[Action]:
    if view.request is None:
        return [Action(ActionKind.TAKEOVER, adversary.target)] if view.day == 0 else []
    return [Action(ActionKind.ANSWER, adversary.target, adversary.constant)]


_STEPS = {
    AdversaryKind.BRIBER: _briber,
    AdversaryKind.SYBIL: _sybil,
    AdversaryKind.FREELOADER: _freeloader,
    AdversaryKind.LAZY: _lazy,
}


def adversary_step(adversary: AdversaryConfig, world_view: WorldView, rng: Generator) -> List[Action]:
    """
    Actions for one adversary at one moment.

    The built-in kinds are deterministic given the view; ``rng`` is the
    adversary's own stream, passed so randomized strategies never touch
    another agent's draws.
    """
    return _STEPS[adversary.kind](adversary, world_view)
