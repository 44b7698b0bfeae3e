"""Text-to-model projection interface.

A projector turns the evolving byte prefix into model deltas: it converts
finished constructs into certain elements, keeps the construct currently
being written as possible elements, and marks contradictions as errors. A
projector is artifact-specific; implementations register under a name and
are selected via configuration (the bundled one is ``clevr``).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Protocol

from . import grammar as _grammar
from .metamodel import Metamodel
from .partial_model import ModelDelta, PartialModel


class InconsistentEventsError(ValueError):
    pass


@dataclass(frozen=True)
class ParseEvent:
    """Recognizer-level event emitted while consuming committed bytes.

    ``kind`` is one of "started", "completed", "consumed". Completions are
    chart facts and may include spans that a locally ambiguous parse later
    abandons; projectors that need exact boundaries should lex the consumed
    bytes themselves. Start offsets may be -1 when unknown.
    """

    kind: str
    name: str | None
    start: int
    end: int


def events_for_advance(
    state: "_grammar.RecognizerState", data: bytes
) -> tuple["_grammar.RecognizerState", list[ParseEvent]]:
    """Advance the recognizer and report the events the bytes produced."""
    new_state, completions = _grammar.advance_with_completions(state, data)
    events = [ParseEvent("consumed", None, state.pos, state.pos + len(data))]
    events.extend(ParseEvent("completed", name, start, end) for name, start, end in completions)
    return new_state, events


class Projector(Protocol):
    """Artifact-specific projection from token commits to model deltas."""

    name: str

    def project_init(self, m: Metamodel) -> tuple[object, ModelDelta]:
        """Initial projector state and (usually empty) initial delta."""
        ...

    def project_token(
        self, ps: object, pm: PartialModel, events: list[ParseEvent], token_bytes: bytes
    ) -> tuple[object, ModelDelta]:
        """Pure step: fold one committed token into the projection.

        ``pm`` is the committed model paired with ``ps``; the returned delta
        has not been applied (the caller owns model updates so that
        tentative candidate evaluations never touch committed state).
        """
        ...


_REGISTRY: dict[str, Callable[[], Projector]] = {}


def register_projector(name: str, factory: Callable[[], Projector]) -> None:
    _REGISTRY[name] = factory


def get_projector(name: str) -> Projector:
    try:
        factory = _REGISTRY[name]
    except KeyError:
        known = ", ".join(sorted(_REGISTRY)) or "none"
        raise KeyError(f"no projector named {name!r} (registered: {known})") from None
    return factory()


def registered_projectors() -> list[str]:
    return sorted(_REGISTRY)
