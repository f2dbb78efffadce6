"""Conversation data model shared by every stage of the pipeline.

Turns are 1-indexed in all user-facing messages, matching how conversations
are usually discussed ("turn 3 is the first attack").
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Sequence

from derailcast.backends.params import GenerationParams
from derailcast.errors import ValidationError


class Power(str, enum.Enum):
    ASSERTIVE = "assertive"
    CONFIDENT = "confident"
    NEUTRAL = "neutral"
    OPEN_MINDED = "open_minded"
    SUBMISSIVE = "submissive"


class Benevolence(str, enum.Enum):
    CONFRONTATIONAL = "confrontational"
    DISMISSIVE = "dismissive"
    NEUTRAL = "neutral"
    FRIENDLY = "friendly"
    SUPPORTIVE = "supportive"


class Arousal(str, enum.Enum):
    ENERGETIC = "energetic"
    NEUTRAL = "neutral"
    CALM = "calm"


class PoliticalLeaning(str, enum.Enum):
    LIBERAL = "liberal"
    NEUTRAL = "neutral"
    CONSERVATIVE = "conservative"


# Fixed axis order; position disambiguates "neutral", which every axis has.
AXES: tuple[str, ...] = ("power", "benevolence", "arousal", "political_leaning")
AXIS_ENUMS: dict[str, type[enum.Enum]] = {
    "power": Power,
    "benevolence": Benevolence,
    "arousal": Arousal,
    "political_leaning": PoliticalLeaning,
}


def normalize_keyword(word: str) -> str:
    """'Open-minded' -> 'open_minded'."""
    return word.strip().lower().replace("-", "_").replace(" ", "_")


def parse_axis_value(axis: str, word: str):
    """Map a free-form keyword onto the axis enum; raises ValueError if foreign."""
    return AXIS_ENUMS[axis](normalize_keyword(word))


class Outcome(str, enum.Enum):
    DERAILED = "derailed"
    BENIGN = "benign"

    @classmethod
    def from_bool(cls, derailed: bool) -> "Outcome":
        return cls.DERAILED if derailed else cls.BENIGN

    @property
    def derailed(self) -> bool:
        return self is Outcome.DERAILED


class Source(str, enum.Enum):
    CGA_WIKI = "cga_wiki"
    BNC = "bnc"
    SYNTHETIC = "synthetic"


class TieRule(str, enum.Enum):
    PREDICT_DERAILMENT = "predict_derailment"
    PREDICT_BENIGN = "predict_benign"


@dataclass(frozen=True)
class OrientationLabel:
    power: Power
    benevolence: Benevolence
    arousal: Arousal
    political_leaning: PoliticalLeaning

    def __post_init__(self):
        for axis in AXES:
            value = getattr(self, axis)
            enum_cls = AXIS_ENUMS[axis]
            if not isinstance(value, enum_cls):
                # accept plain strings, but only members of this axis
                object.__setattr__(self, axis, parse_axis_value(axis, value))

    @classmethod
    def from_keywords(cls, words: Sequence[str]) -> "OrientationLabel":
        if len(words) != len(AXES):
            raise ValueError(f"expected {len(AXES)} keywords, got {len(words)}")
        return cls(*(parse_axis_value(axis, w) for axis, w in zip(AXES, words)))

    def keywords(self) -> tuple[str, str, str, str]:
        return tuple(getattr(self, axis).value for axis in AXES)  # type: ignore[return-value]

    def to_dict(self) -> dict[str, str]:
        return {axis: getattr(self, axis).value for axis in AXES}

    @classmethod
    def from_dict(cls, data: dict[str, str]) -> "OrientationLabel":
        return cls(**{axis: parse_axis_value(axis, data[axis]) for axis in AXES})


@dataclass(frozen=True)
class Turn:
    speaker: str
    text: str
    orientation: OrientationLabel | None = None
    is_derailment: bool | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "speaker": self.speaker,
            "text": self.text,
            "orientation": self.orientation.to_dict() if self.orientation else None,
            "is_derailment": self.is_derailment,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Turn":
        orientation = data.get("orientation")
        return cls(
            speaker=str(data["speaker"]),
            text=data["text"],
            orientation=OrientationLabel.from_dict(orientation) if orientation else None,
            is_derailment=data.get("is_derailment"),
        )


@dataclass(frozen=True)
class Conversation:
    id: str
    turns: tuple[Turn, ...]
    prefix_len: int
    outcome: Outcome
    source: Source = Source.SYNTHETIC

    def __post_init__(self):
        object.__setattr__(self, "turns", tuple(self.turns))
        object.__setattr__(self, "outcome", Outcome(self.outcome))
        object.__setattr__(self, "source", Source(self.source))

    @property
    def n(self) -> int:
        return len(self.turns)

    @property
    def derailed(self) -> bool:
        return self.outcome.derailed

    def with_turns(self, turns: Iterable[Turn]) -> "Conversation":
        return replace(self, turns=tuple(turns))

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "source": self.source.value,
            "prefix_len": self.prefix_len,
            "outcome": self.outcome.value,
            "turns": [t.to_dict() for t in self.turns],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Conversation":
        return cls(
            id=str(data["id"]),
            turns=tuple(Turn.from_dict(t) for t in data["turns"]),
            prefix_len=int(data["prefix_len"]),
            outcome=Outcome(data["outcome"]),
            source=Source(data.get("source", "synthetic")),
        )


def validate_conversation(c: Conversation) -> list[str]:
    """Return every broken invariant of ``c``; an empty list means valid."""
    problems: list[str] = []
    n = len(c.turns)
    if n < 2:
        problems.append(f"conversation must have at least 2 turns, got {n}")
    if not 1 <= c.prefix_len:
        problems.append("prefix_len must be >= 1")
    if c.prefix_len >= n:
        problems.append("prefix_len must be < n")
    for i, turn in enumerate(c.turns, start=1):
        if not isinstance(turn.text, str) or not turn.text.strip():
            problems.append(f"empty text at turn {i}")
        if i <= c.prefix_len and turn.is_derailment:
            problems.append(f"benign prefix violated at turn {i}")
    future_flags = [t.is_derailment for t in c.turns[c.prefix_len:]]
    if any(flag is not None for flag in future_flags):
        flagged = any(bool(flag) for flag in future_flags)
        if flagged != c.outcome.derailed:
            problems.append(
                f"outcome {c.outcome.value} disagrees with per-turn derailment flags"
            )
    return problems


def benign_prefix(c: Conversation) -> list[Turn]:
    problems = validate_conversation(c)
    if problems:
        raise ValidationError(problems)
    return list(c.turns[: c.prefix_len])


@dataclass(frozen=True)
class ContinuationSet:
    conversation_id: str
    prefix_len: int
    continuations: tuple[tuple[Turn, ...], ...]
    params: GenerationParams
    seed: int
    # indices whose generation failed and were replaced by a placeholder turn
    placeholders: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(
            self, "continuations", tuple(tuple(c) for c in self.continuations)
        )
        object.__setattr__(self, "placeholders", tuple(self.placeholders))
        if not self.continuations:
            raise ValueError("a continuation set needs at least one continuation")
        for i, cont in enumerate(self.continuations):
            if not cont:
                raise ValueError(f"continuation {i} is empty")

    def __len__(self) -> int:
        return len(self.continuations)

    def head(self, count: int) -> "ContinuationSet":
        """The first ``count`` continuations (same seeds as a fresh run with L=count)."""
        return replace(
            self,
            continuations=self.continuations[:count],
            placeholders=tuple(i for i in self.placeholders if i < count),
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "conversation_id": self.conversation_id,
            "prefix_len": self.prefix_len,
            "seed": self.seed,
            "params": self.params.to_dict(),
            "continuations": [[t.to_dict() for t in cont] for cont in self.continuations],
            "placeholders": list(self.placeholders),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ContinuationSet":
        return cls(
            conversation_id=data["conversation_id"],
            prefix_len=int(data["prefix_len"]),
            continuations=tuple(
                tuple(Turn.from_dict(t) for t in cont) for cont in data["continuations"]
            ),
            params=GenerationParams.from_dict(data["params"]),
            seed=int(data["seed"]),
            placeholders=tuple(data.get("placeholders", ())),
        )


@dataclass(frozen=True)
class ForecastResult:
    conversation_id: str
    probabilities: tuple[float, ...]
    votes: tuple[bool, ...]
    final: bool
    threshold: float = 0.5
    tie_rule: TieRule = TieRule.PREDICT_DERAILMENT
    gold: bool | None = None
    seed: int | None = None
    notes: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        object.__setattr__(self, "probabilities", tuple(float(p) for p in self.probabilities))
        object.__setattr__(self, "votes", tuple(bool(v) for v in self.votes))
        object.__setattr__(self, "tie_rule", TieRule(self.tie_rule))
        if len(self.probabilities) != len(self.votes):
            raise ValueError("probabilities and votes differ in length")

    @property
    def L(self) -> int:
        return len(self.votes)

    def to_dict(self) -> dict[str, Any]:
        return {
            "conversation_id": self.conversation_id,
            "probabilities": list(self.probabilities),
            "votes": list(self.votes),
            "final": self.final,
            "gold": self.gold,
            "L": self.L,
            "seed": self.seed,
            "threshold": self.threshold,
            "tie_rule": self.tie_rule.value,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ForecastResult":
        return cls(
            conversation_id=data["conversation_id"],
            probabilities=tuple(data["probabilities"]),
            votes=tuple(data["votes"]),
            final=bool(data["final"]),
            threshold=float(data.get("threshold", 0.5)),
            tie_rule=TieRule(data.get("tie_rule", TieRule.PREDICT_DERAILMENT.value)),
            gold=data.get("gold"),
            seed=data.get("seed"),
        )
