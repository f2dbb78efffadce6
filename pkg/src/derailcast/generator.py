"""Conversation <-> text serialization and continuation sampling."""

from __future__ import annotations

import enum
import hashlib
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence

from derailcast.backends.base import GeneratorBackend, tokenize
from derailcast.backends.params import DEFAULT_STOP_MARKER, GenerationParams
from derailcast.errors import ConfigError, ContextOverflowError, GenerationError, SerializationError
from derailcast.model import (
    AXES,
    AXIS_ENUMS,
    ContinuationSet,
    Conversation,
    OrientationLabel,
    Turn,
    normalize_keyword,
)

log = logging.getLogger(__name__)

UNKNOWN_SPEAKER = "<unknown>"


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from arbitrary parts (independent of PYTHONHASHSEED)."""
    digest = hashlib.blake2b(repr(parts).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big") >> 1


@dataclass(frozen=True)
class SerializationScheme:
    include_orientation: bool = False
    turn_delimiter: str = "\n<TURN>\n"
    label_open: str = "["
    label_close: str = "]"
    end_of_conversation_marker: str = DEFAULT_STOP_MARKER
    speaker_separator: str = ": "

    def __post_init__(self):
        structural = {
            "turn_delimiter": self.turn_delimiter,
            "label_open": self.label_open,
            "label_close": self.label_close,
            "end_of_conversation_marker": self.end_of_conversation_marker,
            "speaker_separator": self.speaker_separator,
        }
        for name, value in structural.items():
            if not value:
                raise ConfigError(f"{name} must be non-empty")
        values = list(structural.values())
        if len(set(values)) != len(values):
            raise ConfigError("structural strings of a serialization scheme must be pairwise distinct")

    def to_dict(self) -> dict:
        return {
            "include_orientation": self.include_orientation,
            "turn_delimiter": self.turn_delimiter,
            "label_open": self.label_open,
            "label_close": self.label_close,
            "end_of_conversation_marker": self.end_of_conversation_marker,
            "speaker_separator": self.speaker_separator,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SerializationScheme":
        return cls(**data)


def _flexible(marker: str) -> re.Pattern:
    # whitespace around a marker is not significant; generation may rejoin tokens with single spaces
    core = marker.strip()
    if not core:
        return re.compile(re.escape(marker))
    return re.compile(r"\s*" + re.escape(core) + r"\s*")


def render_turn(turn: Turn, scheme: SerializationScheme, position: int | None = None) -> str:
    head = ""
    if scheme.include_orientation:
        if turn.orientation is None:
            where = f"turn {position}" if position is not None else "a turn"
            raise SerializationError(f"{where} has no orientation label")
        head = scheme.label_open + ", ".join(turn.orientation.keywords()) + scheme.label_close + " "
    return head + turn.speaker + scheme.speaker_separator + turn.text


def serialize(turns: Sequence[Turn], scheme: SerializationScheme) -> str:
    """Render turns for a backend. No end marker is appended."""
    if not turns:
        raise SerializationError("cannot serialize an empty turn list")
    return scheme.turn_delimiter.join(
        render_turn(t, scheme, position=i) for i, t in enumerate(turns, start=1)
    )


def _parse_label(body: str) -> OrientationLabel | None:
    words = [normalize_keyword(w) for w in body.split(",")]
    if len(words) != len(AXES):
        return None
    try:
        return OrientationLabel(*(AXIS_ENUMS[a](w) for a, w in zip(AXES, words)))
    except ValueError:
        return None


def parse_turns(text: str, scheme: SerializationScheme) -> tuple[list[Turn], list[str]]:
    """Inverse of ``serialize``; returns (turns, warnings) and never raises on content."""
    issues: list[str] = []
    end = scheme.end_of_conversation_marker
    cut = text.find(end)
    if cut >= 0:
        text = text[:cut]
    sep = _flexible(scheme.speaker_separator)
    turns: list[Turn] = []
    for segment in _flexible(scheme.turn_delimiter).split(text):
        segment = segment.strip()
        if not segment:
            continue
        orientation = None
        literal_tag = ""
        if segment.startswith(scheme.label_open):
            close = segment.find(scheme.label_close, len(scheme.label_open))
            if close >= 0:
                tag = segment[: close + len(scheme.label_close)]
                orientation = _parse_label(segment[len(scheme.label_open):close])
                if orientation is None:
                    issues.append(f"invalid orientation tag {tag!r} kept as text")
                    literal_tag = tag
                segment = segment[close + len(scheme.label_close):].strip()
        m = sep.search(segment)
        if m and m.start() > 0:
            speaker, body = segment[: m.start()].strip(), segment[m.end():].strip()
        else:
            issues.append(f"no speaker in segment {segment[:40]!r}")
            speaker, body = UNKNOWN_SPEAKER, segment
        if literal_tag:
            body = f"{literal_tag} {body}".strip()
        turns.append(Turn(speaker=speaker, text=body, orientation=orientation))
    return turns, issues


def deserialize_continuation(text: str, scheme: SerializationScheme) -> list[Turn]:
    turns, issues = parse_turns(text, scheme)
    for issue in issues:
        log.debug("deserialize: %s", issue)
    return turns


class KPolicy(str, enum.Enum):
    GOLD_PREFIX = "gold_prefix"
    FIXED_K = "fixed_k"


@dataclass(frozen=True)
class TrainingPair:
    context_text: str
    target_text: str
    conversation_id: str
    k_used: int


def conversation_text(turns: Sequence[Turn], scheme: SerializationScheme, complete: bool) -> str:
    text = serialize(turns, scheme)
    return text + "\n" + scheme.end_of_conversation_marker if complete else text


def build_training_pairs(
    conversations: Iterable[Conversation],
    scheme: SerializationScheme,
    k_policy: KPolicy | str = KPolicy.GOLD_PREFIX,
    k: int | None = None,
    report: dict | None = None,
) -> list[TrainingPair]:
    """One (context, target) pair per eligible conversation.

    ``fixed_k`` keeps only conversations longer than ``k`` turns.
    """
    k_policy = KPolicy(k_policy)
    if k_policy is KPolicy.FIXED_K and (k is None or k < 1):
        raise ConfigError("fixed_k policy needs k >= 1")
    pairs = []
    excluded = 0
    for c in conversations:
        k_used = c.prefix_len if k_policy is KPolicy.GOLD_PREFIX else k
        if c.n <= k_used:
            excluded += 1
            continue
        pairs.append(TrainingPair(
            context_text=serialize(c.turns[:k_used], scheme),
            target_text=conversation_text(c.turns[k_used:], scheme, complete=True),
            conversation_id=c.id,
            k_used=k_used,
        ))
    if report is not None:
        report["pairs"] = len(pairs)
        report["excluded"] = excluded
    return pairs


def generator_corpus(pairs: Iterable[TrainingPair], scheme: SerializationScheme) -> list[list[str]]:
    """Token sequences a toy generator is trained on: context, delimiter, target."""
    return [tokenize(p.context_text + scheme.turn_delimiter + p.target_text) for p in pairs]


def _placeholder() -> tuple[Turn, ...]:
    return (Turn(speaker=UNKNOWN_SPEAKER, text=""),)


def _generate_fitting(
    g: GeneratorBackend,
    prefix: Sequence[Turn],
    scheme: SerializationScheme,
    params: GenerationParams,
    seed: int,
    next_speaker: str | None,
) -> str:
    turns = list(prefix)
    while True:
        prompt = serialize(turns, scheme)
        if next_speaker is not None:
            prompt += scheme.turn_delimiter + next_speaker + scheme.speaker_separator.rstrip()
        try:
            text = g.generate(prompt, params, seed)
        except ContextOverflowError as exc:
            if len(turns) == 1:
                raise GenerationError(f"prompt does not fit even with one turn: {exc}") from exc
            turns = turns[1:]
            continue
        if next_speaker is not None:
            text = scheme.turn_delimiter + next_speaker + scheme.speaker_separator + text.lstrip()
        return text


def sample_continuations(
    g: GeneratorBackend,
    c: Conversation,
    k: int,
    L: int,
    params: GenerationParams,
    scheme: SerializationScheme,
    seed: int,
    max_turns_cap: int = 16,
    next_speaker: str | None = None,
    jobs: int = 1,
) -> ContinuationSet:
    """Sample ``L`` continuations of the first ``k`` turns; sample i uses seed + i."""
    if not 1 <= k < c.n:
        raise ValueError(f"k must satisfy 1 <= k < n={c.n}, got {k}")
    if L < 1:
        raise ValueError("L must be >= 1")
    prefix = c.turns[:k]

    def one(i: int) -> tuple[tuple[Turn, ...], bool]:
        for attempt_seed in (seed + i, seed + L + i):
            try:
                text = _generate_fitting(g, prefix, scheme, params, attempt_seed, next_speaker)
            except GenerationError as exc:
                log.warning("continuation %d of %s failed: %s", i, c.id, exc)
                return _placeholder(), True
            turns = deserialize_continuation(text, scheme)
            if turns:
                return tuple(turns[:max_turns_cap]), False
            log.info("continuation %d of %s came back empty (seed %d)", i, c.id, attempt_seed)
        log.warning("continuation %d of %s empty after resampling; using placeholder", i, c.id)
        return _placeholder(), True

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(one, range(L)))
    else:
        outcomes = [one(i) for i in range(L)]

    return ContinuationSet(
        conversation_id=c.id,
        prefix_len=k,
        continuations=tuple(turns for turns, _ in outcomes),
        params=params,
        seed=seed,
        placeholders=tuple(i for i, (_, failed) in enumerate(outcomes) if failed),
    )
