"""Classifier training set augmentation, training, and scoring."""

from __future__ import annotations

import enum
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from derailcast.backends.base import ClassifierBackend, GeneratorBackend, TrainingReport, tokenize
from derailcast.backends.params import GenerationParams
from derailcast.errors import ContextOverflowError, NotTrainedError, SerializationError
from derailcast.generator import SerializationScheme, derive_seed, sample_continuations, serialize
from derailcast.model import Conversation, Turn

log = logging.getLogger(__name__)


class Provenance(str, enum.Enum):
    REAL_FUTURE = "real_future"
    SYNTHETIC_FUTURE = "synthetic_future"


@dataclass(frozen=True)
class AugmentedExample:
    conversation_id: str
    text: str
    label: bool
    provenance: Provenance
    generation_index: int | None = None

    def to_dict(self) -> dict:
        return {
            "conversation_id": self.conversation_id,
            "provenance": self.provenance.value,
            "generation_index": self.generation_index,
            "label": self.label,
            "text": self.text,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AugmentedExample":
        return cls(
            conversation_id=data["conversation_id"],
            text=data["text"],
            label=bool(data["label"]),
            provenance=Provenance(data["provenance"]),
            generation_index=data.get("generation_index"),
        )


@dataclass
class AugmentationReport:
    conversations: int = 0
    real: int = 0
    synthetic: int = 0
    dropped: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "conversations": self.conversations,
            "real": self.real,
            "synthetic": self.synthetic,
            "dropped": len(self.dropped),
            "dropped_detail": list(self.dropped),
        }


def augment_training_set(
    conversations: Iterable[Conversation],
    g: GeneratorBackend | None,
    scheme: SerializationScheme,
    l: int,
    params: GenerationParams,
    seed: int,
    k: int | None = None,
    max_turns_cap: int = 16,
    report: AugmentationReport | None = None,
) -> list[AugmentedExample]:
    """Each conversation yields its real transcript plus ``l`` sampled futures.

    Every example carries the source conversation's gold outcome, whatever the
    sampled future looks like. Failed samples are dropped and reported.
    """
    if l < 0:
        raise ValueError("l must be >= 0")
    if l > 0 and g is None:
        raise ValueError("a generator is required when l > 0")
    report = report if report is not None else AugmentationReport()
    out: list[AugmentedExample] = []
    for c in conversations:
        report.conversations += 1
        out.append(AugmentedExample(c.id, serialize(c.turns, scheme), c.derailed, Provenance.REAL_FUTURE))
        report.real += 1
        if l == 0:
            continue
        k_used = c.prefix_len if k is None else k
        if not 1 <= k_used < c.n:
            for i in range(l):
                report.dropped.append({"id": c.id, "index": i, "reason": f"k={k_used} not < n={c.n}"})
            continue
        cs = sample_continuations(
            g, c, k_used, l, params, scheme, derive_seed(seed, c.id), max_turns_cap=max_turns_cap
        )
        prefix = list(c.turns[:k_used])
        for i, cont in enumerate(cs.continuations):
            if i in cs.placeholders:
                report.dropped.append({"id": c.id, "index": i, "reason": "generation failed"})
                continue
            try:
                text = serialize(prefix + list(cont), scheme)
            except SerializationError as exc:
                log.warning("dropping synthetic example %d of %s: %s", i, c.id, exc)
                report.dropped.append({"id": c.id, "index": i, "reason": str(exc)})
                continue
            out.append(AugmentedExample(c.id, text, c.derailed, Provenance.SYNTHETIC_FUTURE, i))
            report.synthetic += 1
    if report.dropped:
        log.warning("augmentation dropped %d synthetic example(s)", len(report.dropped))
    return out


def train_derailment_classifier(
    backend: ClassifierBackend, examples: Sequence[AugmentedExample]
) -> tuple[ClassifierBackend, TrainingReport]:
    report = backend.fit([e.text for e in examples], [e.label for e in examples])
    log.info(
        "trained on %d examples: loss %.4f, accuracy %.3f",
        report.n_examples, report.final_loss, report.train_accuracy,
    )
    return backend, report


def score_turns(
    backend: ClassifierBackend, turns: Sequence[Turn], scheme: SerializationScheme
) -> tuple[float, int]:
    """Probability of derailment plus the number of leading turns dropped to fit."""
    if not backend.is_trained:
        raise NotTrainedError("classifier has not been trained")
    turns = list(turns)
    dropped = 0
    while True:
        text = serialize(turns, scheme)
        too_long = backend.max_tokens is not None and len(tokenize(text)) > backend.max_tokens
        if not too_long:
            try:
                return backend.predict_proba(text), dropped
            except ContextOverflowError:
                pass
        if len(turns) == 1:
            raise ContextOverflowError(len(tokenize(text)), backend.max_tokens or 0)
        turns = turns[1:]
        dropped += 1


def score(
    backend: ClassifierBackend,
    c: Conversation,
    continuation: Sequence[Turn],
    scheme: SerializationScheme,
    k: int | None = None,
) -> float:
    """Score the first ``k`` turns of ``c`` (default: its benign prefix) plus a continuation."""
    k = c.prefix_len if k is None else k
    proba, dropped = score_turns(backend, list(c.turns[:k]) + list(continuation), scheme)
    if dropped:
        log.info("scoring %s: dropped %d oldest turn(s) to fit the classifier", c.id, dropped)
    return proba


def write_examples(examples: Iterable[AugmentedExample], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for e in examples:
            fh.write(json.dumps(e.to_dict(), ensure_ascii=False) + "\n")


def read_examples(path: str | Path) -> list[AugmentedExample]:
    with open(path, encoding="utf-8") as fh:
        return [AugmentedExample.from_dict(json.loads(line)) for line in fh if line.strip()]
