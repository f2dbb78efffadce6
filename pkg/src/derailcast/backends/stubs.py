"""Deterministic stand-ins for tests, demos and CLI dry runs."""

from __future__ import annotations

import re
from typing import Callable, Iterable, Sequence

from derailcast.backends.base import (
    AnnotationBackend,
    Capabilities,
    ClassifierBackend,
    GeneratorBackend,
    TrainingReport,
    tokenize,
)
from derailcast.backends.params import GenerationParams
from derailcast.errors import ContextOverflowError


class KeywordClassifier(ClassifierBackend):
    """1.0 if any trigger token occurs in the text, else 0.0."""

    def __init__(self, triggers: Iterable[str], max_tokens: int | None = None):
        self.triggers = frozenset(t.lower() for t in triggers)
        self.max_tokens = max_tokens

    @property
    def is_trained(self) -> bool:
        return True

    def fit(self, texts: Sequence[str], labels: Sequence[bool]) -> TrainingReport:
        hits = [self.predict_proba(t) >= 0.5 for t in texts]
        acc = sum(h == bool(y) for h, y in zip(hits, labels)) / max(len(texts), 1)
        return TrainingReport(n_examples=len(texts), final_loss=float("nan"), train_accuracy=acc)

    def predict_proba(self, text: str) -> float:
        tokens = tokenize(text)
        if self.max_tokens is not None and len(tokens) > self.max_tokens:
            raise ContextOverflowError(len(tokens), self.max_tokens)
        return 1.0 if any(t.lower() in self.triggers for t in tokens) else 0.0

    def to_dict(self) -> dict:
        return {"kind": "keyword", "triggers": sorted(self.triggers), "max_tokens": self.max_tokens}


class ScriptedGenerator(GeneratorBackend):
    """Delegates to ``fn(prompt, params, seed)``; handy for exact-output tests."""

    capabilities = Capabilities(trainable=False, deterministic_given_seed=True)

    def __init__(
        self,
        fn: Callable[[str, GenerationParams, int], str],
        context_limit: int | None = None,
    ):
        self.fn = fn
        self.context_limit = context_limit
        self.calls: list[tuple[str, int]] = []

    def generate(self, prompt: str, params: GenerationParams, seed: int) -> str:
        n_tokens = len(tokenize(prompt))
        if self.context_limit is not None and n_tokens > self.context_limit:
            raise ContextOverflowError(n_tokens, self.context_limit)
        self.calls.append((prompt, seed))
        return self.fn(prompt, params, seed)


_TARGET_TURN = re.compile(r"^Turn (\d+): ", re.MULTILINE)


class StubAnnotator(AnnotationBackend):
    """Answers every request with one fixed tag line per turn of the target conversation.

    The target conversation is whatever follows the last "Conversation N:" header.
    """

    def __init__(self, tag: str = "Neutral, Neutral, Neutral, Neutral"):
        self.tag = tag
        self.requests = 0

    def complete(self, prompt: str) -> str:
        self.requests += 1
        tail = prompt.rsplit("Conversation ", 1)[-1]
        turns = sorted({int(m) for m in _TARGET_TURN.findall(tail)})
        return "\n".join(f"Turn {i}: {self.tag}" for i in turns)


class SequenceAnnotator(AnnotationBackend):
    """Plays back canned responses in order; exceptions in the list are raised."""

    def __init__(self, responses: Sequence[str | Exception]):
        self.responses = list(responses)
        self.requests = 0

    def complete(self, prompt: str) -> str:
        item = self.responses[min(self.requests, len(self.responses) - 1)]
        self.requests += 1
        if isinstance(item, Exception):
            raise item
        return item
