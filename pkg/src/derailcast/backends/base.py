"""Backend interfaces.

The pipeline only ever talks to these three shapes, so a real LLM server can be
swapped in for the toy implementations without touching the pipeline code.
"""

from __future__ import annotations

import abc
from dataclasses import dataclass, field
from typing import Sequence

from derailcast.backends.params import GenerationParams


def tokenize(text: str) -> list[str]:
    """Whitespace word-level tokens; the toy backends all agree on this."""
    return text.split()


@dataclass(frozen=True)
class Capabilities:
    trainable: bool
    deterministic_given_seed: bool


class GeneratorBackend(abc.ABC):
    capabilities = Capabilities(trainable=False, deterministic_given_seed=True)
    #: maximum prompt length in tokens; None means unbounded
    context_limit: int | None = None

    @abc.abstractmethod
    def generate(self, prompt: str, params: GenerationParams, seed: int) -> str:
        """Continue ``prompt``; raise ContextOverflowError if it does not fit."""


@dataclass
class TrainingReport:
    n_examples: int
    final_loss: float
    train_accuracy: float
    loss_curve: list[float] = field(default_factory=list)
    converged: bool = True

    def to_dict(self) -> dict:
        return {
            "n_examples": self.n_examples,
            "final_loss": self.final_loss,
            "train_accuracy": self.train_accuracy,
            "loss_curve": list(self.loss_curve),
            "converged": self.converged,
        }


class ClassifierBackend(abc.ABC):
    #: maximum input length in tokens; None means unbounded
    max_tokens: int | None = None

    @property
    @abc.abstractmethod
    def is_trained(self) -> bool: ...

    @abc.abstractmethod
    def fit(self, texts: Sequence[str], labels: Sequence[bool]) -> TrainingReport:
        """Train in place. Not safe to call concurrently with predict_proba."""

    @abc.abstractmethod
    def predict_proba(self, text: str) -> float:
        """Probability that ``text`` is a derailed conversation."""


class AnnotationBackend(abc.ABC):
    @abc.abstractmethod
    def complete(self, prompt: str) -> str:
        """Return the raw model response; raise TransportError on connection trouble."""

    def throttle(self) -> None:
        """Called before every request; backends with rate limits block here."""
