"""Inference: sample L futures, score each, majority-vote the verdict."""

from __future__ import annotations

import json
import logging
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from derailcast.backends.base import ClassifierBackend, GeneratorBackend
from derailcast.backends.params import GenerationParams
from derailcast.classifier import score_turns
from derailcast.errors import DerailcastError, ForecastError
from derailcast.generator import SerializationScheme, derive_seed, sample_continuations
from derailcast.model import ContinuationSet, Conversation, ForecastResult, TieRule

log = logging.getLogger(__name__)


def majority_vote(votes: Sequence[bool], tie_rule: TieRule | str = TieRule.PREDICT_DERAILMENT) -> bool:
    if not votes:
        raise ValueError("majority_vote needs at least one vote")
    yes = sum(1 for v in votes if v)
    no = len(votes) - yes
    if yes != no:
        return yes > no
    return TieRule(tie_rule) is TieRule.PREDICT_DERAILMENT


def aggregate(
    probabilities: Sequence[float],
    threshold: float = 0.5,
    tie_rule: TieRule | str = TieRule.PREDICT_DERAILMENT,
    method: str = "vote",
) -> tuple[tuple[bool, ...], bool]:
    """Binarize each probability and combine. ``method="mean"`` thresholds the
    average probability instead of voting; it exists for comparison only."""
    votes = tuple(p >= threshold for p in probabilities)
    if method == "vote":
        return votes, majority_vote(votes, tie_rule)
    if method == "mean":
        return votes, sum(probabilities) / len(probabilities) >= threshold
    raise ValueError(f"unknown aggregation method {method!r}")


def forecast(
    c: Conversation,
    k: int | None,
    g: GeneratorBackend,
    f: ClassifierBackend,
    L: int = 5,
    params: GenerationParams | None = None,
    scheme: SerializationScheme | None = None,
    threshold: float = 0.5,
    tie_rule: TieRule | str = TieRule.PREDICT_DERAILMENT,
    seed: int = 0,
    method: str = "vote",
    max_turns_cap: int = 16,
    continuations: ContinuationSet | None = None,
) -> ForecastResult:
    """Forecast one conversation from its first ``k`` turns (default: benign prefix).

    ``seed`` is used as given; batch runners derive a per-conversation seed.
    Pass ``continuations`` to score pre-sampled futures instead of sampling.
    """
    params = params or GenerationParams()
    scheme = scheme or SerializationScheme()
    k = c.prefix_len if k is None else k
    try:
        if continuations is None:
            continuations = sample_continuations(
                g, c, k, L, params, scheme, seed, max_turns_cap=max_turns_cap
            )
        prefix = list(c.turns[:k])
        probabilities = []
        notes = []
        for i, cont in enumerate(continuations.continuations):
            proba, dropped = score_turns(f, prefix + list(cont), scheme)
            if dropped:
                notes.append(f"continuation {i}: dropped {dropped} oldest turn(s)")
            probabilities.append(proba)
    except DerailcastError as exc:
        raise ForecastError(c.id, exc) from exc
    if continuations.placeholders:
        notes.append(f"placeholder continuations: {list(continuations.placeholders)}")
    votes, final = aggregate(probabilities, threshold, tie_rule, method)
    return ForecastResult(
        conversation_id=c.id,
        probabilities=tuple(probabilities),
        votes=votes,
        final=final,
        threshold=threshold,
        tie_rule=TieRule(tie_rule),
        gold=c.derailed,
        seed=seed,
        notes=tuple(notes),
    )


@dataclass
class BatchReport:
    n: int = 0
    skipped: list[dict] = field(default_factory=list)
    vote_histogram: dict[int, int] = field(default_factory=dict)
    derailment_prediction_rate: float | None = None

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "skipped": len(self.skipped),
            "skipped_detail": list(self.skipped),
            "vote_histogram": {str(k): v for k, v in sorted(self.vote_histogram.items())},
            "derailment_prediction_rate": self.derailment_prediction_rate,
        }


def conversation_seed(seed: int, conversation_id: str) -> int:
    return derive_seed(seed, conversation_id)


def forecast_batch(
    conversations: Iterable[Conversation],
    g: GeneratorBackend,
    f: ClassifierBackend,
    k: int | None = None,
    L: int = 5,
    params: GenerationParams | None = None,
    scheme: SerializationScheme | None = None,
    threshold: float = 0.5,
    tie_rule: TieRule | str = TieRule.PREDICT_DERAILMENT,
    seed: int = 0,
    method: str = "vote",
    max_turns_cap: int = 16,
    jobs: int = 1,
) -> tuple[list[ForecastResult], BatchReport]:
    """Forecast every conversation; failures are skipped and listed in the report."""
    convs = list(conversations)

    def one(c: Conversation):
        try:
            return forecast(
                c, k, g, f, L=L, params=params, scheme=scheme, threshold=threshold,
                tie_rule=tie_rule, seed=conversation_seed(seed, c.id), method=method,
                max_turns_cap=max_turns_cap,
            )
        except (ForecastError, ValueError) as exc:
            log.warning("skipping %s: %s", c.id, exc)
            return exc

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(one, convs))
    else:
        outcomes = [one(c) for c in convs]

    report = BatchReport()
    results = []
    for c, out in zip(convs, outcomes):
        if isinstance(out, Exception):
            report.skipped.append({"id": c.id, "error": str(out)})
        else:
            results.append(out)
    report.n = len(results)
    report.vote_histogram = dict(Counter(sum(r.votes) for r in results))
    if results:
        report.derailment_prediction_rate = sum(r.final for r in results) / len(results)
    return results, report


def write_results(results: Iterable[ForecastResult], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in results:
            fh.write(json.dumps(r.to_dict(), ensure_ascii=False) + "\n")


def read_results(path: str | Path) -> list[ForecastResult]:
    with open(path, encoding="utf-8") as fh:
        return [ForecastResult.from_dict(json.loads(line)) for line in fh if line.strip()]
