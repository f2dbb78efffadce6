"""Experiment protocols: prefix-only motivation check, vote-count and prefix-length ablations."""

from __future__ import annotations

import math
import random
import statistics
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

from derailcast.backends.base import ClassifierBackend, GeneratorBackend
from derailcast.backends.params import GenerationParams
from derailcast.errors import ForecastError
from derailcast.eval.metrics import MetricsReport, compute_metrics, metrics_from_results
from derailcast.forecast import conversation_seed, forecast, majority_vote
from derailcast.generator import SerializationScheme, sample_continuations, serialize
from derailcast.model import Conversation, TieRule


def exact_majority_accuracy(p: float, L: int) -> float:
    """Accuracy of a majority over ``L`` independent votes that are each right with prob ``p``.

    Ties (even ``L``) resolve to a fixed class, which is right half the time
    when the two classes are equally likely.
    """
    if L < 1:
        raise ValueError("L must be >= 1")
    total = 0.0
    for j in range(L + 1):
        mass = math.comb(L, j) * p**j * (1 - p) ** (L - j)
        if 2 * j > L:
            total += mass
        elif 2 * j == L:
            total += 0.5 * mass
    return total


def simulate_vote_accuracy(
    p: float,
    L_values: Sequence[int],
    trials: int = 10_000,
    seed: int = 0,
    tie_rule: TieRule | str = TieRule.PREDICT_DERAILMENT,
) -> dict[int, float]:
    """Monte Carlo majority accuracy under i.i.d. votes with per-vote accuracy ``p``.

    Each trial draws a balanced gold label and ``max(L_values)`` votes; smaller
    L reuse the leading votes, as the real ablation does.
    """
    rng = random.Random(seed)
    top = max(L_values)
    hits = {L: 0 for L in L_values}
    for _ in range(trials):
        gold = rng.random() < 0.5
        votes = [gold if rng.random() < p else not gold for _ in range(top)]
        for L in L_values:
            if majority_vote(votes[:L], tie_rule) == gold:
                hits[L] += 1
    return {L: hits[L] / trials for L in L_values}


def _text_classifier_metrics(
    make_backend: Callable[[], ClassifierBackend],
    train_texts: list[str],
    train_labels: list[bool],
    test_texts: list[str],
    test_labels: list[bool],
    threshold: float,
) -> MetricsReport:
    backend = make_backend()
    backend.fit(train_texts, train_labels)
    preds = [backend.predict_proba(t) >= threshold for t in test_texts]
    return compute_metrics(preds, test_labels)


@dataclass(frozen=True)
class MotivationResult:
    all_turns: MetricsReport
    benign_prefix: MetricsReport

    @property
    def gap(self) -> float:
        return self.all_turns.accuracy - self.benign_prefix.accuracy

    def to_dict(self) -> dict:
        return {
            "all_turns": self.all_turns.to_dict(),
            "benign_prefix": self.benign_prefix.to_dict(),
            "gap": self.gap,
        }


def run_motivation_experiment(
    train: Iterable[Conversation],
    test: Iterable[Conversation],
    make_backend: Callable[[], ClassifierBackend],
    scheme: SerializationScheme | None = None,
    threshold: float = 0.5,
) -> MotivationResult:
    """Train one classifier on whole transcripts and one on benign prefixes only."""
    scheme = scheme or SerializationScheme()
    train, test = list(train), list(test)
    y_train = [c.derailed for c in train]
    y_test = [c.derailed for c in test]
    full = _text_classifier_metrics(
        make_backend,
        [serialize(c.turns, scheme) for c in train], y_train,
        [serialize(c.turns, scheme) for c in test], y_test,
        threshold,
    )
    prefix = _text_classifier_metrics(
        make_backend,
        [serialize(c.turns[:c.prefix_len], scheme) for c in train], y_train,
        [serialize(c.turns[:c.prefix_len], scheme) for c in test], y_test,
        threshold,
    )
    return MotivationResult(full, prefix)


def ablate_vote_count(
    conversations: Iterable[Conversation],
    g: GeneratorBackend,
    f: ClassifierBackend,
    L_values: Sequence[int],
    params: GenerationParams | None = None,
    scheme: SerializationScheme | None = None,
    seed: int = 0,
    k: int | None = None,
    threshold: float = 0.5,
    tie_rule: TieRule | str = TieRule.PREDICT_DERAILMENT,
    max_turns_cap: int = 16,
) -> dict[int, MetricsReport]:
    """Metrics per L. Futures are sampled once at max(L); smaller L use the leading ones,
    which is exactly what a fresh run with that L would sample."""
    if not L_values or min(L_values) < 1:
        raise ValueError("L_values must be non-empty and positive")
    params = params or GenerationParams()
    scheme = scheme or SerializationScheme()
    top = max(L_values)
    rows: dict[int, list] = {L: [] for L in L_values}
    for c in conversations:
        s = conversation_seed(seed, c.id)
        k_used = c.prefix_len if k is None else k
        cs = sample_continuations(g, c, k_used, top, params, scheme, s, max_turns_cap=max_turns_cap)
        for L in L_values:
            rows[L].append(forecast(
                c, k_used, g, f, L=L, params=params, scheme=scheme, threshold=threshold,
                tie_rule=tie_rule, seed=s, continuations=cs.head(L),
            ))
    return {L: metrics_from_results(rows[L]) for L in sorted(L_values)}


@dataclass
class PrefixAblationRow:
    k: int
    metrics: MetricsReport | None
    n_used: int
    n_excluded: int
    median_generated_turns: float | None
    failures: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "metrics": self.metrics.to_dict() if self.metrics else None,
            "n_used": self.n_used,
            "n_excluded": self.n_excluded,
            "median_generated_turns": self.median_generated_turns,
            "failures": list(self.failures),
        }


def ablate_prefix_length(
    conversations: Iterable[Conversation],
    g: GeneratorBackend,
    f: ClassifierBackend,
    k_values: Sequence[int],
    L: int = 5,
    params: GenerationParams | None = None,
    scheme: SerializationScheme | None = None,
    seed: int = 0,
    threshold: float = 0.5,
    tie_rule: TieRule | str = TieRule.PREDICT_DERAILMENT,
    max_turns_cap: int = 16,
) -> dict[int, PrefixAblationRow]:
    """Forecast from the first k turns for each k. Generation is open-ended; the
    number of generated turns is whatever the generator produces before stopping.
    Conversations with n <= k are excluded from that row and counted."""
    params = params or GenerationParams()
    scheme = scheme or SerializationScheme()
    convs = list(conversations)
    table = {}
    for k in sorted(k_values):
        eligible = [c for c in convs if c.n > k]
        results, lengths, failures = [], [], []
        for c in eligible:
            s = conversation_seed(seed, c.id)
            try:
                cs = sample_continuations(g, c, k, L, params, scheme, s, max_turns_cap=max_turns_cap)
                results.append(forecast(
                    c, k, g, f, L=L, params=params, scheme=scheme, threshold=threshold,
                    tie_rule=tie_rule, seed=s, continuations=cs,
                ))
            except ForecastError as exc:
                failures.append(str(exc))
                continue
            lengths.extend(len(t) for i, t in enumerate(cs.continuations) if i not in cs.placeholders)
        table[k] = PrefixAblationRow(
            k=k,
            metrics=metrics_from_results(results) if results else None,
            n_used=len(results),
            n_excluded=len(convs) - len(eligible),
            median_generated_turns=float(statistics.median(lengths)) if lengths else None,
            failures=failures,
        )
    return table
