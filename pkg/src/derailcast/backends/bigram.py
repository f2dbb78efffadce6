"""Word-level bigram language model used as a desk-scale generator."""

from __future__ import annotations

from collections import Counter, defaultdict
from typing import Iterable, Sequence

import numpy as np

from derailcast.backends.base import Capabilities, GeneratorBackend, tokenize
from derailcast.backends.params import DEFAULT_STOP_MARKER, GenerationParams
from derailcast.errors import ContextOverflowError, TrainingError

BOS = "<BOS>"


def nucleus_mask(probs: np.ndarray, top_p: float) -> np.ndarray:
    """Boolean mask of the smallest top-probability set whose mass reaches top_p.

    Ties are broken by token index so the kept set is deterministic.
    """
    order = np.argsort(-probs, kind="stable")
    cumulative = np.cumsum(probs[order])
    keep = int(np.searchsorted(cumulative, top_p, side="left")) + 1
    keep = min(keep, probs.size)
    mask = np.zeros(probs.size, dtype=bool)
    mask[order[:keep]] = True
    return mask


def penalize(scores: np.ndarray, penalty: float) -> np.ndarray:
    """Push scores away from selection: negative scores grow, positive shrink."""
    return np.where(scores < 0, scores * penalty, scores / penalty)


def sampling_distribution(
    raw_probs: np.ndarray,
    params: GenerationParams,
    emitted: Iterable[int] = (),
) -> np.ndarray:
    """Next-token distribution after temperature, top-p, then repetition penalty."""
    # low temperatures can underflow tokens to exactly zero
    with np.errstate(divide="ignore"):
        scores = np.log(raw_probs) / params.temperature
        shifted = np.exp(scores - scores.max())
        # normalized log-probabilities: every score is <= 0 before the penalty
        scores = np.log(shifted) - np.log(shifted.sum())
    probs = np.exp(scores)

    mask = nucleus_mask(probs, params.top_p)

    if params.repetition_penalty != 1.0:
        seen = np.zeros(probs.size, dtype=bool)
        seen[list(set(emitted))] = True
        hit = seen & mask
        if hit.any():
            scores = scores.copy()
            scores[hit] = penalize(scores[hit], params.repetition_penalty)

    kept = np.where(mask, scores, -np.inf)
    kept = kept - kept[mask].max()
    out = np.exp(kept)
    return out / out.sum()


class BigramGenerator(GeneratorBackend):
    """Add-one smoothed bigram model over whitespace tokens.

    Smoothing spans the observed vocabulary plus the stop marker; the start
    symbol is a context only and is never emitted.
    """

    capabilities = Capabilities(trainable=True, deterministic_given_seed=True)

    def __init__(
        self,
        vocab: Sequence[str],
        counts: dict[str, dict[str, int]],
        stop_marker: str = DEFAULT_STOP_MARKER,
        context_limit: int | None = None,
    ):
        self.vocab = list(vocab)
        self.index = {tok: i for i, tok in enumerate(self.vocab)}
        self.counts = {prev: dict(nexts) for prev, nexts in counts.items()}
        self.stop_marker = stop_marker
        self.context_limit = context_limit
        self._rows: dict[str, np.ndarray] = {}

    @classmethod
    def train(
        cls,
        corpus: Iterable[Sequence[str]],
        stop_marker: str = DEFAULT_STOP_MARKER,
        context_limit: int | None = None,
    ) -> "BigramGenerator":
        counts: dict[str, Counter] = defaultdict(Counter)
        vocab = {stop_marker}
        n_seqs = 0
        for seq in corpus:
            tokens = list(seq)
            if not tokens:
                continue
            if tokens[-1] != stop_marker:
                tokens.append(stop_marker)
            n_seqs += 1
            vocab.update(tokens)
            prev = BOS
            for tok in tokens:
                counts[prev][tok] += 1
                prev = tok
        if n_seqs == 0:
            raise TrainingError("cannot train a bigram model on an empty corpus")
        return cls(sorted(vocab), counts, stop_marker=stop_marker, context_limit=context_limit)

    @classmethod
    def train_on_texts(cls, texts: Iterable[str], **kwargs) -> "BigramGenerator":
        return cls.train((tokenize(t) for t in texts), **kwargs)

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)

    def next_distribution(self, prev: str) -> np.ndarray:
        """Raw smoothed P(next | prev) over ``self.vocab``."""
        row = self._rows.get(prev)
        if row is None:
            row = np.ones(self.vocab_size)
            for tok, c in self.counts.get(prev, {}).items():
                row[self.index[tok]] += c
            row /= row.sum()
            self._rows[prev] = row
        return row

    def probability(self, prev: str, nxt: str) -> float:
        return float(self.next_distribution(prev)[self.index[nxt]])

    def generate(self, prompt: str, params: GenerationParams, seed: int) -> str:
        tokens = tokenize(prompt)
        if self.context_limit is not None and len(tokens) > self.context_limit:
            raise ContextOverflowError(len(tokens), self.context_limit)
        rng = np.random.default_rng(seed)
        prev = tokens[-1] if tokens else BOS
        emitted: list[int] = []
        for _ in range(params.max_new_tokens):
            probs = sampling_distribution(self.next_distribution(prev), params, emitted)
            idx = int(np.searchsorted(np.cumsum(probs), rng.random(), side="right"))
            idx = min(idx, self.vocab_size - 1)
            emitted.append(idx)
            prev = self.vocab[idx]
            if prev == params.stop_marker:
                break
        return " ".join(self.vocab[i] for i in emitted)

    def to_dict(self) -> dict:
        return {
            "kind": "bigram",
            "stop_marker": self.stop_marker,
            "context_limit": self.context_limit,
            "vocab": self.vocab,
            "counts": {p: dict(sorted(n.items())) for p, n in sorted(self.counts.items())},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "BigramGenerator":
        return cls(
            data["vocab"],
            data["counts"],
            stop_marker=data["stop_marker"],
            context_limit=data.get("context_limit"),
        )
