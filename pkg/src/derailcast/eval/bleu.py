"""Sentence BLEU and leave-one-out self-diversity of a continuation set.

BLEU here: clipped n-gram precisions up to ``max_n``, uniform weights,
brevity penalty against the closest reference length (shorter wins ties),
and additive smoothing of ``epsilon`` on zero-count precisions for n >= 2.
A hypothesis with no unigram match scores 0.
"""

from __future__ import annotations

import math
from collections import Counter
from typing import Sequence

from derailcast.model import ContinuationSet, Turn

EPSILON = 0.1


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def sentence_bleu(
    hypothesis: Sequence[str],
    references: Sequence[Sequence[str]],
    max_n: int = 4,
    epsilon: float = EPSILON,
) -> float:
    if not references:
        raise ValueError("need at least one reference")
    if not hypothesis:
        return 0.0
    log_p = 0.0
    for n in range(1, max_n + 1):
        hyp_counts = _ngrams(hypothesis, n)
        max_ref: Counter = Counter()
        for ref in references:
            for gram, c in _ngrams(ref, n).items():
                if c > max_ref[gram]:
                    max_ref[gram] = c
        matched = sum(min(c, max_ref[g]) for g, c in hyp_counts.items())
        total = max(1, sum(hyp_counts.values()))
        if matched == 0:
            if n == 1:
                return 0.0
            log_p += math.log(epsilon / total)
        else:
            log_p += math.log(matched / total)
    c = len(hypothesis)
    r = min((len(ref) for ref in references), key=lambda rl: (abs(rl - c), rl))
    bp = 1.0 if c > r else math.exp(1 - r / c)
    return bp * math.exp(log_p / max_n)


def smoothing_floor(length: int, max_n: int = 4, epsilon: float = EPSILON) -> float:
    """BLEU of a length-``length`` hypothesis whose every n-gram precision is smoothed."""
    return math.exp(sum(math.log(epsilon / max(1, length - n + 1)) for n in range(1, max_n + 1)) / max_n)


def continuation_tokens(turns: Sequence[Turn]) -> list[str]:
    return " ".join(t.text for t in turns).split()


def bleu_self_diversity(cs: ContinuationSet | Sequence[Sequence[Turn]], max_ngram: int = 4) -> float:
    """Mean BLEU of each continuation against the others; lower is more diverse."""
    conts = cs.continuations if isinstance(cs, ContinuationSet) else cs
    if len(conts) < 2:
        raise ValueError("self-diversity needs at least two continuations")
    toks = [continuation_tokens(c) for c in conts]
    scores = [
        sentence_bleu(toks[i], toks[:i] + toks[i + 1:], max_n=max_ngram) for i in range(len(toks))
    ]
    return sum(scores) / len(scores)
