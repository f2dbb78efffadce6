"""Binary classification metrics with derailment as the positive class."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence


@dataclass(frozen=True)
class MetricsReport:
    tp: int
    fp: int
    fn: int
    tn: int
    accuracy: float
    # None marks a zero denominator; it is never silently reported as 0
    precision: float | None
    recall: float | None
    f1: float | None

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    @classmethod
    def from_counts(cls, tp: int, fp: int, fn: int, tn: int) -> "MetricsReport":
        n = tp + fp + fn + tn
        if n == 0:
            raise ValueError("cannot compute metrics over zero examples")
        precision = tp / (tp + fp) if tp + fp else None
        recall = tp / (tp + fn) if tp + fn else None
        if precision is None or recall is None:
            f1 = None
        else:
            # equals 2PR/(P+R) whenever P+R > 0, and 0 when tp == 0
            f1 = 2 * tp / (2 * tp + fp + fn)
        return cls(tp, fp, fn, tn, (tp + tn) / n, precision, recall, f1)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "tn": self.tn,
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
        }


def compute_metrics(preds: Sequence[bool], golds: Sequence[bool]) -> MetricsReport:
    if len(preds) != len(golds):
        raise ValueError(f"length mismatch: {len(preds)} predictions vs {len(golds)} golds")
    if not preds:
        raise ValueError("need at least one prediction")
    tp = fp = fn = tn = 0
    for p, g in zip(preds, golds):
        p, g = bool(p), bool(g)
        if p and g:
            tp += 1
        elif p:
            fp += 1
        elif g:
            fn += 1
        else:
            tn += 1
    return MetricsReport.from_counts(tp, fp, fn, tn)


def metrics_from_results(results) -> MetricsReport:
    """Metrics for ForecastResults that carry a gold label."""
    results = [r for r in results if r.gold is not None]
    return compute_metrics([r.final for r in results], [r.gold for r in results])
