"""Markdown and JSON rendering of metric tables."""

from __future__ import annotations

import json
from typing import Mapping

from derailcast.eval.metrics import MetricsReport
from derailcast.eval.significance import two_proportion_z_test
from derailcast.errors import UndefinedStatisticError

BLEU_VARIANT = "sentence BLEU, 1-4 grams, uniform weights, epsilon=0.1 smoothing, closest-ref brevity penalty"


def fmt_pct(value: float | None) -> str:
    return "n/a" if value is None else f"{100 * value:.1f}"


def significance_marker(row: MetricsReport, baseline: MetricsReport) -> str:
    try:
        return two_proportion_z_test(row.accuracy, row.n, baseline.accuracy, baseline.n).marker
    except UndefinedStatisticError:
        return ""


def metrics_table(rows: Mapping[str, MetricsReport], baseline: str | None = None, label: str = "Method") -> str:
    """Methods x {Acc, Prec, Rec, F1}. Accuracy gets a ``*`` when it beats the
    baseline row under a one-sided z-test at p < 0.1."""
    lines = [f"| {label} | Acc | Prec | Rec | F1 |", "|---|---|---|---|---|"]
    base = rows[baseline] if baseline is not None else None
    for name, m in rows.items():
        marker = ""
        if base is not None and name != baseline:
            marker = significance_marker(m, base)
        lines.append(
            f"| {name} | {fmt_pct(m.accuracy)}{marker} | {fmt_pct(m.precision)} "
            f"| {fmt_pct(m.recall)} | {fmt_pct(m.f1)} |"
        )
    return "\n".join(lines) + "\n"


def dumps(obj) -> str:
    """Canonical JSON: sorted keys, fixed separators, trailing newline."""
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n"
