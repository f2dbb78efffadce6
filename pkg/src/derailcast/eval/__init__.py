from derailcast.eval.bleu import bleu_self_diversity, sentence_bleu, smoothing_floor
from derailcast.eval.experiments import (
    MotivationResult,
    PrefixAblationRow,
    ablate_prefix_length,
    ablate_vote_count,
    exact_majority_accuracy,
    run_motivation_experiment,
    simulate_vote_accuracy,
)
from derailcast.eval.metrics import MetricsReport, compute_metrics, metrics_from_results
from derailcast.eval.report import metrics_table
from derailcast.eval.significance import ZTest, two_proportion_z_test

__all__ = [
    "MetricsReport",
    "MotivationResult",
    "PrefixAblationRow",
    "ZTest",
    "ablate_prefix_length",
    "ablate_vote_count",
    "bleu_self_diversity",
    "compute_metrics",
    "exact_majority_accuracy",
    "metrics_from_results",
    "metrics_table",
    "run_motivation_experiment",
    "sentence_bleu",
    "simulate_vote_accuracy",
    "smoothing_floor",
    "two_proportion_z_test",
]
