"""Forecast conversation derailment by sampling plausible futures and voting."""

from derailcast.model import (
    ContinuationSet,
    Conversation,
    ForecastResult,
    OrientationLabel,
    Outcome,
    Source,
    TieRule,
    Turn,
)

__version__ = "0.1.0"

__all__ = [
    "ContinuationSet",
    "Conversation",
    "ForecastResult",
    "OrientationLabel",
    "Outcome",
    "Source",
    "TieRule",
    "Turn",
    "__version__",
]
