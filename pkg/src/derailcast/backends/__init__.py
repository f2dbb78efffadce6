from derailcast.backends.base import (
    AnnotationBackend,
    Capabilities,
    ClassifierBackend,
    GeneratorBackend,
    TrainingReport,
    tokenize,
)
from derailcast.backends.bigram import BigramGenerator, sampling_distribution
from derailcast.backends.bow import BagOfWordsClassifier, BowConfig, binary_cross_entropy
from derailcast.backends.params import DEFAULT_STOP_MARKER, GenerationParams
from derailcast.backends.stubs import KeywordClassifier, ScriptedGenerator, SequenceAnnotator, StubAnnotator


def load_generator(data: dict):
    kind = data.get("kind")
    if kind == "bigram":
        return BigramGenerator.from_dict(data)
    raise ValueError(f"unknown generator kind {kind!r}")


def load_classifier(data: dict):
    kind = data.get("kind")
    if kind == "bow":
        return BagOfWordsClassifier.from_dict(data)
    if kind == "keyword":
        return KeywordClassifier(data["triggers"], max_tokens=data.get("max_tokens"))
    raise ValueError(f"unknown classifier kind {kind!r}")


__all__ = [
    "AnnotationBackend",
    "BagOfWordsClassifier",
    "BigramGenerator",
    "BowConfig",
    "Capabilities",
    "ClassifierBackend",
    "DEFAULT_STOP_MARKER",
    "GenerationParams",
    "GeneratorBackend",
    "KeywordClassifier",
    "ScriptedGenerator",
    "SequenceAnnotator",
    "StubAnnotator",
    "TrainingReport",
    "binary_cross_entropy",
    "load_classifier",
    "load_generator",
    "sampling_distribution",
    "tokenize",
]
