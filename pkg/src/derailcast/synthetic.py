"""Planted-signal synthetic corpus and the desk-scale end-to-end benchmark.

Every derailing conversation has a benign twin with the same bag of prefix
words. The only difference in the prefix is the order of a short motif that
closes the last prefix turn: rising (b1 .. bm) before a hostile reply,
falling (bm .. b1) before a friendly one. A bag-of-words classifier that sees
only the prefix therefore cannot beat chance, while the trigger words in the
future turns make the full transcript trivially separable.

The turn delimiter has no trailing whitespace, so it fuses with the next
speaker into one token ("<TURN>troll:"). A bigram model then learns that the
end of a rising motif leads to a hostile speaker and the end of a falling one
to a friendly speaker, and a walk started from the prefix's last token reaches
the matching side with probability m / (m + 1).
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from derailcast.backends.bigram import BigramGenerator
from derailcast.backends.bow import BagOfWordsClassifier, BowConfig
from derailcast.backends.params import GenerationParams
from derailcast.classifier import AugmentationReport, augment_training_set, train_derailment_classifier
from derailcast.eval.experiments import MotivationResult, run_motivation_experiment
from derailcast.eval.metrics import MetricsReport, metrics_from_results
from derailcast.forecast import BatchReport, forecast_batch
from derailcast.generator import SerializationScheme, build_training_pairs, generator_corpus
from derailcast.ingest import Dataset, Split
from derailcast.model import Conversation, Outcome, Source, Turn

PLANTED_SCHEME = SerializationScheme(turn_delimiter="\n<TURN>")

# lower temperature keeps add-one smoothing mass out of the nucleus
PLANTED_PARAMS = GenerationParams(temperature=0.7, top_p=0.9, repetition_penalty=1.05, max_new_tokens=64)

SPEAKERS = ("alice", "bob", "carol", "dave")
FILLER = (
    "the", "article", "source", "edit", "section", "page", "citation", "policy",
    "revert", "talk", "draft", "wording", "lead", "claim", "reference", "link",
    "template", "image", "date", "title", "summary", "history", "archive", "note",
)
TRIGGER = ("idiot", "moron", "stupid", "liar", "pathetic", "clown", "ignorant", "troll")
FRIENDLY = ("thanks", "agreed", "great", "sure", "appreciate", "helpful", "cheers", "fair")
HOSTILE_SPEAKERS = ("troll", "grump")
FRIENDLY_SPEAKERS = ("friend", "helper")


def motif(m: int) -> list[str]:
    return [f"b{i}" for i in range(1, m + 1)]


def _filler(rng: random.Random, lo: int = 4, hi: int = 9) -> list[str]:
    return [rng.choice(FILLER) for _ in range(rng.randint(lo, hi))]


def _future(rng: random.Random, derailed: bool, n_turns: int) -> list[Turn]:
    words = TRIGGER if derailed else FRIENDLY
    speakers = HOSTILE_SPEAKERS if derailed else FRIENDLY_SPEAKERS
    return [
        Turn(
            speakers[i % 2],
            " ".join(rng.choice(words) for _ in range(rng.randint(3, 7))),
            is_derailment=derailed,
        )
        for i in range(n_turns)
    ]


def make_planted_pair(
    rng: random.Random, pair_id: str, motif_len: int = 6, prefix_turns: int = 3, future_turns: int = 1
) -> tuple[Conversation, Conversation]:
    """A derailing conversation and its benign twin sharing one prefix word bag."""
    bodies = [_filler(rng) for _ in range(prefix_turns)]
    speakers = [SPEAKERS[(i + rng.randint(0, 1)) % len(SPEAKERS)] for i in range(prefix_turns)]
    rising = motif(motif_len)
    out = []
    for derailed in (True, False):
        tail = rising if derailed else rising[::-1]
        prefix = [
            Turn(speakers[i], " ".join(bodies[i] + (tail if i == prefix_turns - 1 else [])), is_derailment=False)
            for i in range(prefix_turns)
        ]
        out.append(Conversation(
            id=f"{pair_id}-{'d' if derailed else 'b'}",
            turns=tuple(prefix + _future(rng, derailed, future_turns)),
            prefix_len=prefix_turns,
            outcome=Outcome.from_bool(derailed),
            source=Source.SYNTHETIC,
        ))
    return out[0], out[1]


def make_planted_corpus(
    n_pairs: int,
    seed: int = 0,
    motif_len: int = 6,
    prefix_turns: int = 3,
    future_turns: int = 1,
) -> list[Conversation]:
    """``2 * n_pairs`` conversations, twins adjacent."""
    rng = random.Random(seed)
    convs: list[Conversation] = []
    for i in range(n_pairs):
        convs.extend(make_planted_pair(rng, f"planted-{i:04d}", motif_len, prefix_turns, future_turns))
    return convs


def planted_splits(
    convs: list[Conversation], ratios: tuple[float, float, float] = (0.8, 0.1, 0.1), seed: int = 0
) -> dict[Split, Dataset]:
    """Split by twin pair so both members always land in the same split."""
    pairs: dict[str, list[Conversation]] = {}
    for c in convs:
        pairs.setdefault(c.id.rsplit("-", 1)[0], []).append(c)
    keys = sorted(pairs)
    random.Random(seed).shuffle(keys)
    n_val = int(ratios[1] * len(keys) + 1e-9)
    n_test = int(ratios[2] * len(keys) + 1e-9)
    chunks = {
        Split.VALIDATION: keys[:n_val],
        Split.TEST: keys[n_val:n_val + n_test],
        Split.TRAIN: keys[n_val + n_test:],
    }
    return {
        split: Dataset("planted", split, tuple(c for key in sorted(chunk) for c in pairs[key]))
        for split, chunk in chunks.items()
    }


@dataclass
class BenchmarkResult:
    motivation: MotivationResult
    pipeline: MetricsReport
    batch: BatchReport
    augmentation: AugmentationReport
    extras: dict = field(default_factory=dict)

    @property
    def prefix_baseline(self) -> MetricsReport:
        return self.motivation.benign_prefix

    def to_dict(self) -> dict:
        return {
            "motivation": self.motivation.to_dict(),
            "pipeline": self.pipeline.to_dict(),
            "batch": self.batch.to_dict(),
            "augmentation": self.augmentation.to_dict(),
            **self.extras,
        }


def train_pipeline(
    train: list[Conversation],
    scheme: SerializationScheme = PLANTED_SCHEME,
    params: GenerationParams = PLANTED_PARAMS,
    l: int = 2,
    seed: int = 0,
    bow: BowConfig | None = None,
) -> tuple[BigramGenerator, BagOfWordsClassifier, AugmentationReport]:
    """Bigram generator on gold-prefix pairs, then a classifier on augmented data."""
    pairs = build_training_pairs(train, scheme)
    g = BigramGenerator.train(generator_corpus(pairs, scheme), stop_marker=params.stop_marker)
    report = AugmentationReport()
    examples = augment_training_set(train, g, scheme, l, params, seed, report=report)
    f, _ = train_derailment_classifier(BagOfWordsClassifier(bow or BowConfig()), examples)
    return g, f, report


def run_planted_benchmark(
    train: list[Conversation],
    test: list[Conversation],
    scheme: SerializationScheme = PLANTED_SCHEME,
    params: GenerationParams = PLANTED_PARAMS,
    L: int = 5,
    l: int = 2,
    seed: int = 0,
    bow: BowConfig | None = None,
) -> BenchmarkResult:
    motivation = run_motivation_experiment(
        train, test, lambda: BagOfWordsClassifier(bow or BowConfig()), scheme
    )
    g, f, aug = train_pipeline(train, scheme, params, l, seed, bow)
    results, batch = forecast_batch(test, g, f, L=L, params=params, scheme=scheme, seed=seed)
    return BenchmarkResult(motivation, metrics_from_results(results), batch, aug)
