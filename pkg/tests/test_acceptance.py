"""End-to-end acceptance checks, one test per criterion.

Each test registers itself with the ``criterion`` fixture; the terminal
summary then prints one PASS/FAIL line per criterion.
"""

from __future__ import annotations

import json
import random
import time

import pytest
from oracles import HAND_UNITS, as_triples, coincidence_oracle, confusion_oracle, nltk_self_diversity, z_oracle

from derailcast import cli
from derailcast.backends import BigramGenerator
from derailcast.classifier import Provenance, augment_training_set
from derailcast.eval import (
    bleu_self_diversity,
    compute_metrics,
    exact_majority_accuracy,
    simulate_vote_accuracy,
    smoothing_floor,
    two_proportion_z_test,
)
from derailcast.errors import AnnotationParseError
from derailcast.generator import build_training_pairs, generator_corpus
from derailcast.ingest import (
    Split,
    SplitSpec,
    load_bnc,
    load_cga_wiki,
    read_jsonl,
    split_dataset,
    write_jsonl,
)
from derailcast.model import AXES, AXIS_ENUMS, OrientationLabel, Turn, validate_conversation
from derailcast.orientation import krippendorff_alpha, parse_annotation_response, render_labels
from derailcast.synthetic import (
    PLANTED_PARAMS,
    PLANTED_SCHEME,
    make_planted_corpus,
    planted_splits,
    run_planted_benchmark,
)


def test_voting_math(criterion):
    criterion(1, "majority-vote accuracy matches the exact binomial value")
    start = time.perf_counter()
    acc = simulate_vote_accuracy(0.6, [1, 3, 5], trials=10_000, seed=0)
    elapsed = time.perf_counter() - start
    assert exact_majority_accuracy(0.6, 5) == pytest.approx(0.68256, abs=1e-12)
    assert acc[5] == pytest.approx(0.68256, abs=0.02)
    # monotone within one simulation standard error (about 0.005 at 10k trials)
    assert acc[3] >= acc[1] - 0.01 and acc[5] >= acc[3] - 0.01
    print(f"simulated L=1 {acc[1]:.4f} L=3 {acc[3]:.4f} L=5 {acc[5]:.4f} in {elapsed:.2f}s")
    assert elapsed < 10


def test_generate_then_predict_benefit(criterion):
    criterion(2, "planted-signal corpus: prefix baseline fails, pipeline recovers")
    start = time.perf_counter()
    splits = planted_splits(make_planted_corpus(500, seed=0), seed=0)
    result = run_planted_benchmark(list(splits[Split.TRAIN]), list(splits[Split.TEST]), seed=0)
    elapsed = time.perf_counter() - start
    full = result.motivation.all_turns.accuracy
    prefix = result.prefix_baseline.accuracy
    pipeline = result.pipeline.accuracy
    print(f"all-turns {full:.3f} prefix {prefix:.3f} pipeline {pipeline:.3f} "
          f"(n={result.pipeline.n}) in {elapsed:.1f}s")
    assert result.batch.skipped == []
    assert full >= 0.95 and prefix <= 0.60 and full - prefix >= 0.20
    assert pipeline >= 0.90 and pipeline - prefix >= 0.25
    assert elapsed < 300


def test_augmentation_contract(criterion, fixtures_dir):
    criterion(3, "augmentation yields 1 + l examples per conversation with gold labels")
    convs = list(read_jsonl(fixtures_dir / "planted_50.jsonl"))
    assert len(convs) == 50
    g = BigramGenerator.train(
        generator_corpus(build_training_pairs(convs, PLANTED_SCHEME), PLANTED_SCHEME),
        stop_marker=PLANTED_PARAMS.stop_marker,
    )
    examples = augment_training_set(convs, g, PLANTED_SCHEME, 2, PLANTED_PARAMS, seed=0)
    assert len(examples) == 150
    gold = {c.id: c.derailed for c in convs}
    for c in convs:
        mine = [e for e in examples if e.conversation_id == c.id]
        assert sorted(e.provenance.value for e in mine) == ["real_future", "synthetic_future", "synthetic_future"]
        assert all(e.label == gold[c.id] for e in mine)
    assert sum(e.provenance is Provenance.SYNTHETIC_FUTURE for e in examples) == 100


def test_metrics_oracle(criterion):
    criterion(4, "metrics agree with a brute-force confusion oracle")
    m = compute_metrics([1, 1, 1, 1, 0, 0, 0, 0], [1, 1, 1, 0, 1, 0, 0, 0])
    assert (m.tp, m.fp, m.fn, m.tn) == (3, 1, 1, 3)
    assert (m.accuracy, m.precision, m.recall, m.f1) == (0.75, 0.75, 0.75, 0.75)
    rng = random.Random(2024)
    for _ in range(1000):
        n = rng.randint(1, 60)
        preds = [rng.random() < 0.5 for _ in range(n)]
        golds = [rng.random() < 0.5 for _ in range(n)]
        got = compute_metrics(preds, golds)
        assert ((got.tp, got.fp, got.fn, got.tn), got.accuracy, got.precision, got.recall, got.f1) == \
            confusion_oracle(preds, golds)


def test_bleu_self_diversity(criterion):
    criterion(5, "self-diversity BLEU bounds and leave-one-out oracle agreement")
    same = (Turn("a", "we keep saying the very same thing"),)
    assert bleu_self_diversity([same] * 5) == pytest.approx(1.0, abs=1e-12)
    disjoint = [(Turn("a", " ".join(f"w{i}_{j}" for j in range(8))),) for i in range(5)]
    assert bleu_self_diversity(disjoint) < smoothing_floor(8)
    rng = random.Random(7)
    vocab = [f"v{i}" for i in range(10)]
    for _ in range(20):
        sets = [[rng.choice(vocab) for _ in range(rng.randint(2, 12))] for _ in range(5)]
        conts = [(Turn("s", " ".join(tokens)),) for tokens in sets]
        assert bleu_self_diversity(conts) == pytest.approx(nltk_self_diversity(sets), abs=1e-9)


def test_significance(criterion):
    criterion(6, "pooled z-test reference values")
    t = two_proportion_z_test(0.60, 100, 0.50, 100)
    assert t.p_value == pytest.approx(z_oracle(0.60, 100, 0.50, 100), abs=1e-3)
    assert t.p_value == pytest.approx(0.0776, abs=1e-3)
    assert t.p_value < 0.1 and t.marker == "*"
    assert two_proportion_z_test(0.55, 100, 0.55, 100, sided="two").p_value == 1.0


def test_annotation_round_trip(criterion):
    criterion(7, "orientation tags render and parse losslessly")
    rng = random.Random(13)
    members = [list(AXIS_ENUMS[a]) for a in AXES]
    for _ in range(1000):
        seq = [OrientationLabel(*(rng.choice(m) for m in members)) for _ in range(rng.randint(1, 12))]
        assert parse_annotation_response(render_labels(seq), len(seq)) == seq
    [label] = parse_annotation_response("Turn 1: Open-minded, Supportive, Energetic, Neutral", 1)
    assert label.keywords() == ("open_minded", "supportive", "energetic", "neutral")
    with pytest.raises(AnnotationParseError):
        parse_annotation_response("Turn 1: Sleepy, Supportive, Energetic, Neutral", 1)


def test_krippendorff_alpha(criterion):
    criterion(8, "Krippendorff's alpha fixtures")
    perfect = {i: {"a": i % 4, "b": i % 4, "c": i % 4} for i in range(20)}
    assert krippendorff_alpha(as_triples(perfect)) == 1.0
    rng = random.Random(1)
    noise = {i: {"a": rng.randrange(4), "b": rng.randrange(4)} for i in range(1000)}
    assert abs(krippendorff_alpha(as_triples(noise))) <= 0.05
    assert krippendorff_alpha(as_triples(HAND_UNITS)) == pytest.approx(coincidence_oracle(HAND_UNITS), abs=1e-9)


def test_determinism(criterion, tmp_path, capsys):
    criterion(9, "manifest replay reproduces forecast and evaluation bytes")
    data, models = tmp_path / "data", tmp_path / "models"
    forecast_out, table_out = tmp_path / "forecast.jsonl", tmp_path / "table.md"
    steps = [
        ["synth", "--output", data, "--pairs", 60, "--seed", 1],
        ["train-generator", "--train", data / "train.jsonl", "--output", models / "gen.json", "--scheme", "planted"],
        ["train-classifier", "--train", data / "train.jsonl", "--generator", models / "gen.json",
         "--output", models / "clf.json"],
        ["forecast", "--input", data / "test.jsonl", "--generator", models / "gen.json",
         "--classifier", models / "clf.json", "--output", forecast_out, "--seed", 5],
        ["evaluate", "--results", forecast_out, "--output", table_out, "--json", tmp_path / "metrics.json"],
    ]
    for step in steps:
        assert cli.main([str(a) for a in step]) == 0
    first = {p: p.read_bytes() for p in (forecast_out, table_out, tmp_path / "metrics.json")}
    for p in first:
        p.unlink()
    capsys.readouterr()
    for manifest in (forecast_out, table_out):
        assert cli.main(["replay", "--manifest", f"{manifest}.manifest.json"]) == 0
        assert json.loads(capsys.readouterr().out)["reproduced"] is True
    assert {p: p.read_bytes() for p in first} == first


def test_ingestion_invariants(criterion, fixtures_dir, tmp_path):
    criterion(10, "fixtures satisfy invariants, seeded 8:1:1 split, lossless JSONL")
    cga = load_cga_wiki(fixtures_dir / "cga_wiki")
    bnc = load_bnc(fixtures_dir / "bnc.jsonl")
    for d in [*cga.values(), bnc]:
        assert all(validate_conversation(c) == [] for c in d)
    parts = split_dataset(bnc, SplitSpec((0.8, 0.1, 0.1), seed=7))
    assert [len(parts[s]) for s in (Split.TRAIN, Split.VALIDATION, Split.TEST)] == [16, 2, 2]
    assert parts == split_dataset(bnc, SplitSpec((0.8, 0.1, 0.1), seed=7))
    for d in [*cga.values(), *parts.values()]:
        path = tmp_path / f"{d.name}-{d.split.value}.jsonl"
        write_jsonl(d, path)
        again = read_jsonl(path, d.name, d.split)
        assert again.conversations == d.conversations
        written = path.read_bytes()
        write_jsonl(again, path)
        assert path.read_bytes() == written
