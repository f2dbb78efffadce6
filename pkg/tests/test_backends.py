from __future__ import annotations

import json
import math
import subprocess
import sys
import textwrap

import numpy as np
import pytest
from scipy.stats import chisquare

from derailcast.backends import (
    BagOfWordsClassifier,
    BigramGenerator,
    BowConfig,
    GenerationParams,
    KeywordClassifier,
    ScriptedGenerator,
    binary_cross_entropy,
    load_classifier,
    load_generator,
    sampling_distribution,
)
from derailcast.backends.bigram import BOS, nucleus_mask, penalize
from derailcast.backends.remote import JsonLinesChannel, RemoteClassifier, RemoteGenerator, serve
from derailcast.errors import (
    BackendError,
    ConfigError,
    ContextOverflowError,
    NotTrainedError,
    TrainingError,
    TransportError,
)
from derailcast.presets import list_presets, load_preset

PLAIN = GenerationParams(temperature=1.0, top_p=1.0, repetition_penalty=1.0)


# params ----------------------------------------------------------------------


@pytest.mark.parametrize("kwargs", [
    {"temperature": 0}, {"top_p": 0}, {"top_p": 1.5}, {"repetition_penalty": 0.9},
    {"max_new_tokens": 0}, {"stop_marker": ""},
])
def test_params_validation(kwargs):
    with pytest.raises(ConfigError):
        GenerationParams(**kwargs)


def test_params_round_trip():
    p = GenerationParams(temperature=0.7, top_p=0.8)
    assert GenerationParams.from_dict(p.to_dict()) == p


# sampling transforms ---------------------------------------------------------


def test_plain_params_leave_distribution_unchanged():
    raw = np.array([0.5, 0.3, 0.2])
    assert np.allclose(sampling_distribution(raw, PLAIN), raw)


def test_nucleus_keeps_smallest_prefix_reaching_mass():
    probs = np.array([0.1, 0.5, 0.25, 0.15])
    assert nucleus_mask(probs, 0.7).tolist() == [False, True, True, False]
    assert nucleus_mask(probs, 0.75).tolist() == [False, True, True, False]
    assert nucleus_mask(probs, 0.76).tolist() == [False, True, True, True]


def test_nucleus_ties_break_by_index():
    assert nucleus_mask(np.array([0.25] * 4), 0.5).tolist() == [True, True, False, False]


def test_top_p_renormalizes_kept_tokens():
    out = sampling_distribution(np.array([0.6, 0.3, 0.1]), GenerationParams(top_p=0.85, repetition_penalty=1.0))
    assert np.allclose(out, [2 / 3, 1 / 3, 0.0])


def test_temperature_sharpens_and_flattens():
    raw = np.array([0.7, 0.2, 0.1])
    cold = sampling_distribution(raw, GenerationParams(temperature=0.5, top_p=1.0, repetition_penalty=1.0))
    hot = sampling_distribution(raw, GenerationParams(temperature=2.0, top_p=1.0, repetition_penalty=1.0))
    expected_cold = raw**2 / (raw**2).sum()
    assert np.allclose(cold, expected_cold)
    assert hot[0] < raw[0] < cold[0]


def test_penalize_pushes_scores_down():
    assert penalize(np.array([-1.0, 2.0]), 2.0).tolist() == [-2.0, 1.0]


def test_repetition_penalty_lowers_emitted_token():
    raw = np.array([0.5, 0.3, 0.2])
    params = GenerationParams(top_p=1.0, repetition_penalty=1.5)
    base = sampling_distribution(raw, params)
    after = sampling_distribution(raw, params, emitted=[0])
    assert after[0] < base[0]
    assert np.isclose(after.sum(), 1.0)
    # scores are log-probabilities, so the penalty multiplies log(0.5)
    expected = np.array([0.5**1.5, 0.3, 0.2])
    assert np.allclose(after, expected / expected.sum())


# bigram ------------------------------------------------------------------------


def test_add_one_formula():
    g = BigramGenerator.train([["a", "b", "stop"]], stop_marker="stop")
    assert g.vocab_size == 3
    assert g.probability("a", "b") == pytest.approx((1 + 1) / (1 + 3))


def test_stop_marker_is_appended_and_bos_never_in_vocab():
    g = BigramGenerator.train([["a", "b"]], stop_marker="END")
    assert "END" in g.vocab and BOS not in g.vocab
    assert g.probability("b", "END") > g.probability("b", "a")


def test_uniform_successors_are_equal():
    corpus = [["x", s, "stop"] for s in "pqrs"]
    g = BigramGenerator.train(corpus, stop_marker="stop")
    ps = [g.probability("x", s) for s in "pqrs"]
    assert max(ps) == pytest.approx(min(ps))


def test_empty_corpus_is_training_error():
    with pytest.raises(TrainingError):
        BigramGenerator.train([[]])


def test_low_temperature_is_greedy():
    g = BigramGenerator.train([["a", "b", "stop"]] * 5, stop_marker="stop")
    cold = GenerationParams(temperature=1e-3, top_p=1.0, repetition_penalty=1.0, stop_marker="stop")
    for seed in range(20):
        assert g.generate("a", cold, seed) == "b stop"


def test_generate_is_deterministic_per_seed():
    g = BigramGenerator.train([["a", "b", "c", "a", "c", "b"]] * 3)
    p = GenerationParams(max_new_tokens=30)
    assert g.generate("a", p, 5) == g.generate("a", p, 5)
    assert len({g.generate("a", p, s) for s in range(20)}) > 1


def test_max_new_tokens_one():
    g = BigramGenerator.train([["a", "b", "c"]])
    out = g.generate("a", GenerationParams(max_new_tokens=1), 0)
    assert len(out.split()) == 1


def test_context_overflow():
    g = BigramGenerator.train([["a", "b"]], context_limit=3)
    with pytest.raises(ContextOverflowError):
        g.generate("a b a b", GenerationParams(), 0)


def test_empirical_frequencies_match_model():
    counts = {"x": {"x": 5, "y": 2, "z": 0}}
    g = BigramGenerator(["x", "y", "z"], counts, stop_marker="z")
    expected = g.next_distribution("x")
    assert np.allclose(expected, [6 / 10, 3 / 10, 1 / 10])
    draws = 10_000
    seen = np.zeros(3)
    params = GenerationParams(temperature=1.0, top_p=1.0, repetition_penalty=1.0, max_new_tokens=1, stop_marker="z")
    for seed in range(draws):
        seen[g.index[g.generate("x", params, seed)]] += 1
    assert np.all(np.abs(seen / draws - expected) <= 0.02)
    assert chisquare(seen, expected * draws).pvalue > 1e-3


def test_bigram_round_trip():
    g = BigramGenerator.train([["a", "b", "c", "a"]], context_limit=50)
    again = load_generator(json.loads(json.dumps(g.to_dict())))
    p = GenerationParams(max_new_tokens=10)
    assert again.generate("a", p, 3) == g.generate("a", p, 3)
    assert again.context_limit == 50


# classifiers -------------------------------------------------------------------


def test_bce_values():
    assert binary_cross_entropy([0.5], [1]) == pytest.approx(math.log(2))
    assert binary_cross_entropy([1.0], [1]) == pytest.approx(0.0, abs=1e-11)
    assert binary_cross_entropy([0.0], [1]) == pytest.approx(-math.log(1e-12))
    assert binary_cross_entropy([0.5, 0.5], [1, 0], reduction="sum") == pytest.approx(2 * math.log(2))


def separable(n=200, seed=0):
    rng = np.random.default_rng(seed)
    filler = ["talk", "page", "edit", "source", "revert", "cite"]
    texts, labels = [], []
    for i in range(n):
        words = list(rng.choice(filler, size=6))
        derailed = i % 2 == 0
        if derailed:
            words.insert(int(rng.integers(0, 6)), "idiot")
        texts.append(" ".join(words))
        labels.append(derailed)
    return texts, labels


def test_bow_separable_training():
    texts, labels = separable()
    clf = BagOfWordsClassifier()
    report = clf.fit(texts, labels)
    assert report.train_accuracy >= 0.99
    assert report.loss_curve and report.loss_curve[-1] <= report.loss_curve[0]
    right = sum((clf.predict_proba(t) >= 0.5) == y for t, y in zip(texts, labels))
    assert right / len(texts) >= 0.99


def test_bow_duplicated_data_same_decision_function():
    texts, labels = separable(80, seed=1)
    probe, _ = separable(30, seed=2)
    a, b = BagOfWordsClassifier(), BagOfWordsClassifier()
    a.fit(texts, labels)
    b.fit(texts * 2, labels * 2)
    pa = np.array([a.predict_proba(t) for t in probe])
    pb = np.array([b.predict_proba(t) for t in probe])
    assert np.allclose(pa, pb, atol=1e-6)
    assert ((pa >= 0.5) == (pb >= 0.5)).all()


def test_bow_single_class_rejected():
    with pytest.raises(TrainingError):
        BagOfWordsClassifier().fit(["a", "b"], [True, True])


def test_bow_untrained():
    with pytest.raises(NotTrainedError):
        BagOfWordsClassifier().predict_proba("x")


def test_bow_capacity():
    texts, labels = separable(20)
    clf = BagOfWordsClassifier(BowConfig(max_tokens=3))
    clf.fit(texts, labels)
    with pytest.raises(ContextOverflowError):
        clf.predict_proba("a b c d")


def test_bow_round_trip():
    texts, labels = separable(40)
    clf = BagOfWordsClassifier()
    clf.fit(texts, labels)
    again = load_classifier(json.loads(json.dumps(clf.to_dict())))
    assert again.predict_proba(texts[0]) == clf.predict_proba(texts[0])


def test_keyword_stub():
    clf = KeywordClassifier(["idiot"])
    assert clf.predict_proba("you idiot") == 1.0
    assert clf.predict_proba("thanks a lot") == 0.0


def test_scripted_generator_records_calls():
    g = ScriptedGenerator(lambda prompt, params, seed: f"s{seed}")
    assert g.generate("p", PLAIN, 4) == "s4"
    assert g.calls == [("p", 4)]


# remote adapter --------------------------------------------------------------


def test_serve_loop_in_memory():
    import io

    g = BigramGenerator.train([["a", "b", "c"]])
    requests = "\n".join([
        json.dumps({"op": "generate", "prompt": "a", "params": PLAIN.to_dict(), "seed": 1}),
        json.dumps({"op": "predict", "text": "x"}),
        json.dumps({"op": "nope"}),
    ]) + "\n"
    out = io.StringIO()
    serve(io.StringIO(requests), out, generator=g, classifier=KeywordClassifier(["x"]))
    replies = [json.loads(line) for line in out.getvalue().splitlines()]
    assert replies[0] == {"text": g.generate("a", PLAIN, 1)}
    assert replies[1] == {"proba": 1.0}
    assert "error" in replies[2]


SERVER = textwrap.dedent("""
    import json, sys
    from derailcast.backends import BigramGenerator, KeywordClassifier
    from derailcast.backends.remote import serve
    g = BigramGenerator.from_dict(json.load(open(sys.argv[1])))
    serve(sys.stdin, sys.stdout, generator=g, classifier=KeywordClassifier(["idiot"]))
""")


def test_remote_subprocess_matches_local(tmp_path):
    g = BigramGenerator.train([["a", "b", "idiot", "c"], ["b", "a", "c"]])
    model = tmp_path / "g.json"
    model.write_text(json.dumps(g.to_dict()))
    script = tmp_path / "server.py"
    script.write_text(SERVER)
    channel = JsonLinesChannel.spawn([sys.executable, str(script), str(model)])
    try:
        remote = RemoteGenerator(channel)
        params = GenerationParams(max_new_tokens=12)
        for seed in range(5):
            assert remote.generate("a", params, seed) == g.generate("a", params, seed)
        clf = RemoteClassifier(channel)
        assert clf.predict_proba("you idiot") == 1.0
        with pytest.raises(BackendError):
            channel.request({"op": "unknown"})
    finally:
        channel.close()


def test_spawn_failure_is_transport_error():
    with pytest.raises(TransportError):
        JsonLinesChannel.spawn(["/nonexistent/backend-binary"])


def test_dead_server_is_transport_error():
    channel = JsonLinesChannel.spawn([sys.executable, "-c", "pass"])
    try:
        with pytest.raises(TransportError):
            RemoteGenerator(channel).generate("a", PLAIN, 0)
    finally:
        try:
            channel.close()
        except (OSError, subprocess.SubprocessError):
            pass


def test_presets_load():
    names = list_presets()
    assert {"mistral_sampling", "mistral_generator_finetune", "bart_classifier", "mistral_classifier"} <= set(names)
    sampling = load_preset("mistral_sampling")["generation"]
    assert sampling["temperature"] == 1.0 and sampling["top_p"] == 0.9
    with pytest.raises(KeyError):
        load_preset("nope")
