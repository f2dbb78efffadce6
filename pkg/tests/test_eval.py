from __future__ import annotations

import itertools
import math
import random
import warnings

import pytest
from hypothesis import given
from hypothesis import strategies as st
from nltk.translate.bleu_score import SmoothingFunction
from nltk.translate.bleu_score import sentence_bleu as nltk_bleu
from oracles import confusion_oracle, nltk_self_diversity, z_oracle

from derailcast.backends import KeywordClassifier, ScriptedGenerator
from derailcast.errors import UndefinedStatisticError
from derailcast.eval import (
    MetricsReport,
    ablate_prefix_length,
    ablate_vote_count,
    bleu_self_diversity,
    compute_metrics,
    exact_majority_accuracy,
    metrics_table,
    sentence_bleu,
    simulate_vote_accuracy,
    smoothing_floor,
    two_proportion_z_test,
)
from derailcast.eval.report import dumps
from derailcast.model import Conversation, Outcome, TieRule, Turn

# metrics ---------------------------------------------------------------------------


def test_hand_case():
    m = compute_metrics([1, 1, 1, 1, 0, 0, 0, 0], [1, 1, 1, 0, 1, 0, 0, 0])
    assert (m.tp, m.fp, m.fn, m.tn) == (3, 1, 1, 3)
    assert (m.accuracy, m.precision, m.recall, m.f1) == (0.75, 0.75, 0.75, 0.75)


def test_random_vectors_match_oracle():
    rng = random.Random(0)
    for _ in range(1000):
        n = rng.randint(1, 40)
        preds = [rng.random() < 0.5 for _ in range(n)]
        golds = [rng.random() < 0.5 for _ in range(n)]
        m = compute_metrics(preds, golds)
        counts, acc, prec, rec, f1 = confusion_oracle(preds, golds)
        assert ((m.tp, m.fp, m.fn, m.tn), m.accuracy, m.precision, m.recall, m.f1) == (counts, acc, prec, rec, f1)


def test_undefined_metrics_are_none():
    m = compute_metrics([False, False], [False, False])
    assert m.precision is None and m.recall is None and m.f1 is None and m.accuracy == 1.0
    no_hit = compute_metrics([True, False], [False, True])
    assert no_hit.precision == 0.0 and no_hit.recall == 0.0 and no_hit.f1 == 0.0


@pytest.mark.parametrize("preds,golds", [([], []), ([True], [True, False])])
def test_metrics_input_errors(preds, golds):
    with pytest.raises(ValueError):
        compute_metrics(preds, golds)


# significance ----------------------------------------------------------------------


def test_z_test_reference_case():
    t = two_proportion_z_test(0.60, 100, 0.50, 100)
    assert t.p_value == pytest.approx(z_oracle(0.6, 100, 0.5, 100), abs=1e-3)
    assert t.p_value == pytest.approx(0.0776, abs=1e-3)
    assert t.significant and t.marker == "*"


def test_z_test_equal_accuracies():
    assert two_proportion_z_test(0.7, 50, 0.7, 80, sided="two").p_value == 1.0
    assert two_proportion_z_test(0.7, 50, 0.7, 80).p_value == 0.5


def test_z_test_not_significant():
    t = two_proportion_z_test(0.52, 100, 0.50, 100)
    assert not t.significant and t.marker == ""


@given(st.floats(0.05, 0.95), st.integers(10, 500), st.floats(0.05, 0.95), st.integers(10, 500))
def test_z_test_matches_erfc_oracle(a, na, b, nb):
    assert two_proportion_z_test(a, na, b, nb).p_value == pytest.approx(z_oracle(a, na, b, nb), abs=1e-9)


def test_z_test_degenerate():
    with pytest.raises(UndefinedStatisticError):
        two_proportion_z_test(1.0, 10, 1.0, 10)
    with pytest.raises(ValueError):
        two_proportion_z_test(1.2, 10, 0.5, 10)


# BLEU ------------------------------------------------------------------------------


VOCAB = [f"w{i}" for i in range(12)]


def random_tokens(rng, lo=1, hi=12):
    return [rng.choice(VOCAB) for _ in range(rng.randint(lo, hi))]


def test_sentence_bleu_matches_nltk():
    rng = random.Random(3)
    smooth = SmoothingFunction().method1
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for _ in range(300):
            hyp = random_tokens(rng)
            refs = [random_tokens(rng) for _ in range(rng.randint(1, 4))]
            expected = nltk_bleu(refs, hyp, smoothing_function=smooth)
            assert sentence_bleu(hyp, refs) == pytest.approx(expected, abs=1e-12)


def test_identical_continuations_score_one():
    cont = (Turn("a", "the same words in every sample"),)
    assert bleu_self_diversity([cont] * 5) == pytest.approx(1.0)


def test_disjoint_continuations_below_floor():
    conts = [(Turn("a", " ".join(f"t{i}_{j}" for j in range(6))),) for i in range(5)]
    assert bleu_self_diversity(conts) < smoothing_floor(6)


def test_smoothing_floor_value():
    expected = math.exp((math.log(0.1 / 6) + math.log(0.1 / 5) + math.log(0.1 / 4) + math.log(0.1 / 3)) / 4)
    assert smoothing_floor(6) == pytest.approx(expected)


def test_self_diversity_matches_loo_oracle():
    rng = random.Random(11)
    for _ in range(20):
        sets = [random_tokens(rng, 2, 10) for _ in range(rng.randint(2, 6))]
        conts = [(Turn("s", " ".join(tokens)),) for tokens in sets]
        assert bleu_self_diversity(conts) == pytest.approx(nltk_self_diversity(sets), abs=1e-9)


@given(st.permutations(range(5)))
def test_self_diversity_permutation_invariant(order):
    rng = random.Random(5)
    conts = [(Turn("s", " ".join(random_tokens(rng, 3, 8))),) for _ in range(5)]
    shuffled = [conts[i] for i in order]
    assert bleu_self_diversity(shuffled) == pytest.approx(bleu_self_diversity(conts), abs=1e-12)


def test_speakers_do_not_count_as_tokens():
    a = (Turn("alice", "the same text in both"),)
    b = (Turn("bob", "the same text in both"),)
    assert bleu_self_diversity([a, b]) == pytest.approx(1.0)


def test_empty_hypothesis_and_single_continuation():
    assert sentence_bleu([], [["a"]]) == 0.0
    with pytest.raises(ValueError):
        bleu_self_diversity([(Turn("a", "x"),)])


# vote math ---------------------------------------------------------------------------


def brute_majority(p, L):
    total = 0.0
    for votes in itertools.product([True, False], repeat=L):
        right = sum(votes)
        prob = p**right * (1 - p) ** (L - right)
        if 2 * right > L:
            total += prob
        elif 2 * right == L:
            total += prob / 2
    return total


@pytest.mark.parametrize("L", [1, 2, 3, 4, 5, 7])
def test_exact_majority_matches_enumeration(L):
    assert exact_majority_accuracy(0.6, L) == pytest.approx(brute_majority(0.6, L), abs=1e-12)


def test_exact_majority_reference_value():
    assert exact_majority_accuracy(0.6, 5) == pytest.approx(0.68256, abs=1e-12)


def test_simulation_is_seeded():
    assert simulate_vote_accuracy(0.6, [1, 3], trials=500, seed=2) == simulate_vote_accuracy(0.6, [1, 3], trials=500, seed=2)


def test_simulated_tie_rule_at_even_l():
    acc = simulate_vote_accuracy(0.6, [2], trials=20_000, seed=1, tie_rule=TieRule.PREDICT_BENIGN)
    assert acc[2] == pytest.approx(exact_majority_accuracy(0.6, 2), abs=0.02)


# ablations -------------------------------------------------------------------------


def conv(i: int, n: int = 4) -> Conversation:
    derailed = i % 2 == 0
    turns = tuple(Turn(f"s{j}", f"c{i} turn {j}") for j in range(1, n + 1))
    return Conversation(f"c{i}", turns, n - 1, Outcome.from_bool(derailed))


def oracle_generator():
    """Emits a hostile reply for derailing conversations only (ids with even numbers)."""

    def fn(prompt, params, seed):
        first = prompt.split()[1]
        return "x: idiot" if int(first[1:]) % 2 == 0 else "x: fine"

    return ScriptedGenerator(fn)


def test_vote_ablation_shares_samples():
    convs = [conv(i) for i in range(6)]
    table = ablate_vote_count(convs, oracle_generator(), KeywordClassifier(["idiot"]), [1, 3, 5])
    assert set(table) == {1, 3, 5}
    assert all(m.accuracy == 1.0 for m in table.values())


def test_vote_ablation_small_l_equals_fresh_run():
    from derailcast.forecast import forecast_batch

    convs = [conv(i) for i in range(6)]
    g = ScriptedGenerator(lambda p, params, seed: "x: idiot" if seed % 2 else "x: fine")
    f = KeywordClassifier(["idiot"])
    table = ablate_vote_count(convs, g, f, [1, 3], seed=4)
    for L in (1, 3):
        results, _ = forecast_batch(convs, g, f, L=L, seed=4)
        assert table[L] == compute_metrics([r.final for r in results], [r.gold for r in results])


def test_prefix_ablation_excludes_short_conversations():
    convs = [conv(i, n=3 + i % 3) for i in range(9)]
    table = ablate_prefix_length(convs, oracle_generator(), KeywordClassifier(["idiot"]), [2, 4, 6], L=3)
    assert table[2].n_excluded == 0 and table[2].n_used == 9
    assert table[4].n_excluded == 6 and table[4].n_used == 3
    assert table[6].metrics is None and table[6].n_excluded == 9
    assert table[2].median_generated_turns == 1.0
    assert dumps({k: r.to_dict() for k, r in table.items()})


def test_metrics_table_marks_significant_rows():
    rows = {
        "prefix": MetricsReport.from_counts(25, 25, 25, 25),
        "pipeline": MetricsReport.from_counts(30, 20, 10, 40),
        "close": MetricsReport.from_counts(26, 24, 25, 25),
    }
    table = metrics_table(rows, baseline="prefix")
    lines = table.splitlines()
    assert lines[0] == "| Method | Acc | Prec | Rec | F1 |"
    assert lines[2] == "| prefix | 50.0 | 50.0 | 50.0 | 50.0 |"
    assert lines[3].startswith("| pipeline | 70.0* |")
    assert lines[4].startswith("| close | 51.0 |")


def test_metrics_table_renders_undefined():
    table = metrics_table({"none": MetricsReport.from_counts(0, 0, 0, 4)})
    assert "| none | 100.0 | n/a | n/a | n/a |" in table


def test_dumps_is_canonical():
    assert dumps({"b": 1, "a": [1.5]}) == '{\n  "a": [\n    1.5\n  ],\n  "b": 1\n}\n'
