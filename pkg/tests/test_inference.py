import math
from pathlib import Path

import numpy as np
import pytest

from ebookhmm.alphabet import default_alphabet, normalize_text
from ebookhmm.errors import BandingError
from ebookhmm.inference import (
    Band,
    annotate_alignment,
    backward,
    baum_welch,
    consensus,
    forward,
    match_probabilities,
    viterbi,
)
from ebookhmm.model import DELETE, INSERT, MATCH, ProfileHmm, PseudocountConfig, build_model, validate_model
from ebookhmm.msa import barton_sternberg, mark_match_columns
from ebookhmm.synth import add_noise
from toys import alphabet_of, enumerate_paths_logprob, marked_from_strings, random_model, seq, toy_model

DEFAULT = default_alphabet()


@pytest.fixture(scope="module")
def abc_model():
    return build_model(marked_from_strings(["abc"] * 7, DEFAULT))


def kinds(path):
    return [(kind, k) for kind, k, _ in path.states]


def one_state_model():
    """M=1 over {a, b}, parameters set by hand."""
    alphabet = alphabet_of("ab")
    a, b = alphabet.index[ord("a")], alphabet.index[ord("b")]
    me = np.zeros((1, len(alphabet)))
    me[0, [a, b]] = [0.7, 0.3]
    ie = np.zeros((2, len(alphabet)))
    ie[:, [a, b]] = [[0.4, 0.6], [0.5, 0.5]]
    tp = np.zeros((2, 3, 3))
    tp[0, MATCH] = [0.6, 0.1, 0.3]  # b -> m1, i0, d1
    tp[0, INSERT, [MATCH, INSERT]] = [0.8, 0.2]
    tp[1, MATCH, [MATCH, INSERT]] = [0.9, 0.1]  # m1 -> e, i1
    tp[1, INSERT, [MATCH, INSERT]] = [0.75, 0.25]
    tp[1, DELETE, MATCH] = 1.0
    with np.errstate(divide="ignore"):
        return ProfileHmm(alphabet, np.log(me), np.log(ie), np.log(tp)), alphabet


def test_one_state_hand_computation():
    model, alphabet = one_state_model()
    assert validate_model(model) == []
    # "a": only b -> m1 -> e emits exactly one symbol (no i0->d1 or d1->i1 arcs)
    assert math.isclose(forward(model, seq("a", alphabet)), math.log(0.6 * 0.7 * 0.9), rel_tol=1e-12)
    # "ab": b m1 i1 e, or b i0 m1 e
    expected = 0.6 * 0.7 * 0.1 * 0.5 * 0.75 + 0.1 * 0.4 * 0.8 * 0.3 * 0.9
    assert math.isclose(forward(model, seq("ab", alphabet)), math.log(expected), rel_tol=1e-12)
    # empty: b d1 e
    assert math.isclose(forward(model, seq("", alphabet)), math.log(0.3), rel_tol=1e-12)


def test_empty_sequence_is_all_delete_path():
    rng = np.random.default_rng(5)
    model = random_model(rng, 6, alphabet_of("ab"))
    tr = model.transitions
    expected = tr[0, MATCH, DELETE] + sum(tr[k, DELETE, DELETE] for k in range(1, 6)) + tr[6, DELETE, MATCH]
    empty = seq("", model.alphabet)
    assert math.isclose(forward(model, empty), expected, rel_tol=1e-12)
    assert math.isclose(backward(model, empty), expected, rel_tol=1e-12)
    assert math.isclose(viterbi(model, empty).log_probability, expected, rel_tol=1e-12)


def test_forward_matches_path_enumeration():
    model = toy_model()
    for text in ["", "a", "ab", "ba", "aab", "abba", "bbbab"]:
        s = seq(text, model.alphabet)
        assert math.isclose(forward(model, s), enumerate_paths_logprob(model, s.items), rel_tol=1e-10)


def test_forward_backward_viterbi_on_random_models():
    rng = np.random.default_rng(11)
    alphabet = alphabet_of("abc")
    for _ in range(60):
        model = random_model(rng, int(rng.integers(1, 7)), alphabet)
        s = seq("".join(rng.choice(list("abc"), size=rng.integers(0, 12))), alphabet)
        f, b = forward(model, s), backward(model, s)
        assert abs(f - b) < 1e-8
        v = viterbi(model, s)
        assert v.log_probability <= f + 1e-12 * abs(f)
        assert v.emitted() == s.items.tolist()


def test_viterbi_examples(abc_model):
    assert kinds(viterbi(abc_model, seq("abc", DEFAULT))) == [
        ("begin", 0), ("match", 1), ("match", 2), ("match", 3), ("end", 4)
    ]
    path = viterbi(abc_model, seq("abXc", DEFAULT))
    inserts = [(k, sym) for kind, k, sym in path.states if kind == "insert"]
    assert inserts == [(2, DEFAULT.index[ord("X")])]
    assert ("delete", 2) in kinds(viterbi(abc_model, seq("ac", DEFAULT)))


def test_state_path_is_plan7(abc_model):
    path = viterbi(abc_model, seq("aXXbc", DEFAULT))
    names = [kind for kind, _, _ in path.states]
    assert names[0] == "begin" and names[-1] == "end"
    for (ka, pa, _), (kb, pb, _) in zip(path.states, path.states[1:]):
        assert (ka, kb) not in {("insert", "delete"), ("delete", "insert")}
        assert pb == pa + 1 or (kb == "insert" and pb == pa)
    lines = path.to_jsonl().splitlines()
    assert len(lines) == len(path.states)


def test_consensus_examples(abc_model):
    assert consensus(abc_model).text == "abc"
    rows = ["Rosa Dartle"] * 6 + ["Eosa Dartle"]
    assert consensus(build_model(marked_from_strings(rows, DEFAULT))).text == "Rosa Dartle"


def test_header_in_minority_is_not_in_consensus():
    body_a, body_b = "He went out. ", "She stayed in."
    header = "12 THE HOUSE BY THE WEIR\n"
    texts = [body_a + header + body_b] * 3 + [body_a + body_b] * 4
    msa = barton_sternberg([normalize_text(t, DEFAULT, str(i)) for i, t in enumerate(texts)])
    model = build_model(mark_match_columns(msa))
    assert consensus(model).text == body_a + body_b


def test_match_probabilities(abc_model):
    p = match_probabilities(abc_model)
    assert p.shape == (3,) and np.all(p > 0.5) and np.all(p <= 1.0)
    gappy = build_model(marked_from_strings(["abc"] * 4 + ["a-c"] * 3, DEFAULT))
    q = match_probabilities(gappy)
    assert q[1] < q[0]


def test_annotate_alignment(abc_model):
    assert annotate_alignment(abc_model, seq("abc", DEFAULT)) == ["consensus-match"] * 3
    text = "The cat sat on the mat."
    model = build_model(marked_from_strings([text] * 7, DEFAULT))
    labels = annotate_alignment(model, seq("The cat sat 17 on the mat.", DEFAULT))
    assert labels[12:14] == ["insertion"] * 2 and labels.count("insertion") == 3
    labels = annotate_alignment(model, seq("The cat on the mat.", DEFAULT))
    assert labels.count("after-deletion") == 1 and labels.count("insertion") == 0


def test_band_validation_and_error():
    with pytest.raises(Exception):
        Band(np.array([0, 2]), np.array([1, 1]))
    model = build_model(marked_from_strings(["abcabcabc"] * 3, DEFAULT))
    s = seq("abcabcabc", DEFAULT)
    narrow = Band(np.zeros(10, dtype=np.int64), np.array([0] * 9 + [1]))
    with pytest.raises(BandingError):
        forward(model, s, narrow)


@pytest.fixture(scope="module")
def chapter_model():
    text = (Path(__file__).parent / "data" / "ground_truth.txt").read_text(encoding="utf-8")[:1500]
    rng = np.random.default_rng(2)
    texts = [add_noise(text, 0.01, rng) for _ in range(4)]
    seqs = [normalize_text(t, DEFAULT, str(i)) for i, t in enumerate(texts)]
    marked = mark_match_columns(barton_sternberg(seqs))
    return build_model(marked), marked, seqs


def test_banded_equals_unbanded(chapter_model):
    model, marked, seqs = chapter_model
    for k, s in enumerate(seqs):
        band = Band.from_centers(marked.model_positions(k), model.M, 200)
        assert band.width < model.M
        assert forward(model, s, band) == forward(model, s)
        vb, vu = viterbi(model, s, band), viterbi(model, s)
        assert vb.log_probability == vu.log_probability and vb.states == vu.states


def test_baum_welch_fixed_point():
    model = build_model(marked_from_strings(["abcab"], DEFAULT), PseudocountConfig(1e-3, 1e-3))
    trained, trace = baum_welch(model, [seq("abcab", DEFAULT)], max_epochs=10, pseudo=PseudocountConfig(1e-3, 1e-3))
    assert trace.converged and trace.epochs <= 1
    assert consensus(trained).text == consensus(model).text
    assert validate_model(trained) == []


def test_baum_welch_paragraph_scale_keeps_consensus(chapter_model):
    model, marked, seqs = chapter_model
    short = [normalize_text(s.text[:640], DEFAULT, s.source_id) for s in seqs]
    msa = mark_match_columns(barton_sternberg(short))
    initial = build_model(msa)
    bands = [Band.from_centers(msa.model_positions(k), initial.M, 64) for k in range(len(short))]
    trained, trace = baum_welch(initial, short, max_epochs=10, bands=bands)
    assert consensus(trained).text == consensus(initial).text
    assert all(b >= a - 1e-6 * abs(a) for a, b in zip(trace.objective, trace.objective[1:]))


def test_baum_welch_monotone_on_random_models():
    rng = np.random.default_rng(7)
    alphabet = alphabet_of("ab")
    tiny = PseudocountConfig(1e-9, 1e-9)
    for _ in range(20):
        model = random_model(rng, int(rng.integers(1, 5)), alphabet)
        data = [seq("".join(rng.choice(list("ab"), size=rng.integers(0, 8))), alphabet) for _ in range(3)]
        for pseudo, series in ((PseudocountConfig(), "objective"), (tiny, "log_likelihood")):
            _, trace = baum_welch(model, data, max_epochs=6, tol=1e-12, pseudo=pseudo)
            values = getattr(trace, series)
            assert all(b >= a - 1e-6 * abs(a) for a, b in zip(values, values[1:]))
