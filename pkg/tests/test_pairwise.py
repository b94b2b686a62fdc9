import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ebookhmm.errors import AlphabetMismatchError, ConfigurationError
from ebookhmm.pairwise import (
    GAP,
    PairwiseAlignment,
    ScoringScheme,
    align_table,
    identity_matrix_json,
    needleman_wunsch,
    render_alignment,
    sequence_identity,
    sequence_table,
)
from toys import alphabet_of, seq

AB = alphabet_of("abcXGATC")
S = ScoringScheme()


def brute_force(a, b, scoring):
    """Best score over every alignment, by recursion without memoization."""

    def best(i, j):
        if i == len(a) and j == len(b):
            return 0
        options = []
        if i < len(a) and j < len(b):
            options.append(scoring.pair(a[i], b[j]) + best(i + 1, j + 1))
        if i < len(a):
            options.append(scoring.gap_score + best(i + 1, j))
        if j < len(b):
            options.append(scoring.gap_score + best(i, j + 1))
        return max(options)

    return best(0, 0)


def column_score(aln, scoring):
    total = 0
    for t, b in zip(aln.top.tolist(), aln.bottom.tolist()):
        total += scoring.gap_score if GAP in (t, b) else scoring.pair(t, b)
    return total


def test_identical():
    aln = needleman_wunsch(seq("abc", AB), seq("abc", AB))
    assert len(aln) == 3 and aln.score == 3
    assert sequence_identity(aln).identity == 1.0


def test_empty_top():
    aln = needleman_wunsch(seq("", AB), seq("ab", AB))
    assert aln.top.tolist() == [GAP, GAP] and aln.score == -2
    assert sequence_identity(aln.swapped()).identity == 0.0


def test_gattaca_against_brute_force():
    a, b = seq("GATTACA", AB), seq("GCATGCT", AB)
    aln = needleman_wunsch(a, b)
    assert aln.score == brute_force(a.items.tolist(), b.items.tolist(), S)
    assert aln.score == column_score(aln, S)


def test_tie_break_prefers_diagonal_then_up():
    # "ab" vs "c": (a,c)(b,-) and (a,-)(b,c) both score -2; traceback from
    # the end takes the diagonal first
    aln = needleman_wunsch(seq("ab", AB), seq("c", AB))
    assert aln.score == -2
    assert aln.bottom.tolist() == [GAP, AB.index[ord("c")]]
    # "ab" vs "ba" prefers gap-match-gap (-1) over two mismatches (-2)
    assert needleman_wunsch(seq("ab", AB), seq("ba", AB)).score == -1


def test_alphabet_mismatch():
    with pytest.raises(AlphabetMismatchError):
        needleman_wunsch(seq("a", AB), seq("a", alphabet_of("a")))


def test_scoring_invariants():
    with pytest.raises(ConfigurationError):
        ScoringScheme(0, 0, -1)
    with pytest.raises(ConfigurationError):
        ScoringScheme(1, -1, 1)


def test_no_all_gap_columns():
    with pytest.raises(ConfigurationError):
        PairwiseAlignment(np.array([GAP]), np.array([GAP]), 0, AB)


def test_hirschberg_matches_full_matrix():
    rng = np.random.default_rng(3)
    for _ in range(30):
        a = rng.integers(0, 4, size=rng.integers(0, 40))
        b = rng.integers(0, 4, size=rng.integers(0, 40))
        table, del_cost = sequence_table(a, 8, S)
        ins_cost = S.gap_score
        full = align_table(table, del_cost, ins_cost, b)
        low = align_table(table, del_cost, ins_cost, b, full_matrix_limit=4)
        assert full[0] == low[0]
        for score, ti, bi in (full, low):
            assert ti[ti != GAP].tolist() == list(range(a.size))
            assert bi[bi != GAP].tolist() == list(range(b.size))


def test_render_examples():
    aln = needleman_wunsch(seq("a", AB), seq("a", AB))
    assert render_alignment(aln, 80) == "a\na\n"
    lf = needleman_wunsch(seq("a\nb", AB), seq("a b", AB))
    out = render_alignment(lf, 80)
    assert out.count("\n") == 2 and "␊" in out
    long = needleman_wunsch(seq("a" * 160, AB), seq("a" * 160, AB))
    blocks = render_alignment(long, 80).split("\n\n")
    assert len(blocks) == 2
    gap = needleman_wunsch(seq("ab", AB), seq("b", AB))
    assert "░" in render_alignment(gap)


def test_identity_json():
    text = identity_matrix_json(["x", "y"], np.array([[1.0, 0.5], [0.5, 1.0]]))
    assert '"ids"' in text and "0.5" in text


pairs = st.tuples(
    st.lists(st.integers(0, 2), max_size=8),
    st.lists(st.integers(0, 2), max_size=8),
)


@settings(max_examples=150, deadline=None)
@given(pairs)
def test_oracle_equivalence_and_symmetry(pair):
    a, b = pair
    sa = seq("".join("abc"[i] for i in a), AB)
    sb = seq("".join("abc"[i] for i in b), AB)
    aln = needleman_wunsch(sa, sb)
    assert aln.score == brute_force(sa.items.tolist(), sb.items.tolist(), S)
    assert aln.score == needleman_wunsch(sb, sa).score
    assert aln.score == column_score(aln, S)
    assert np.array_equal(aln.top_sequence(), sa.items)
    assert np.array_equal(aln.bottom_sequence(), sb.items)
    stats = sequence_identity(aln)
    assert 0 <= stats.identity <= 1 and stats.alignment_length >= max(len(a), len(b))


@settings(max_examples=60, deadline=None)
@given(st.text("abc", max_size=20), st.text("abc", max_size=20), st.text("abc", min_size=1, max_size=6))
def test_common_suffix_never_loses_matches(a, b, suffix):
    base = sequence_identity(needleman_wunsch(seq(a, AB), seq(b, AB))).matches
    longer = sequence_identity(needleman_wunsch(seq(a + suffix, AB), seq(b + suffix, AB))).matches
    assert longer >= base


@given(st.text("abcX", max_size=30))
def test_self_identity(a):
    if a:
        assert sequence_identity(needleman_wunsch(seq(a, AB), seq(a, AB))).identity == 1.0


def test_exhaustive_small_alphabet():
    for n in range(4):
        for m in range(4):
            for a in itertools.product(range(2), repeat=n):
                for b in itertools.product(range(2), repeat=m):
                    sa = seq("".join("ab"[i] for i in a), AB)
                    sb = seq("".join("ab"[i] for i in b), AB)
                    assert needleman_wunsch(sa, sb).score == brute_force(sa.items.tolist(), sb.items.tolist(), S)
