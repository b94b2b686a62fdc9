"""Global pairwise alignment (Needleman-Wunsch), identity and rendering.

All alignments are computed by one dynamic program that aligns a sequence
against a *column table*: ``table[i, c]`` is the score of placing symbol
``c`` against top position ``i``, ``del_cost[i]`` the score of top position
``i`` against a gap and ``ins_cost`` the score of a sequence symbol against
a gap. A plain sequence is the one-row special case; the multiple-alignment
code feeds column profiles through the same path.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numba
import numpy as np

from .alphabet import Alphabet, CharSequence
from .errors import AlphabetMismatchError, ConfigurationError

GAP = -1

DIAG, UP, LEFT = 1, 2, 4

FULL_MATRIX_LIMIT = 32768

GAP_GLYPH = "░"


@dataclass(frozen=True)
class ScoringScheme:
    match_score: int = 1
    mismatch_score: int = -1
    gap_score: int = -1

    def __post_init__(self):
        if not self.match_score > self.mismatch_score:
            raise ConfigurationError("match_score must exceed mismatch_score")
        if not self.gap_score < self.match_score:
            raise ConfigurationError("gap_score must be below match_score")

    def pair(self, x: int, y: int) -> int:
        if x == GAP and y == GAP:
            return 0
        if x == GAP or y == GAP:
            return self.gap_score
        return self.match_score if x == y else self.mismatch_score


DEFAULT_SCORING = ScoringScheme()


@dataclass(frozen=True, eq=False)
class PairwiseAlignment:
    """Two gapped rows over a shared column axis.

    ``top`` and ``bottom`` hold alphabet ordinals with ``GAP`` (-1) for gaps.
    When produced by profile alignment, ``top`` holds profile column indices
    instead of ordinals.
    """

    top: np.ndarray
    bottom: np.ndarray
    score: float
    alphabet: Alphabet
    top_id: str = ""
    bottom_id: str = ""

    def __post_init__(self):
        top = np.asarray(self.top, dtype=np.int64)
        bottom = np.asarray(self.bottom, dtype=np.int64)
        if top.shape != bottom.shape:
            raise ConfigurationError("alignment rows differ in length")
        if np.any((top == GAP) & (bottom == GAP)):
            raise ConfigurationError("alignment contains an all-gap column")
        object.__setattr__(self, "top", top)
        object.__setattr__(self, "bottom", bottom)

    def __len__(self):
        return int(self.top.size)

    @property
    def columns(self) -> list[tuple[int | None, int | None]]:
        return [
            (None if t == GAP else int(t), None if b == GAP else int(b))
            for t, b in zip(self.top.tolist(), self.bottom.tolist())
        ]

    def top_sequence(self) -> np.ndarray:
        return self.top[self.top != GAP]

    def bottom_sequence(self) -> np.ndarray:
        return self.bottom[self.bottom != GAP]

    def swapped(self) -> "PairwiseAlignment":
        return PairwiseAlignment(self.bottom, self.top, self.score, self.alphabet, self.bottom_id, self.top_id)


@dataclass(frozen=True)
class IdentityStats:
    matches: int
    alignment_length: int

    @property
    def identity(self) -> float:
        if self.alignment_length == 0:
            return 1.0
        return self.matches / self.alignment_length


# ---------------------------------------------------------------------------
# kernels


@numba.njit(cache=True)
def _fill(table, del_cost, ins_cost, seq):
    n = table.shape[0]
    m = seq.shape[0]
    trace = np.zeros((n + 1, m + 1), dtype=np.uint8)
    prev = np.empty(m + 1, dtype=np.int64)
    cur = np.empty(m + 1, dtype=np.int64)
    prev[0] = 0
    for j in range(1, m + 1):
        prev[j] = prev[j - 1] + ins_cost
        trace[0, j] = LEFT
    for i in range(1, n + 1):
        cur[0] = prev[0] + del_cost[i - 1]
        trace[i, 0] = UP
        row = table[i - 1]
        dc = del_cost[i - 1]
        for j in range(1, m + 1):
            d = prev[j - 1] + row[seq[j - 1]]
            u = prev[j] + dc
            l = cur[j - 1] + ins_cost
            best = d
            if u > best:
                best = u
            if l > best:
                best = l
            flags = 0
            if d == best:
                flags |= DIAG
            if u == best:
                flags |= UP
            if l == best:
                flags |= LEFT
            cur[j] = best
            trace[i, j] = flags
        prev, cur = cur, prev
    return prev[m], trace


@numba.njit(cache=True)
def _traceback(trace):
    i = trace.shape[0] - 1
    j = trace.shape[1] - 1
    top = np.empty(i + j, dtype=np.int64)
    bottom = np.empty(i + j, dtype=np.int64)
    n = 0
    while i > 0 or j > 0:
        f = trace[i, j]
        if f & DIAG:
            i -= 1
            j -= 1
            top[n] = i
            bottom[n] = j
        elif f & UP:
            i -= 1
            top[n] = i
            bottom[n] = -1
        else:
            j -= 1
            top[n] = -1
            bottom[n] = j
        n += 1
    return top[:n][::-1].copy(), bottom[:n][::-1].copy()


@numba.njit(cache=True)
def _last_row(table, del_cost, ins_cost, seq):
    n = table.shape[0]
    m = seq.shape[0]
    prev = np.empty(m + 1, dtype=np.int64)
    cur = np.empty(m + 1, dtype=np.int64)
    prev[0] = 0
    for j in range(1, m + 1):
        prev[j] = prev[j - 1] + ins_cost
    for i in range(1, n + 1):
        cur[0] = prev[0] + del_cost[i - 1]
        row = table[i - 1]
        dc = del_cost[i - 1]
        for j in range(1, m + 1):
            d = prev[j - 1] + row[seq[j - 1]]
            u = prev[j] + dc
            l = cur[j - 1] + ins_cost
            best = d
            if u > best:
                best = u
            if l > best:
                best = l
            cur[j] = best
        prev, cur = cur, prev
    return prev.copy()


def _hirschberg(table, del_cost, ins_cost, seq, base_cells):
    """Linear-memory alignment; returns (score, top_idx, bottom_idx)."""
    n, m = table.shape[0], seq.shape[0]
    if n <= 1 or m == 0 or (n + 1) * (m + 1) <= base_cells:
        score, trace = _fill(table, del_cost, ins_cost, seq)
        top, bottom = _traceback(trace)
        return int(score), top, bottom
    mid = n // 2
    fwd = _last_row(table[:mid], del_cost[:mid], ins_cost, seq)
    rev = _last_row(
        np.ascontiguousarray(table[mid:][::-1]),
        np.ascontiguousarray(del_cost[mid:][::-1]),
        ins_cost,
        np.ascontiguousarray(seq[::-1]),
    )
    total = fwd + rev[::-1]
    split = int(np.argmax(total))
    s1, t1, b1 = _hirschberg(table[:mid], del_cost[:mid], ins_cost, seq[:split], base_cells)
    s2, t2, b2 = _hirschberg(table[mid:], del_cost[mid:], ins_cost, seq[split:], base_cells)
    t2 = np.where(t2 == GAP, GAP, t2 + mid)
    b2 = np.where(b2 == GAP, GAP, b2 + split)
    return s1 + s2, np.concatenate([t1, t2]), np.concatenate([b1, b2])


def align_table(table, del_cost, ins_cost, seq, full_matrix_limit=FULL_MATRIX_LIMIT):
    """Optimal global alignment of ``seq`` against a column table.

    Returns ``(score, top_index, bottom_index)``; index arrays hold positions
    into the table rows / sequence, ``GAP`` where a gap is placed. Ties in the
    full-matrix traceback prefer diagonal, then up, then left.
    """
    table = np.ascontiguousarray(table, dtype=np.int64)
    del_cost = np.ascontiguousarray(del_cost, dtype=np.int64)
    seq = np.ascontiguousarray(seq, dtype=np.int64)
    if max(table.shape[0], seq.shape[0]) <= full_matrix_limit:
        score, trace = _fill(table, del_cost, int(ins_cost), seq)
        top, bottom = _traceback(trace)
        return int(score), top, bottom
    return _hirschberg(table, del_cost, int(ins_cost), seq, base_cells=1 << 22)


def gather(values: np.ndarray, index: np.ndarray) -> np.ndarray:
    """``values[index]`` with ``GAP`` kept wherever ``index`` is ``GAP``."""
    out = np.full(index.shape, GAP, dtype=np.int64)
    present = index != GAP
    out[present] = values[index[present]]
    return out


def sequence_table(items: np.ndarray, size: int, scoring: ScoringScheme):
    table = np.full((items.size, size), scoring.mismatch_score, dtype=np.int64)
    table[np.arange(items.size), items] = scoring.match_score
    del_cost = np.full(items.size, scoring.gap_score, dtype=np.int64)
    return table, del_cost


def needleman_wunsch(
    a: CharSequence,
    b: CharSequence,
    scoring: ScoringScheme = DEFAULT_SCORING,
    full_matrix_limit: int = FULL_MATRIX_LIMIT,
) -> PairwiseAlignment:
    """Globally align ``a`` (top row) with ``b`` (bottom row).

    Parameters
    ----------
    a, b : CharSequence
        Sequences over the same alphabet.
    scoring : ScoringScheme
        Linear gap scoring; defaults to +1/-1/-1.
    full_matrix_limit : int
        Inputs longer than this are aligned with Hirschberg's linear-memory
        recursion. The score is the same; co-optimal alignments may differ.
    """
    if a.alphabet != b.alphabet:
        raise AlphabetMismatchError(f"{a.source_id!r} and {b.source_id!r} use different alphabets")
    table, del_cost = sequence_table(a.items, len(a.alphabet), scoring)
    score, ti, bi = align_table(table, del_cost, scoring.gap_score, b.items, full_matrix_limit)
    return PairwiseAlignment(gather(a.items, ti), gather(b.items, bi), score, a.alphabet, a.source_id, b.source_id)


def sequence_identity(alignment: PairwiseAlignment) -> IdentityStats:
    same = (alignment.top == alignment.bottom) & (alignment.top != GAP)
    return IdentityStats(int(same.sum()), len(alignment))


def identity_matrix(
    seqs: Sequence[CharSequence], scoring: ScoringScheme = DEFAULT_SCORING
) -> np.ndarray:
    k = len(seqs)
    out = np.eye(k)
    for i in range(k):
        for j in range(i + 1, k):
            out[i, j] = out[j, i] = sequence_identity(needleman_wunsch(seqs[i], seqs[j], scoring)).identity
    return out


def identity_matrix_json(ids: Sequence[str], matrix: np.ndarray) -> str:
    return json.dumps({"ids": list(ids), "identity": np.asarray(matrix).tolist()}, indent=1) + "\n"


def display_char(cp: int) -> str:
    """Printable stand-in for a code point (control pictures for C0/DEL)."""
    if cp < 0x20:
        return chr(0x2400 + cp)
    if cp == 0x7F:
        return "␡"
    if 0x80 <= cp < 0xA0 or cp in (0x2028, 0x2029):
        return "�"
    return chr(cp)


def render_alignment(alignment: PairwiseAlignment, width: int = 80) -> str:
    """Wrap an alignment into interleaved top/bottom line pairs.

    Blocks are separated by a blank line. Gaps use U+2591; line feeds and
    other control characters are shown as control pictures so that every
    column occupies exactly one character on screen.
    """
    if width < 1:
        raise ConfigurationError("width must be >= 1")
    symbols = alignment.alphabet.symbols

    def row(values):
        return "".join(GAP_GLYPH if v == GAP else display_char(symbols[v]) for v in values.tolist())

    top, bottom = row(alignment.top), row(alignment.bottom)
    blocks = [f"{top[s:s + width]}\n{bottom[s:s + width]}\n" for s in range(0, len(top), width)]
    return "\n".join(blocks)
