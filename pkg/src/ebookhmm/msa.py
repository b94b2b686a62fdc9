"""Barton-Sternberg progressive multiple alignment and match-column marking."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .alphabet import Alphabet, CharSequence
from .errors import AlphabetMismatchError, ConfigurationError, ModelFormatError
from .pairwise import (
    DEFAULT_SCORING,
    FULL_MATRIX_LIMIT,
    GAP,
    PairwiseAlignment,
    ScoringScheme,
    align_table,
    display_char,
    gather,
    identity_matrix,
)

log = logging.getLogger(__name__)

MSA_GAP_GLYPH = "▁"
MSA_FORMAT = "ebookhmm-msa/1"


@dataclass(frozen=True, eq=False)
class MultipleAlignment:
    rows: np.ndarray  # (k, L) ordinals, GAP for gaps
    alphabet: Alphabet
    row_ids: tuple[str, ...] = ()

    def __post_init__(self):
        rows = np.ascontiguousarray(self.rows, dtype=np.int64)
        if rows.ndim != 2:
            raise ConfigurationError("alignment rows must form a 2-D array")
        if rows.shape[1] and np.any(np.all(rows == GAP, axis=0)):
            raise ConfigurationError("alignment contains an all-gap column")
        ids = tuple(self.row_ids) or tuple(str(i) for i in range(rows.shape[0]))
        if len(ids) != rows.shape[0]:
            raise ConfigurationError("row_ids length differs from row count")
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "row_ids", ids)

    @property
    def n_rows(self) -> int:
        return self.rows.shape[0]

    @property
    def n_columns(self) -> int:
        return self.rows.shape[1]

    def sequence(self, k: int) -> np.ndarray:
        row = self.rows[k]
        return row[row != GAP]

    def __eq__(self, other):
        if not isinstance(other, MultipleAlignment):
            return NotImplemented
        return (
            self.alphabet == other.alphabet
            and self.row_ids == other.row_ids
            and np.array_equal(self.rows, other.rows)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class MarkedAlignment:
    alignment: MultipleAlignment
    match_columns: np.ndarray
    gap_threshold: float = 0.5

    def __post_init__(self):
        cols = np.asarray(self.match_columns, dtype=np.int64)
        if cols.size:
            if np.any(np.diff(cols) <= 0):
                raise ConfigurationError("match columns must be strictly increasing")
            if cols[0] < 0 or cols[-1] >= self.alignment.n_columns:
                raise ConfigurationError("match column index out of range")
        object.__setattr__(self, "match_columns", cols)

    @property
    def is_match(self) -> np.ndarray:
        mask = np.zeros(self.alignment.n_columns, dtype=bool)
        mask[self.match_columns] = True
        return mask

    def model_positions(self, k: int) -> np.ndarray:
        """Model position (matches passed so far) of every character of row ``k``."""
        row = self.alignment.rows[k]
        passed = np.cumsum(self.is_match)
        return passed[row != GAP]


@dataclass(frozen=True, eq=False)
class ColumnProfile:
    """Per-column symbol counts; the last entry of each row counts gaps."""

    counts: np.ndarray  # (L, |alphabet| + 1)
    alphabet: Alphabet = field(repr=False, default=None)

    @classmethod
    def from_rows(cls, rows: np.ndarray, alphabet: Alphabet) -> "ColumnProfile":
        k, length = rows.shape
        size = len(alphabet)
        counts = np.zeros((length, size + 1), dtype=np.int64)
        coded = np.where(rows == GAP, size, rows)
        cols = np.broadcast_to(np.arange(length), rows.shape)
        np.add.at(counts, (cols.ravel(), coded.ravel()), 1)
        return cls(counts, alphabet)

    @classmethod
    def from_alignment(cls, msa: MultipleAlignment) -> "ColumnProfile":
        return cls.from_rows(msa.rows, msa.alphabet)

    @property
    def n_rows(self) -> int:
        return int(self.counts[0].sum()) if len(self.counts) else 0

    def __len__(self):
        return self.counts.shape[0]

    def scaled_tables(self, scoring: ScoringScheme):
        """Integer score tables scaled by the row count.

        A symbol placed against column ``j`` scores the sum of its pair scores
        with every row's entry (a gap entry costs ``gap_score``); a gap placed
        against the column costs ``gap_score`` per non-gap entry.
        """
        n = self.n_rows
        sym = self.counts[:, :-1]
        gaps = self.counts[:, -1]
        nongap = n - gaps
        table = (
            sym * scoring.match_score
            + (nongap[:, None] - sym) * scoring.mismatch_score
            + gaps[:, None] * scoring.gap_score
        )
        del_cost = nongap * scoring.gap_score
        ins_cost = n * scoring.gap_score
        return table, del_cost, ins_cost


def align_sequence_to_profile(
    profile: ColumnProfile,
    seq: CharSequence,
    scoring: ScoringScheme = DEFAULT_SCORING,
    full_matrix_limit: int = FULL_MATRIX_LIMIT,
) -> PairwiseAlignment:
    """Align a sequence against profile columns.

    The returned alignment's top row holds profile column indices and its
    bottom row the sequence ordinals. The score is the column-averaged score.
    """
    if len(profile) == 0:
        raise ConfigurationError("profile has no columns")
    if profile.alphabet is not None and profile.alphabet != seq.alphabet:
        raise AlphabetMismatchError("sequence alphabet differs from profile alphabet")
    table, del_cost, ins_cost = profile.scaled_tables(scoring)
    score, ti, bi = align_table(table, del_cost, ins_cost, seq.items, full_matrix_limit)
    return PairwiseAlignment(ti, gather(seq.items, bi), score / profile.n_rows, seq.alphabet, "profile", seq.source_id)


def sum_of_pairs(rows: np.ndarray, scoring: ScoringScheme = DEFAULT_SCORING) -> int:
    """Sum over row pairs and columns of pair scores (gap-gap scores 0)."""
    if rows.shape[1] == 0:
        return 0
    n = rows.shape[0]
    size = int(rows.max()) + 2
    coded = np.where(rows == GAP, size - 1, rows)
    counts = np.zeros((rows.shape[1], size), dtype=np.int64)
    np.add.at(counts, (np.broadcast_to(np.arange(rows.shape[1]), rows.shape).ravel(), coded.ravel()), 1)
    gaps = counts[:, -1]
    nongap = n - gaps
    same = (counts[:, :-1] * (counts[:, :-1] - 1) // 2).sum(axis=1)
    residue_pairs = nongap * (nongap - 1) // 2
    total = (
        scoring.match_score * same
        + scoring.mismatch_score * (residue_pairs - same)
        + scoring.gap_score * gaps * nongap
    )
    return int(total.sum())


def _merge(rows: np.ndarray, aln: PairwiseAlignment) -> tuple[np.ndarray, np.ndarray]:
    """Existing rows plus the newly aligned row over the merged column axis."""
    col = aln.top
    k = rows.shape[0]
    merged = np.full((k, col.size), GAP, dtype=np.int64)
    present = col != GAP
    merged[:, present] = rows[:, col[present]]
    return merged, aln.bottom


def _drop_empty_columns(rows: np.ndarray) -> np.ndarray:
    keep = ~np.all(rows == GAP, axis=0)
    return rows[:, keep]


def _similarity_order(sim: np.ndarray) -> list[int]:
    k = sim.shape[0]
    masked = sim.copy()
    np.fill_diagonal(masked, -np.inf)
    i, j = np.unravel_index(int(np.argmax(masked)), masked.shape)
    order = [min(i, j), max(i, j)]
    rest = [r for r in range(k) if r not in order]
    while rest:
        nxt = max(rest, key=lambda r: (max(sim[r, o] for o in order), -r))
        order.append(nxt)
        rest.remove(nxt)
    return order


def barton_sternberg(
    seqs: Sequence[CharSequence],
    scoring: ScoringScheme = DEFAULT_SCORING,
    refinement_rounds: int = 2,
    full_matrix_limit: int = FULL_MATRIX_LIMIT,
) -> MultipleAlignment:
    """Progressive alignment followed by leave-one-out refinement.

    The most similar pair (by pairwise identity) seeds the alignment. The
    remaining sequences join in order of their best identity to any sequence
    already aligned. Each refinement round removes every row in turn and
    realigns it to the profile of the others; a round that changes nothing
    ends refinement early. Rows come back in input order.
    """
    if len(seqs) < 2:
        raise ConfigurationError("multiple alignment needs at least two sequences")
    if refinement_rounds < 0:
        raise ConfigurationError("refinement_rounds must be >= 0")
    alphabet = seqs[0].alphabet
    for s in seqs[1:]:
        if s.alphabet != alphabet:
            raise AlphabetMismatchError(f"{s.source_id!r} uses a different alphabet")

    sim = identity_matrix(seqs, scoring)
    order = _similarity_order(sim)
    log.debug("alignment order %s", order)

    first = seqs[order[0]]
    rows = first.items[None, :].copy()
    for r in order[1:]:
        if rows.shape[1] == 0:
            new = seqs[r].items.copy()
            rows = np.vstack([np.full((rows.shape[0], new.size), GAP, dtype=np.int64), new[None, :]])
            rows = _drop_empty_columns(rows)
            continue
        aln = align_sequence_to_profile(ColumnProfile.from_rows(rows, alphabet), seqs[r], scoring, full_matrix_limit)
        merged, new_row = _merge(rows, aln)
        rows = np.vstack([merged, new_row[None, :]])
    rows = rows[np.argsort(order)]

    for rnd in range(refinement_rounds):
        changed = False
        for r in range(len(seqs)):
            before = sum_of_pairs(rows, scoring)
            others = _drop_empty_columns(np.delete(rows, r, axis=0))
            if others.shape[1] == 0:
                continue
            aln = align_sequence_to_profile(ColumnProfile.from_rows(others, alphabet), seqs[r], scoring, full_matrix_limit)
            merged, new_row = _merge(others, aln)
            candidate = np.insert(merged, r, new_row, axis=0)
            after = sum_of_pairs(candidate, scoring)
            if after >= before and not np.array_equal(candidate, rows):
                rows = candidate
                changed = True
        log.debug("refinement round %d changed=%s", rnd + 1, changed)
        if not changed:
            break

    return MultipleAlignment(rows, alphabet, tuple(s.source_id for s in seqs))


def mark_match_columns(msa: MultipleAlignment, gap_threshold: float = 0.5) -> MarkedAlignment:
    """Flag columns whose gap fraction is strictly below ``gap_threshold``."""
    if not 0 < gap_threshold <= 1:
        raise ConfigurationError("gap_threshold must be in (0, 1]")
    gaps = (msa.rows == GAP).sum(axis=0)
    marked = np.flatnonzero(gaps / msa.n_rows < gap_threshold)
    return MarkedAlignment(msa, marked, gap_threshold)


# ---------------------------------------------------------------------------
# serialization


def msa_to_text(msa: MultipleAlignment) -> str:
    symbols = msa.alphabet.symbols
    lines = [
        "".join(MSA_GAP_GLYPH if v == GAP else display_char(symbols[v]) for v in row.tolist())
        for row in msa.rows
    ]
    return "\n".join(lines) + "\n"


def msa_sidecar(marked: MarkedAlignment) -> str:
    msa = marked.alignment
    return (
        json.dumps(
            {
                "format": MSA_FORMAT,
                "row_ids": list(msa.row_ids),
                "match_columns": marked.match_columns.tolist(),
                "gap_threshold": marked.gap_threshold,
                "alphabet": list(msa.alphabet.symbols),
                "rows": msa.rows.tolist(),
            }
        )
        + "\n"
    )


def marked_from_sidecar(text: str) -> MarkedAlignment:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"alignment sidecar is not valid JSON at byte offset {exc.pos}") from exc
    if data.get("format") != MSA_FORMAT:
        raise ModelFormatError(f"unsupported alignment format {data.get('format')!r}, expected {MSA_FORMAT!r}")
    alphabet = Alphabet(tuple(data["alphabet"]))
    msa = MultipleAlignment(np.asarray(data["rows"], dtype=np.int64).reshape(len(data["row_ids"]), -1), alphabet, tuple(data["row_ids"]))
    return MarkedAlignment(msa, np.asarray(data["match_columns"], dtype=np.int64), float(data["gap_threshold"]))
