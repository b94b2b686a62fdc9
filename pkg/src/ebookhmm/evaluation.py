"""Comparison of an estimated text with a reference ebook text."""

from __future__ import annotations

import enum
import json
import re
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .alphabet import AlphabetPolicy, build_alphabet, normalize_text
from .pairwise import DEFAULT_SCORING, GAP, PairwiseAlignment, ScoringScheme, display_char, needleman_wunsch

SPACE, LF = 0x20, 0x0A
APOSTROPHE_PAIRS = frozenset({frozenset({0x27, 0x2019})})
QUOTE_PAIRS = frozenset(
    {
        frozenset({0x22, 0x201C}),
        frozenset({0x22, 0x201D}),
        frozenset({0x27, 0x2018}),
    }
)
TYPOGRAPHIC_QUOTES = frozenset({0x2018, 0x2019, 0x201C, 0x201D})

_TAG = re.compile(r"<[^<>]*>")


class MismatchClass(str, enum.Enum):
    EXACT = "exact-match"
    HTML_TAG = "html-tag-only"
    NEAR_SPACE = "near-miss-space"
    NEAR_APOSTROPHE = "near-miss-apostrophe"
    NEAR_QUOTE = "near-miss-curly-quote"
    LINEBREAK = "linebreak-artifact"
    SUBSTANTIVE = "substantive"


NEAR_MISSES = (MismatchClass.NEAR_SPACE, MismatchClass.NEAR_APOSTROPHE, MismatchClass.NEAR_QUOTE)


def tag_mask(text: str) -> np.ndarray:
    """True for characters removed by :func:`strip_html_tags`."""
    mask = np.zeros(len(text), dtype=bool)
    remaining = np.arange(len(text))
    current = text
    while True:
        spans = [m.span() for m in _TAG.finditer(current)]
        if not spans:
            return mask
        drop = np.zeros(len(current), dtype=bool)
        for a, b in spans:
            drop[a:b] = True
        mask[remaining[drop]] = True
        remaining = remaining[~drop]
        current = "".join(ch for ch, d in zip(current, drop) if not d)


def strip_html_tags(text: str) -> str:
    """Remove ``<...>`` runs (no ``<`` inside) until none remain.

    Repeating until nothing matches keeps the operation idempotent when a
    removal brings a new ``<...>`` run together. Entities are left alone.
    """
    while True:
        stripped = _TAG.sub("", text)
        if stripped == text:
            return text
        text = stripped


@dataclass(frozen=True)
class Mismatch:
    column: int
    candidate: str | None
    reference: str | None
    review: bool = False

    def as_dict(self):
        return {
            "column": self.column,
            "candidate": self.candidate,
            "reference": self.reference,
            "review": self.review,
        }


@dataclass
class MismatchReport:
    """Per-class column counts and the three identity percentages.

    ``counts`` classify the raw alignment; ``stripped_counts`` classify the
    alignment recomputed after removing HTML tags, from which the adjusted
    percentages and the itemized substantive mismatches are taken.
    """

    counts: dict[str, int]
    total_columns: int
    stripped_counts: dict[str, int]
    stripped_total_columns: int
    substantive: list[Mismatch] = field(default_factory=list)

    def _pct(self, num, den):
        return 100.0 if den == 0 else 100.0 * num / den

    @property
    def percent_match(self) -> float:
        return self._pct(self.counts[MismatchClass.EXACT.value], self.total_columns)

    @property
    def percent_ignoring_tags(self) -> float:
        return self._pct(self.stripped_counts[MismatchClass.EXACT.value], self.stripped_total_columns)

    @property
    def percent_ignoring_tags_and_near_misses(self) -> float:
        ok = self.stripped_counts[MismatchClass.EXACT.value] + sum(self.stripped_counts[c.value] for c in NEAR_MISSES)
        return self._pct(ok, self.stripped_total_columns)

    @property
    def percent_ignoring_tags_near_misses_and_linebreaks(self) -> float:
        ok = (
            self.stripped_counts[MismatchClass.EXACT.value]
            + sum(self.stripped_counts[c.value] for c in NEAR_MISSES)
            + self.stripped_counts[MismatchClass.LINEBREAK.value]
        )
        return self._pct(ok, self.stripped_total_columns)

    def percentages(self) -> dict[str, float]:
        return {
            "match": round(self.percent_match, 4),
            "match_ignoring_tags": round(self.percent_ignoring_tags, 4),
            "match_ignoring_tags_and_near_misses": round(self.percent_ignoring_tags_and_near_misses, 4),
            "match_ignoring_tags_near_misses_and_linebreaks": round(
                self.percent_ignoring_tags_near_misses_and_linebreaks, 4
            ),
        }

    def to_json(self) -> str:
        return json.dumps(
            {
                "counts": self.counts,
                "total_columns": self.total_columns,
                "stripped_counts": self.stripped_counts,
                "stripped_total_columns": self.stripped_total_columns,
                "percentages": self.percentages(),
                "substantive": [m.as_dict() for m in self.substantive],
            },
            indent=1,
            ensure_ascii=False,
        ) + "\n"

    def table_row(self, name: str) -> str:
        p = self.percentages()
        return "\t".join(
            [name, f"{p['match']:.2f}", f"{p['match_ignoring_tags']:.2f}", f"{p['match_ignoring_tags_and_near_misses']:.2f}"]
        )


TABLE_HEADER = "\t".join(
    ["name", "% match", "% match ignoring HTML tags", "% match ignoring HTML tags and near misses"]
)


def _column_masks(alignment: PairwiseAlignment, top_mask: np.ndarray, bottom_mask: np.ndarray):
    """Spread per-character masks onto alignment columns."""
    cols_top = np.zeros(len(alignment), dtype=bool)
    cols_bottom = np.zeros(len(alignment), dtype=bool)
    cols_top[alignment.top != GAP] = top_mask
    cols_bottom[alignment.bottom != GAP] = bottom_mask
    return cols_top, cols_bottom


def _classify_columns(alignment: PairwiseAlignment, top_tag=None, bottom_tag=None):
    symbols = alignment.alphabet.symbols
    top = [None if v == GAP else symbols[v] for v in alignment.top.tolist()]
    bottom = [None if v == GAP else symbols[v] for v in alignment.bottom.tolist()]
    n = len(top)
    if top_tag is None:
        top_tag = np.zeros(n, dtype=bool)
        bottom_tag = np.zeros(n, dtype=bool)

    # previous/next reference symbol around each column, for paragraph context
    prev_ref = [None] * n
    last = None
    for i, r in enumerate(bottom):
        prev_ref[i] = last
        if r is not None:
            last = r
    next_ref = [None] * n
    last = None
    for i in range(n - 1, -1, -1):
        next_ref[i] = last
        if bottom[i] is not None:
            last = bottom[i]

    classes = []
    for i, (c, r) in enumerate(zip(top, bottom)):
        pair = frozenset({c, r})
        if c == r:
            cls = MismatchClass.EXACT
        elif top_tag[i] or bottom_tag[i]:
            cls = MismatchClass.HTML_TAG
        elif pair == frozenset({SPACE, None}):
            cls = MismatchClass.NEAR_SPACE
        elif pair in APOSTROPHE_PAIRS:
            cls = MismatchClass.NEAR_APOSTROPHE
        elif pair in QUOTE_PAIRS:
            cls = MismatchClass.NEAR_QUOTE
        elif c == LF and (r == SPACE or (r is None and prev_ref[i] != LF and next_ref[i] != LF)):
            cls = MismatchClass.LINEBREAK
        else:
            cls = MismatchClass.SUBSTANTIVE
        classes.append(cls)
    return classes, top, bottom


def _tally(classes) -> dict[str, int]:
    counts = Counter(c.value for c in classes)
    return {c.value: counts.get(c.value, 0) for c in MismatchClass}


def classify_mismatches(alignment: PairwiseAlignment, scoring: ScoringScheme = DEFAULT_SCORING) -> MismatchReport:
    """Classify every column of a candidate (top) vs reference (bottom) alignment.

    The tag-insensitive figures come from a fresh alignment of the two texts
    with HTML tags removed.
    """
    symbols = alignment.alphabet.symbols
    cand_text = "".join(chr(symbols[v]) for v in alignment.top_sequence().tolist())
    ref_text = "".join(chr(symbols[v]) for v in alignment.bottom_sequence().tolist())
    top_tag, bottom_tag = _column_masks(alignment, tag_mask(cand_text), tag_mask(ref_text))
    classes, _, _ = _classify_columns(alignment, top_tag, bottom_tag)

    alphabet = alignment.alphabet
    stripped = needleman_wunsch(
        normalize_text(strip_html_tags(cand_text), alphabet, alignment.top_id),
        normalize_text(strip_html_tags(ref_text), alphabet, alignment.bottom_id),
        scoring,
    )
    s_classes, s_top, s_bottom = _classify_columns(stripped)
    items = [
        Mismatch(
            i,
            None if c is None else chr(c),
            None if r is None else chr(r),
            c in TYPOGRAPHIC_QUOTES and r in TYPOGRAPHIC_QUOTES,
        )
        for i, (cls, c, r) in enumerate(zip(s_classes, s_top, s_bottom))
        if cls is MismatchClass.SUBSTANTIVE
    ]
    return MismatchReport(_tally(classes), len(alignment), _tally(s_classes), len(stripped), items)


def identity_report(candidate: str, reference: str, scoring: ScoringScheme = DEFAULT_SCORING) -> MismatchReport:
    """Align a candidate text against the reference and classify the result."""
    alphabet = build_alphabet([candidate, reference], AlphabetPolicy(min_frequency=1))
    aln = needleman_wunsch(
        normalize_text(candidate, alphabet, "candidate"),
        normalize_text(reference, alphabet, "reference"),
        scoring,
    )
    return classify_mismatches(aln, scoring)


def summary_table(rows: dict[str, MismatchReport]) -> str:
    return "\n".join([TABLE_HEADER] + [report.table_row(name) for name, report in rows.items()]) + "\n"


def describe(m: Mismatch) -> str:
    def show(ch):
        return "░" if ch is None else display_char(ord(ch))

    flag = " (review)" if m.review else ""
    return f"column {m.column}: {show(m.candidate)} vs {show(m.reference)}{flag}"
