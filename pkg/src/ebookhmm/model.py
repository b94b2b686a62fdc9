"""Plan-7 profile HMM: parameters, construction from a marked alignment, I/O.

Layout
------
Positions run ``k = 0..M``. Position 0 holds the begin state ``b`` (stored
in the match slot) and the first insert state ``i0``. Transitions live in
an ``(M + 1, 3, 3)`` array indexed ``[k, source, target]`` with kinds
``MATCH, INSERT, DELETE``:

* source ``MATCH``/``INSERT``/``DELETE`` at ``k`` is ``m_k`` (``b`` when
  ``k == 0``), ``i_k`` or ``d_k``;
* target ``MATCH`` is ``m_{k+1}`` (the end state ``e`` when ``k == M``),
  target ``INSERT`` is ``i_k``, target ``DELETE`` is ``d_{k+1}``.

Arcs that do not exist (``d_0`` entirely, ``* -> d_{M+1}``, and the Plan-7
exclusions ``i -> d`` / ``d -> i``) hold ``-inf``. All values are natural
logarithms.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .alphabet import Alphabet
from .errors import CorpusError, ModelConstructionError, ModelFormatError
from .msa import MarkedAlignment
from .pairwise import GAP

MATCH, INSERT, DELETE = 0, 1, 2
KIND_NAMES = ("m", "i", "d")

FORMAT_VERSION = 1
MODEL_FORMAT = "ebookhmm-profile-hmm"

NORMALIZATION_TOL = 1e-9


def allowed_arcs(M: int) -> np.ndarray:
    """Boolean mask of the arcs a Plan-7 model of length ``M`` may carry."""
    mask = np.zeros((M + 1, 3, 3), dtype=bool)
    mask[:, MATCH, :] = True
    mask[:, INSERT, MATCH] = True
    mask[:, INSERT, INSERT] = True
    mask[1:, DELETE, MATCH] = True
    mask[1:, DELETE, DELETE] = True
    mask[M, :, DELETE] = False
    return mask


def state_name(kind: int, k: int, M: int) -> str:
    if kind == MATCH and k == 0:
        return "b"
    return f"{KIND_NAMES[kind]}{k}"


@dataclass(frozen=True, eq=False)
class PseudocountConfig:
    emission_pseudocount: float = 1.0
    transition_pseudocount: float = 1.0

    def __post_init__(self):
        if not (self.emission_pseudocount > 0 and self.transition_pseudocount > 0):
            raise ModelConstructionError("pseudocounts must be positive")


@dataclass(frozen=True, eq=False)
class ProfileHmm:
    alphabet: Alphabet
    match_emissions: np.ndarray  # (M, S)
    insert_emissions: np.ndarray  # (M + 1, S)
    transitions: np.ndarray  # (M + 1, 3, 3)

    def __post_init__(self):
        for name in ("match_emissions", "insert_emissions", "transitions"):
            arr = np.array(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        M = self.match_emissions.shape[0]
        S = len(self.alphabet)
        if self.match_emissions.shape != (M, S) or self.insert_emissions.shape != (M + 1, S):
            raise ModelFormatError(
                f"emission tables have shapes {self.match_emissions.shape} / {self.insert_emissions.shape}, "
                f"expected ({M}, {S}) / ({M + 1}, {S})"
            )
        if self.transitions.shape != (M + 1, 3, 3):
            raise ModelFormatError(f"transition table has shape {self.transitions.shape}, expected ({M + 1}, 3, 3)")

    @property
    def M(self) -> int:
        return self.match_emissions.shape[0]

    def __eq__(self, other):
        if not isinstance(other, ProfileHmm):
            return NotImplemented
        return (
            self.alphabet == other.alphabet
            and np.array_equal(self.match_emissions, other.match_emissions)
            and np.array_equal(self.insert_emissions, other.insert_emissions)
            and np.array_equal(self.transitions, other.transitions)
        )

    __hash__ = None

    def padded_match_emissions(self) -> np.ndarray:
        """Match emissions with a ``-inf`` row 0 so rows index by position."""
        out = np.full((self.M + 1, len(self.alphabet)), -np.inf)
        out[1:] = self.match_emissions
        return out


# ---------------------------------------------------------------------------
# construction


def _row_path(row: np.ndarray, is_match: np.ndarray) -> list[tuple[int, int, int]]:
    """State walk ``(kind, k, ordinal)`` of one alignment row (no b/e)."""
    path = []
    k = 0
    for sym, match in zip(row.tolist(), is_match.tolist()):
        if match:
            k += 1
            path.append((MATCH, k, sym) if sym != GAP else (DELETE, k, GAP))
        elif sym != GAP:
            path.append((INSERT, k, sym))
    return path


def _doctor(path: list[tuple[int, int, int]]) -> list[tuple[int, int, int]]:
    """Rewrite ``d -> i`` and ``i -> d`` steps, which Plan-7 cannot express.

    ``d_k i_k`` becomes ``m_k`` emitting the first inserted symbol; ``i_k
    d_{k+1}`` becomes ``m_{k+1}`` emitting the last inserted symbol.
    """
    path = list(path)
    changed = True
    while changed:
        changed = False
        for n in range(len(path) - 1):
            (ka, pa, sa), (kb, pb, sb) = path[n], path[n + 1]
            if ka == DELETE and kb == INSERT:
                path[n : n + 2] = [(MATCH, pa, sb)]
                changed = True
                break
            if ka == INSERT and kb == DELETE:
                path[n : n + 2] = [(MATCH, pb, sa)]
                changed = True
                break
    return path


def count_events(marked: MarkedAlignment):
    """Emission and transition counts implied by the marked alignment."""
    msa = marked.alignment
    M = int(marked.match_columns.size)
    S = len(msa.alphabet)
    is_match = marked.is_match
    match_counts = np.zeros((M + 1, S))
    insert_counts = np.zeros((M + 1, S))
    trans_counts = np.zeros((M + 1, 3, 3))
    for row in msa.rows:
        prev_kind, prev_k = MATCH, 0
        for kind, k, sym in _doctor(_row_path(row, is_match)):
            trans_counts[prev_k, prev_kind, kind] += 1
            if kind == MATCH:
                match_counts[k, sym] += 1
            elif kind == INSERT:
                insert_counts[k, sym] += 1
            prev_kind, prev_k = kind, k
        trans_counts[M, prev_kind, MATCH] += 1
    return match_counts[1:], insert_counts, trans_counts


def estimate(match_counts, insert_counts, trans_counts, alphabet: Alphabet, pseudo: PseudocountConfig) -> ProfileHmm:
    """Posterior-mean parameters from expected or observed counts."""
    M = match_counts.shape[0]
    S = len(alphabet)
    a = pseudo.emission_pseudocount
    me = (match_counts + a) / (match_counts.sum(axis=1, keepdims=True) + S * a)
    ie = (insert_counts + a) / (insert_counts.sum(axis=1, keepdims=True) + S * a)
    mask = allowed_arcs(M)
    tc = np.where(mask, trans_counts + pseudo.transition_pseudocount, 0.0)
    totals = tc.sum(axis=2, keepdims=True)
    tp = np.divide(tc, totals, out=np.zeros_like(tc), where=totals > 0)
    with np.errstate(divide="ignore"):
        return ProfileHmm(alphabet, np.log(me), np.log(ie), np.log(tp))


def build_model(marked: MarkedAlignment, pseudo: PseudocountConfig = PseudocountConfig()) -> ProfileHmm:
    """Estimate a profile HMM from a multiple alignment with match columns marked.

    Each row is walked column by column: a residue in a match column is a
    match emission, a gap there a delete visit, and a residue in an unmarked
    column an emission of the insert state that follows the last match
    column. Emission and transition probabilities are count + pseudocount
    normalized over each state's Plan-7 arcs.
    """
    if marked.match_columns.size == 0:
        raise ModelConstructionError("alignment has no match columns; cannot build a model")
    counts = count_events(marked)
    return estimate(*counts, marked.alignment.alphabet, pseudo)


# ---------------------------------------------------------------------------
# validation


def validate_model(model: ProfileHmm) -> list[str]:
    """Describe every invariant violation; an empty list means the model is valid."""
    problems = []
    M = model.M
    with np.errstate(over="ignore"):
        for name, table, first in (
            ("m", model.match_emissions, 1),
            ("i", model.insert_emissions, 0),
        ):
            sums = np.exp(table).sum(axis=1)
            for r in np.flatnonzero(np.abs(sums - 1.0) > NORMALIZATION_TOL):
                problems.append(f"emission row {name}{r + first}: sums to {sums[r]:.12g} (residual {sums[r] - 1:+.3g})")
        probs = np.exp(model.transitions)
    mask = allowed_arcs(M)
    for k in range(M + 1):
        for kind in (MATCH, INSERT, DELETE):
            if kind == DELETE and k == 0:
                continue
            total = probs[k, kind].sum()
            if abs(total - 1.0) > NORMALIZATION_TOL:
                problems.append(
                    f"transitions out of {state_name(kind, k, M)}: sum to {total:.12g} (residual {total - 1:+.3g})"
                )
    for k, src, dst in zip(*np.nonzero(~mask & (probs > 0))):
        if (src, dst) in ((INSERT, DELETE), (DELETE, INSERT)):
            problems.append(
                f"Plan-7 violation at position {k}: arc {KIND_NAMES[src]}->{KIND_NAMES[dst]} has probability {probs[k, src, dst]:.3g}"
            )
        else:
            problems.append(f"nonexistent arc {state_name(src, k, M)}->{KIND_NAMES[dst]} at position {k} has probability {probs[k, src, dst]:.3g}")
    if np.any(np.isnan(model.transitions)) or np.any(np.isnan(model.match_emissions)) or np.any(np.isnan(model.insert_emissions)):
        problems.append("model contains NaN values")
    return problems


# ---------------------------------------------------------------------------
# serialization


def _encode(arr: np.ndarray):
    return [None if math.isinf(v) and v < 0 else v for v in arr.ravel().tolist()]


def _decode(values, shape) -> np.ndarray:
    return np.array([-np.inf if v is None else v for v in values], dtype=np.float64).reshape(shape)


def model_to_json(model: ProfileHmm) -> str:
    """Canonical JSON text; ``-inf`` log-probabilities are written as null."""
    doc = {
        "format": MODEL_FORMAT,
        "format_version": FORMAT_VERSION,
        "alphabet": list(model.alphabet.symbols),
        "M": model.M,
        "match_emissions": _encode(model.match_emissions),
        "insert_emissions": _encode(model.insert_emissions),
        "transitions": _encode(model.transitions),
    }
    return json.dumps(doc, allow_nan=False) + "\n"


def model_from_json(text: str) -> ProfileHmm:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"model file is not valid JSON (byte offset {len(text[: exc.pos].encode('utf-8'))}): {exc.msg}") from exc
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise ModelFormatError("not a profile HMM model file")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported model format version: found {version}, expected {FORMAT_VERSION}")
    alphabet = Alphabet(tuple(doc["alphabet"]))
    M = int(doc["M"])
    S = len(alphabet)
    for key, rows in (("match_emissions", M), ("insert_emissions", M + 1)):
        n = len(doc[key])
        if n != rows * S:
            raise ModelFormatError(
                f"{key} holds {n} values; alphabet size {S} and M={M} require {rows * S}"
            )
    if len(doc["transitions"]) != (M + 1) * 9:
        raise ModelFormatError(f"transitions hold {len(doc['transitions'])} values, expected {(M + 1) * 9}")
    return ProfileHmm(
        alphabet,
        _decode(doc["match_emissions"], (M, S)),
        _decode(doc["insert_emissions"], (M + 1, S)),
        _decode(doc["transitions"], (M + 1, 3, 3)),
    )


def save_model(model: ProfileHmm, path) -> None:
    Path(path).write_text(model_to_json(model), encoding="utf-8")


def load_model(path) -> ProfileHmm:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CorpusError(f"cannot read model file {path}: {exc.strerror or exc}") from exc
    return model_from_json(text)
