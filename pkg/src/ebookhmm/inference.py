"""Forward, backward, Viterbi, Baum-Welch and consensus for a profile HMM.

Dynamic-programming tables are stored band-compressed: row ``t`` (number
of symbols emitted so far) keeps only model positions ``lo[t]..hi[t]``.
An unbanded computation is the band ``lo = 0, hi = M`` on every row.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numba
import numpy as np

from .alphabet import CharSequence
from .errors import AlphabetMismatchError, BandingError, ConfigurationError
from .model import DELETE, INSERT, MATCH, ProfileHmm, PseudocountConfig, allowed_arcs, estimate

log = logging.getLogger(__name__)

NEG_INF = -np.inf

DEFAULT_HALF_WIDTH = 64
BAND_RETRIES = 3


@dataclass(frozen=True, eq=False)
class Band:
    """Per-row windows ``[lo[t], hi[t]]`` of model positions, ``t = 0..T``."""

    lo: np.ndarray
    hi: np.ndarray
    half_width: int = 0

    def __post_init__(self):
        lo = np.ascontiguousarray(self.lo, dtype=np.int64)
        hi = np.ascontiguousarray(self.hi, dtype=np.int64)
        if lo.shape != hi.shape or lo.ndim != 1 or lo.size == 0:
            raise ConfigurationError("band bounds must be equal-length 1-D arrays")
        if np.any(lo > hi):
            raise ConfigurationError("band has an empty window")
        if np.any(np.diff(lo) < 0) or np.any(np.diff(hi) < 0):
            raise ConfigurationError("band windows must be monotone non-decreasing")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def width(self) -> int:
        return int((self.hi - self.lo).max()) + 1

    @classmethod
    def full(cls, T: int, M: int) -> "Band":
        return cls(np.zeros(T + 1, dtype=np.int64), np.full(T + 1, M, dtype=np.int64), M)

    @classmethod
    def from_centers(cls, centers, M: int, half_width: int) -> "Band":
        """Band around model positions ``centers[t-1]`` of each emitted symbol.

        Row 0 is anchored at position 0 and the last row reaches position M,
        so every band admits at least the begin and end of a path.
        """
        centers = np.asarray(centers, dtype=np.int64)
        c = np.concatenate([[0], np.maximum.accumulate(centers) if centers.size else centers])
        lo = np.clip(c - half_width, 0, M)
        hi = np.clip(c + half_width, 0, M)
        lo[0] = 0
        hi[-1] = M
        hi = np.maximum.accumulate(hi)
        lo = np.minimum(lo, hi)
        return cls(lo, hi, half_width)

    @classmethod
    def diagonal(cls, T: int, M: int, half_width: int) -> "Band":
        centers = np.rint(np.arange(1, T + 1) * (M / max(T, 1))).astype(np.int64)
        return cls.from_centers(centers, M, half_width)


@dataclass(frozen=True)
class StatePath:
    """Visited states as ``(kind, position, ordinal)``; kind is
    ``"begin"``, ``"match"``, ``"insert"``, ``"delete"`` or ``"end"``."""

    states: tuple[tuple[str, int, int | None], ...]
    log_probability: float

    def emitted(self) -> list[int]:
        return [o for _, _, o in self.states if o is not None]

    def to_jsonl(self) -> str:
        return "".join(
            json.dumps({"state": kind, "k": k, "symbol": sym}) + "\n" for kind, k, sym in self.states
        )


@dataclass
class TrainingTrace:
    """Scores of the starting model and of the model after each epoch.

    ``log_likelihood`` is the data log-likelihood. ``objective`` adds the
    Dirichlet log-prior implied by the pseudocounts; that penalized
    likelihood is what each EM step cannot decrease.
    """

    log_likelihood: list[float] = field(default_factory=list)
    objective: list[float] = field(default_factory=list)
    epochs: int = 0
    converged: bool = False

    def to_json(self) -> str:
        return json.dumps(
            {
                "epochs": [
                    {"epoch": i, "log_likelihood": ll, "objective": obj}
                    for i, (ll, obj) in enumerate(zip(self.log_likelihood, self.objective))
                ],
                "epochs_run": self.epochs,
                "converged": self.converged,
            },
            indent=1,
        ) + "\n"


# ---------------------------------------------------------------------------
# kernels


@numba.njit(cache=True, inline="always")
def _lse3(a, b, c):
    m = a
    if b > m:
        m = b
    if c > m:
        m = c
    if m == -np.inf:
        return -np.inf
    return m + np.log(np.exp(a - m) + np.exp(b - m) + np.exp(c - m))


@numba.njit(cache=True, inline="always")
def _at(tab, lo, hi, t, k):
    if k < lo[t] or k > hi[t]:
        return -np.inf
    return tab[t, k - lo[t]]


@numba.njit(cache=True)
def _forward_kernel(em_m, em_i, tr, seq, lo, hi, width, viterbi):
    T = seq.shape[0]
    M = tr.shape[0] - 1
    FM = np.full((T + 1, width), -np.inf)
    FI = np.full((T + 1, width), -np.inf)
    FD = np.full((T + 1, width), -np.inf)
    for t in range(T + 1):
        for k in range(lo[t], hi[t] + 1):
            c = k - lo[t]
            if t == 0 and k == 0:
                FM[0, 0] = 0.0
            elif t >= 1 and k >= 1:
                a = _at(FM, lo, hi, t - 1, k - 1) + tr[k - 1, 0, 0]
                b = _at(FI, lo, hi, t - 1, k - 1) + tr[k - 1, 1, 0]
                d = _at(FD, lo, hi, t - 1, k - 1) + tr[k - 1, 2, 0]
                if viterbi:
                    FM[t, c] = em_m[k, seq[t - 1]] + max(a, b, d)
                else:
                    FM[t, c] = em_m[k, seq[t - 1]] + _lse3(a, b, d)
            if t >= 1:
                a = _at(FM, lo, hi, t - 1, k) + tr[k, 0, 1]
                b = _at(FI, lo, hi, t - 1, k) + tr[k, 1, 1]
                d = _at(FD, lo, hi, t - 1, k) + tr[k, 2, 1]
                if viterbi:
                    FI[t, c] = em_i[k, seq[t - 1]] + max(a, b, d)
                else:
                    FI[t, c] = em_i[k, seq[t - 1]] + _lse3(a, b, d)
            if k >= 1:
                a = _at(FM, lo, hi, t, k - 1) + tr[k - 1, 0, 2]
                b = _at(FI, lo, hi, t, k - 1) + tr[k - 1, 1, 2]
                d = _at(FD, lo, hi, t, k - 1) + tr[k - 1, 2, 2]
                if viterbi:
                    FD[t, c] = max(a, b, d)
                else:
                    FD[t, c] = _lse3(a, b, d)
    a = _at(FM, lo, hi, T, M) + tr[M, 0, 0]
    b = _at(FI, lo, hi, T, M) + tr[M, 1, 0]
    d = _at(FD, lo, hi, T, M) + tr[M, 2, 0]
    if viterbi:
        total = max(a, b, d)
    else:
        total = _lse3(a, b, d)
    return total, FM, FI, FD


@numba.njit(cache=True)
def _backward_kernel(em_m, em_i, tr, seq, lo, hi, width):
    T = seq.shape[0]
    M = tr.shape[0] - 1
    BM = np.full((T + 1, width), -np.inf)
    BI = np.full((T + 1, width), -np.inf)
    BD = np.full((T + 1, width), -np.inf)
    for t in range(T, -1, -1):
        for k in range(hi[t], lo[t] - 1, -1):
            c = k - lo[t]
            for s in range(3):
                # next match (or end), next insert, next delete
                if k == M:
                    to_m = tr[M, s, 0] if t == T else -np.inf
                elif t < T:
                    to_m = tr[k, s, 0] + em_m[k + 1, seq[t]] + _at(BM, lo, hi, t + 1, k + 1)
                else:
                    to_m = -np.inf
                if t < T:
                    to_i = tr[k, s, 1] + em_i[k, seq[t]] + _at(BI, lo, hi, t + 1, k)
                else:
                    to_i = -np.inf
                if k < M:
                    to_d = tr[k, s, 2] + _at(BD, lo, hi, t, k + 1)
                else:
                    to_d = -np.inf
                v = _lse3(to_m, to_i, to_d)
                if s == 0:
                    BM[t, c] = v
                elif s == 1:
                    BI[t, c] = v
                else:
                    BD[t, c] = v
    return BM[0, 0], BM, BI, BD


@numba.njit(cache=True)
def _expected_counts(em_m, em_i, tr, seq, lo, hi, FM, FI, FD, BM, BI, BD, total, cm, ci, ct):
    T = seq.shape[0]
    M = tr.shape[0] - 1
    for t in range(T + 1):
        for k in range(lo[t], hi[t] + 1):
            c = k - lo[t]
            if t >= 1:
                x = seq[t - 1]
                if k >= 1:
                    p = FM[t, c] + BM[t, c] - total
                    if p > -np.inf:
                        cm[k, x] += np.exp(p)
                p = FI[t, c] + BI[t, c] - total
                if p > -np.inf:
                    ci[k, x] += np.exp(p)
            for s in range(3):
                if s == 0:
                    f = FM[t, c]
                elif s == 1:
                    f = FI[t, c]
                else:
                    f = FD[t, c]
                if f == -np.inf:
                    continue
                if k == M:
                    if t == T:
                        p = f + tr[M, s, 0] - total
                        if p > -np.inf:
                            ct[M, s, 0] += np.exp(p)
                elif t < T:
                    p = f + tr[k, s, 0] + em_m[k + 1, seq[t]] + _at(BM, lo, hi, t + 1, k + 1) - total
                    if p > -np.inf:
                        ct[k, s, 0] += np.exp(p)
                if t < T:
                    p = f + tr[k, s, 1] + em_i[k, seq[t]] + _at(BI, lo, hi, t + 1, k) - total
                    if p > -np.inf:
                        ct[k, s, 1] += np.exp(p)
                if k < M:
                    p = f + tr[k, s, 2] + _at(BD, lo, hi, t, k + 1) - total
                    if p > -np.inf:
                        ct[k, s, 2] += np.exp(p)


# ---------------------------------------------------------------------------
# wrappers


def _prepare(model: ProfileHmm, seq: CharSequence, band: Band | None):
    if seq.alphabet != model.alphabet:
        raise AlphabetMismatchError(f"sequence {seq.source_id!r} uses a different alphabet than the model")
    T = len(seq)
    if band is None:
        band = Band.full(T, model.M)
    elif band.lo.size != T + 1:
        raise ConfigurationError(f"band covers {band.lo.size - 1} symbols, sequence has {T}")
    elif band.hi[-1] != model.M or band.lo[0] != 0:
        raise BandingError("band does not reach both ends of the model; retry with a wider band")
    return model.padded_match_emissions(), np.ascontiguousarray(model.insert_emissions), np.ascontiguousarray(model.transitions), seq.items, band


def _check(total: float, band: Band | None) -> float:
    if total == NEG_INF:
        if band is not None:
            raise BandingError(
                f"band (half width {band.half_width}) excludes every complete path; retry with a wider band"
            )
        raise BandingError("sequence has probability zero under the model")
    return float(total)


def forward(model: ProfileHmm, seq: CharSequence, band: Band | None = None) -> float:
    """Log-probability of ``seq`` summed over all state paths (inside ``band``)."""
    em_m, em_i, tr, x, b = _prepare(model, seq, band)
    total, *_ = _forward_kernel(em_m, em_i, tr, x, b.lo, b.hi, b.width, False)
    return _check(total, band)


def backward(model: ProfileHmm, seq: CharSequence, band: Band | None = None) -> float:
    em_m, em_i, tr, x, b = _prepare(model, seq, band)
    total, *_ = _backward_kernel(em_m, em_i, tr, x, b.lo, b.hi, b.width)
    return _check(total, band)


def forward_backward_tables(model: ProfileHmm, seq: CharSequence, band: Band | None = None):
    em_m, em_i, tr, x, b = _prepare(model, seq, band)
    ftotal, FM, FI, FD = _forward_kernel(em_m, em_i, tr, x, b.lo, b.hi, b.width, False)
    _check(ftotal, band)
    btotal, BM, BI, BD = _backward_kernel(em_m, em_i, tr, x, b.lo, b.hi, b.width)
    return ftotal, btotal, (FM, FI, FD), (BM, BI, BD), b


def viterbi(model: ProfileHmm, seq: CharSequence, band: Band | None = None) -> StatePath:
    """Most probable state path; ties prefer match, then delete, then insert."""
    em_m, em_i, tr, x, b = _prepare(model, seq, band)
    total, VM, VI, VD = _forward_kernel(em_m, em_i, tr, x, b.lo, b.hi, b.width, True)
    _check(total, band)
    lo, hi = b.lo, b.hi
    M, T = model.M, len(seq)
    tables = (VM, VI, VD)

    def at(kind, t, k):
        if k < lo[t] or k > hi[t]:
            return NEG_INF
        return tables[kind][t, k - lo[t]]

    def pick(cands):
        best = max(v for v, _ in cands)
        for v, kind in cands:
            if v == best:
                return kind
        raise AssertionError("unreachable")

    states = [("end", M + 1, None)]
    kind = pick([(at(s, T, M) + tr[M, s, 0], s) for s in (MATCH, DELETE, INSERT)])
    t, k = T, M
    while not (kind == MATCH and k == 0):
        if kind == MATCH:
            states.append(("match", k, int(x[t - 1])))
            prev = pick([(at(s, t - 1, k - 1) + tr[k - 1, s, 0], s) for s in (MATCH, DELETE, INSERT)])
            t, k = t - 1, k - 1
        elif kind == INSERT:
            states.append(("insert", k, int(x[t - 1])))
            prev = pick([(at(s, t - 1, k) + tr[k, s, 1], s) for s in (MATCH, DELETE, INSERT)])
            t = t - 1
        else:
            states.append(("delete", k, None))
            prev = pick([(at(s, t, k - 1) + tr[k - 1, s, 2], s) for s in (MATCH, DELETE, INSERT)])
            k = k - 1
        kind = prev
    states.append(("begin", 0, None))
    return StatePath(tuple(reversed(states)), float(total))


def decode_with_retry(
    fn: Callable, model: ProfileHmm, seq: CharSequence, centers=None, half_width: int = DEFAULT_HALF_WIDTH, retries: int = BAND_RETRIES
):
    """Run ``fn(model, seq, band)`` on a band, doubling its width on failure."""
    width = half_width
    for attempt in range(retries + 1):
        if centers is None:
            band = Band.diagonal(len(seq), model.M, width)
        else:
            band = Band.from_centers(centers, model.M, width)
        try:
            return fn(model, seq, band)
        except BandingError:
            if attempt == retries:
                raise
            log.info("banding failed for %s at half width %d; retrying", seq.source_id, width)
            width *= 2


def log_prior(model: ProfileHmm, pseudo: PseudocountConfig) -> float:
    """Dirichlet log-density (up to a constant) the pseudocounts stand for."""
    mask = allowed_arcs(model.M)
    trans = np.where(mask, model.transitions, 0.0)
    return float(
        pseudo.emission_pseudocount * (model.match_emissions.sum() + model.insert_emissions.sum())
        + pseudo.transition_pseudocount * trans.sum()
    )


def baum_welch(
    model: ProfileHmm,
    seqs: Sequence[CharSequence],
    max_epochs: int = 10,
    tol: float = 1e-6,
    pseudo: PseudocountConfig = PseudocountConfig(),
    bands: Sequence[Band | None] | None = None,
) -> tuple[ProfileHmm, TrainingTrace]:
    """Expectation maximization of all emission and transition parameters.

    Each epoch runs forward-backward on every sequence (in input order, so
    accumulation is reproducible) and re-estimates parameters from expected
    counts plus the pseudocounts. Training stops once the relative
    improvement of the objective falls below ``tol``.
    """
    if not seqs:
        raise ConfigurationError("Baum-Welch needs at least one sequence")
    if max_epochs < 1 or tol <= 0:
        raise ConfigurationError("max_epochs must be >= 1 and tol > 0")
    bands = list(bands) if bands is not None else [None] * len(seqs)
    trace = TrainingTrace()

    def e_step(hmm):
        M, S = hmm.M, len(hmm.alphabet)
        em_m = hmm.padded_match_emissions()
        em_i = np.ascontiguousarray(hmm.insert_emissions)
        tr = np.ascontiguousarray(hmm.transitions)
        cm = np.zeros((M + 1, S))
        ci = np.zeros((M + 1, S))
        ct = np.zeros((M + 1, 3, 3))
        ll = 0.0
        for seq, band in zip(seqs, bands):
            total, _, (FM, FI, FD), (BM, BI, BD), b = forward_backward_tables(hmm, seq, band)
            _expected_counts(em_m, em_i, tr, seq.items, b.lo, b.hi, FM, FI, FD, BM, BI, BD, total, cm, ci, ct)
            ll += total
        trace.log_likelihood.append(ll)
        trace.objective.append(ll + log_prior(hmm, pseudo))
        return cm, ci, ct

    current = model
    counts = e_step(current)
    for epoch in range(1, max_epochs + 1):
        cm, ci, ct = counts
        current = estimate(cm[1:], ci, ct, model.alphabet, pseudo)
        counts = e_step(current)
        trace.epochs = epoch
        prev, obj = trace.objective[-2], trace.objective[-1]
        log.info("epoch %d log-likelihood %.6f", epoch, trace.log_likelihood[-1])
        if abs(obj - prev) <= tol * abs(prev):
            trace.converged = True
            break
    return current, trace


# ---------------------------------------------------------------------------
# consensus


def consensus_path(model: ProfileHmm) -> list[tuple[int, int]]:
    """Best loop-free path over begin, match, delete and end states.

    Scored by transition probabilities alone; ties prefer match states.
    Returns the visited ``(kind, k)`` pairs for ``k = 1..M``.
    """
    tr = model.transitions
    M = model.M
    vm = np.full(M + 1, NEG_INF)
    vd = np.full(M + 1, NEG_INF)
    back = np.zeros((M + 1, 2), dtype=np.int8)
    vm[0] = 0.0
    for k in range(1, M + 1):
        from_m = vm[k - 1] + tr[k - 1, MATCH, MATCH]
        from_d = vd[k - 1] + tr[k - 1, DELETE, MATCH]
        vm[k], back[k, 0] = (from_m, MATCH) if from_m >= from_d else (from_d, DELETE)
        from_m = vm[k - 1] + tr[k - 1, MATCH, DELETE]
        from_d = vd[k - 1] + tr[k - 1, DELETE, DELETE]
        vd[k], back[k, 1] = (from_m, MATCH) if from_m >= from_d else (from_d, DELETE)
    end_m = vm[M] + tr[M, MATCH, MATCH]
    end_d = vd[M] + tr[M, DELETE, MATCH]
    kind = MATCH if end_m >= end_d else DELETE
    path = []
    for k in range(M, 0, -1):
        path.append((kind, k))
        kind = back[k, 0 if kind == MATCH else 1]
    return path[::-1]


def consensus(model: ProfileHmm, source_id: str = "consensus") -> CharSequence:
    """Modal-sequence estimate: argmax emissions along the consensus path."""
    best = np.argmax(model.match_emissions, axis=1)  # lowest ordinal wins ties
    items = [int(best[k - 1]) for kind, k in consensus_path(model) if kind == MATCH]
    return CharSequence.from_ordinals(items, model.alphabet, source_id)


def match_probabilities(model: ProfileHmm) -> np.ndarray:
    """Probability that a sequence drawn from the model visits ``m_k`` (k=1..M).

    Complement of the probability of visiting ``d_k``; every path passes
    through exactly one of the two at each position.
    """
    p = np.exp(model.transitions)
    M = model.M
    pm = np.zeros(M + 1)
    pd = np.zeros(M + 1)
    pm[0] = 1.0
    for k in range(M):
        into_i = pm[k] * p[k, MATCH, INSERT] + pd[k] * p[k, DELETE, INSERT]
        stay = p[k, INSERT, INSERT]
        leave = 1.0 / (1.0 - stay) if stay < 1 else 0.0
        pm[k + 1] = pm[k] * p[k, MATCH, MATCH] + pd[k] * p[k, DELETE, MATCH] + into_i * p[k, INSERT, MATCH] * leave
        pd[k + 1] = pm[k] * p[k, MATCH, DELETE] + pd[k] * p[k, DELETE, DELETE] + into_i * p[k, INSERT, DELETE] * leave
    return pm[1:]


CONSENSUS_MATCH = "consensus-match"
INSERTION = "insertion"
AFTER_DELETION = "after-deletion"


def annotate_alignment(model: ProfileHmm, seq: CharSequence, band: Band | None = None) -> list[str]:
    """Label each character by the Viterbi state that emitted it.

    A match emission directly preceded by one or more delete states is
    labelled ``after-deletion``.
    """
    path = viterbi(model, seq, band)
    labels = []
    after_delete = False
    for kind, _, _ in path.states:
        if kind == "delete":
            after_delete = True
        elif kind == "match":
            labels.append(AFTER_DELETION if after_delete else CONSENSUS_MATCH)
            after_delete = False
        elif kind == "insert":
            labels.append(INSERTION)
            after_delete = False
    return labels
