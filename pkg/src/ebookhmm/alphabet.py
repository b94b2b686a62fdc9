"""Emission alphabet, text normalization and transcription loading."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigurationError, CorpusError, ModelFormatError

SPACE = 0x20
LINE_FEED = 0x0A
FORM_FEED = 0x0C
MANDATORY = frozenset({SPACE, LINE_FEED, FORM_FEED})

ALPHABET_FORMAT = "ebookhmm-alphabet/1"


@dataclass(frozen=True)
class Alphabet:
    """Ordered set of code points; ordinals index emission distributions."""

    symbols: tuple[int, ...]
    index: dict[int, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        symbols = tuple(int(s) for s in self.symbols)
        if len(set(symbols)) != len(symbols):
            raise ConfigurationError("alphabet symbols must be unique")
        missing = MANDATORY.difference(symbols)
        if missing:
            raise ConfigurationError(
                "alphabet lacks mandatory code points: "
                + ", ".join(f"U+{cp:04X}" for cp in sorted(missing))
            )
        object.__setattr__(self, "symbols", symbols)
        object.__setattr__(self, "index", {cp: i for i, cp in enumerate(symbols)})

    def __len__(self):
        return len(self.symbols)

    def __hash__(self):
        return hash(self.symbols)

    @property
    def replacement_index(self) -> int:
        return self.index[SPACE]

    def ordinal(self, char: str) -> int:
        return self.index.get(ord(char), self.replacement_index)

    def decode(self, ordinals: Iterable[int]) -> str:
        return "".join(chr(self.symbols[i]) for i in ordinals)

    def to_json(self) -> str:
        return json.dumps({"format": ALPHABET_FORMAT, "symbols": list(self.symbols)}) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "Alphabet":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ModelFormatError(f"alphabet file is not valid JSON at byte offset {exc.pos}") from exc
        if not isinstance(data, dict) or data.get("format") != ALPHABET_FORMAT:
            found = data.get("format") if isinstance(data, dict) else None
            raise ModelFormatError(f"unsupported alphabet format {found!r}, expected {ALPHABET_FORMAT!r}")
        return cls(tuple(data["symbols"]))

    def save(self, path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Alphabet":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise CorpusError(f"cannot read alphabet file {path}: {exc.strerror}") from exc
        return cls.from_json(text)


@dataclass(frozen=True)
class AlphabetPolicy:
    mode: str = "corpus-derived"  # or "explicit-list"
    min_frequency: int = 1
    mandatory: frozenset[int] = MANDATORY
    symbols: tuple[int, ...] = ()

    def __post_init__(self):
        if self.mode not in ("corpus-derived", "explicit-list"):
            raise ConfigurationError(f"unknown alphabet mode {self.mode!r}")
        if self.min_frequency < 1:
            raise ConfigurationError("min_frequency must be >= 1")
        object.__setattr__(self, "mandatory", frozenset(self.mandatory) | MANDATORY)


@dataclass(frozen=True, eq=False)
class CharSequence:
    """A transcription mapped onto alphabet ordinals."""

    items: np.ndarray
    alphabet: Alphabet
    source_id: str = ""
    original_length: int = 0

    def __post_init__(self):
        items = np.ascontiguousarray(self.items, dtype=np.int64)
        if items.ndim != 1:
            raise ConfigurationError("sequence items must be one-dimensional")
        if items.size and (items.min() < 0 or items.max() >= len(self.alphabet)):
            raise ConfigurationError("sequence ordinal outside the alphabet")
        items.setflags(write=False)
        object.__setattr__(self, "items", items)

    def __len__(self):
        return int(self.items.size)

    def __eq__(self, other):
        if not isinstance(other, CharSequence):
            return NotImplemented
        return self.alphabet == other.alphabet and np.array_equal(self.items, other.items)

    __hash__ = None

    @property
    def text(self) -> str:
        return self.alphabet.decode(self.items)

    @classmethod
    def from_ordinals(cls, ordinals, alphabet: Alphabet, source_id: str = "") -> "CharSequence":
        items = np.asarray(ordinals, dtype=np.int64)
        return cls(items, alphabet, source_id, int(items.size))


def collapse_line_endings(text: str) -> str:
    return text.replace("\r\n", "\n").replace("\r", "\n")


def build_alphabet(corpus: Sequence[str], policy: AlphabetPolicy = AlphabetPolicy()) -> Alphabet:
    """Assemble an alphabet from sample texts or an explicit symbol list.

    In corpus-derived mode every code point seen at least ``min_frequency``
    times (after line-ending collapsing) is kept. Mandatory code points are
    always added and the result is sorted by code point.
    """
    if policy.mode == "explicit-list":
        chosen = set(policy.symbols)
    else:
        if not corpus:
            raise ConfigurationError("corpus-derived alphabet needs at least one text")
        counts = Counter()
        for text in corpus:
            counts.update(map(ord, collapse_line_endings(text)))
        chosen = {cp for cp, n in counts.items() if n >= policy.min_frequency}
    return Alphabet(tuple(sorted(chosen | policy.mandatory)))


def normalize_text(raw: str, alphabet: Alphabet, source_id: str = "") -> CharSequence:
    """Map text onto alphabet ordinals; unknown code points become spaces."""
    text = collapse_line_endings(raw)
    index = alphabet.index
    fallback = alphabet.replacement_index
    items = np.fromiter((index.get(ord(ch), fallback) for ch in text), dtype=np.int64, count=len(text))
    return CharSequence(items, alphabet, source_id, len(raw))


def read_text(path) -> str:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise CorpusError(f"cannot read {path}: {exc.strerror or exc}") from exc
    try:
        return data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise CorpusError(f"{path} is not valid UTF-8 (byte offset {exc.start})") from exc


def load_corpus(paths: Sequence, alphabet: Alphabet) -> list[CharSequence]:
    return [normalize_text(read_text(p), alphabet, Path(p).stem) for p in paths]


def default_alphabet() -> Alphabet:
    """The 107-symbol alphabet shipped with the package."""
    text = resources.files("ebookhmm").joinpath("data/default_alphabet.json").read_text(encoding="utf-8")
    return Alphabet.from_json(text)
