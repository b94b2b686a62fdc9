"""Synthetic print editions of a known text, for end-to-end checks.

Each edition re-typesets the ground truth with its own line width, page
height, running header and page numbering, hyphenates some words at line
ends and applies character-level transcription noise.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

HEADERS = (
    "THE LANTERN KEEPER OF WESTHAVEN",
    "A CHRONICLE OF THE MARSH ROAD",
    "MEMOIRS OF A QUIET PARISH",
    "THE HOUSE BY THE WEIR",
    "LETTERS FROM THE NORTH DOWNS",
    "AN ACCOUNT OF HOLLOWAY FARM",
    "THE MILLER AND HIS KIN",
    "SCENES OF PROVINCIAL LIFE",
    "THE ORCHARD YEARS",
    "RECOLLECTIONS OF AN USHER",
)

# OCR-style confusions; anything else is replaced by a random letter
CONFUSIONS = {
    "e": "co", "c": "eo", "o": "0ce", "a": "ao", "l": "1iI", "i": "l1!", "n": "nr",
    "m": "rn", "h": "b", "b": "h", "R": "E", "E": "F", "t": "f", "f": "t", "u": "n",
    "r": "n", ",": ".", ".": ",", "s": "a", "d": "cl", "g": "q", "y": "v",
}
LETTERS = "abcdefghijklmnopqrstuvwxyz"


@dataclass(frozen=True)
class EditionStyle:
    line_width: int
    page_height: int
    header: str
    first_page: int
    number_first: bool
    hyphenation_rate: float = 0.3

    @classmethod
    def default_series(cls, k: int, rng: np.random.Generator) -> list["EditionStyle"]:
        widths = rng.permutation(np.arange(48, 48 + 4 * max(k, 8), 4))[:k]
        heights = rng.permutation(np.arange(24, 24 + 3 * max(k, 8), 3))[:k]
        return [
            cls(
                line_width=int(widths[i]),
                page_height=int(heights[i]),
                header=HEADERS[i % len(HEADERS)] + ("" if i < len(HEADERS) else f" {i}"),
                first_page=int(rng.integers(1, 400)),
                number_first=bool(i % 2),
            )
            for i in range(k)
        ]


def add_noise(text: str, rate: float, rng: np.random.Generator) -> str:
    """Substitute, drop or duplicate non-newline characters at ``rate``."""
    if rate <= 0:
        return text
    out = []
    for ch in text:
        if ch != "\n" and rng.random() < rate:
            u = rng.random()
            if u < 0.7:
                pool = CONFUSIONS.get(ch, LETTERS)
                out.append(pool[int(rng.integers(len(pool)))])
            elif u < 0.85:
                continue
            else:
                out.append(ch + ch)
        else:
            out.append(ch)
    return "".join(out)


def wrap_paragraph(paragraph: str, width: int, hyphenation_rate: float, rng: np.random.Generator) -> list[str]:
    lines = []
    line = ""
    for word in paragraph.split(" "):
        candidate = word if not line else f"{line} {word}"
        if len(candidate) <= width or not line:
            line = candidate
            continue
        room = width - len(line) - 2  # space and hyphen
        if len(word) >= 6 and room >= 3 and rng.random() < hyphenation_rate:
            cut = int(min(room, len(word) - 3))
            if cut >= 3:
                lines.append(f"{line} {word[:cut]}-")
                line = word[cut:]
                continue
        lines.append(line)
        line = word
    lines.append(line)
    return lines


def typeset(text: str, style: EditionStyle, rng: np.random.Generator) -> str:
    lines = []
    for paragraph in text.split("\n"):
        lines.extend(wrap_paragraph(paragraph, style.line_width, style.hyphenation_rate, rng))
    pages = []
    for p, start in enumerate(range(0, len(lines), style.page_height)):
        body = "\n".join(lines[start : start + style.page_height])
        if p == 0:
            # a chapter's opening page carries no running header
            pages.append(body)
            continue
        number = style.first_page + p
        header = f"{number} {style.header}" if style.number_first else f"{style.header} {number}"
        pages.append(header + "\n" + body)
    return "\n\f".join(pages) + "\n"


def synthesize_editions(
    text: str,
    k: int = 7,
    noise_rate: float = 0.005,
    seed: int = 0,
    styles: list[EditionStyle] | None = None,
) -> tuple[list[str], list[EditionStyle]]:
    """Return ``k`` paginated, noisy transcriptions of ``text`` and their styles."""
    rng = np.random.default_rng(seed)
    styles = styles or EditionStyle.default_series(k, rng)
    body = text.rstrip("\n")
    editions = [typeset(add_noise(body, noise_rate, rng), style, rng) for style in styles]
    return editions, styles


def styles_json(styles: list[EditionStyle]) -> str:
    return json.dumps([asdict(s) for s in styles], indent=1) + "\n"
