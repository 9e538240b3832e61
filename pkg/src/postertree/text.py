"""Word, sentence and stem helpers used by summarization and agents."""

from __future__ import annotations

import re
from functools import lru_cache

STOPWORDS = frozenset(
    """
    a about above after again against all also am an and any are as at be because been
    before being below between both but by can could did do does doing down during each
    few for from further had has have having he her here hers him his how i if in into is
    it its itself just may me might more most must my no nor not now of off on once only
    or other our ours out over own same she should so some such than that the their theirs
    them then there these they this those through to too under until up upon us very was
    we were what when where which while who whom why will with within without would you
    your yours via per et al
    """.split()
)

_TOKEN = re.compile(r"[A-Za-z0-9]+(?:['\-][A-Za-z0-9]+)*")
_SENTENCE_END = re.compile(r"[.!?]+[\"')\]]*\s+")
_ABBREVIATIONS = frozenset(
    {"fig", "figs", "eq", "eqs", "e.g", "i.e", "al", "vs", "cf", "sec", "tab", "no", "approx", "resp", "etc"}
)
# Ordered longest-first so "ations" wins over "s".
_SUFFIXES = (
    ("ational", "ate"),
    ("ations", ""),
    ("ation", ""),
    ("ments", ""),
    ("ment", ""),
    ("ings", ""),
    ("ing", ""),
    ("edly", ""),
    ("ies", "y"),
    ("ed", ""),
    ("es", ""),
    ("ly", ""),
    ("s", ""),
)


def normalize_ws(text: str) -> str:
    return " ".join(text.split())


def word_count(text: str) -> int:
    return len(text.split())


def tokens(text: str) -> list[str]:
    return [t.lower() for t in _TOKEN.findall(text)]


@lru_cache(maxsize=65536)
def stem(token: str) -> str:
    word = token.lower()
    for suffix, repl in _SUFFIXES:
        if word.endswith(suffix) and len(word) - len(suffix) >= 3:
            return word[: len(word) - len(suffix)] + repl
    return word


def content_stems(text: str) -> list[str]:
    """Stems of the non-stopword tokens of ``text``, in order."""
    return [stem(t) for t in tokens(text) if t not in STOPWORDS]


def split_sentences(text: str) -> list[str]:
    """Split a paragraph into sentences.

    A boundary is terminal punctuation followed by whitespace, unless the
    preceding word is a known abbreviation ("Fig.", "e.g.") or the next
    character is lowercase.
    """
    text = normalize_ws(text)
    if not text:
        return []
    sentences: list[str] = []
    start = 0
    for match in _SENTENCE_END.finditer(text):
        end = match.end()
        if end >= len(text):
            break
        head = text[start : match.start()]
        last_word = head.rsplit(" ", 1)[-1].lower().rstrip(".")
        if last_word in _ABBREVIATIONS:
            continue
        if text[end].islower():
            continue
        sentences.append(text[start:end].strip())
        start = end
    tail = text[start:].strip()
    if tail:
        sentences.append(tail)
    return sentences


def redundant_items(items: list[str], overlap: float = 0.7) -> list[int]:
    """Indices of items whose stems are mostly covered by earlier items."""
    seen: set[str] = set()
    redundant = []
    for i, item in enumerate(items):
        stems = set(content_stems(item))
        if stems and i > 0 and len(stems & seen) / len(stems) >= overlap:
            redundant.append(i)
        seen |= stems
    return redundant


def duplicate_stem_ratio(items: list[str]) -> float:
    """Fraction of items that repeat earlier items (see ``redundant_items``)."""
    if len(items) < 2:
        return 0.0
    return len(redundant_items(items)) / len(items)
