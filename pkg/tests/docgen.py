"""Deterministic synthetic papers for tests and committed fixtures."""

from __future__ import annotations

import random
from typing import Any

SYLLABLES = "ka ri to me sa lo vi ne du pa ter mon gra sel fi bu quo lan der ix or ent al ic".split()
FUNCTION_WORDS = "the of and to in for with on by from that is are as we our this".split()


def _vocabulary(size: int = 1500) -> list[str]:
    rng = random.Random(12345)
    words: list[str] = []
    seen: set[str] = set()
    while len(words) < size:
        w = "".join(rng.choice(SYLLABLES) for _ in range(rng.randint(2, 4)))
        if w not in seen:
            seen.add(w)
            words.append(w)
    return words


WORDS = _vocabulary()
# Zipf-like weights so some terms recur, as in real prose
_WEIGHTS = [1.0 / (rank + 1) for rank in range(len(WORDS))]
FIGURE_IMAGE = "figs/plot.png"


def sentence(rng: random.Random, lo: int = 8, hi: int = 20) -> str:
    n = rng.randint(lo, hi)
    words = [rng.choice(FUNCTION_WORDS) if rng.random() < 0.3 else w for w in rng.choices(WORDS, _WEIGHTS, k=n)]
    words[0] = words[0].capitalize()
    return " ".join(words) + "."


def paragraph(rng: random.Random, words: int) -> str:
    out, n = [], 0
    while n < words:
        s = sentence(rng)
        out.append(s)
        n += len(s.split())
    return " ".join(out)


def random_document(
    seed: int,
    sections: tuple[int, int] = (2, 8),
    assets: tuple[int, int] = (0, 6),
    section_words: tuple[int, int] = (60, 400),
) -> dict[str, Any]:
    """A canonical document dict with random sections, subsections and assets."""
    rng = random.Random(seed)
    n_sections = rng.randint(*sections)
    n_assets = rng.randint(*assets)
    body: list[dict[str, Any]] = []
    paragraph_slots: list[int] = []
    for s in range(n_sections):
        body.append({"type": "heading", "level": 1, "text": f"Section {s + 1} {rng.choice(WORDS)}"})
        parts = 1 + (rng.random() < 0.3) * rng.randint(1, 2)
        total = rng.randint(*section_words)
        for p in range(parts):
            if p:
                body.append({"type": "heading", "level": 2, "text": f"Part {s + 1}.{p} {rng.choice(WORDS)}"})
            for _ in range(rng.randint(1, 3)):
                body.append({"type": "paragraph", "text": paragraph(rng, max(12, total // (2 * parts)))})
                paragraph_slots.append(len(body) - 1)
    asset_list: list[dict[str, Any]] = []
    inserts: dict[int, list[dict[str, Any]]] = {}
    figures = tables = 0
    for _ in range(n_assets):
        if rng.random() < 0.75:
            figures += 1
            aid = f"fig{figures}"
            w, h = rng.choice([(640, 480), (800, 400), (480, 640), (600, 600), (900, 300)])
            asset_list.append({"id": aid, "kind": "figure", "caption": f"Figure {figures}: {sentence(rng, 4, 8)}", "image": FIGURE_IMAGE, "size": [w, h]})
            ref_text = f"Figure {figures}"
            block_type = "figure"
        else:
            tables += 1
            aid = f"tab{tables}"
            rows, cols = rng.randint(2, 6), rng.randint(2, 5)
            cells = [[f"{rng.choice(WORDS)}" if r == 0 else f"{rng.randint(1, 99)}.{rng.randint(0, 9)}" for _ in range(cols)] for r in range(rows)]
            asset_list.append({"id": aid, "kind": "table", "caption": f"Table {tables}: {sentence(rng, 4, 8)}", "cells": cells})
            ref_text = f"Table {tables}"
            block_type = "table"
        at = rng.choice(paragraph_slots)
        body[at] = {"type": "paragraph", "text": body[at]["text"] + f" Results appear in {ref_text}."}
        inserts.setdefault(at, []).append({"type": block_type, "ref": aid})
    final_body = []
    for i, block in enumerate(body):
        final_body.append(block)
        final_body.extend(inserts.get(i, []))
    return {
        "schema": "pf-doc/1",
        "title": f"A study of {rng.choice(WORDS)} {rng.choice(WORDS)} for {rng.choice(WORDS)} posters",
        "authors": ["A. Author", "B. Writer"],
        "body": final_body,
        "assets": asset_list,
    }
