"""Tree-level satisfaction check, and the optional six-criterion judge."""

from __future__ import annotations

import base64
import json
import logging
import re
import statistics
from dataclasses import dataclass
from importlib import resources
from typing import Any

from .errors import ScoreParseError
from .layout import OVERFLOW_TOL_IN, balance_score, count_overlaps, detect_overflow
from .poster import PosterTree

logger = logging.getLogger(__name__)

JUDGE_CRITERIA = ("element_quality", "layout_balance", "engagement", "clarity", "content_completeness", "logical_flow")


@dataclass(frozen=True)
class EvalThresholds:
    max_overflow_in: float = OVERFLOW_TOL_IN
    min_balance: float = 0.6
    min_density: float = 0.15
    max_density: float = 0.9

    def to_dict(self) -> dict[str, float]:
        return {
            "max_overflow_in": self.max_overflow_in,
            "min_balance": self.min_balance,
            "min_density": self.min_density,
            "max_density": self.max_density,
        }


@dataclass(frozen=True)
class EvalReport:
    overflow_total_in: float
    overflowing_nodes: tuple[tuple[str, float], ...]
    overlap_violations: int
    balance: float
    density: float
    satisfied: bool

    def to_dict(self) -> dict[str, Any]:
        return {
            "overflow_total_in": self.overflow_total_in,
            "overflowing_nodes": [list(p) for p in self.overflowing_nodes],
            "overlap_violations": self.overlap_violations,
            "balance": self.balance,
            "density": self.density,
            "satisfied": self.satisfied,
        }

    def summary(self) -> str:
        verdict = "satisfied" if self.satisfied else "NOT satisfied"
        return (
            f"{verdict}: overflow {self.overflow_total_in:.3f} in over {len(self.overflowing_nodes)} node(s), "
            f"{self.overlap_violations} overlap(s), balance {self.balance:.3f}, density {self.density:.3f} words/in^2"
        )


def panel_area_in2(tree: PosterTree) -> float:
    """Area of the top-level section panels (nested panels lie inside them)."""
    c = tree.canvas
    return sum(tree.layout.panel_of(s).region.area for s in tree.content.children[tree.root]) * c.area_in2


def eval_tree(tree: PosterTree, thresholds: EvalThresholds = EvalThresholds()) -> EvalReport:
    overflowing = []
    total = 0.0
    for nid in tree.content.bfs():
        over = detect_overflow(tree.content[nid], tree.layout, tree.canvas, tree.authors_for(nid)).overflow_in
        total += over
        if over > 0:
            overflowing.append((nid, over))
    overlaps = count_overlaps(tree.layout)
    balance = balance_score(tree.layout, tree.content, tree.canvas)
    area = panel_area_in2(tree)
    density = tree.content.total_words() / area if area > 0 else 0.0
    satisfied = (
        total <= thresholds.max_overflow_in
        and overlaps == 0
        and balance >= thresholds.min_balance
        and thresholds.min_density <= density <= thresholds.max_density
    )
    return EvalReport(total, tuple(overflowing), overlaps, balance, density, satisfied)


# ---------------------------------------------------------------------------
# judge
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class JudgeScore:
    element_quality: int
    layout_balance: int
    engagement: int
    clarity: int
    content_completeness: int
    logical_flow: int

    def __post_init__(self) -> None:
        for name in JUDGE_CRITERIA:
            value = getattr(self, name)
            if not isinstance(value, int) or not 1 <= value <= 5:
                raise ScoreParseError(f"{name}: score {value!r} outside 1..5")

    @property
    def overall(self) -> float:
        return statistics.fmean(getattr(self, n) for n in JUDGE_CRITERIA)

    def to_dict(self) -> dict[str, Any]:
        return {**{n: getattr(self, n) for n in JUDGE_CRITERIA}, "overall": self.overall}


def judge_prompt(version: str = "v1") -> str:
    return resources.files("postertree").joinpath(f"prompts/judge/{version}.txt").read_text(encoding="utf-8")


_BARE_INT = re.compile(r"^\s*(-?\d+)\s*$")


def parse_score(reply: Any, criterion: str) -> int:
    """Accept a bare integer or ``{"score": n}``; anything else is an error."""
    value: Any = reply
    if isinstance(reply, str):
        m = _BARE_INT.match(reply)
        if m:
            value = int(m.group(1))
        else:
            try:
                value = json.loads(reply)
            except json.JSONDecodeError as exc:
                raise ScoreParseError(f"{criterion}: unreadable reply {reply!r}") from exc
    if isinstance(value, dict):
        value = value.get("score")
    if isinstance(value, bool) or not isinstance(value, int):
        raise ScoreParseError(f"{criterion}: missing integer score")
    if not 1 <= value <= 5:
        raise ScoreParseError(f"{criterion}: score {value} outside 1..5")
    return value


def judge(poster: bytes, client: Any, media_type: str = "image/svg+xml", prompt_version: str = "v1") -> JudgeScore:
    """Score a rendered poster with six independent single-criterion calls.

    ``client`` needs a ``complete_text(messages)`` method.  Scores are never
    fed back into optimization.
    """
    template = judge_prompt(prompt_version)
    data_uri = f"data:{media_type};base64," + base64.b64encode(poster).decode("ascii")
    scores = {}
    for criterion in JUDGE_CRITERIA:
        messages = [
            {"role": "system", "content": template.replace("{criterion}", criterion.replace("_", " "))},
            {
                "role": "user",
                "content": [
                    {"type": "text", "text": f"Score the poster for {criterion.replace('_', ' ')}."},
                    {"type": "image_url", "image_url": {"url": data_uri}},
                ],
            },
        ]
        reply = client.complete_text(messages)
        scores[criterion] = parse_score(reply, criterion)
    return JudgeScore(**scores)
