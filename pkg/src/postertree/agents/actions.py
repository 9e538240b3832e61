"""The closed action vocabulary agents exchange, and how actions are applied."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Any

from ..content import ContentNode, select_from_scored, score_sentences
from ..errors import SchemaError
from ..layout import MAX_FONT_PT, MIN_FONT_PT, LayoutPatch
from ..text import redundant_items, split_sentences, word_count

CONTENT, LAYOUT = "content", "layout"
SEVERITIES = ("info", "minor", "major")

# kind -> ordered (param name, type)
ACTION_PARAMS: dict[str, tuple[tuple[str, type], ...]] = {
    "ShrinkSummary": (("target_words", int),),
    "TightenBullets": (("n", int),),
    "DropBullet": (("index", int),),
    "ResizePanel": (("height_share_delta", float),),
    "AdjustFont": (("delta_pt", float),),
    "ResizeFigure": (("asset_id", str), ("scale", float)),
    "MoveAssetToSlot": (("asset_id", str), ("slot_id", str)),
    "SwapChildren": (("i", int), ("j", int)),
}
TEXT_ACTIONS = frozenset({"ShrinkSummary", "TightenBullets", "DropBullet"})
SPACE_ACTIONS = frozenset({"ResizePanel", "AdjustFont", "ResizeFigure"})
RESIZE_RANGE = (-0.5, 1.0)
FIGURE_SCALE_RANGE = (0.05, 1.0)


@dataclass(frozen=True)
class Action:
    kind: str
    params: tuple[tuple[str, Any], ...] = ()

    def __getitem__(self, key: str) -> Any:
        return dict(self.params)[key]

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind, **dict(self.params)}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Action":
        kind = d.get("kind")
        if kind not in ACTION_PARAMS:
            raise SchemaError("$.kind", f"unknown action {kind!r}")
        params = []
        for name, typ in ACTION_PARAMS[kind]:
            if name not in d:
                raise SchemaError(f"$.{name}", f"{kind} needs {name}")
            value = d[name]
            if typ is float and isinstance(value, int) and not isinstance(value, bool):
                value = float(value)
            if not isinstance(value, typ) or isinstance(value, bool):
                raise SchemaError(f"$.{name}", f"expected {typ.__name__}")
            if typ is float and not math.isfinite(value):
                raise SchemaError(f"$.{name}", "must be finite")
            params.append((name, value))
        return cls(kind, tuple(params))

    def __str__(self) -> str:
        args = ", ".join(f"{v!r}" if isinstance(v, str) else f"{v:g}" for _, v in self.params)
        return f"{self.kind}({args})"


def shrink_summary(target_words: int) -> Action:
    return Action("ShrinkSummary", (("target_words", int(target_words)),))


def tighten_bullets(n: int) -> Action:
    return Action("TightenBullets", (("n", int(n)),))


def drop_bullet(index: int) -> Action:
    return Action("DropBullet", (("index", int(index)),))


def resize_panel(delta: float) -> Action:
    return Action("ResizePanel", (("height_share_delta", float(delta)),))


def adjust_font(delta_pt: float) -> Action:
    return Action("AdjustFont", (("delta_pt", float(delta_pt)),))


def resize_figure(asset_id: str, scale: float) -> Action:
    return Action("ResizeFigure", (("asset_id", asset_id), ("scale", float(scale))))


def move_asset(asset_id: str, slot_id: str) -> Action:
    return Action("MoveAssetToSlot", (("asset_id", asset_id), ("slot_id", slot_id)))


def swap_children(i: int, j: int) -> Action:
    return Action("SwapChildren", (("i", int(i)), ("j", int(j))))


@dataclass(frozen=True)
class Issue:
    code: str
    severity: str
    metric: float = 0.0
    slot_id: str | None = None

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"code": self.code, "severity": self.severity, "metric": self.metric}
        if self.slot_id is not None:
            out["slot_id"] = self.slot_id
        return out

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Issue":
        if d.get("severity") not in SEVERITIES:
            raise SchemaError("$.severity", f"expected one of {SEVERITIES}")
        metric = d.get("metric", 0.0)
        if not isinstance(metric, (int, float)) or isinstance(metric, bool):
            raise SchemaError("$.metric", "expected a number")
        if not isinstance(d.get("code"), str):
            raise SchemaError("$.code", "expected a string")
        return cls(d["code"], d["severity"], float(metric), d.get("slot_id"))


@dataclass(frozen=True)
class Opinion:
    author: str
    issues: tuple[Issue, ...] = ()
    proposals: tuple[Action, ...] = ()
    rationale: str = ""

    def major(self, code: str) -> bool:
        return any(i.code == code and i.severity == "major" for i in self.issues)

    def to_dict(self) -> dict[str, Any]:
        return {
            "author": self.author,
            "issues": [i.to_dict() for i in self.issues],
            "proposals": [a.to_dict() for a in self.proposals],
            "rationale": self.rationale,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any], author: str, max_proposals: int = 4) -> "Opinion":
        issues = d.get("issues", [])
        proposals = d.get("proposals", [])
        if not isinstance(issues, list) or not isinstance(proposals, list):
            raise SchemaError("$", "issues and proposals must be lists")
        if len(proposals) > max_proposals:
            raise SchemaError("$.proposals", f"at most {max_proposals} proposals")
        rationale = d.get("rationale", "")
        if not isinstance(rationale, str):
            raise SchemaError("$.rationale", "expected a string")
        return cls(
            author=author,
            issues=tuple(Issue.from_dict(i) for i in issues),
            proposals=tuple(Action.from_dict(a) for a in proposals),
            rationale=rationale,
        )


@dataclass(frozen=True)
class Decision:
    node_id: str
    accepted: tuple[tuple[str, Action], ...]
    rejected: tuple[tuple[str, Action, str], ...]
    c_star: ContentNode
    patch: LayoutPatch = field(default_factory=LayoutPatch)

    @property
    def changes(self) -> bool:
        return bool(self.accepted)

    def to_dict(self) -> dict[str, Any]:
        return {
            "node_id": self.node_id,
            "accepted": [{"author": who, **a.to_dict()} for who, a in self.accepted],
            "rejected": [{"author": who, **a.to_dict(), "reason": why} for who, a, why in self.rejected],
            "c_star": self.c_star.to_dict(),
            "patch": self.patch.to_dict(),
        }


def empty_opinion(author: str, rationale: str = "no issue") -> Opinion:
    return Opinion(author=author, rationale=rationale)


# ---------------------------------------------------------------------------
# text edits
# ---------------------------------------------------------------------------


def text_items(node: ContentNode) -> tuple[list[str], bool]:
    """Editable text items: bullets when present, otherwise summary sentences."""
    if node.bullets:
        return list(node.bullets), True
    return split_sentences(node.summary), False


def _with_items(node: ContentNode, items: list[str], bullets: bool) -> ContentNode:
    if bullets:
        return replace(node, bullets=tuple(items))
    return replace(node, summary=" ".join(items))


def shrink_text(node: ContentNode, target_words: int) -> ContentNode:
    """Cut ``node``'s text to at most ``target_words`` words.

    Trailing bullets go first; the summary is then re-extracted from its own
    sentences, and as a last resort the top sentence is truncated.
    """
    if node.words <= target_words:
        return node
    bullets = list(node.bullets)
    while bullets and word_count(node.summary) + sum(word_count(b) for b in bullets) > target_words:
        bullets.pop()
    room = target_words - sum(word_count(b) for b in bullets)
    summary = node.summary
    if word_count(summary) > room:
        scored = score_sentences([summary])
        keep = select_from_scored(scored, room)
        if keep:
            summary = " ".join(scored[i][0] for i in keep)
        elif room > 0 and scored:
            best = max(range(len(scored)), key=lambda i: (scored[i][1], -i))
            summary = " ".join(scored[best][0].split()[:room])
        else:
            summary = ""
    return replace(node, summary=summary, bullets=tuple(bullets))


def tighten_text(node: ContentNode, n: int) -> ContentNode:
    items, bullets = text_items(node)
    drop = set(redundant_items(items)[:n])
    return _with_items(node, [s for i, s in enumerate(items) if i not in drop], bullets)


def drop_item(node: ContentNode, index: int) -> ContentNode:
    items, bullets = text_items(node)
    return _with_items(node, items[:index] + items[index + 1 :], bullets)


def item_count(node: ContentNode) -> int:
    return len(text_items(node)[0])


def apply_actions(node: ContentNode, font_pt: float, figures: list[str], subpanels: list[str], actions: list[Action]) -> tuple[ContentNode, LayoutPatch]:
    """Apply ``actions`` in order to a node's content and layout attributes.

    ``figures`` is the node's current figure order (asset ids) and
    ``subpanels`` the current order of its subpanel ids.
    """
    factor = 1.0
    font = None
    scales: dict[str, float] = {}
    fig_order = list(figures)
    sub_order = list(subpanels)
    moved = swapped = False
    for a in actions:
        if a.kind == "ShrinkSummary":
            node = shrink_text(node, a["target_words"])
        elif a.kind == "TightenBullets":
            node = tighten_text(node, a["n"])
        elif a.kind == "DropBullet":
            node = drop_item(node, a["index"])
        elif a.kind == "ResizePanel":
            factor *= 1.0 + a["height_share_delta"]
        elif a.kind == "AdjustFont":
            font = (font if font is not None else font_pt) + a["delta_pt"]
        elif a.kind == "ResizeFigure":
            scales[a["asset_id"]] = a["scale"]
        elif a.kind == "MoveAssetToSlot":
            target = a["slot_id"].removeprefix("figure-")
            fig_order.remove(a["asset_id"])
            fig_order.insert(figures.index(target), a["asset_id"])
            moved = True
        elif a.kind == "SwapChildren":
            i, j = a["i"], a["j"]
            sub_order[i], sub_order[j] = sub_order[j], sub_order[i]
            swapped = True
    patch = LayoutPatch(
        weight_factor=factor,
        font_pt=font,
        figure_scales=tuple(sorted(scales.items())),
        figure_order=tuple(fig_order) if moved else None,
        child_order=tuple(sub_order) if swapped else None,
    )
    return node, patch


def validate_action(action: Action, *, words: int, items: int, font_pt: float, figures: list[str], subpanels: list[str], has_panel: bool) -> str | None:
    """Why ``action`` is illegal for this node, or ``None`` if it is legal."""
    k = action.kind
    if k == "ShrinkSummary" and not 0 <= action["target_words"] < words:
        return f"target_words must be in [0, {words})"
    if k == "TightenBullets" and action["n"] < 1:
        return "n must be positive"
    if k == "DropBullet" and not 0 <= action["index"] < items:
        return f"index must be in [0, {items})"
    if k == "ResizePanel":
        lo, hi = RESIZE_RANGE
        if not has_panel:
            return "node has no resizable panel"
        if not lo <= action["height_share_delta"] <= hi or action["height_share_delta"] == 0:
            return f"height_share_delta must be non-zero in [{lo}, {hi}]"
    if k == "AdjustFont" and not MIN_FONT_PT <= font_pt + action["delta_pt"] <= MAX_FONT_PT:
        return f"font must stay in [{MIN_FONT_PT:g}, {MAX_FONT_PT:g}] pt"
    if k == "ResizeFigure":
        lo, hi = FIGURE_SCALE_RANGE
        if action["asset_id"] not in figures:
            return "unknown figure"
        if not lo <= action["scale"] <= hi:
            return f"scale must be in [{lo}, {hi}]"
    if k == "MoveAssetToSlot":
        if action["asset_id"] not in figures or action["slot_id"].removeprefix("figure-") not in figures:
            return "asset and slot must both belong to this node"
    if k == "SwapChildren":
        n = len(subpanels)
        if not (0 <= action["i"] < n and 0 <= action["j"] < n) or action["i"] == action["j"]:
            return f"indices must be distinct in [0, {n})"
    return None
