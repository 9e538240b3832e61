"""Node context handed to agents, and the deterministic rule-based agents."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Any

from ..content import ContentNode
from ..layout import (
    MIN_FONT_PT,
    OVERFLOW_TOL_IN,
    detect_overflow,
    measure_text,
    resize_target,
    text_runs,
)
from ..poster import PosterTree
from ..text import duplicate_stem_ratio, redundant_items
from .actions import (
    CONTENT,
    LAYOUT,
    Action,
    Issue,
    Opinion,
    text_items,
    adjust_font,
    drop_bullet,
    resize_figure,
    resize_panel,
    shrink_summary,
    tighten_bullets,
)

FILL_LOW, FILL_HIGH = 0.55, 0.95
RESIZE_MIN, RESIZE_MAX = -0.5, 1.0
MIN_RESIZE_STEP = 0.05
REDUNDANCY_LIMIT = 0.3
SATURATED_FILL = 0.9
INFORMATION_LOSS_SHARE = 0.5
FIGURE_BAND_LIMIT = 0.5
FIGURE_BAND_TARGET = 0.4
FIGURE_ASPECT_TOL = 0.1
COUNTER_SHRINK = 0.9
MAX_PROPOSALS = 4


@dataclass(frozen=True)
class FigureView:
    asset_id: str
    slot_id: str
    scale: float
    aspect: float
    actual_aspect: float
    band_height_in: float


@dataclass(frozen=True)
class NodeView:
    """Everything an agent may look at for one node (all JSON-serializable)."""

    node_id: str
    level: str
    heading: str
    summary: str
    bullets: tuple[str, ...]
    word_budget: int
    words: int
    font_pt: float
    text_slot: str
    text_width_in: float
    text_height_in: float
    required_in: float
    heading_in: float
    body_required_in: float
    overflow_in: float
    fill: float
    subtree_fill: float
    has_panel: bool
    panel_height_in: float
    panel_share: float
    only_flex: bool
    group_fill: float
    text_share: float
    figures: tuple[FigureView, ...] = ()
    subpanels: tuple[str, ...] = ()
    sibling_fills: tuple[tuple[str, float], ...] = ()
    authors: tuple[str, ...] = ()

    @property
    def content(self) -> ContentNode:
        return ContentNode(self.node_id, self.level, self.heading, self.summary, self.bullets, self.word_budget)

    @property
    def items(self) -> int:
        return len(text_items(self.content)[0])

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["bullets"] = list(self.bullets)
        d["figures"] = [asdict(f) for f in self.figures]
        d["subpanels"] = list(self.subpanels)
        d["sibling_fills"] = [[a, _finite_or_none(b)] for a, b in self.sibling_fills]
        d["authors"] = list(self.authors)
        for name in ("fill", "subtree_fill", "group_fill"):
            d[name] = _finite_or_none(d[name])
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "NodeView":
        d = dict(d)
        d["bullets"] = tuple(d["bullets"])
        d["figures"] = tuple(FigureView(**f) for f in d["figures"])
        d["subpanels"] = tuple(d["subpanels"])
        d["sibling_fills"] = tuple((a, math.inf if b is None else b) for a, b in d["sibling_fills"])
        d["authors"] = tuple(d.get("authors", ()))
        for name in ("fill", "subtree_fill", "group_fill"):
            if d[name] is None:
                d[name] = math.inf
        return cls(**d)


def _finite_or_none(x: float) -> float | None:
    # JSON has no infinity; an empty slot's fill travels as null
    return x if math.isfinite(x) else None


def _text_fill(tree: PosterTree, nid: str) -> tuple[float, float]:
    report = detect_overflow(tree.content[nid], tree.layout, tree.canvas, tree.authors_for(nid))
    return report.text.required_in, report.text.available_in


def node_view(tree: PosterTree, nid: str) -> NodeView:
    """Build the agent-facing context of node ``nid`` from a committed tree."""
    canvas, layout, content = tree.canvas, tree.layout, tree.content
    node = content[nid]
    slot = layout.text_slot(nid)
    width_in = slot.region.w * canvas.width_in
    available = slot.region.h * canvas.height_in
    authors = tree.authors_for(nid)
    runs = text_runs(node, slot.font_pt, authors)
    required = sum(measure_text(t, pt, width_in) for t, pt in runs)
    body_required = measure_text(node.body_text, slot.font_pt, width_in) if node.level != "root" else 0.0
    overflow = detect_overflow(node, layout, canvas, authors).overflow_in

    subtree, stack = [], [nid]
    while stack:
        subtree.append(stack.pop())
        stack.extend(content.children[subtree[-1]])
    req_sum = avail_sum = 0.0
    for n in subtree:
        r, a = _text_fill(tree, n)
        req_sum += r
        avail_sum += a

    has_panel = nid != content.root
    figures, subpanels = [], []
    panel_h = panel_share = 0.0
    only_flex = True
    sibling_fills: list[tuple[str, float]] = []
    group_fill = math.inf
    text_share = 1.0
    if has_panel:
        panel = layout.panel_of(nid)
        panel_h = panel.region.h * canvas.height_in
        panel_share = panel.weight
        target = resize_target(layout, nid)
        holder = layout[layout.parents()[target]]
        flex = [c for c in holder.children if layout[c].sizing == "flex"]
        only_flex = len(flex) == 1
        # aggregate fill of the space this panel competes for, and of each
        # neighbour that a resize would squeeze
        g_req = g_avail = 0.0
        for c in flex:
            c_req = c_avail = 0.0
            for leaf in layout.walk(c):
                if leaf.kind == "text_slot":
                    r, a = _text_fill(tree, leaf.owner)
                    c_req += r
                    c_avail += a
            g_req += c_req
            g_avail += c_avail
            if c != target:
                sibling_fills.append((c, c_req / c_avail if c_avail > 0 else math.inf))
        group_fill = g_req / g_avail if g_avail > 0 else math.inf
        if target == panel.id and panel_h > 0:
            # figures and gutters keep their size when the panel is resized
            text_share = min(1.0, avail_sum / panel_h)
        for cid in panel.children:
            child = layout[cid]
            if child.sizing == "figure":
                fig = layout[child.children[0]]
                r = fig.region
                figures.append(
                    FigureView(
                        asset_id=fig.asset_id,
                        slot_id=fig.id,
                        scale=fig.scale,
                        aspect=fig.aspect,
                        actual_aspect=(r.w * canvas.width_in) / (r.h * canvas.height_in),
                        band_height_in=child.region.h * canvas.height_in,
                    )
                )
            elif child.kind == "panel":
                subpanels.append(cid)
    return NodeView(
        node_id=nid,
        level=node.level,
        heading=node.heading,
        summary=node.summary,
        bullets=node.bullets,
        word_budget=node.word_budget,
        words=node.words,
        font_pt=slot.font_pt,
        text_slot=slot.id,
        text_width_in=width_in,
        text_height_in=available,
        required_in=required,
        heading_in=required - body_required,
        body_required_in=body_required,
        overflow_in=overflow,
        fill=required / available if available > 0 else math.inf,
        subtree_fill=req_sum / avail_sum if avail_sum > 0 else math.inf,
        has_panel=has_panel,
        panel_height_in=panel_h,
        panel_share=panel_share,
        only_flex=only_flex,
        group_fill=group_fill,
        text_share=text_share,
        figures=tuple(figures),
        subpanels=tuple(subpanels),
        sibling_fills=tuple(sibling_fills),
        authors=authors,
    )


def shrink_target(view: NodeView) -> int:
    """Words that fit: current words scaled by body room over body need."""
    room = view.text_height_in - view.heading_in
    if view.body_required_in <= 0:
        return view.words
    return math.floor(view.words * max(0.0, room) / view.body_required_in)


def fitting_font(view: NodeView) -> float | None:
    """Largest whole point size below the current one at which the text fits."""
    node = view.content
    pt = math.ceil(view.font_pt) - 1
    while pt >= MIN_FONT_PT:
        need = sum(measure_text(t, p, view.text_width_in) for t, p in text_runs(node, pt, view.authors))
        if need <= view.text_height_in:
            return float(pt)
        pt -= 1
    return None


class RuleContentAgent:
    """Checks whether the text volume suits the space it has."""

    role = CONTENT
    mode = "rule_based"

    def analyze(self, view: NodeView) -> Opinion:
        issues: list[Issue] = []
        proposals: list[Action] = []
        notes = []
        if view.overflow_in > OVERFLOW_TOL_IN:
            issues.append(Issue("overflow", "major", view.overflow_in, view.text_slot))
            target = shrink_target(view)
            if 1 <= target < view.words:
                proposals.append(shrink_summary(target))
                notes.append(f"text needs {view.body_required_in:.2f} in, has {view.text_height_in - view.heading_in:.2f} in")
        items = text_items(view.content)[0]
        ratio = duplicate_stem_ratio(items)
        if ratio > REDUNDANCY_LIMIT:
            issues.append(Issue("redundant", "minor", ratio, view.text_slot))
            proposals.append(tighten_bullets(len(redundant_items(items))))
        saturated = max((f for _, f in view.sibling_fills), default=0.0)
        if saturated > SATURATED_FILL:
            issues.append(Issue("sibling_saturated", "major", saturated))
        if view.word_budget > 0 and view.words <= INFORMATION_LOSS_SHARE * view.word_budget:
            issues.append(Issue("information_loss", "major", view.words / view.word_budget, view.text_slot))
        if view.has_panel and view.fill < FILL_LOW:
            issues.append(Issue("underfilled", "info", view.fill, view.text_slot))
        return Opinion(CONTENT, tuple(issues), tuple(proposals[:MAX_PROPOSALS]), "; ".join(notes) or ("no issue" if not issues else ""))

    def respond(self, view: NodeView, own: Opinion, peer: Opinion, round_index: int) -> Opinion:
        kept = withdraw_conflicts(own.proposals, peer)
        counter = list(kept)
        if peer.major("overflow") and not any(a.kind == "ShrinkSummary" for a in kept) and view.words > 1 and not own.major("information_loss"):
            target = min(shrink_target(view), math.floor(view.words * COUNTER_SHRINK))
            if 1 <= target < view.words and len(counter) < MAX_PROPOSALS:
                counter.append(shrink_summary(target))
        return Opinion(CONTENT, own.issues, tuple(counter), own.rationale)


class RuleLayoutAgent:
    """Checks panel fill, figure proportions and font fit."""

    role = LAYOUT
    mode = "rule_based"

    def analyze(self, view: NodeView) -> Opinion:
        issues: list[Issue] = []
        proposals: list[Action] = []
        if view.overflow_in > OVERFLOW_TOL_IN:
            issues.append(Issue("overflow", "major", view.overflow_in, view.text_slot))
            if not view.has_panel:
                pt = fitting_font(view)
                if pt is not None:
                    proposals.append(adjust_font(pt - view.font_pt))
        if view.has_panel and not view.only_flex:
            # move towards the fill the competing panels have on average;
            # when they are all equally off, resizing cannot help
            f = view.subtree_fill
            if (f > FILL_HIGH or f < FILL_LOW) and math.isfinite(view.group_fill) and view.group_fill > 0:
                delta = min(RESIZE_MAX, max(RESIZE_MIN, view.text_share * (f / view.group_fill - 1)))
                if abs(delta) >= MIN_RESIZE_STEP:
                    proposals.append(resize_panel(round(delta, 6)))
        for fig in view.figures:
            share = fig.band_height_in / view.panel_height_in if view.panel_height_in > 0 else 0.0
            if abs(fig.actual_aspect / fig.aspect - 1) > FIGURE_ASPECT_TOL:
                issues.append(Issue("figure_aspect", "major", fig.actual_aspect / fig.aspect, fig.slot_id))
                proposals.append(resize_figure(fig.asset_id, fig.scale))
            elif share > FIGURE_BAND_LIMIT:
                issues.append(Issue("figure_dominates", "minor", share, fig.slot_id))
                proposals.append(resize_figure(fig.asset_id, round(fig.scale * FIGURE_BAND_TARGET / share, 6)))
        if view.overflow_in > OVERFLOW_TOL_IN and view.bullets:
            proposals.append(drop_bullet(len(view.bullets) - 1))
        return Opinion(LAYOUT, tuple(issues), tuple(proposals[:MAX_PROPOSALS]), "no issue" if not issues and not proposals else "")

    def respond(self, view: NodeView, own: Opinion, peer: Opinion, round_index: int) -> Opinion:
        return Opinion(LAYOUT, own.issues, withdraw_conflicts(own.proposals, peer), own.rationale)


def conflicts_with_peer(action: Action, peer: Opinion) -> str | None:
    """The peer's major issue that rules ``action`` out, if any."""
    if action.kind == "AdjustFont" and action["delta_pt"] > 0 and peer.major("overflow"):
        return "overflow"
    if action.kind == "ResizePanel" and action["height_share_delta"] > 0 and peer.major("sibling_saturated"):
        return "sibling_saturated"
    if action.kind in ("DropBullet", "ShrinkSummary") and peer.major("information_loss"):
        return "information_loss"
    return None


def withdraw_conflicts(proposals: tuple[Action, ...], peer: Opinion) -> tuple[Action, ...]:
    return tuple(a for a in proposals if conflicts_with_peer(a, peer) is None)
