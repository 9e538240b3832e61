"""Layout tree geometry, text measurement and the initial layout planner.

Coordinates are normalized to the poster: ``(0, 0)`` is the top-left
corner and ``(1, 1)`` the bottom-right.  Inches appear only where text is
measured or output is rendered.

Regions are never stored independently of the sizing attributes: every
stacking node lays its children out along its orientation, giving fixed
children (the title band, figure bands) their extent and sharing what is
left between flexible children in proportion to ``weight``.
:func:`relayout` recomputes every region from those attributes.
"""

from __future__ import annotations

import json
import logging
import math
import statistics
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Protocol

from .content import ContentNode, ContentTree
from .errors import BackendError, InvariantViolation, PlannerError, SchemaError

logger = logging.getLogger(__name__)

PT_PER_IN = 72.0
CHAR_ADVANCE_EM = 0.55
LINE_HEIGHT_EM = 1.25
MIN_FONT_PT, MAX_FONT_PT = 12.0, 96.0
OVERFLOW_TOL_IN = 0.05
FIGURE_ASPECT_TOL = 0.10
HEADING_SCALE = {"section": 1.3, "subsection": 1.15}
AUTHORS_SCALE = 0.5
GEOM_TOL = 1e-9
PARTITION_TOL = 1e-6

# initial sizing model
CHARS_PER_WORD = 6.5
TARGET_FILL = 0.8
ASSET_AREA_FRAC = 0.035
MAX_FIGURE_HEIGHT_FRAC = 0.4
MIN_COLUMN_FRAC = 0.1
MAX_WIDTH_ROUNDS = 12
WIDTH_TOL = 1e-3
FIGURE_SHRINK_ROUNDS = 12
MIN_FIGURE_SHRINK = 0.3
DEFAULT_BODY_PT = 24.0
DEFAULT_TITLE_PT = 60.0

STACKING_INSET = {"canvas", "panel"}


@dataclass(frozen=True)
class PosterCanvas:
    width_in: float = 48.0
    height_in: float = 36.0
    gutter_in: float = 0.25
    title_band_frac: float = 0.12
    min_panel_frac: float = 0.04

    def __post_init__(self) -> None:
        if self.width_in <= 0 or self.height_in <= 0:
            raise ValueError("canvas dimensions must be positive")
        if self.gutter_in < 0:
            raise ValueError("gutter must be non-negative")
        if not 0 < self.title_band_frac <= 0.25:
            raise ValueError("title_band_frac must be in (0, 0.25]")

    @property
    def gx(self) -> float:
        return self.gutter_in / self.width_in

    @property
    def gy(self) -> float:
        return self.gutter_in / self.height_in

    @property
    def area_in2(self) -> float:
        return self.width_in * self.height_in

    def to_dict(self) -> dict[str, float]:
        return {
            "width_in": self.width_in,
            "height_in": self.height_in,
            "gutter_in": self.gutter_in,
            "title_band_frac": self.title_band_frac,
            "min_panel_frac": self.min_panel_frac,
        }


@dataclass(frozen=True)
class Region:
    x: float
    y: float
    w: float
    h: float

    @property
    def area(self) -> float:
        return self.w * self.h

    def overlap_area(self, other: "Region") -> float:
        dx = min(self.x + self.w, other.x + other.w) - max(self.x, other.x)
        dy = min(self.y + self.h, other.y + other.h) - max(self.y, other.y)
        return dx * dy if dx > GEOM_TOL and dy > GEOM_TOL else 0.0

    def inset(self, dx: float, dy: float) -> "Region":
        return Region(self.x + dx, self.y + dy, self.w - 2 * dx, self.h - 2 * dy)

    def contains(self, other: "Region", tol: float = GEOM_TOL) -> bool:
        return (
            other.x >= self.x - tol
            and other.y >= self.y - tol
            and other.x + other.w <= self.x + self.w + tol
            and other.y + other.h <= self.y + self.h + tol
        )

    def to_list(self) -> list[float]:
        return [self.x, self.y, self.w, self.h]


@dataclass(frozen=True)
class LayoutNode:
    id: str
    kind: str  # canvas | band | column | panel | figure_slot | text_slot
    region: Region = Region(0.0, 0.0, 0.0, 0.0)
    orientation: str | None = None  # row | column, internal nodes only
    children: tuple[str, ...] = ()
    sizing: str = "flex"  # flex | fixed | figure
    weight: float = 1.0
    extent: float = 0.0  # normalized size along the parent axis, fixed sizing only
    font_pt: float | None = None
    owner: str | None = None
    asset_id: str | None = None
    aspect: float | None = None  # natural width/height of the asset
    scale: float = 1.0  # figure width as a fraction of its band

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "kind": self.kind,
            "region": self.region.to_list(),
            "orientation": self.orientation,
            "children": list(self.children),
            "sizing": self.sizing,
            "weight": self.weight,
            "extent": self.extent,
            "font_pt": self.font_pt,
            "owner": self.owner,
            "asset_id": self.asset_id,
            "aspect": self.aspect,
            "scale": self.scale,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "LayoutNode":
        return cls(
            id=d["id"],
            kind=d["kind"],
            region=Region(*d["region"]),
            orientation=d["orientation"],
            children=tuple(d["children"]),
            sizing=d["sizing"],
            weight=d["weight"],
            extent=d["extent"],
            font_pt=d["font_pt"],
            owner=d["owner"],
            asset_id=d["asset_id"],
            aspect=d["aspect"],
            scale=d["scale"],
        )


@dataclass(frozen=True)
class LayoutTree:
    nodes: dict[str, LayoutNode]
    root: str = "canvas"
    diagnostics: tuple[str, ...] = field(default=(), compare=False)

    def __getitem__(self, node_id: str) -> LayoutNode:
        return self.nodes[node_id]

    def walk(self, start: str | None = None) -> list[LayoutNode]:
        out, stack = [], [start or self.root]
        while stack:
            node = self.nodes[stack.pop()]
            out.append(node)
            stack.extend(reversed(node.children))
        return out

    def parents(self) -> dict[str, str]:
        return {c: n.id for n in self.nodes.values() for c in n.children}

    def leaves(self) -> list[LayoutNode]:
        return [n for n in self.walk() if not n.children]

    def panel_of(self, owner: str) -> LayoutNode:
        for n in self.nodes.values():
            if n.kind == "panel" and n.owner == owner:
                return n
        raise KeyError(owner)

    def text_slot(self, owner: str) -> LayoutNode:
        for n in self.nodes.values():
            if n.kind == "text_slot" and n.owner == owner:
                return n
        raise KeyError(owner)

    def figure_slots(self, owner: str) -> list[LayoutNode]:
        return [n for n in self.walk() if n.kind == "figure_slot" and n.owner == owner]

    def panels(self) -> list[LayoutNode]:
        return [n for n in self.walk() if n.kind == "panel"]

    def to_dict(self) -> dict[str, Any]:
        return {"root": self.root, "nodes": [n.to_dict() for n in self.walk()]}

    @classmethod
    def from_dict(cls, obj: dict[str, Any]) -> "LayoutTree":
        nodes = {d["id"]: LayoutNode.from_dict(d) for d in obj["nodes"]}
        return cls(nodes=nodes, root=obj["root"])


# ---------------------------------------------------------------------------
# text measurement
# ---------------------------------------------------------------------------


def chars_per_line(font_pt: float, width_in: float) -> int:
    # tiny epsilon keeps exact multiples (e.g. 0.55 * 24 pt) from flooring low
    return max(1, math.floor(width_in * PT_PER_IN / (CHAR_ADVANCE_EM * font_pt) + 1e-9))


def line_height_in(font_pt: float) -> float:
    return LINE_HEIGHT_EM * font_pt / PT_PER_IN


def _check_measure_args(font_pt: float, width_in: float) -> None:
    if not MIN_FONT_PT <= font_pt <= MAX_FONT_PT:
        raise ValueError(f"font_pt {font_pt} outside [{MIN_FONT_PT}, {MAX_FONT_PT}]")
    if width_in <= 0.5:
        raise ValueError("slot width must exceed 0.5 in")


def count_lines(text: str, font_pt: float, width_in: float) -> int:
    cpl = chars_per_line(font_pt, width_in)
    return sum(math.ceil(len(seg) / cpl) for seg in text.split("\n"))


def measure_text(text: str, font_pt: float, slot_width_in: float) -> float:
    """Height in inches of ``text`` on a fixed character grid."""
    if not text:
        return 0.0
    _check_measure_args(font_pt, slot_width_in)
    return count_lines(text, font_pt, slot_width_in) * line_height_in(font_pt)


def _break_segment(segment: str, cpl: int) -> list[str]:
    """Split one hard-line segment into exactly ``ceil(len / cpl)`` lines.

    Lines break at the last space that leaves a remainder needing exactly
    the lines left over; only when no such space exists is a word cut at
    the line width.
    """
    n = len(segment)
    lines_left = math.ceil(n / cpl)
    out: list[str] = []
    pos = 0
    while pos < n:
        if n - pos <= cpl:
            out.append(segment[pos:])
            break
        lines_left -= 1
        cut = pos + cpl  # hard break: line is segment[pos:cut]
        for b in range(pos + cpl, pos, -1):
            # a space at b ends the line at b and is dropped
            if segment[b] == " " and math.ceil((n - b - 1) / cpl) == lines_left:
                out.append(segment[pos:b])
                pos = b + 1
                break
        else:
            out.append(segment[pos:cut])
            pos = cut
    return out


def wrap_lines(text: str, font_pt: float, width_in: float) -> list[str]:
    """Break ``text`` into exactly as many lines as :func:`measure_text` counts."""
    if not text:
        return []
    _check_measure_args(font_pt, width_in)
    cpl = chars_per_line(font_pt, width_in)
    out: list[str] = []
    for seg in text.split("\n"):
        out.extend(_break_segment(seg, cpl))
    return out


def heading_pt(level: str, font_pt: float) -> float:
    return min(MAX_FONT_PT, font_pt * HEADING_SCALE.get(level, 1.0))


def text_runs(node: ContentNode, font_pt: float, authors: Iterable[str] = ()) -> list[tuple[str, float]]:
    """The (text, font size) runs a text slot shows for ``node``, top to bottom."""
    if node.level == "root":
        runs = [(node.heading, font_pt)]
        names = ", ".join(authors)
        if names:
            runs.append((names, max(MIN_FONT_PT, font_pt * AUTHORS_SCALE)))
        return runs
    return [(node.heading, heading_pt(node.level, font_pt)), (node.body_text, font_pt)]


def required_text_height(node: ContentNode, font_pt: float, width_in: float, authors: Iterable[str] = ()) -> float:
    return sum(measure_text(text, pt, width_in) for text, pt in text_runs(node, font_pt, authors))


# ---------------------------------------------------------------------------
# overflow and balance
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SlotReport:
    slot_id: str
    kind: str
    required_in: float
    available_in: float

    @property
    def overflow_in(self) -> float:
        # ignore float noise from exactly fitted slots
        excess = self.required_in - self.available_in
        return excess if excess > 1e-9 else 0.0


@dataclass(frozen=True)
class OverflowReport:
    node_id: str
    slots: tuple[SlotReport, ...]
    tolerance: float = OVERFLOW_TOL_IN

    @property
    def overflow_in(self) -> float:
        return sum(s.overflow_in for s in self.slots)

    @property
    def is_overflowing(self) -> bool:
        return any(s.overflow_in > self.tolerance for s in self.slots)

    @property
    def text(self) -> SlotReport | None:
        return next((s for s in self.slots if s.kind == "text_slot"), None)

    @property
    def fill(self) -> float:
        slot = self.text
        if slot is None or slot.available_in <= 0:
            return 0.0
        return slot.required_in / slot.available_in


def detect_overflow(
    node: ContentNode,
    layout: LayoutTree,
    canvas: PosterCanvas,
    authors: Iterable[str] = (),
    tolerance: float = OVERFLOW_TOL_IN,
) -> OverflowReport:
    """Per-slot required vs. available height for the slots ``node`` owns."""
    slots = []
    for slot in layout.walk():
        if slot.owner != node.id or slot.children:
            continue
        width_in = slot.region.w * canvas.width_in
        available = slot.region.h * canvas.height_in
        if slot.kind == "text_slot":
            required = required_text_height(node, slot.font_pt, width_in, authors)
        elif slot.kind == "figure_slot":
            required = width_in / slot.aspect
        else:
            continue
        slots.append(SlotReport(slot.id, slot.kind, required, available))
    return OverflowReport(node.id, tuple(slots), tolerance)


def fill_ratios(layout: LayoutTree, contents: ContentTree, canvas: PosterCanvas) -> dict[str, float]:
    """Text fill ratio of every non-root node, clamped to [0, 2]."""
    out = {}
    for nid in contents.dfs():
        if nid == contents.root:
            continue
        report = detect_overflow(contents[nid], layout, canvas)
        out[nid] = min(2.0, max(0.0, report.fill))
    return out


def balance_from_fills(fills: Iterable[float]) -> float:
    values = list(fills)
    if not values:
        return 1.0
    mean = statistics.fmean(values)
    if mean <= 0:
        return 1.0
    cv = statistics.pstdev(values) / mean
    return 1.0 - min(1.0, cv)


def balance_score(layout: LayoutTree, contents: ContentTree, canvas: PosterCanvas) -> float:
    """1 minus the coefficient of variation of panel fill ratios (floored at 0)."""
    return balance_from_fills(fill_ratios(layout, contents, canvas).values())


# ---------------------------------------------------------------------------
# layout computation and validation
# ---------------------------------------------------------------------------


def _fixed_extent(nodes: dict[str, LayoutNode], child: LayoutNode, cross: float, canvas: PosterCanvas) -> float | None:
    if child.sizing == "fixed":
        return child.extent
    if child.sizing == "figure":
        fig = nodes[child.children[0]]
        width_in = cross * canvas.width_in * fig.scale
        return width_in / fig.aspect / canvas.height_in
    return None


def relayout(tree: LayoutTree, canvas: PosterCanvas) -> LayoutTree:
    """Recompute every region from the sizing attributes."""
    nodes = tree.nodes
    out: dict[str, LayoutNode] = {}

    def place(nid: str, region: Region) -> None:
        node = nodes[nid]
        out[nid] = replace(node, region=region)
        if not node.children:
            return
        kids = [nodes[c] for c in node.children]
        if node.sizing == "figure":
            fig = kids[0]
            fw = region.w * fig.scale
            out[fig.id] = replace(fig, region=Region(region.x + (region.w - fw) / 2, region.y, fw, region.h))
            return
        dx, dy = (canvas.gx, canvas.gy) if node.kind in STACKING_INSET else (0.0, 0.0)
        inner = region.inset(dx, dy)
        along_x = node.orientation == "row"
        gap = canvas.gx if along_x else canvas.gy
        length = inner.w if along_x else inner.h
        cross = inner.h if along_x else inner.w
        fixed = {k.id: e for k in kids if (e := _fixed_extent(nodes, k, cross, canvas)) is not None}
        free = length - gap * (len(kids) - 1) - sum(fixed.values())
        wsum = sum(k.weight for k in kids if k.id not in fixed)
        pos = inner.x if along_x else inner.y
        for k in kids:
            ext = fixed[k.id] if k.id in fixed else (free * k.weight / wsum if wsum > 0 else 0.0)
            if along_x:
                place(k.id, Region(pos, inner.y, ext, inner.h))
            else:
                place(k.id, Region(inner.x, pos, inner.w, ext))
            pos += ext + gap

    place(tree.root, Region(0.0, 0.0, 1.0, 1.0))
    return replace(tree, nodes=out)


def gutter_area(tree: LayoutTree, canvas: PosterCanvas) -> float:
    """Area not covered by leaf slots: insets, inter-sibling gaps, figure padding."""
    total = 0.0
    for node in tree.walk():
        if not node.children:
            continue
        if node.sizing == "figure":
            fig = tree[node.children[0]]
            total += (node.region.w - fig.region.w) * node.region.h
            continue
        dx, dy = (canvas.gx, canvas.gy) if node.kind in STACKING_INSET else (0.0, 0.0)
        r = node.region
        total += r.area - (r.w - 2 * dx) * (r.h - 2 * dy)
        n = len(node.children)
        if node.orientation == "row":
            total += (n - 1) * canvas.gx * (r.h - 2 * dy)
        else:
            total += (n - 1) * canvas.gy * (r.w - 2 * dx)
    return total


def count_overlaps(tree: LayoutTree) -> int:
    leaves = tree.leaves()
    return sum(
        1
        for i in range(len(leaves))
        for j in range(i + 1, len(leaves))
        if leaves[i].region.overlap_area(leaves[j].region) > 0
    )


def layout_violations(tree: LayoutTree, canvas: PosterCanvas) -> list[str]:
    problems = []
    root = tree[tree.root]
    if root.region != Region(0.0, 0.0, 1.0, 1.0):
        problems.append("canvas region is not the unit square")
    m = canvas.min_panel_frac
    for node in tree.walk():
        r = node.region
        if r.x < -GEOM_TOL or r.y < -GEOM_TOL or r.x + r.w > 1 + GEOM_TOL or r.y + r.h > 1 + GEOM_TOL:
            problems.append(f"{node.id}: region outside canvas")
        if node.id != tree.root and (r.w < m - GEOM_TOL or r.h < m - GEOM_TOL):
            problems.append(f"{node.id}: region {r.w:.4f} x {r.h:.4f} below min_panel_frac {m}")
        if node.kind == "text_slot" and not MIN_FONT_PT <= (node.font_pt or 0) <= MAX_FONT_PT:
            problems.append(f"{node.id}: font {node.font_pt} out of range")
        if node.kind == "figure_slot":
            actual = (r.w * canvas.width_in) / (r.h * canvas.height_in) if r.h > 0 else math.inf
            if abs(actual / node.aspect - 1) > FIGURE_ASPECT_TOL + GEOM_TOL:
                problems.append(f"{node.id}: aspect {actual:.3f} vs natural {node.aspect:.3f}")
        if not node.children:
            continue
        kids = [tree[c] for c in node.children]
        dx, dy = (canvas.gx, canvas.gy) if node.kind in STACKING_INSET else (0.0, 0.0)
        inner = r.inset(dx, dy)
        for k in kids:
            if not inner.contains(k.region):
                problems.append(f"{k.id}: not inside parent {node.id}")
        if node.sizing != "figure":
            for a, b in zip(kids, kids[1:]):
                if node.orientation == "row" and (abs(a.region.y - b.region.y) > GEOM_TOL or abs(a.region.h - b.region.h) > GEOM_TOL):
                    problems.append(f"{node.id}: row children do not share y/h")
                if node.orientation == "column" and (abs(a.region.x - b.region.x) > GEOM_TOL or abs(a.region.w - b.region.w) > GEOM_TOL):
                    problems.append(f"{node.id}: column children do not share x/w")
        for i in range(len(kids)):
            for j in range(i + 1, len(kids)):
                if kids[i].region.overlap_area(kids[j].region) > 0:
                    problems.append(f"{kids[i].id} overlaps {kids[j].id}")
    covered = sum(n.region.area for n in tree.leaves()) + gutter_area(tree, canvas)
    if abs(covered - 1.0) > PARTITION_TOL:
        problems.append(f"leaf + gutter area {covered:.9f} != 1")
    if count_overlaps(tree):
        problems.append("leaf slots overlap")
    return problems


def check_layout(tree: LayoutTree, canvas: PosterCanvas) -> None:
    problems = layout_violations(tree, canvas)
    if problems:
        raise InvariantViolation("; ".join(problems[:5]))


# ---------------------------------------------------------------------------
# patches (attribute edits made by agents)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LayoutPatch:
    """Attribute edits to the layout nodes owned by one content node.

    ``weight_factor`` multiplies the node's panel weight; flexible siblings
    are then renormalized to sum to one, so factors from different nodes
    compose in any order.
    """

    weight_factor: float = 1.0
    font_pt: float | None = None
    figure_scales: tuple[tuple[str, float], ...] = ()
    figure_order: tuple[str, ...] | None = None
    child_order: tuple[str, ...] | None = None

    @property
    def is_identity(self) -> bool:
        return self == LayoutPatch()

    def to_dict(self) -> dict[str, Any]:
        return {
            "weight_factor": self.weight_factor,
            "font_pt": self.font_pt,
            "figure_scales": [list(p) for p in self.figure_scales],
            "figure_order": list(self.figure_order) if self.figure_order is not None else None,
            "child_order": list(self.child_order) if self.child_order is not None else None,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "LayoutPatch":
        return cls(
            weight_factor=d["weight_factor"],
            font_pt=d["font_pt"],
            figure_scales=tuple((a, s) for a, s in d["figure_scales"]),
            figure_order=tuple(d["figure_order"]) if d["figure_order"] is not None else None,
            child_order=tuple(d["child_order"]) if d["child_order"] is not None else None,
        )


def resize_target(tree: LayoutTree, owner: str) -> str:
    """The node whose weight a resize of ``owner``'s panel changes.

    A panel alone in its column resizes the column instead.
    """
    parents = tree.parents()
    panel = tree.panel_of(owner)
    holder = tree[parents[panel.id]]
    flex = [c for c in holder.children if tree[c].sizing == "flex"]
    if len(flex) == 1 and holder.kind == "column":
        return holder.id
    return panel.id


def _normalize_flex(nodes: dict[str, LayoutNode], parent_id: str) -> None:
    kids = [nodes[c] for c in nodes[parent_id].children if nodes[c].sizing == "flex"]
    total = sum(k.weight for k in kids)
    for k in kids:
        # rounding makes composed factors independent of application order
        nodes[k.id] = replace(k, weight=round(k.weight / total, 12))


def apply_patch(tree: LayoutTree, owner: str, patch: LayoutPatch, canvas: PosterCanvas) -> LayoutTree:
    """Return a new, validated layout with ``patch`` applied to ``owner``'s nodes."""
    if patch.is_identity:
        return tree
    nodes = dict(tree.nodes)
    parents = tree.parents()
    if patch.weight_factor != 1.0:
        if patch.weight_factor <= 0:
            raise InvariantViolation("weight factor must be positive")
        target = nodes[resize_target(tree, owner)]
        nodes[target.id] = replace(target, weight=target.weight * patch.weight_factor)
        _normalize_flex(nodes, parents[target.id])
    if patch.font_pt is not None:
        slot = tree.text_slot(owner)
        nodes[slot.id] = replace(slot, font_pt=float(patch.font_pt))
    for asset_id, scale in patch.figure_scales:
        slot = next((s for s in tree.figure_slots(owner) if s.asset_id == asset_id), None)
        if slot is None:
            raise InvariantViolation(f"{owner} has no figure slot for {asset_id}")
        nodes[slot.id] = replace(slot, scale=float(scale))
    if patch.figure_order is not None or patch.child_order is not None:
        panel = tree.panel_of(owner)
        kids = list(nodes[panel.id].children)
        bands = [c for c in kids if nodes[c].sizing == "figure"]
        subs = [c for c in kids if nodes[c].kind == "panel"]
        if patch.figure_order is not None:
            by_asset = {nodes[nodes[b].children[0]].asset_id: b for b in bands}
            if sorted(by_asset) != sorted(patch.figure_order):
                raise InvariantViolation("figure_order must permute the panel's figures")
            new_bands = iter([by_asset[a] for a in patch.figure_order])
            kids = [next(new_bands) if c in bands else c for c in kids]
        if patch.child_order is not None:
            if sorted(subs) != sorted(patch.child_order):
                raise InvariantViolation("child_order must permute the panel's subpanels")
            new_subs = iter(patch.child_order)
            kids = [next(new_subs) if c in subs else c for c in kids]
        nodes[panel.id] = replace(nodes[panel.id], children=tuple(kids))
    updated = relayout(replace(tree, nodes=nodes), canvas)
    check_layout(updated, canvas)
    return updated


# ---------------------------------------------------------------------------
# initial layout
# ---------------------------------------------------------------------------


class LayoutPlannerBackend(Protocol):
    name: str

    def plan_columns(self, content: ContentTree, canvas: PosterCanvas) -> list[list[str]]:
        """Group the section ids into columns, left to right."""
        ...


class FallbackPlanner:
    """Sections in content order, ceil(N/3) per column."""

    name = "fallback"

    def plan_columns(self, content: ContentTree, canvas: PosterCanvas) -> list[list[str]]:
        sections = list(content.children[content.root])
        if not sections:
            return []
        per = math.ceil(len(sections) / 3)
        return [sections[i : i + per] for i in range(0, len(sections), per)]


PLANNER_SYSTEM_PROMPT = """You arrange the sections of a scientific poster into columns.
Reply with a JSON object {"columns": [[section_id, ...], ...]} listing every
section id exactly once, columns ordered left to right, at most 4 columns."""


class RemotePlanner:
    name = "remote"

    def __init__(self, client: Any, retries: int = 2) -> None:
        self.client = client
        self.retries = retries

    def plan_columns(self, content: ContentTree, canvas: PosterCanvas) -> list[list[str]]:
        sections = list(content.children[content.root])
        payload = {
            "task": "plan_columns",
            "canvas": canvas.to_dict(),
            "sections": [
                {"id": s, "heading": content[s].heading, "word_budget": content[s].word_budget, "assets": len(content[s].asset_refs)}
                for s in sections
            ],
        }
        user = json.dumps(payload, sort_keys=True)
        last = ""
        for attempt in range(self.retries + 1):
            messages = [{"role": "system", "content": PLANNER_SYSTEM_PROMPT}, {"role": "user", "content": user}]
            if attempt:
                messages.append({"role": "user", "content": f"Attempt {attempt + 1}. Previous reply rejected: {last}"})
            try:
                reply = self.client.complete_json(messages)
                columns = reply["columns"]
                if not isinstance(columns, list) or not all(isinstance(c, list) and c for c in columns):
                    raise SchemaError("$.columns", "expected a list of non-empty lists")
                flat = [s for c in columns for s in c]
                if sorted(flat) != sorted(sections) or len(columns) > 4:
                    raise SchemaError("$.columns", "columns must list every section exactly once")
                return [list(c) for c in columns]
            except (BackendError, SchemaError, KeyError, TypeError) as exc:
                last = str(exc)
        raise BackendError(f"planner failed after {self.retries + 1} attempts: {last}")


def _cell_area_in2(font_pt: float) -> float:
    return (CHAR_ADVANCE_EM * font_pt / PT_PER_IN) * line_height_in(font_pt)


def text_demand_in2(node: ContentNode, body_pt: float, canvas: PosterCanvas) -> float:
    """Area the node's word budget is expected to need at the target fill."""
    body = node.word_budget * CHARS_PER_WORD * _cell_area_in2(body_pt)
    heading = (canvas.width_in / 3) * line_height_in(heading_pt(node.level, body_pt)) if node.heading else 0.0
    return (body + heading) / TARGET_FILL


def asset_demand_in2(canvas: PosterCanvas) -> float:
    return ASSET_AREA_FRAC * canvas.area_in2


def subtree_demand_in2(content: ContentTree, nid: str, body_pt: float, canvas: PosterCanvas) -> float:
    node = content[nid]
    own = text_demand_in2(node, body_pt, canvas) + len(node.asset_refs) * asset_demand_in2(canvas)
    return own + sum(subtree_demand_in2(content, c, body_pt, canvas) for c in content.children[nid])


def allocate_with_floors(total: float, weights: list[float], mins: list[float]) -> list[float] | None:
    """Split ``total`` proportionally to ``weights`` with per-item minimums.

    Items that would fall below their minimum are pinned to it and the rest
    is re-split.  Returns ``None`` when the minimums alone exceed ``total``.
    """
    if sum(mins) > total + GEOM_TOL:
        return None
    pinned: set[int] = set()
    while True:
        free = total - sum(mins[i] for i in pinned)
        wsum = sum(weights[i] for i in range(len(weights)) if i not in pinned)
        out = [mins[i] if i in pinned else (free * weights[i] / wsum if wsum > 0 else 0.0) for i in range(len(weights))]
        short = [i for i in range(len(weights)) if i not in pinned and out[i] < mins[i]]
        if not short:
            return out
        pinned.update(short)


@dataclass
class _TextNeed:
    slot_id: str
    heading_h: float  # normalized height of the heading lines
    body_h: float  # normalized height of the body text at fill 1


class _Planner:
    """Sizes panels so every text slot in a column gets the same stretch.

    A text slot's height is ``heading + stretch * body`` where ``body`` is
    the measured height of its text; figure bands and gutters are fixed.
    Column widths are then nudged until the stretch is equal across columns.
    """

    def __init__(self, content: ContentTree, canvas: PosterCanvas, body_pt: float, title_pt: float) -> None:
        self.content = content
        self.canvas = canvas
        self.body_pt = body_pt
        self.title_pt = title_pt
        self.figure_shrink = 1.0
        self.stretch = math.inf
        self.min_h = canvas.min_panel_frac * (1 + 1e-6)
        self.body_h = 1 - canvas.title_band_frac - 3 * canvas.gy

    # -- widths ------------------------------------------------------------

    def min_inner_width(self, nid: str) -> float:
        c = self.canvas
        need = self.min_h
        for asset_id in self.content[nid].asset_refs:
            aspect = self.content.asset(asset_id).aspect
            need = max(need, self.min_h * c.height_in * aspect / c.width_in)
        for child in self.content.children[nid]:
            need = max(need, self.min_inner_width(child) + 2 * c.gx)
        return need

    def column_min_width(self, column: list[str]) -> float:
        inner = max(self.min_inner_width(s) for s in column)
        return max(MIN_COLUMN_FRAC, inner + 2 * self.canvas.gx) * (1 + 1e-6)

    # -- panels ------------------------------------------------------------

    def figure_scale(self, aspect: float, inner_w: float) -> float:
        c = self.canvas
        inner_w_in = inner_w * c.width_in
        want = math.sqrt(asset_demand_in2(c) * aspect) / inner_w_in * self.figure_shrink
        cap = MAX_FIGURE_HEIGHT_FRAC * self.body_h * c.height_in * aspect / inner_w_in
        floor = max(self.min_h * c.width_in, self.min_h * c.height_in * aspect) / inner_w_in
        if floor > 1.0 + GEOM_TOL:
            raise PlannerError(f"panel {inner_w_in:.2f} in wide cannot hold a figure of aspect {aspect:.2f}")
        return min(1.0, max(floor, min(want, cap)))

    def build_panel(self, nid: str, inner_w: float, nodes: dict[str, LayoutNode], needs: list[_TextNeed]) -> tuple[str, float]:
        """Create the panel for ``nid``; return its id and the fixed part of its height."""
        c = self.canvas
        node = self.content[nid]
        width_in = inner_w * c.width_in
        text_id = f"text-{nid}"
        nodes[text_id] = LayoutNode(text_id, "text_slot", font_pt=self.body_pt, owner=nid)
        heading_h = measure_text(node.heading, heading_pt(node.level, self.body_pt), width_in) / c.height_in
        body_h = measure_text(node.body_text, self.body_pt, width_in) / c.height_in
        needs.append(_TextNeed(text_id, heading_h, body_h))
        kids = [text_id]
        fixed = 2 * c.gy
        for asset_id in node.asset_refs:
            asset = self.content.asset(asset_id)
            band_id, fig_id = f"figband-{asset_id}", f"figure-{asset_id}"
            scale = self.figure_scale(asset.aspect, inner_w)
            nodes[fig_id] = LayoutNode(fig_id, "figure_slot", owner=nid, asset_id=asset_id, aspect=asset.aspect, scale=scale)
            nodes[band_id] = LayoutNode(band_id, "band", orientation="row", children=(fig_id,), sizing="figure", owner=nid)
            kids.append(band_id)
            fixed += inner_w * c.width_in * scale / asset.aspect / c.height_in
        for child in self.content.children[nid]:
            pid, child_fixed = self.build_panel(child, inner_w - 2 * c.gx, nodes, needs)
            kids.append(pid)
            fixed += child_fixed
        fixed += c.gy * (len(kids) - 1)
        pid = f"panel-{nid}"
        nodes[pid] = LayoutNode(pid, "panel", orientation="column", children=tuple(kids), owner=nid)
        return pid, fixed

    def solve_heights(self, free: float, needs: list[_TextNeed]) -> tuple[dict[str, float], float]:
        """Heights ``max(min_h, heading + stretch * body)`` summing to ``free``."""
        pinned: set[str] = set()
        while True:
            active = [n for n in needs if n.slot_id not in pinned]
            rest = free - self.min_h * len(pinned) - sum(n.heading_h for n in active)
            bsum = sum(n.body_h for n in active)
            # with no body text anywhere, spread the room evenly
            body = {n.slot_id: (n.body_h if bsum > 0 else 1.0) for n in active}
            total = sum(body.values())
            stretch = rest / total if total > 0 else 0.0
            heights = {n.slot_id: n.heading_h + stretch * body[n.slot_id] for n in active}
            low = [sid for sid, h in heights.items() if h < self.min_h]
            if not low:
                break
            pinned.update(low)
            if len(pinned) == len(needs):
                break
        heights.update({sid: self.min_h for sid in pinned})
        if abs(sum(heights.values()) - free) > 1e-9 or any(h < self.min_h - GEOM_TOL for h in heights.values()):
            raise PlannerError("text slots do not fit in the column")
        return heights, (stretch if bsum > 0 else math.inf)

    def set_weights(self, nodes: dict[str, LayoutNode], pid: str, inner_w: float, heights: dict[str, float]) -> float:
        """Give flexible children their planned heights as weights; return the panel height."""
        c = self.canvas
        panel = nodes[pid]
        total = 2 * c.gy + c.gy * (len(panel.children) - 1)
        for cid in panel.children:
            child = nodes[cid]
            if child.kind == "text_slot":
                h = heights[cid]
            elif child.sizing == "figure":
                fig = nodes[child.children[0]]
                h = inner_w * c.width_in * fig.scale / fig.aspect / c.height_in
            else:
                h = self.set_weights(nodes, cid, inner_w - 2 * c.gx, heights)
            if child.sizing == "flex":
                nodes[cid] = replace(child, weight=h)
            total += h
        _normalize_flex(nodes, pid)
        return total

    def build_column(self, column: list[str], width: float) -> tuple[dict[str, LayoutNode], list[str], float]:
        c = self.canvas
        nodes: dict[str, LayoutNode] = {}
        needs: list[_TextNeed] = []
        panel_ids, fixed = [], 0.0
        for s in column:
            pid, f = self.build_panel(s, width - 2 * c.gx, nodes, needs)
            panel_ids.append(pid)
            fixed += f
        free = self.body_h - c.gy * (len(column) - 1) - fixed
        heights, stretch = self.solve_heights(free, needs)
        for pid in panel_ids:
            h = self.set_weights(nodes, pid, width - 2 * c.gx, heights)
            nodes[pid] = replace(nodes[pid], weight=h)
        return nodes, panel_ids, stretch

    def build(self, columns: list[list[str]]) -> LayoutTree:
        c = self.canvas
        content = self.content
        nodes: dict[str, LayoutNode] = {}
        title_slot = LayoutNode("text-root", "text_slot", font_pt=self.title_pt, owner=content.root)
        if not columns:
            band = LayoutNode("title-band", "band", orientation="row", children=(title_slot.id,), owner=content.root)
            nodes.update({title_slot.id: title_slot, band.id: band})
            nodes["canvas"] = LayoutNode("canvas", "canvas", orientation="column", children=(band.id,))
            self.stretch = math.inf
            return relayout(LayoutTree(nodes, "canvas"), c)
        band = LayoutNode(
            "title-band", "band", orientation="row", children=(title_slot.id,), sizing="fixed",
            extent=c.title_band_frac, owner=content.root,
        )
        nodes.update({title_slot.id: title_slot, band.id: band})

        body_w = 1 - 2 * c.gx - c.gx * (len(columns) - 1)
        mins = [self.column_min_width(col) for col in columns]
        demand = [sum(subtree_demand_in2(content, s, self.body_pt, c) for s in col) for col in columns]
        widths = allocate_with_floors(body_w, demand, mins)
        if widths is None:
            raise PlannerError("columns do not fit across the canvas")
        # line rounding makes the stretch a step function of width, so keep
        # the most even round rather than insisting on convergence
        best: tuple[float, list[float], list] | None = None
        for _ in range(MAX_WIDTH_ROUNDS):
            plans = [self.build_column(col, w) for col, w in zip(columns, widths)]
            stretches = [p[2] for p in plans]
            finite = [s for s in stretches if math.isfinite(s) and s > 0]
            spread = max(finite) / min(finite) - 1 if len(finite) >= 2 else 0.0
            if best is None or spread < best[0]:
                best = (spread, widths, plans)
            if spread < WIDTH_TOL:
                break
            target = math.exp(statistics.fmean(math.log(s) for s in finite))
            proposal = [w * (target / s) if s in finite else w * 0.5 for w, s in zip(widths, stretches)]
            widths = allocate_with_floors(body_w, proposal, mins)
        _, widths, plans = best
        self.stretch = min((p[2] for p in plans), default=math.inf)

        col_ids = []
        for i, ((col_nodes, panel_ids, _), width) in enumerate(zip(plans, widths), start=1):
            nodes.update(col_nodes)
            col_id = f"col-{i}"
            nodes[col_id] = LayoutNode(col_id, "column", orientation="column", children=tuple(panel_ids), weight=width)
            _normalize_flex(nodes, col_id)
            col_ids.append(col_id)
        nodes["body"] = LayoutNode("body", "band", orientation="row", children=tuple(col_ids))
        _normalize_flex(nodes, "body")
        nodes["canvas"] = LayoutNode("canvas", "canvas", orientation="column", children=(band.id, "body"))
        return relayout(LayoutTree(nodes, "canvas"), c)


def init_layout(
    content: ContentTree,
    canvas: PosterCanvas = PosterCanvas(),
    planner: LayoutPlannerBackend | None = None,
    body_pt: float = DEFAULT_BODY_PT,
    title_pt: float = DEFAULT_TITLE_PT,
) -> LayoutTree:
    """Initial layout: title band on top, one panel per section, subpanels nested.

    Columns come from ``planner``; a planner failure falls back to
    :class:`FallbackPlanner` and is recorded in ``diagnostics``.  Figures
    start near a fixed share of the canvas and are shrunk step by step if
    the panels cannot otherwise fit.
    """
    diagnostics: list[str] = []
    fallback = FallbackPlanner()
    planner = planner or fallback
    try:
        columns = planner.plan_columns(content, canvas)
    except BackendError as exc:
        diagnostics.append(f"layout: planner {planner.name} failed ({exc}); used fallback")
        logger.warning(diagnostics[-1])
        columns = fallback.plan_columns(content, canvas)
    builder = _Planner(content, canvas, body_pt, title_pt)
    has_figures = any(n.asset_refs for n in content.nodes.values())
    tree, shrink, error = None, 1.0, None
    for _ in range(FIGURE_SHRINK_ROUNDS):
        try:
            candidate = builder.build(columns)
            check_layout(candidate, canvas)
        except (PlannerError, InvariantViolation) as exc:
            error = exc
            if tree is not None:
                break
        else:
            tree, shrink = candidate, builder.figure_shrink
            # smaller figures leave more room when the text does not fit yet
            if builder.stretch >= 1.0 or not has_figures or shrink < MIN_FIGURE_SHRINK:
                break
        builder.figure_shrink *= 0.8
    if tree is None:
        raise error
    if shrink < 1.0:
        diagnostics.append(f"layout: figures shrunk by {shrink:.3f} to fit")
    return replace(tree, diagnostics=tuple(diagnostics))
