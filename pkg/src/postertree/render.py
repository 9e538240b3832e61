"""Deterministic SVG and HTML renderings of a poster tree."""

from __future__ import annotations

import base64
import mimetypes
import re
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Iterator
from xml.sax.saxutils import escape, quoteattr

from .errors import MissingAssetFile
from .ingest import Asset
from .layout import PT_PER_IN, LayoutNode, Region, line_height_in, text_runs, wrap_lines
from .poster import PosterTree

PX_PER_IN = 96
_HEX = re.compile(r"^#[0-9A-Fa-f]{6}$")
BASELINE_EM = 0.8  # baseline offset from the top of a line box, in ems
TABLE_TEXT_FRAC = 0.55  # cell font size as a fraction of row height


@dataclass(frozen=True)
class Theme:
    font_family_name: str = "Helvetica, Arial, sans-serif"
    heading_color: str = "#1F3A5F"
    body_color: str = "#222222"
    panel_fill: str = "#F5F7FA"
    panel_border: str = "#1F3A5F"
    border_pt: float = 1.5
    background: str = "#FFFFFF"

    def __post_init__(self) -> None:
        for name in ("heading_color", "body_color", "panel_fill", "panel_border", "background"):
            if not _HEX.match(getattr(self, name)):
                raise ValueError(f"theme {name} must be a #RRGGBB colour, got {getattr(self, name)!r}")
        if self.border_pt < 0:
            raise ValueError("theme border_pt must be non-negative")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Theme":
        return cls(**d)


def _n(v: float) -> str:
    s = f"{v:.3f}".rstrip("0").rstrip(".")
    return "0" if s == "-0" else s


@dataclass(frozen=True)
class _Box:
    x: float
    y: float
    w: float
    h: float

    @classmethod
    def of(cls, region: Region, tree: PosterTree) -> "_Box":
        sx, sy = tree.canvas.width_in * PX_PER_IN, tree.canvas.height_in * PX_PER_IN
        return cls(region.x * sx, region.y * sy, region.w * sx, region.h * sy)


@dataclass(frozen=True)
class TextLine:
    run: int
    text: str
    font_px: float
    top_px: float  # offset of the line box from the slot top
    heading: bool


def slot_lines(tree: PosterTree, slot: LayoutNode) -> list[TextLine]:
    """Wrapped lines of a text slot, using the same line breaker as measurement."""
    node = tree.content[slot.owner]
    width_in = slot.region.w * tree.canvas.width_in
    out: list[TextLine] = []
    top = 0.0
    for i, (text, pt) in enumerate(text_runs(node, slot.font_pt, tree.authors_for(node.id))):
        lh = line_height_in(pt) * PX_PER_IN
        for line in wrap_lines(text, pt, width_in):
            out.append(TextLine(i, line, pt / PT_PER_IN * PX_PER_IN, top, i == 0))
            top += lh
    return out


def _asset_for(tree: PosterTree, slot: LayoutNode) -> Asset:
    return tree.content.asset(slot.asset_id)


def _data_uri(asset: Asset, asset_root: str | Path) -> str:
    path = Path(asset_root) / asset.image_path
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise MissingAssetFile(asset.id, str(path)) from exc
    media = mimetypes.guess_type(path.name)[0] or "application/octet-stream"
    return f"data:{media};base64," + base64.b64encode(data).decode("ascii")


def _table_grid(asset: Asset, box: _Box) -> Iterator[tuple[int, int, _Box, str]]:
    rows = len(asset.cells)
    cols = max(len(r) for r in asset.cells)
    cw, ch = box.w / cols, box.h / rows
    for r, row in enumerate(asset.cells):
        for c in range(cols):
            text = row[c] if c < len(row) else ""
            yield r, c, _Box(box.x + c * cw, box.y + r * ch, cw, ch), text


def _fit_cell(text: str, cell: _Box, max_font_px: float) -> tuple[str, float]:
    font = min(max_font_px, cell.h * TABLE_TEXT_FRAC)
    max_chars = max(1, int(cell.w / (0.55 * font)) - 1)
    return (text if len(text) <= max_chars else text[: max_chars - 1] + "…"), font


# ---------------------------------------------------------------------------
# SVG
# ---------------------------------------------------------------------------


def render_svg(tree: PosterTree, theme: Theme = Theme(), asset_root: str | Path | None = None) -> bytes:
    """One SVG document at the canvas's physical size (96 px per inch)."""
    root_dir = asset_root if asset_root is not None else tree.content.asset_root
    W, H = tree.canvas.width_in * PX_PER_IN, tree.canvas.height_in * PX_PER_IN
    stroke = theme.border_pt / PT_PER_IN * PX_PER_IN
    font = quoteattr(theme.font_family_name)
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" xmlns:xlink="http://www.w3.org/1999/xlink" version="1.1" '
        f'width="{_n(W)}" height="{_n(H)}" viewBox="0 0 {_n(W)} {_n(H)}">',
        f"<title>{escape(tree.content.title)}</title>",
        f'<rect class="background" x="0" y="0" width="{_n(W)}" height="{_n(H)}" fill="{theme.background}"/>',
    ]
    for n in tree.layout.walk():
        b = _Box.of(n.region, tree)
        geo = f'x="{_n(b.x)}" y="{_n(b.y)}" width="{_n(b.w)}" height="{_n(b.h)}"'
        if n.kind == "panel":
            out.append(
                f'<rect class="panel" data-node="{n.id}" {geo} fill="{theme.panel_fill}" '
                f'stroke="{theme.panel_border}" stroke-width="{_n(stroke)}"/>'
            )
        elif n.kind == "text_slot":
            out.append(f'<g class="text-slot" data-slot="{n.id}">')
            out.append(f'<rect class="slot-bounds" {geo} fill="none" stroke="none"/>')
            for line in slot_lines(tree, n):
                color = theme.heading_color if line.heading else theme.body_color
                weight = ' font-weight="bold"' if line.heading else ""
                y = b.y + line.top_px + BASELINE_EM * line.font_px
                out.append(
                    f'<text data-slot="{n.id}" data-run="{line.run}" x="{_n(b.x)}" y="{_n(y)}" '
                    f'font-family={font} font-size="{_n(line.font_px)}" fill="{color}"{weight} xml:space="preserve">'
                    f"<tspan>{escape(line.text)}</tspan></text>"
                )
            out.append("</g>")
        elif n.kind == "figure_slot":
            asset = _asset_for(tree, n)
            caption = f"<title>{escape(asset.caption)}</title>" if asset.caption else ""
            if asset.kind == "figure":
                href = _data_uri(asset, root_dir)
                out.append(
                    f'<image class="figure" data-slot="{n.id}" data-asset="{asset.id}" {geo} '
                    f'preserveAspectRatio="xMidYMid meet" xlink:href="{href}">{caption}</image>'
                )
            else:
                out.append(f'<g class="table" data-slot="{n.id}" data-asset="{asset.id}">{caption}')
                out.append(f'<rect class="slot-bounds" {geo} fill="#FFFFFF" stroke="{theme.panel_border}" stroke-width="{_n(stroke)}"/>')
                body_px = tree.layout.text_slot(n.owner).font_pt / PT_PER_IN * PX_PER_IN
                for r, _c, cell, text in _table_grid(asset, b):
                    shown, size = _fit_cell(text, cell, body_px)
                    out.append(
                        f'<rect x="{_n(cell.x)}" y="{_n(cell.y)}" width="{_n(cell.w)}" height="{_n(cell.h)}" '
                        f'fill="none" stroke="{theme.panel_border}" stroke-width="{_n(stroke / 2)}"/>'
                    )
                    weight = ' font-weight="bold"' if r == 0 else ""
                    out.append(
                        f'<text x="{_n(cell.x + size * 0.3)}" y="{_n(cell.y + (cell.h + size * 0.7) / 2)}" '
                        f'font-family={font} font-size="{_n(size)}" fill="{theme.body_color}"{weight}>{escape(shown)}</text>'
                    )
                out.append("</g>")
    out.append("</svg>")
    return ("\n".join(out) + "\n").encode("utf-8")


# ---------------------------------------------------------------------------
# HTML
# ---------------------------------------------------------------------------


def _style(b: _Box, extra: str = "") -> str:
    return f"position:absolute;left:{_n(b.x)}px;top:{_n(b.y)}px;width:{_n(b.w)}px;height:{_n(b.h)}px;{extra}"


def render_html(tree: PosterTree, theme: Theme = Theme(), asset_root: str | Path | None = None) -> bytes:
    """Absolutely positioned blocks with the same geometry as :func:`render_svg`."""
    root_dir = asset_root if asset_root is not None else tree.content.asset_root
    W, H = tree.canvas.width_in * PX_PER_IN, tree.canvas.height_in * PX_PER_IN
    stroke = theme.border_pt / PT_PER_IN * PX_PER_IN
    has_subpanel = {n.id: any(d.kind == "panel" for d in tree.layout.walk(n.id)[1:]) for n in tree.layout.panels()}
    out = [
        "<!DOCTYPE html>",
        '<html lang="en">',
        "<head>",
        '<meta charset="utf-8">',
        f"<title>{escape(tree.content.title)}</title>",
        "<style>",
        f".poster{{position:relative;width:{_n(W)}px;height:{_n(H)}px;background:{theme.background};"
        f"font-family:{theme.font_family_name};overflow:hidden}}",
        f".panel{{box-sizing:border-box;background:{theme.panel_fill};border:{_n(stroke)}px solid {theme.panel_border}}}",
        ".line{position:absolute;left:0;white-space:pre;margin:0}",
        f".heading{{color:{theme.heading_color};font-weight:bold}}",
        f".body{{color:{theme.body_color}}}",
        "table{border-collapse:collapse;table-layout:fixed}",
        f"td{{border:{_n(stroke / 2)}px solid {theme.panel_border};overflow:hidden;white-space:nowrap;padding:0}}",
        "</style>",
        "</head>",
        "<body>",
        '<div class="poster">',
    ]
    for n in tree.layout.walk():
        b = _Box.of(n.region, tree)
        if n.kind == "panel":
            leaf = "false" if has_subpanel[n.id] else "true"
            out.append(f'<div class="panel" data-node="{n.id}" data-leaf="{leaf}" style="{_style(b)}"></div>')
        elif n.kind == "text_slot":
            out.append(f'<div class="text-slot" data-slot="{n.id}" style="{_style(b)}">')
            for line in slot_lines(tree, n):
                cls = "heading" if line.heading else "body"
                lh = line_height_in(line.font_px / PX_PER_IN * PT_PER_IN) * PX_PER_IN
                out.append(
                    f'<p class="line {cls}" data-run="{line.run}" style="top:{_n(line.top_px)}px;'
                    f'font-size:{_n(line.font_px)}px;line-height:{_n(lh)}px">{escape(line.text)}</p>'
                )
            out.append("</div>")
        elif n.kind == "figure_slot":
            asset = _asset_for(tree, n)
            if asset.kind == "figure":
                out.append(
                    f'<img class="figure" data-slot="{n.id}" data-asset="{asset.id}" alt={quoteattr(asset.caption)} '
                    f'src="{_data_uri(asset, root_dir)}" style="{_style(b, "object-fit:contain")}">'
                )
            else:
                rows = []
                for r, row in enumerate(asset.cells):
                    cells = "".join(f"<td>{escape(c)}</td>" for c in row)
                    rows.append(f"<tr>{cells}</tr>" if r else f'<tr style="font-weight:bold">{cells}</tr>')
                out.append(
                    f'<table class="table" data-slot="{n.id}" data-asset="{asset.id}" title={quoteattr(asset.caption)} '
                    f'style="{_style(b, "background:#FFFFFF")}">{"".join(rows)}</table>'
                )
    out.extend(["</div>", "</body>", "</html>"])
    return ("\n".join(out) + "\n").encode("utf-8")


def render(tree: PosterTree, fmt: str = "svg", theme: Theme = Theme(), asset_root: str | Path | None = None) -> bytes:
    if fmt == "svg":
        return render_svg(tree, theme, asset_root)
    if fmt == "html":
        return render_html(tree, theme, asset_root)
    raise ValueError(f"unknown render format {fmt!r}")
