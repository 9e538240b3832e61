import json
import os
import xml.etree.ElementTree as ET
from html.parser import HTMLParser

import pytest

from postertree.errors import MissingAssetFile
from postertree.layout import measure_text
from postertree.poster import dumps_tree, loads_tree
from postertree.render import PX_PER_IN, Theme, render, render_html, render_svg, slot_lines

import oracles
from support import DOC_FIXTURES, GOLDEN, plan, raw_from_dict, raw_of, seeded_tree

SVG = "{http://www.w3.org/2000/svg}"
GOLDEN_DOCS = ("doc_small.json", "doc_figures.json")


def root_only():
    return plan(raw_from_dict({"schema": "pf-doc/1", "title": "Only a title", "authors": ["A. Person"], "body": [], "assets": []}))


def svg_root(tree):
    return ET.fromstring(render_svg(tree))


class Collector(HTMLParser):
    def __init__(self):
        super().__init__()
        self.elements = []

    def handle_starttag(self, tag, attrs):
        self.elements.append((tag, dict(attrs)))


def html_elements(tree):
    parser = Collector()
    parser.feed(render_html(tree).decode("utf-8"))
    return parser.elements


def layout_json(tree):
    data = json.loads(dumps_tree(tree))
    return data, {n["id"]: n for n in data["layout"]["nodes"]}


# -- root-only ---------------------------------------------------------------


def test_root_only_svg_is_just_the_title_band():
    root = svg_root(root_only())
    assert root.findall(f".//{SVG}rect[@class='panel']") == []
    groups = root.findall(f".//{SVG}g[@class='text-slot']")
    assert [g.get("data-slot") for g in groups] == ["text-root"]
    texts = [t.find(f"{SVG}tspan").text for t in groups[0].findall(f"{SVG}text")]
    assert texts == ["Only a title", "A. Person"]


def test_root_only_html_has_one_title_block():
    elements = html_elements(root_only())
    slots = [a for tag, a in elements if a.get("class") == "text-slot"]
    assert [s["data-slot"] for s in slots] == ["text-root"]
    assert not any(a.get("class") == "panel" for _, a in elements)


# -- goldens -----------------------------------------------------------------


@pytest.mark.parametrize("name", GOLDEN_DOCS)
@pytest.mark.parametrize("fmt", ["svg", "html"])
def test_matches_golden(name, fmt):
    out = render(plan(raw_of(name)), fmt)
    path = GOLDEN / f"{name.split('.')[0]}.{fmt}"
    if os.environ.get("UPDATE_GOLDEN"):
        path.write_bytes(out)
    assert out == path.read_bytes()


# -- renderer and measurement agree ----------------------------------------


def _cases():
    for name in DOC_FIXTURES:
        yield name, lambda n=name: plan(raw_of(n))
    yield "seeded", seeded_tree


@pytest.mark.parametrize("name,make", list(_cases()), ids=[c[0] for c in _cases()])
def test_rendered_lines_equal_measured_lines(name, make):
    tree = make()
    root = svg_root(tree)
    data, nodes = layout_json(tree)
    content = {n["id"]: n for n in data["content"]["nodes"]}
    checked = 0
    for g in root.iter(f"{SVG}g"):
        if g.get("class") != "text-slot":
            continue
        slot = nodes[g.get("data-slot")]
        width_in = slot["region"][2] * data["canvas"]["width_in"]
        runs = oracles.slot_runs(content[slot["owner"]], slot["font_pt"], list(tree.authors_for(slot["owner"])))
        rendered = [int(t.get("data-run")) for t in g.findall(f"{SVG}text")]
        for i, (text, pt) in enumerate(runs):
            lines = rendered.count(i)
            assert lines == oracles.text_lines(text, pt, width_in)
            assert lines * 1.25 * pt / 72 == pytest.approx(measure_text(text, pt, width_in), abs=1e-9)
            checked += 1
    assert checked >= 2 * (len(tree.nodes) - 1) + 1


@pytest.mark.parametrize("name", DOC_FIXTURES)
def test_wrapped_lines_keep_every_character(name):
    tree = plan(raw_of(name))
    for slot in tree.layout.walk():
        if slot.kind != "text_slot":
            continue
        lines = slot_lines(tree, slot)
        node = tree.content[slot.owner]
        body = "".join(l.text for l in lines if l.run == 1)
        if node.level != "root":
            assert body.replace(" ", "").replace("\n", "") == node.body_text.replace(" ", "").replace("\n", "")


# -- geometry ----------------------------------------------------------------


@pytest.mark.parametrize("name", DOC_FIXTURES)
def test_svg_boxes_match_regions(name):
    tree = plan(raw_of(name))
    data, nodes = layout_json(tree)
    sx = data["canvas"]["width_in"] * PX_PER_IN
    sy = data["canvas"]["height_in"] * PX_PER_IN
    root = svg_root(tree)
    assert float(root.get("width")) == sx and float(root.get("height")) == sy
    seen = 0
    for el in root.iter():
        nid = el.get("data-node") or (el.get("data-slot") if el.tag in (f"{SVG}image",) else None)
        if el.get("class") == "slot-bounds":
            continue
        if nid is None or el.tag not in (f"{SVG}rect", f"{SVG}image"):
            continue
        x, y, w, h = nodes[nid]["region"]
        got = [float(el.get(k)) for k in ("x", "y", "width", "height")]
        assert got == pytest.approx([x * sx, y * sy, w * sx, h * sy], abs=0.5)
        seen += 1
    panels = sum(1 for n in nodes.values() if n["kind"] == "panel")
    figures = sum(1 for n in nodes.values() if n["kind"] == "figure_slot" and n["asset_id"] in {a["id"] for a in data["content"]["assets"] if a["kind"] == "figure"})
    assert seen == panels + figures


@pytest.mark.parametrize("name", DOC_FIXTURES)
def test_html_panel_count_and_leaves(name):
    tree = plan(raw_of(name))
    _, nodes = layout_json(tree)
    panels = {nid for nid, n in nodes.items() if n["kind"] == "panel"}

    def has_panel_below(nid):
        return any(nodes[c]["kind"] == "panel" or has_panel_below(c) for c in nodes[nid]["children"])

    leaves = {p for p in panels if not has_panel_below(p)}
    divs = [a for tag, a in html_elements(tree) if tag == "div" and a.get("class") == "panel"]
    assert {d["data-node"] for d in divs} == panels
    assert {d["data-node"] for d in divs if d["data-leaf"] == "true"} == leaves


def test_figure_keeps_aspect():
    tree = plan(raw_of("doc_figures.json"))
    for img in svg_root(tree).iter(f"{SVG}image"):
        slot = tree.layout[img.get("data-slot")]
        ratio = float(img.get("width")) / float(img.get("height"))
        assert ratio == pytest.approx(slot.aspect, rel=0.1)
        assert img.get("preserveAspectRatio") == "xMidYMid meet"


# -- errors and determinism --------------------------------------------------


def test_missing_image_file(tmp_path):
    tree = plan(raw_of("doc_figures.json"))
    with pytest.raises(MissingAssetFile) as err:
        render_svg(tree, asset_root=tmp_path)
    assert err.value.asset_id in {"f1", "f2", "f3"}
    with pytest.raises(MissingAssetFile):
        render_html(tree, asset_root=tmp_path)


@pytest.mark.parametrize("fmt", ["svg", "html"])
def test_render_is_deterministic(fmt):
    tree = plan(raw_of("doc_small.json"))
    again = loads_tree(dumps_tree(tree))
    assert render(tree, fmt) == render(again, fmt) == render(tree, fmt)


def test_theme_colours_validated():
    with pytest.raises(ValueError):
        Theme(panel_fill="blue")
    with pytest.raises(ValueError):
        Theme(border_pt=-1)


def test_unknown_format_rejected():
    with pytest.raises(ValueError):
        render(root_only(), "pptx")
