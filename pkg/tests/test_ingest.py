import itertools
import json
from dataclasses import replace

import pytest
from hypothesis import given, settings, strategies as st

from postertree.errors import DanglingAssetRef, EmptyDocument, InvariantViolation, SchemaError
from postertree.ingest import (
    PARAGRAPH,
    SECTION,
    build_raw_tree,
    check_raw_tree,
    dumps_raw,
    link_assets,
    load_manifest,
    loads_raw,
    parse_canonical,
    parse_markdown,
    to_canonical,
)
from postertree.text import normalize_ws

import docgen
from support import fixture_path


def doc(body, assets=(), title="T"):
    return json.dumps({"schema": "pf-doc/1", "title": title, "authors": [], "body": list(body), "assets": list(assets)})


def h(level, text):
    return {"type": "heading", "level": level, "text": text}


def p(text):
    return {"type": "paragraph", "text": text}


def fig(aid, caption):
    return {"id": aid, "kind": "figure", "caption": caption, "image": "figs/plot.png", "size": [640, 480]}


def kinds_under(tree, nid):
    return [tree[c].kind for c in tree[nid].children]


# -- parse_canonical ---------------------------------------------------------


def test_minimal_document_has_two_blocks():
    d = parse_canonical(doc([h(1, "Intro"), p("p1")]))
    assert d.title == "T"
    assert [b.type for b in d.body] == ["heading", "paragraph"]


def test_dangling_figure_ref():
    with pytest.raises(DanglingAssetRef) as err:
        parse_canonical(doc([h(1, "Intro"), p("see"), {"type": "figure", "ref": "fig1"}]))
    assert err.value.asset_id == "fig1"


def test_schema_error_carries_path():
    with pytest.raises(SchemaError) as err:
        parse_canonical(doc([{"type": "heading", "level": "one", "text": "x"}]))
    assert err.value.path.startswith("$.body[0]")


def test_wrong_schema_tag_rejected():
    with pytest.raises(SchemaError):
        parse_canonical(json.dumps({"schema": "pf-doc/9", "title": "T", "body": []}))


def test_deep_heading_clamped_to_subsection():
    d = parse_canonical(doc([h(1, "A"), h(3, "Deep"), p("x")]))
    assert d.body[1].level == 2


def test_duplicate_asset_ids_rejected():
    with pytest.raises(SchemaError):
        parse_canonical(doc([h(1, "A"), p("x")], [fig("f", "Figure 1: a"), fig("f", "Figure 2: b")]))


def test_small_fixture_headings_and_assets():
    raw_json = json.loads(fixture_path("doc_small.json").read_text())
    d = parse_canonical(fixture_path("doc_small.json").read_bytes())
    # hand count straight from the JSON
    expected_sections = sum(1 for b in raw_json["body"] if b["type"] == "heading" and b["level"] == 1)
    assert expected_sections == 4
    assert sum(1 for b in d.body if b.type == "heading" and b.level == 1) == 4
    assert len(d.assets) == 2


# -- parse_markdown ----------------------------------------------------------


def test_markdown_minimal():
    d = parse_markdown("# Title\n## Intro\ntext")
    assert d.title == "Title"
    assert [(b.type, b.text) for b in d.body] == [("heading", "Intro"), ("paragraph", "text")]
    assert d.body[0].level == 1


def test_markdown_deep_heading_is_subsection():
    d = parse_markdown("# Title\n## Sec\nbody\n#### Deep\nmore")
    assert [(b.type, b.level) for b in d.body if b.type == "heading"] == [("heading", 1), ("heading", 2)]


def test_markdown_without_title():
    with pytest.raises(EmptyDocument):
        parse_markdown("## Intro\ntext")


def test_markdown_dangling_marker():
    with pytest.raises(DanglingAssetRef):
        parse_markdown("# T\n## A\ntext\n![nope]\n")


def test_markdown_round_trip_through_canonical():
    path = fixture_path("doc_markdown.md")
    manifest = load_manifest(fixture_path("doc_markdown.assets.json").read_text())
    md = parse_markdown(path.read_text(), manifest)
    again = parse_canonical(to_canonical(md))
    assert again == md
    assert again.source_format == "canonical-json"


@pytest.mark.parametrize("name", ["doc_small.json", "doc_figures.json", "doc_overflow.json", "doc_appendix.json"])
def test_canonical_round_trip(name):
    d = parse_canonical(fixture_path(name).read_bytes())
    assert parse_canonical(to_canonical(d)) == d


# -- build_raw_tree ----------------------------------------------------------


def test_two_sections_six_nodes():
    d = parse_canonical(doc([h(1, "S1"), p("a"), h(1, "S2"), p("b"), p("c")]))
    t = build_raw_tree(d)
    assert len(t.nodes) == 6
    assert kinds_under(t, t.root) == [SECTION, SECTION]
    s1, s2 = t[t.root].children
    assert kinds_under(t, s1) == [PARAGRAPH]
    assert kinds_under(t, s2) == [PARAGRAPH, PARAGRAPH]


def test_title_only_document():
    t = build_raw_tree(parse_canonical(doc([], title="Only")))
    assert list(t.nodes) == [t.root]
    assert t.title == "Only"


def _fixture_shape(data):
    # independent walk of the block list: node count and longest root path
    count, depth, level = 1, 1, 0
    for b in data["body"]:
        count += 1
        if b["type"] == "heading":
            level = min(2, b["level"])
            depth = max(depth, 1 + level)
        elif b["type"] == "paragraph":
            depth = max(depth, 2 + level)
        else:
            depth = max(depth, 3 + level)
    return count, depth


def test_small_fixture_node_count_and_depth():
    data = json.loads(fixture_path("doc_small.json").read_text())
    t = link_assets(build_raw_tree(parse_canonical(json.dumps(data))))
    assert _fixture_shape(data) == (17, 4)
    assert (len(t.nodes), t.depth()) == (17, 4)


def test_ids_are_depth_first_ordinals():
    t = link_assets(build_raw_tree(parse_canonical(fixture_path("doc_small.json").read_bytes())))
    assert [n.id for n in t.walk()][:4] == ["root", "sec-1", "par-1", "fig-1"]
    assert {n.id for n in t.nodes.values() if n.kind == PARAGRAPH} == {f"par-{i}" for i in range(1, 10)}


def test_leading_paragraph_gets_untitled_section():
    t = build_raw_tree(parse_canonical(doc([p("preface"), h(1, "A"), p("x")])))
    first = t[t[t.root].children[0]]
    assert first.kind == SECTION
    assert kinds_under(t, first.id) == [PARAGRAPH]


def test_check_rejects_paragraph_under_root():
    t = build_raw_tree(parse_canonical(doc([h(1, "A"), p("x")])))
    sec = t[t.root].children[0]
    par = t[sec].children[0]
    nodes = dict(t.nodes)
    nodes[t.root] = replace(nodes[t.root], children=(sec, par))
    nodes[sec] = replace(nodes[sec], children=())
    with pytest.raises(InvariantViolation):
        check_raw_tree(replace(t, nodes=nodes))


# -- link_assets -------------------------------------------------------------


def test_figure_attached_to_citing_paragraph():
    d = parse_canonical(
        doc([h(1, "A"), p("Intro text."), p("As shown in Figure 1 the loss drops."), {"type": "figure", "ref": "fig1"}],
            [fig("fig1", "Figure 1: Loss curve")])
    )
    t = link_assets(build_raw_tree(d), d)
    host = next(n for n in t.nodes.values() if "fig1" in [t[c].asset_id for c in n.children])
    assert host.text.startswith("As shown in Figure 1")


def test_unreferenced_asset_goes_to_last_paragraph_of_host_section():
    d = parse_canonical(
        doc([h(1, "A"), p("first"), {"type": "figure", "ref": "fig1"}, p("second"), h(1, "B"), p("third")],
            [fig("fig1", "Figure 1: never cited")])
    )
    t = link_assets(build_raw_tree(d), d)
    host = next(n for n in t.nodes.values() if any(t[c].asset_id == "fig1" for c in n.children))
    assert host.text == "second"
    assert any("fig1" in msg for msg in t.diagnostics)


@pytest.mark.parametrize("cites", list(itertools.product([False, True], repeat=2)))
def test_first_citing_paragraph_wins(cites):
    texts = [("Compare Fig. 2 here." if c else f"Plain text {i}.") for i, c in enumerate(cites)]
    body = [h(1, "A"), p(texts[0]), p(texts[1]), {"type": "figure", "ref": "f2"}]
    assets = [fig("f1", "Figure 1: one"), fig("f2", "Figure 2: two")]
    body.insert(1, {"type": "figure", "ref": "f1"})
    d = parse_canonical(doc(body, assets))
    t = link_assets(build_raw_tree(d), d)
    host = next(n for n in t.nodes.values() if any(t[c].asset_id == "f2" for c in n.children))
    # rule: first citing paragraph in document order, else the section's last paragraph
    expected = texts[cites.index(True)] if any(cites) else texts[-1]
    assert host.text == expected


def test_reference_patterns_are_case_insensitive():
    d = parse_canonical(
        doc([h(1, "A"), p("nothing"), p("see TABLE 1 for numbers"), {"type": "table", "ref": "t"}],
            [{"id": "t", "kind": "table", "caption": "Table 1: numbers", "cells": [["a", "b"], ["1", "2"]]}])
    )
    t = link_assets(build_raw_tree(d), d)
    host = next(n for n in t.nodes.values() if any(t[c].asset_id == "t" for c in n.children))
    assert host.text == "see TABLE 1 for numbers"


def test_figure_and_table_numbering_is_separate():
    d = parse_canonical(
        doc([h(1, "A"), p("Table 1 lists it."), p("Figure 1 plots it."), {"type": "figure", "ref": "f"}, {"type": "table", "ref": "t"}],
            [fig("f", "Loss"), {"id": "t", "kind": "table", "caption": "Scores", "cells": [["a"], ["1"]]}])
    )
    t = link_assets(build_raw_tree(d), d)
    hosts = {t[c].asset_id: n.text for n in t.nodes.values() for c in n.children if t[c].asset_id}
    assert hosts == {"f": "Figure 1 plots it.", "t": "Table 1 lists it."}


# -- properties over random documents ---------------------------------------


def _paragraph_texts(d):
    return sorted(normalize_ws(b.text) for b in d.body if b.type == "paragraph")


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=0, max_value=10_000))
def test_random_documents(seed):
    data = json.dumps(docgen.random_document(seed))
    d = parse_canonical(data)
    t = link_assets(build_raw_tree(d), d)
    check_raw_tree(t)
    assert sorted(n.text for n in t.nodes.values() if n.kind == PARAGRAPH) == _paragraph_texts(d)
    placed = sorted(n.asset_id for n in t.nodes.values() if n.asset_id)
    assert placed == sorted(a.id for a in d.assets)
    # idempotent and deterministic
    assert dumps_raw(link_assets(t, d)) == dumps_raw(t)
    d2 = parse_canonical(data)
    assert dumps_raw(link_assets(build_raw_tree(d2), d2)) == dumps_raw(t)


def test_raw_tree_serialization_round_trip():
    d = parse_canonical(fixture_path("doc_figures.json").read_bytes())
    t = link_assets(build_raw_tree(d), d)
    assert dumps_raw(loads_raw(dumps_raw(t))) == dumps_raw(t)
