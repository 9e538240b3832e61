import json
import random
from dataclasses import replace

import pytest
from hypothesis import given, settings, strategies as st

from postertree.content import ContentNode, ContentTree, build_content_tree
from postertree.errors import CorrespondenceError, InvariantViolation, SchemaError
from postertree.layout import LayoutNode, LayoutPatch, LayoutTree, Region, init_layout
from postertree.poster import (
    PosterTree,
    StagedUpdate,
    bfs_order,
    commit,
    dumps_tree,
    loads_tree,
    merge,
    stage,
    update_node,
)

import oracles
from support import DOC_FIXTURES, plan, raw_from_dict, raw_of
from test_content import sections_doc


def shape_tree(parents):
    """A poster tree value with the given parent array, for traversal tests only."""
    ids = [f"n{i}" for i in range(len(parents))]
    children = {nid: [] for nid in ids}
    for i, p in enumerate(parents):
        if p is not None:
            children[ids[p]].append(ids[i])
    root = ids[parents.index(None)]
    nodes = {nid: ContentNode(nid, "section", nid) for nid in ids}
    content = ContentTree(nodes, {k: tuple(v) for k, v in children.items()}, root, {nid: () for nid in ids})
    return PosterTree(content, LayoutTree({}))


# -- merge -------------------------------------------------------------------


def test_single_section_two_nodes():
    tree = plan(raw_from_dict(sections_doc([80])))
    assert len(tree) == 2
    assert sorted(tree.nodes) == ["root", "sec-1"]
    assert tree.iteration == 0


@pytest.mark.parametrize("name", DOC_FIXTURES)
def test_node_count_equals_content(name):
    content = build_content_tree(raw_of(name))
    tree = merge(content, init_layout(content))
    assert len(tree.nodes) == len(content.nodes)
    for nid, node in tree.nodes.items():
        assert node.id == node.content.id == nid
        slots = sorted(s.asset_id for s in node.layout if s.kind == "figure_slot")
        assert slots == sorted(node.content.asset_refs)


def test_orphan_panel_rejected():
    content = build_content_tree(raw_of("doc_small.json"))
    layout = init_layout(content)
    nodes = dict(layout.nodes)
    col = layout.parents()["panel-sec-1"]
    nodes["panel-ghost"] = LayoutNode("panel-ghost", "panel", Region(0, 0, 0.1, 0.1), orientation="column")
    nodes[col] = replace(nodes[col], children=nodes[col].children + ("panel-ghost",))
    with pytest.raises(CorrespondenceError):
        merge(content, replace(layout, nodes=nodes))


def test_missing_panel_rejected():
    content = build_content_tree(raw_of("doc_small.json"))
    other = build_content_tree(raw_from_dict(sections_doc([50, 50])))
    with pytest.raises(CorrespondenceError):
        merge(content, init_layout(other))


# -- bfs_order ---------------------------------------------------------------


def test_root_only():
    assert bfs_order(shape_tree([None])) == ["n0"]


def test_definition_example():
    # root -> A(X, Y), B
    tree = shape_tree([None, 0, 0, 1, 1])
    assert bfs_order(tree) == ["n0", "n1", "n2", "n3", "n4"]


def test_level_order_not_depth_first():
    # root -> A -> X, root -> B
    assert bfs_order(shape_tree([None, 0, 1, 0])) == ["n0", "n1", "n3", "n2"]


def random_parents(rng, n):
    return [None] + [rng.randrange(i) for i in range(1, n)]


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**6))
def test_random_30_node_trees_match_oracle(seed):
    parents = random_parents(random.Random(seed), 30)
    order = bfs_order(shape_tree(parents))
    assert order == [f"n{i}" for i in oracles.bfs(parents)]
    assert sorted(order) == sorted(f"n{i}" for i in range(30))


# -- update_node -------------------------------------------------------------


def six_panel_tree():
    return plan(raw_from_dict(sections_doc([200] * 6, seed=1)))


def test_identity_update_returns_equal_tree():
    tree = plan(raw_of("doc_small.json"))
    assert update_node(tree, "sec-2", tree.content["sec-2"]) == tree


def test_grow_one_of_two_equal_panels():
    tree = six_panel_tree()
    a, b = tree.layout["panel-sec-1"], tree.layout["panel-sec-2"]
    assert a.weight == b.weight == 0.5
    grown = update_node(tree, "sec-1", tree.content["sec-1"], LayoutPatch(weight_factor=1.5))
    a2, b2 = grown.layout["panel-sec-1"], grown.layout["panel-sec-2"]
    # 1.5 : 1 renormalized
    assert (a2.weight, b2.weight) == (pytest.approx(0.6), pytest.approx(0.4))
    assert a2.region.h / b2.region.h == pytest.approx(1.5)
    assert a2.region.h + b2.region.h == pytest.approx(a.region.h + b.region.h)
    # other columns untouched
    assert grown.layout["panel-sec-3"] == tree.layout["panel-sec-3"]


def test_shrinking_below_min_panel_frac_rejected():
    tree = six_panel_tree()
    before = dumps_tree(tree)
    with pytest.raises(InvariantViolation):
        update_node(tree, "sec-1", tree.content["sec-1"], LayoutPatch(weight_factor=0.001))
    assert dumps_tree(tree) == before


def test_update_is_persistent():
    tree = plan(raw_of("doc_small.json"))
    before = dumps_tree(tree)
    node = tree.content["sec-1"]
    shorter = replace(node, summary=" ".join(node.summary.split()[:10]))
    updated = update_node(tree, "sec-1", shorter, LayoutPatch(font_pt=20.0))
    assert dumps_tree(tree) == before
    assert updated.content["sec-1"].summary == shorter.summary
    assert updated.layout.text_slot("sec-1").font_pt == 20.0


def test_update_cannot_change_identity_or_assets():
    tree = plan(raw_of("doc_small.json"))
    node = tree.content["sec-1"]
    with pytest.raises(InvariantViolation):
        update_node(tree, "sec-1", replace(node, level="subsection"))
    with pytest.raises(InvariantViolation):
        update_node(tree, "sec-1", replace(node, asset_refs=()))
    with pytest.raises(InvariantViolation):
        update_node(tree, "sec-1", replace(node, summary="word " * (2 * node.word_budget)))


# -- commit ------------------------------------------------------------------


def test_commit_without_updates_advances_iteration():
    tree = plan(raw_of("doc_small.json"))
    committed = commit(tree)
    assert committed.iteration == 1
    assert replace(committed, iteration=0) == tree


def test_disjoint_updates_commute():
    tree = six_panel_tree()
    u1 = StagedUpdate("sec-1", tree.content["sec-1"], LayoutPatch(weight_factor=1.3))
    u2 = StagedUpdate("sec-4", tree.content["sec-4"], LayoutPatch(weight_factor=0.8, font_pt=22.0))
    node6 = tree.content["sec-6"]
    u3 = StagedUpdate("sec-6", replace(node6, summary=" ".join(node6.summary.split()[:20])))
    orders = [(u1, u2, u3), (u3, u2, u1), (u2, u3, u1)]
    results = set()
    for order in orders:
        staged = tree
        for u in order:
            staged = stage(staged, u)
        results.add(dumps_tree(commit(staged)))
    assert len(results) == 1


def test_same_column_updates_commute():
    tree = six_panel_tree()
    u1 = StagedUpdate("sec-1", tree.content["sec-1"], LayoutPatch(weight_factor=1.4))
    u2 = StagedUpdate("sec-2", tree.content["sec-2"], LayoutPatch(weight_factor=0.9))
    a = commit(stage(stage(tree, u1), u2))
    b = commit(stage(stage(tree, u2), u1))
    assert dumps_tree(a) == dumps_tree(b)


def test_commit_skips_invalid_update():
    tree = six_panel_tree()
    bad = StagedUpdate("sec-1", tree.content["sec-1"], LayoutPatch(weight_factor=0.001))
    good = StagedUpdate("sec-3", tree.content["sec-3"], LayoutPatch(font_pt=22.0))
    committed = commit(stage(stage(tree, bad), good))
    assert committed.iteration == 1
    assert committed.layout.text_slot("sec-3").font_pt == 22.0
    assert committed.layout["panel-sec-1"] == tree.layout["panel-sec-1"]
    assert len(committed.rejected) == 1 and committed.rejected[0].startswith("sec-1")


# -- serialization -----------------------------------------------------------


@pytest.mark.parametrize("name", DOC_FIXTURES)
def test_round_trip_is_lossless(name):
    tree = plan(raw_of(name))
    text = dumps_tree(tree)
    assert loads_tree(text) == tree
    assert dumps_tree(loads_tree(text)) == text


def test_schema_tag_checked():
    data = json.loads(dumps_tree(plan(raw_of("doc_small.json"))))
    data["schema"] = "pf-tree/0"
    with pytest.raises(SchemaError):
        PosterTree.from_dict(data)
