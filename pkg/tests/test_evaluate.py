import json
from dataclasses import replace

import pytest

from postertree.errors import ScoreParseError
from postertree.evaluate import JUDGE_CRITERIA, EvalThresholds, JudgeScore, eval_tree, judge, parse_score
from postertree.layout import Region
from postertree.poster import dumps_tree

import oracles
from support import DOC_FIXTURES, plan, raw_from_dict, raw_of, seeded_tree


def independent_report(tree):
    """Every report field recomputed from the serialized tree."""
    data = json.loads(dumps_tree(tree))
    canvas = data["canvas"]
    content = data["content"]
    overflows = oracles.tree_overflows(data)
    fills = oracles.tree_fills(data)
    leaves = [n["region"] for n in data["layout"]["nodes"] if not n["children"]]
    overlaps = 0
    for i, (x1, y1, w1, h1) in enumerate(leaves):
        for x2, y2, w2, h2 in leaves[i + 1 :]:
            if min(x1 + w1, x2 + w2) > max(x1, x2) and min(y1 + h1, y2 + h2) > max(y1, y2):
                overlaps += 1
    regions = {n["id"]: n["region"] for n in data["layout"]["nodes"]}
    root = next(n for n in content["nodes"] if n["id"] == content["root"])
    area = sum(regions[f"panel-{s}"][2] * regions[f"panel-{s}"][3] for s in root["children"])
    area *= canvas["width_in"] * canvas["height_in"]
    words = sum(len(n["summary"].split()) + sum(len(b.split()) for b in n["bullets"]) for n in content["nodes"])
    return {
        "overflow_total_in": sum(overflows.values()),
        "overflowing": sorted(k for k, v in overflows.items() if v > 0),
        "overlaps": overlaps,
        "balance": oracles.balance(list(fills.values())),
        "density": words / area,
    }


# -- eval_tree ---------------------------------------------------------------


def test_root_only_poster_fails_density():
    tree = plan(raw_from_dict({"schema": "pf-doc/1", "title": "Nothing here", "authors": [], "body": [], "assets": []}))
    report = eval_tree(tree)
    assert report.overflow_total_in == 0
    assert report.overlap_violations == 0
    assert report.density == 0
    assert not report.satisfied


@pytest.mark.parametrize("name", DOC_FIXTURES)
def test_fixture_reports_match_geometry_oracles(name):
    tree = plan(raw_of(name))
    report = eval_tree(tree)
    expected = independent_report(tree)
    assert report.overflow_total_in == pytest.approx(expected["overflow_total_in"], abs=1e-9)
    assert sorted(n for n, _ in report.overflowing_nodes) == expected["overflowing"]
    assert report.overlap_violations == expected["overlaps"] == 0
    assert report.balance == pytest.approx(expected["balance"], abs=1e-9)
    assert report.density == pytest.approx(expected["density"], rel=1e-9)


def test_seeded_tree_report_pinned():
    tree = seeded_tree()
    report = eval_tree(tree)
    expected = independent_report(tree)
    assert report.overflow_total_in == pytest.approx(expected["overflow_total_in"], abs=1e-9)
    assert report.overflow_total_in == pytest.approx(10.570, abs=5e-4)
    assert [n for n, _ in report.overflowing_nodes] == ["sec-1", "sec-3"] == expected["overflowing"]
    assert report.balance == pytest.approx(expected["balance"], abs=1e-9)
    assert report.balance == pytest.approx(0.711, abs=5e-4)
    assert report.density == pytest.approx(expected["density"], rel=1e-9)
    assert not report.satisfied


def test_overlapping_leaves_unsatisfy():
    tree = plan(raw_of("doc_small.json"))
    assert eval_tree(tree).satisfied
    layout = tree.layout
    a, b = layout.text_slot("sec-1"), layout.text_slot("sec-2")
    nodes = dict(layout.nodes)
    nodes[b.id] = replace(b, region=Region(a.region.x, a.region.y, b.region.w, b.region.h))
    broken = replace(tree, layout=replace(layout, nodes=nodes))
    report = eval_tree(broken)
    assert report.overlap_violations >= 1
    assert independent_report(broken)["overlaps"] == report.overlap_violations
    assert not report.satisfied


def test_thresholds_decide_satisfaction():
    tree = plan(raw_of("doc_small.json"))
    report = eval_tree(tree)
    assert report.satisfied
    assert not eval_tree(tree, EvalThresholds(min_balance=report.balance + 0.01)).satisfied
    assert not eval_tree(tree, EvalThresholds(max_density=report.density - 0.01)).satisfied


def test_eval_is_pure():
    tree = seeded_tree()
    before = dumps_tree(tree)
    assert eval_tree(tree) == eval_tree(tree)
    assert dumps_tree(tree) == before


def test_summary_line():
    text = eval_tree(seeded_tree()).summary()
    assert text.startswith("NOT satisfied: overflow 10.570 in over 2 node(s)")


# -- judge -------------------------------------------------------------------


class JudgeClient:
    def __init__(self, replies):
        self.replies = replies
        self.messages = []

    def complete_text(self, messages):
        self.messages.append(messages)
        return self.replies.get(messages[1]["content"][0]["text"].split(" for ")[1].rstrip("."), "3")


def test_all_threes_average_three():
    client = JudgeClient({})
    score = judge(b"<svg/>", client)
    assert score.overall == 3.0
    assert len(client.messages) == len(JUDGE_CRITERIA) == 6
    image = client.messages[0][1]["content"][1]["image_url"]["url"]
    assert image.startswith("data:image/svg+xml;base64,")


def test_mean_of_mixed_scores():
    client = JudgeClient({"clarity": "5", "engagement": '{"score": 1}'})
    score = judge(b"<svg/>", client)
    assert (score.clarity, score.engagement) == (5, 1)
    assert score.overall == pytest.approx((5 + 1 + 3 * 4) / 6)


def test_out_of_range_score_rejected():
    with pytest.raises(ScoreParseError):
        judge(b"<svg/>", JudgeClient({"clarity": "6"}))


@pytest.mark.parametrize("reply", ["", "three", '{"rating": 4}', "0", "4.5", True])
def test_unreadable_scores_rejected(reply):
    with pytest.raises(ScoreParseError):
        parse_score(reply, "clarity")


def test_score_record_validates_range():
    with pytest.raises(ScoreParseError):
        JudgeScore(3, 3, 3, 3, 3, 9)
