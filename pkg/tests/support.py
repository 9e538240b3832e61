"""Helpers shared by the test modules: fixture loading and a mock chat endpoint."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any

import httpx

from postertree.agents.actions import CONTENT, LAYOUT, Opinion
from postertree.agents.rules import NodeView, RuleContentAgent, RuleLayoutAgent
from postertree.cli import stage_ingest
from postertree.content import PosterBudget, build_content_tree, extractive_summarize
from postertree.ingest import build_raw_tree, link_assets, parse_canonical
from postertree.layout import PosterCanvas, init_layout
from postertree.poster import PosterTree, loads_tree, merge

TESTS = Path(__file__).resolve().parent
FIXTURES = TESTS / "fixtures"
GOLDEN = TESTS / "golden"
DOC_FIXTURES = ("doc_small.json", "doc_figures.json", "doc_overflow.json", "doc_appendix.json", "doc_markdown.md")
SEEDED_TREE = FIXTURES / "overflow_seeded.tree.json"


def fixture_path(name: str) -> Path:
    return FIXTURES / name


def raw_of(name: str):
    return stage_ingest(fixture_path(name))


def raw_from_dict(doc: dict[str, Any], asset_root: str | Path = FIXTURES):
    parsed = parse_canonical(json.dumps(doc))
    return link_assets(build_raw_tree(parsed, str(asset_root)), parsed)


def plan(raw, total_words: int = 800, canvas: PosterCanvas = PosterCanvas()) -> PosterTree:
    content = build_content_tree(raw, budget=PosterBudget(total_words=total_words))
    return merge(content, init_layout(content, canvas), canvas)


def seeded_tree() -> PosterTree:
    return loads_tree(SEEDED_TREE.read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# mock chat endpoint
# ---------------------------------------------------------------------------


def _columns(sections: list[dict[str, Any]]) -> list[list[str]]:
    ids = [s["id"] for s in sections]
    per = -(-len(ids) // 3)
    return [ids[i : i + per] for i in range(0, len(ids), per)]


def rule_reply(messages: list[dict[str, Any]]) -> dict[str, Any]:
    """What a well-behaved model would answer, computed by the offline backends."""
    system = messages[0]["content"]
    request = json.loads(messages[1]["content"])
    if request.get("task") == "summarize":
        return {"summary": extractive_summarize(request["paragraphs"], request["word_limit"]), "bullets": []}
    if request.get("task") == "plan_columns":
        return {"columns": _columns(request["sections"])}
    view = NodeView.from_dict(request["node"])
    role_is_content = system.startswith("You are the content agent")
    agent = RuleContentAgent() if role_is_content else RuleLayoutAgent()
    if request["stage"] == "analyze":
        opinion = agent.analyze(view)
    else:
        author, peer_author = (CONTENT, LAYOUT) if role_is_content else (LAYOUT, CONTENT)
        own = Opinion.from_dict(request["own"], author=author)
        peer = Opinion.from_dict(request["peer"], author=peer_author)
        opinion = agent.respond(view, own, peer, request["round"])
    return opinion.to_dict()


class FaultyEndpoint:
    """An OpenAI-style chat endpoint that garbles a fixed share of replies.

    Whether a request is garbled depends only on a hash of its body, so the
    same request always gets the same answer and reruns are reproducible.
    """

    def __init__(self, malformed_share: float = 0.3) -> None:
        self.malformed_share = malformed_share
        self.calls = 0
        self.malformed = 0

    def garbles(self, body: bytes) -> bool:
        bucket = int.from_bytes(hashlib.sha256(body).digest()[:8], "big") / 2**64
        return bucket < self.malformed_share

    def __call__(self, request: httpx.Request) -> httpx.Response:
        self.calls += 1
        body = request.read()
        payload = json.loads(body)
        if self.garbles(body):
            self.malformed += 1
            content = '{"issues": [ {"code": "overflow", '
        else:
            content = json.dumps(rule_reply(payload["messages"]), sort_keys=True)
        return httpx.Response(200, json={"choices": [{"message": {"role": "assistant", "content": content}}]})

    def transport(self) -> httpx.MockTransport:
        return httpx.MockTransport(self)
