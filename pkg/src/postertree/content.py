"""Content tree: pruning, word budgets and summarization.

The raw tree is pruned (drop-listed sections removed, short paragraphs
merged), a skeleton with one node per retained section/subsection gets
importance scores and word budgets, and each node's own paragraphs are
summarized by a :class:`SummarizerBackend`.
"""

from __future__ import annotations

import json
import logging
import math
import re
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Any, Protocol

from .errors import BackendError, EmptyInput, InvariantViolation, SchemaError
from .ingest import (
    FIGURE,
    PARAGRAPH,
    ROOT,
    SECTION,
    SUBSECTION,
    TABLE,
    Asset,
    RawDocTree,
    check_raw_tree,
)
from .text import content_stems, normalize_ws, split_sentences, word_count

logger = logging.getLogger(__name__)

LEVELS = {ROOT: "root", SECTION: "section", SUBSECTION: "subsection"}
DEFAULT_DROP_HEADINGS = (
    r"acknowledge?ments?",
    r"references",
    r"bibliography",
    r"appendix",
    r"appendices",
    r"supplementary",
)
POSITION_BONUS = Fraction(1, 5)
IMPORTANCE_FLOOR = 0.05


@dataclass(frozen=True)
class PruneRules:
    drop_headings: tuple[str, ...] = DEFAULT_DROP_HEADINGS
    min_paragraph_words: int = 12

    def drops(self, heading: str) -> bool:
        # optional numbering prefix such as "7", "A." or "B.2:"
        prefix = r"^\s*(?:(?:\d+|[A-Za-z])(?:\.\d+)*[.:]?\s+)?"
        return any(re.match(prefix + p + r"\b", heading, re.IGNORECASE) for p in self.drop_headings)


@dataclass(frozen=True)
class PosterBudget:
    total_words: int = 800
    asset_cap: int = 8


@dataclass(frozen=True)
class ContentNode:
    id: str
    level: str  # root | section | subsection
    heading: str
    summary: str = ""
    bullets: tuple[str, ...] = ()
    word_budget: int = 0
    importance: float = 0.0
    asset_refs: tuple[str, ...] = ()
    source_words: int = 0

    @property
    def body_text(self) -> str:
        parts = [self.summary] if self.summary else []
        parts.extend(f"• {b}" for b in self.bullets)
        return "\n".join(parts)

    @property
    def words(self) -> int:
        return word_count(self.summary) + sum(word_count(b) for b in self.bullets)

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "level": self.level,
            "heading": self.heading,
            "summary": self.summary,
            "bullets": list(self.bullets),
            "word_budget": self.word_budget,
            "importance": self.importance,
            "asset_refs": list(self.asset_refs),
            "source_words": self.source_words,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ContentNode":
        return cls(
            id=d["id"],
            level=d["level"],
            heading=d["heading"],
            summary=d["summary"],
            bullets=tuple(d["bullets"]),
            word_budget=int(d["word_budget"]),
            importance=float(d["importance"]),
            asset_refs=tuple(d["asset_refs"]),
            source_words=int(d.get("source_words", 0)),
        )


@dataclass(frozen=True)
class ContentTree:
    nodes: dict[str, ContentNode]
    children: dict[str, tuple[str, ...]]
    root: str
    provenance: dict[str, tuple[str, ...]]
    title: str = ""
    authors: tuple[str, ...] = ()
    assets: tuple[Asset, ...] = ()
    asset_root: str = "."
    diagnostics: tuple[str, ...] = ()

    def __getitem__(self, node_id: str) -> ContentNode:
        return self.nodes[node_id]

    def bfs(self) -> list[str]:
        order, queue = [], [self.root]
        while queue:
            nid = queue.pop(0)
            order.append(nid)
            queue.extend(self.children[nid])
        return order

    def dfs(self) -> list[str]:
        order, stack = [], [self.root]
        while stack:
            nid = stack.pop()
            order.append(nid)
            stack.extend(reversed(self.children[nid]))
        return order

    def parent(self, node_id: str) -> str | None:
        for pid, kids in self.children.items():
            if node_id in kids:
                return pid
        return None

    def asset(self, asset_id: str) -> Asset:
        for a in self.assets:
            if a.id == asset_id:
                return a
        raise KeyError(asset_id)

    def total_words(self) -> int:
        return sum(n.words for n in self.nodes.values())

    def with_node(self, node: ContentNode) -> "ContentTree":
        nodes = dict(self.nodes)
        nodes[node.id] = node
        return replace(self, nodes=nodes)

    def to_dict(self) -> dict[str, Any]:
        return {
            "root": self.root,
            "title": self.title,
            "authors": list(self.authors),
            "asset_root": self.asset_root,
            "assets": [a.to_dict() for a in self.assets],
            "diagnostics": list(self.diagnostics),
            "nodes": [
                {**self.nodes[nid].to_dict(), "children": list(self.children[nid]), "provenance": list(self.provenance.get(nid, ()))}
                for nid in self.dfs()
            ],
        }

    @classmethod
    def from_dict(cls, obj: dict[str, Any]) -> "ContentTree":
        nodes, children, provenance = {}, {}, {}
        for d in obj["nodes"]:
            nodes[d["id"]] = ContentNode.from_dict(d)
            children[d["id"]] = tuple(d["children"])
            provenance[d["id"]] = tuple(d["provenance"])
        return cls(
            nodes=nodes,
            children=children,
            root=obj["root"],
            provenance=provenance,
            title=obj["title"],
            authors=tuple(obj["authors"]),
            assets=tuple(Asset.from_dict(a) for a in obj["assets"]),
            asset_root=obj.get("asset_root", "."),
            diagnostics=tuple(obj["diagnostics"]),
        )


# ---------------------------------------------------------------------------
# pruning
# ---------------------------------------------------------------------------


def prune_and_merge(raw: RawDocTree, rules: PruneRules = PruneRules()) -> RawDocTree:
    """Drop drop-listed subtrees and merge runs of short paragraphs.

    Assets under a dropped subtree move to the last paragraph of the nearest
    retained ancestor; for a dropped top-level section that is the last
    paragraph of the closest preceding retained section.
    """
    nodes = {nid: n for nid, n in raw.nodes.items()}
    diagnostics = list(raw.diagnostics)
    parents = raw.parents()
    kids = {nid: list(n.children) for nid, n in nodes.items()}
    orphans: list[tuple[str, str]] = []  # (asset node id, dropped ancestor id)

    for node in raw.walk():
        if node.kind not in (SECTION, SUBSECTION) or node.id not in kids:
            continue
        if not rules.drops(node.heading):
            continue
        doomed = raw.walk(node.id)
        for d in doomed:
            if d.kind in (FIGURE, TABLE):
                orphans.append((d.id, node.id))
        for d in doomed:
            kids.pop(d.id, None)
        kids[parents[node.id]].remove(node.id)
        diagnostics.append(f"prune: dropped {node.kind.lower()} {node.id} ({node.heading!r})")

    alive = set(kids)

    def last_paragraph_under(nid: str) -> str | None:
        found = None
        stack = [nid]
        while stack:
            cur = stack.pop()
            if nodes[cur].kind == PARAGRAPH:
                found = cur
            stack.extend(reversed([c for c in kids.get(cur, []) if c in alive]))
        return found

    dfs_order = [n.id for n in raw.walk()]
    for asset_node, dropped in orphans:
        target = None
        anc = parents[dropped]
        while target is None and nodes[anc].kind != ROOT:
            own = [c for c in kids[anc] if nodes[c].kind == PARAGRAPH]
            target = own[-1] if own else last_paragraph_under(anc)
            anc = parents[anc]
        if target is None:
            top = dropped
            while parents[top] != raw.root:
                top = parents[top]
            preceding = [
                s for s in kids[raw.root] if dfs_order.index(s) < dfs_order.index(top) and last_paragraph_under(s)
            ]
            if preceding:
                target = last_paragraph_under(preceding[-1])
            else:
                candidates = [p for p in dfs_order if p in alive and nodes[p].kind == PARAGRAPH]
                target = candidates[0] if candidates else None
        if target is None:
            diagnostics.append(f"prune: asset {nodes[asset_node].asset_id} dropped with {dropped} (no host paragraph)")
            continue
        kids[target].append(asset_node)
        kids[asset_node] = []
        diagnostics.append(f"prune: asset {nodes[asset_node].asset_id} re-attached from {dropped} to {target}")

    # merge runs of adjacent sub-threshold paragraphs
    texts = {nid: nodes[nid].text for nid in kids}
    for parent_id in list(kids):
        if nodes[parent_id].kind not in (SECTION, SUBSECTION):
            continue
        merged: list[str] = []
        run: list[str] = []

        def close_run() -> None:
            if len(run) >= 2:
                head = run[0]
                texts[head] = " ".join(texts[r] for r in run)
                for r in run[1:]:
                    kids[head].extend(kids.pop(r))
                diagnostics.append(f"prune: merged {', '.join(run)} into {head}")
            if run:
                merged.append(run[0])
            run.clear()

        for child in kids[parent_id]:
            node = nodes[child]
            if node.kind == PARAGRAPH and word_count(texts[child]) < rules.min_paragraph_words:
                run.append(child)
                continue
            close_run()
            merged.append(child)
        close_run()
        kids[parent_id] = merged

    new_nodes = {
        nid: replace(nodes[nid], children=tuple(kids[nid]), text=texts.get(nid, nodes[nid].text)) for nid in kids
    }
    pruned = replace(raw, nodes=new_nodes, diagnostics=tuple(diagnostics))
    check_raw_tree(pruned)
    return pruned


# ---------------------------------------------------------------------------
# extractive summarization
# ---------------------------------------------------------------------------


def score_sentences(paragraphs: list[str]) -> list[tuple[str, Fraction]]:
    """Score every sentence of ``paragraphs`` (flattened, in order).

    Score is the mean normalized term frequency of the sentence's
    non-stopword stems, plus a bonus for the first sentence of a paragraph.
    Scores are exact so that equal scores tie and the earlier sentence wins.
    """
    sentences: list[tuple[str, bool]] = []
    for para in paragraphs:
        for i, s in enumerate(split_sentences(para)):
            sentences.append((s, i == 0))
    stems = [content_stems(s) for s, _ in sentences]
    tf = Counter(st for group in stems for st in group)
    top = max(tf.values(), default=1)
    scored = []
    for (sentence, first), group in zip(sentences, stems):
        base = Fraction(sum(tf[st] for st in group), top * len(group)) if group else Fraction(0)
        scored.append((sentence, base + (POSITION_BONUS if first else 0)))
    return scored


def select_sentences(paragraphs: list[str], target_words: int) -> list[int]:
    """Indices chosen greedily by descending score (earlier wins ties) that fit ``target_words``."""
    return select_from_scored(score_sentences(paragraphs), target_words)


def select_from_scored(scored: list[tuple[str, Fraction]], target_words: int) -> list[int]:
    ranked = sorted(range(len(scored)), key=lambda i: (-scored[i][1], i))
    chosen, used = [], 0
    for i in ranked:
        n = word_count(scored[i][0])
        if used + n <= target_words:
            chosen.append(i)
            used += n
    return sorted(chosen)


def extractive_summarize(paragraphs: list[str], target_words: int) -> str:
    if target_words < 10:
        raise ValueError("target_words must be at least 10")
    if not any(normalize_ws(p) for p in paragraphs):
        raise EmptyInput("nothing to summarize")
    return _extract(paragraphs, target_words)


def _extract(paragraphs: list[str], target_words: int) -> str:
    scored = score_sentences(paragraphs)
    return " ".join(scored[i][0] for i in select_from_scored(scored, target_words))


class SummarizerBackend(Protocol):
    name: str

    def summarize(self, heading: str, paragraphs: list[str], target_words: int) -> tuple[str, tuple[str, ...]]:
        """Return (summary, bullets) with at most ``target_words`` words in total."""
        ...


class ExtractiveSummarizer:
    name = "extractive"

    def summarize(self, heading: str, paragraphs: list[str], target_words: int) -> tuple[str, tuple[str, ...]]:
        if target_words <= 0 or not paragraphs:
            return "", ()
        if target_words >= 10:
            return extractive_summarize(paragraphs, target_words), ()
        return _extract(paragraphs, target_words), ()


SUMMARY_SYSTEM_PROMPT = """You condense sections of a scientific paper into poster text.
Reply with a JSON object {"summary": string, "bullets": [string, ...]}.
The summary plus all bullets must not exceed the given word limit."""


class RemoteSummarizer:
    """Chat-completion summarizer; replies are validated before use."""

    name = "remote"

    def __init__(self, client: Any, retries: int = 2) -> None:
        self.client = client
        self.retries = retries

    def summarize(self, heading: str, paragraphs: list[str], target_words: int) -> tuple[str, tuple[str, ...]]:
        if target_words <= 0 or not paragraphs:
            return "", ()
        user = json.dumps(
            {"task": "summarize", "heading": heading, "word_limit": target_words, "paragraphs": paragraphs},
            sort_keys=True,
        )
        last_error = ""
        for attempt in range(self.retries + 1):
            messages = [{"role": "system", "content": SUMMARY_SYSTEM_PROMPT}, {"role": "user", "content": user}]
            if attempt:
                messages.append({"role": "user", "content": f"Attempt {attempt + 1}. Previous reply rejected: {last_error}"})
            try:
                reply = self.client.complete_json(messages)
                summary = reply["summary"]
                bullets = reply.get("bullets", [])
                if not isinstance(summary, str) or not isinstance(bullets, list) or not all(isinstance(b, str) for b in bullets):
                    raise SchemaError("$", "summary must be a string and bullets a list of strings")
                summary = normalize_ws(summary)
                bullets = tuple(normalize_ws(b) for b in bullets if normalize_ws(b))
                total = word_count(summary) + sum(word_count(b) for b in bullets)
                if total > target_words:
                    raise SchemaError("$", f"{total} words exceeds limit {target_words}")
                return summary, bullets
            except (BackendError, SchemaError, KeyError, TypeError) as exc:
                last_error = str(exc)
        raise BackendError(f"summarizer failed after {self.retries + 1} attempts: {last_error}")


# ---------------------------------------------------------------------------
# budgets
# ---------------------------------------------------------------------------


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def allocate_budgets(tree: ContentTree, total_words: int) -> ContentTree:
    """Split ``total_words`` top-down in proportion to importance.

    At every node the available words are shared between the node's own text
    (weighted by the share of source words it summarizes) and each child
    subtree (weighted by the child's importance), each share rounded half-up.
    A node's ``word_budget`` is the share for its own text.
    """
    total_source = sum(n.source_words for n in tree.nodes.values()) or 1
    nodes = dict(tree.nodes)

    def own_importance(node: ContentNode) -> float:
        if node.source_words <= 0:
            return 0.0
        if not tree.children[node.id]:
            return node.importance
        return max(IMPORTANCE_FLOOR, node.source_words / total_source)

    def alloc(nid: str, available: float) -> None:
        node = tree.nodes[nid]
        parts = [(own_importance(node), None)] if nid != tree.root else []
        parts += [(tree.nodes[c].importance, c) for c in tree.children[nid]]
        weight = sum(w for w, _ in parts if w > 0)
        own = 0
        for w, child in parts:
            share = round_half_up(available * w / weight) if weight > 0 and w > 0 else 0
            if child is None:
                own = share
            else:
                alloc(child, share)
        nodes[nid] = replace(nodes[nid], word_budget=own)

    alloc(tree.root, float(total_words))
    return replace(tree, nodes=nodes)


def _skeleton(pruned: RawDocTree, asset_cap: int) -> ContentTree:
    nodes: dict[str, ContentNode] = {}
    children: dict[str, tuple[str, ...]] = {}
    provenance: dict[str, tuple[str, ...]] = {}
    asset_refs: dict[str, list[str]] = {}
    kept: list[str] = []
    diagnostics = list(pruned.diagnostics)

    structural = [n for n in pruned.walk() if n.kind in LEVELS]
    for node in structural:
        paragraphs = [pruned[c] for c in node.children if pruned[c].kind == PARAGRAPH]
        provenance[node.id] = tuple(p.id for p in paragraphs)
        children[node.id] = tuple(c for c in node.children if pruned[c].kind in LEVELS)
        asset_refs[node.id] = []
        for p in paragraphs:
            for c in p.children:
                asset_id = pruned[c].asset_id
                if len(kept) < asset_cap:
                    kept.append(asset_id)
                    asset_refs[node.id].append(asset_id)
                else:
                    diagnostics.append(f"content: asset {asset_id} over asset cap {asset_cap}; omitted")

    subtree_words: dict[str, int] = {}

    def words_of(nid: str) -> int:
        own = sum(word_count(pruned[p].text) for p in provenance[nid])
        subtree_words[nid] = own + sum(words_of(c) for c in children[nid])
        return subtree_words[nid]

    total = words_of(pruned.root) or 1
    for node in structural:
        own = sum(word_count(pruned[p].text) for p in provenance[node.id])
        importance = 1.0 if node.kind == ROOT else max(IMPORTANCE_FLOOR, subtree_words[node.id] / total)
        nodes[node.id] = ContentNode(
            id=node.id,
            level=LEVELS[node.kind],
            heading=pruned.title if node.kind == ROOT else node.heading,
            importance=importance,
            asset_refs=tuple(asset_refs[node.id]),
            source_words=own,
        )
    return ContentTree(
        nodes=nodes,
        children=children,
        root=pruned.root,
        provenance=provenance,
        title=pruned.title,
        authors=pruned.authors,
        assets=tuple(a for a in pruned.assets if a.id in kept),
        asset_root=pruned.asset_root,
        diagnostics=tuple(diagnostics),
    )


def build_content_tree(
    raw: RawDocTree,
    summarizer: SummarizerBackend | None = None,
    budget: PosterBudget = PosterBudget(),
    rules: PruneRules = PruneRules(),
    workers: int = 1,
) -> ContentTree:
    """Prune, budget and summarize ``raw`` into a content tree.

    A summarizer failure on a node falls back to the extractive summarizer
    for that node and is recorded in ``diagnostics``.
    """
    if budget.total_words <= 0:
        raise ValueError("budget.total_words must be positive")
    summarizer = summarizer or ExtractiveSummarizer()
    fallback = ExtractiveSummarizer()
    pruned = prune_and_merge(raw, rules)
    tree = allocate_budgets(_skeleton(pruned, budget.asset_cap), budget.total_words)

    jobs = [nid for nid in tree.dfs() if tree.provenance[nid] and tree[nid].word_budget > 0]

    def run(nid: str) -> tuple[str, str, tuple[str, ...], str | None]:
        node = tree[nid]
        paragraphs = [pruned[p].text for p in tree.provenance[nid]]
        try:
            summary, bullets = summarizer.summarize(node.heading, paragraphs, node.word_budget)
            return nid, summary, bullets, None
        except BackendError as exc:
            summary, bullets = fallback.summarize(node.heading, paragraphs, node.word_budget)
            return nid, summary, bullets, f"content: {nid} summarizer fell back to extractive ({exc})"

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(nid) for nid in jobs]

    nodes = dict(tree.nodes)
    diagnostics = list(tree.diagnostics)
    for nid, summary, bullets, note in sorted(results):
        nodes[nid] = replace(nodes[nid], summary=summary, bullets=bullets)
        if note:
            diagnostics.append(note)
            logger.warning(note)
    result = replace(tree, nodes=nodes, diagnostics=tuple(diagnostics))
    check_content_tree(result, pruned)
    return result


def check_content_tree(tree: ContentTree, pruned: RawDocTree | None = None) -> None:
    """Raise :class:`InvariantViolation` unless content invariants hold."""
    if tree.nodes[tree.root].importance != 1.0:
        raise InvariantViolation("root importance must be 1.0")
    seen: Counter[str] = Counter()
    for nid, pars in tree.provenance.items():
        seen.update(pars)
    dup = [p for p, c in seen.items() if c > 1]
    if dup:
        raise InvariantViolation(f"paragraphs summarized twice: {dup}")
    if pruned is not None:
        retained = {n.id for n in pruned.walk() if n.kind == PARAGRAPH}
        if set(seen) != retained:
            raise InvariantViolation("provenance does not cover the retained paragraphs")
    depth_ok = all(
        tree[c].level == "subsection" and not tree.children[c]
        for s in tree.children[tree.root]
        for c in tree.children[s]
    )
    if not depth_ok:
        raise InvariantViolation("content tree deeper than root/section/subsection")
    refs: Counter[str] = Counter()
    for node in tree.nodes.values():
        if node.words > 1.2 * node.word_budget + 1e-9:
            raise InvariantViolation(f"{node.id}: {node.words} words over 1.2 x budget {node.word_budget}")
        if not 0.0 <= node.importance <= 1.0:
            raise InvariantViolation(f"{node.id}: importance out of range")
        refs.update(node.asset_refs)
    if any(c > 1 for c in refs.values()):
        raise InvariantViolation("asset referenced by more than one node")
    if set(refs) != {a.id for a in tree.assets}:
        raise InvariantViolation("asset_refs do not match the kept assets")
