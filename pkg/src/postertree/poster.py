"""The poster tree: content and layout merged node by node.

A :class:`PosterTree` is an immutable value holding the content tree, the
layout tree it was planned from, and the iteration counter.  Agents never
mutate it; they stage per-node updates which :func:`commit` applies after a
full traversal.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from typing import Any

from .content import ContentNode, ContentTree, check_content_tree
from .errors import CorrespondenceError, InvariantViolation, SchemaError
from .layout import (
    LayoutNode,
    LayoutPatch,
    LayoutTree,
    PosterCanvas,
    apply_patch,
    check_layout,
    detect_overflow,
)

logger = logging.getLogger(__name__)

SCHEMA = "pf-tree/1"


@dataclass(frozen=True)
class PosterNode:
    """Read-only view of one node: its content and the layout nodes it owns."""

    id: str
    content: ContentNode
    layout: tuple[LayoutNode, ...]
    children: tuple[str, ...]

    @property
    def text_slot(self) -> LayoutNode:
        return next(n for n in self.layout if n.kind == "text_slot")

    @property
    def panel(self) -> LayoutNode | None:
        return next((n for n in self.layout if n.kind == "panel"), None)


@dataclass(frozen=True)
class StagedUpdate:
    node_id: str
    content: ContentNode
    patch: LayoutPatch = LayoutPatch()

    def to_dict(self) -> dict[str, Any]:
        return {"node_id": self.node_id, "content": self.content.to_dict(), "patch": self.patch.to_dict()}


@dataclass(frozen=True)
class PosterTree:
    content: ContentTree
    layout: LayoutTree
    canvas: PosterCanvas = PosterCanvas()
    iteration: int = 0
    staged: tuple[StagedUpdate, ...] = ()
    rejected: tuple[str, ...] = field(default=(), compare=False)

    @property
    def root(self) -> str:
        return self.content.root

    def __len__(self) -> int:
        return len(self.content.nodes)

    def node(self, node_id: str) -> PosterNode:
        owned = tuple(n for n in self.layout.walk() if n.owner == node_id)
        return PosterNode(node_id, self.content[node_id], owned, self.content.children[node_id])

    @property
    def nodes(self) -> dict[str, PosterNode]:
        return {nid: self.node(nid) for nid in self.content.dfs()}

    def overflow_in(self, node_id: str) -> float:
        return detect_overflow(self.content[node_id], self.layout, self.canvas, self.authors_for(node_id)).overflow_in

    def total_overflow_in(self) -> float:
        return sum(self.overflow_in(nid) for nid in self.content.dfs())

    def authors_for(self, node_id: str) -> tuple[str, ...]:
        return self.content.authors if node_id == self.content.root else ()

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema": SCHEMA,
            "iteration": self.iteration,
            "canvas": self.canvas.to_dict(),
            "content": self.content.to_dict(),
            "layout": self.layout.to_dict(),
        }

    @classmethod
    def from_dict(cls, obj: dict[str, Any]) -> "PosterTree":
        if obj.get("schema") != SCHEMA:
            raise SchemaError("$.schema", f"expected {SCHEMA!r}")
        tree = cls(
            content=ContentTree.from_dict(obj["content"]),
            layout=LayoutTree.from_dict(obj["layout"]),
            canvas=PosterCanvas(**obj["canvas"]),
            iteration=int(obj["iteration"]),
        )
        check_poster_tree(tree)
        return tree


def dumps_tree(tree: PosterTree) -> str:
    return json.dumps(tree.to_dict(), indent=1, sort_keys=True, ensure_ascii=False) + "\n"


def loads_tree(text: str) -> PosterTree:
    return PosterTree.from_dict(json.loads(text))


def _check_correspondence(content: ContentTree, layout: LayoutTree) -> None:
    parents = layout.parents()
    owned: dict[str, list[LayoutNode]] = {}
    for n in layout.walk():
        if n.owner is not None:
            owned.setdefault(n.owner, []).append(n)
    extra = sorted(set(owned) - set(content.nodes))
    if extra:
        raise CorrespondenceError(f"layout nodes owned by unknown content nodes: {extra}")
    for nid in content.dfs():
        node = content[nid]
        mine = owned.get(nid, [])
        texts = [n for n in mine if n.kind == "text_slot"]
        if len(texts) != 1:
            raise CorrespondenceError(f"{nid}: expected one text slot, found {len(texts)}")
        figures = sorted(n.asset_id for n in mine if n.kind == "figure_slot")
        if figures != sorted(node.asset_refs):
            raise CorrespondenceError(f"{nid}: figure slots {figures} do not match assets {sorted(node.asset_refs)}")
        panels = [n for n in mine if n.kind == "panel"]
        if nid == content.root:
            if panels:
                raise CorrespondenceError("root must not own a panel")
            continue
        if len(panels) != 1:
            raise CorrespondenceError(f"{nid}: expected one panel, found {len(panels)}")
        parent = content.parent(nid)
        holder = layout[parents[panels[0].id]]
        if parent == content.root:
            if holder.kind != "column":
                raise CorrespondenceError(f"{nid}: section panel not inside a column")
        elif holder.kind != "panel" or holder.owner != parent:
            raise CorrespondenceError(f"{nid}: panel not nested in its parent's panel")
        for n in mine:
            if n.kind != "panel" and layout[parents[n.id]].owner != nid:
                raise CorrespondenceError(f"{n.id}: slot outside its owner's panel")
    orphans = [n.id for n in layout.walk() if n.kind == "panel" and n.owner is None]
    if orphans:
        raise CorrespondenceError(f"panels without a content node: {orphans}")


def check_poster_tree(tree: PosterTree) -> None:
    """Raise unless content, layout and their correspondence are all valid."""
    _check_correspondence(tree.content, tree.layout)
    check_layout(tree.layout, tree.canvas)
    leaves = tree.layout.leaves()
    unowned = [n.id for n in leaves if n.owner is None]
    if unowned:
        raise InvariantViolation(f"leaf slots without an owner: {unowned}")


def merge(content: ContentTree, layout: LayoutTree, canvas: PosterCanvas = PosterCanvas()) -> PosterTree:
    """Pair every content node with the layout nodes planned for it."""
    _check_correspondence(content, layout)
    tree = PosterTree(content=content, layout=layout, canvas=canvas, iteration=0)
    check_poster_tree(tree)
    return tree


def bfs_order(tree: PosterTree) -> list[str]:
    return tree.content.bfs()


def update_node(tree: PosterTree, node_id: str, c_star: ContentNode, patch: LayoutPatch = LayoutPatch()) -> PosterTree:
    """A new tree with ``node_id``'s content replaced and ``patch`` applied.

    Only attribute edits are allowed: the node keeps its id, level and
    assets.  Raises :class:`InvariantViolation` (leaving ``tree`` as it
    was) if the result breaks any invariant.
    """
    current = tree.content[node_id]
    if c_star.id != node_id or c_star.level != current.level:
        raise InvariantViolation(f"{node_id}: update changes node identity")
    if c_star.asset_refs != current.asset_refs:
        raise InvariantViolation(f"{node_id}: update changes asset assignment")
    if c_star.words > 1.2 * c_star.word_budget + 1e-9:
        raise InvariantViolation(f"{node_id}: {c_star.words} words over 1.2 x budget")
    content = tree.content if c_star == current else tree.content.with_node(c_star)
    layout = apply_patch(tree.layout, node_id, patch, tree.canvas)
    if content is tree.content and layout is tree.layout:
        return tree
    return replace(tree, content=content, layout=layout)


def stage(tree: PosterTree, update: StagedUpdate) -> PosterTree:
    return replace(tree, staged=tree.staged + (update,))


def commit(tree: PosterTree) -> PosterTree:
    """Apply the staged updates in staging order and advance the iteration.

    An update that would break an invariant is skipped and noted in
    ``rejected``; the rest still apply.
    """
    current = replace(tree, staged=(), rejected=())
    rejected = []
    for upd in tree.staged:
        try:
            current = update_node(current, upd.node_id, upd.content, upd.patch)
        except InvariantViolation as exc:
            rejected.append(f"{upd.node_id}: {exc}")
            logger.info("commit rejected update for %s: %s", upd.node_id, exc)
    result = replace(current, iteration=tree.iteration + 1, staged=(), rejected=tuple(rejected))
    check_poster_tree(result)
    check_content_tree(result.content)
    return result
