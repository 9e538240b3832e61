"""Source document parsing and the raw document tree.

Two input formats are accepted: the canonical JSON document (``pf-doc/1``)
and a Markdown dialect with ``![id]`` asset markers plus a separate asset
manifest.  Both produce a :class:`SourceDocument`, which
:func:`build_raw_tree` and :func:`link_assets` turn into a
:class:`RawDocTree`.
"""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Any, Iterable

import jsonschema

from .errors import DanglingAssetRef, EmptyDocument, InvariantViolation, SchemaError
from .text import normalize_ws, word_count

DOC_SCHEMA_ID = "pf-doc/1"
RAW_SCHEMA_ID = "pf-raw/1"

ROOT, SECTION, SUBSECTION, PARAGRAPH, FIGURE, TABLE = (
    "Root",
    "Section",
    "Subsection",
    "Paragraph",
    "Figure",
    "Table",
)
_ALLOWED_CHILDREN = {
    ROOT: {SECTION},
    SECTION: {PARAGRAPH, SUBSECTION},
    SUBSECTION: {PARAGRAPH},
    PARAGRAPH: {FIGURE, TABLE},
    FIGURE: set(),
    TABLE: set(),
}
TABLE_ASPECT_MAX = 4.0
_ID_PREFIX = {SECTION: "sec", SUBSECTION: "sub", PARAGRAPH: "par", FIGURE: "fig", TABLE: "tab"}


@dataclass(frozen=True)
class Asset:
    id: str
    kind: str  # "figure" | "table"
    caption: str = ""
    image_path: str | None = None
    natural_size: tuple[float, float] | None = None
    cells: tuple[tuple[str, ...], ...] | None = None

    @property
    def aspect(self) -> float:
        """Natural width / height."""
        if self.kind == "figure":
            w, h = self.natural_size
            return w / h
        rows = len(self.cells)
        cols = max(len(r) for r in self.cells)
        # nominal 3:1 cells, kept within a printable range
        return min(TABLE_ASPECT_MAX, max(1 / TABLE_ASPECT_MAX, cols * 3.0 / rows))

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"id": self.id, "kind": self.kind, "caption": self.caption}
        if self.kind == "figure":
            out["image"] = self.image_path
            out["size"] = list(self.natural_size)
        else:
            out["cells"] = [list(r) for r in self.cells]
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Asset":
        if data["kind"] == "figure":
            w, h = data["size"]
            return cls(
                id=data["id"],
                kind="figure",
                caption=data.get("caption", ""),
                image_path=data["image"],
                natural_size=(float(w), float(h)),
            )
        return cls(
            id=data["id"],
            kind="table",
            caption=data.get("caption", ""),
            cells=tuple(tuple(str(c) for c in row) for row in data["cells"]),
        )


@dataclass(frozen=True)
class Block:
    type: str  # heading | paragraph | figure | table
    text: str = ""
    level: int = 0
    asset_id: str | None = None

    def to_dict(self) -> dict[str, Any]:
        if self.type == "heading":
            return {"type": "heading", "level": self.level, "text": self.text}
        if self.type == "paragraph":
            return {"type": "paragraph", "text": self.text}
        return {"type": self.type, "ref": self.asset_id}


@dataclass(frozen=True)
class SourceDocument:
    title: str
    authors: tuple[str, ...]
    body: tuple[Block, ...]
    assets: tuple[Asset, ...]
    source_format: str = field(default="canonical-json", compare=False)

    def asset(self, asset_id: str) -> Asset:
        for a in self.assets:
            if a.id == asset_id:
                return a
        raise KeyError(asset_id)


# ---------------------------------------------------------------------------
# canonical format
# ---------------------------------------------------------------------------

_DOC_JSON_SCHEMA: dict[str, Any] = {
    "type": "object",
    "required": ["schema", "title", "body"],
    "properties": {
        "schema": {"const": DOC_SCHEMA_ID},
        "title": {"type": "string", "minLength": 1},
        "authors": {"type": "array", "items": {"type": "string"}},
        "body": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["type"],
                "properties": {"type": {"enum": ["heading", "paragraph", "figure", "table"]}},
                "allOf": [
                    {
                        "if": {"properties": {"type": {"const": "heading"}}},
                        "then": {
                            "required": ["level", "text"],
                            "properties": {
                                "level": {"type": "integer", "minimum": 1, "maximum": 6},
                                "text": {"type": "string"},
                            },
                        },
                    },
                    {
                        "if": {"properties": {"type": {"const": "paragraph"}}},
                        "then": {"required": ["text"], "properties": {"text": {"type": "string"}}},
                    },
                    {
                        "if": {"properties": {"type": {"enum": ["figure", "table"]}}},
                        "then": {"required": ["ref"], "properties": {"ref": {"type": "string"}}},
                    },
                ],
            },
        },
        "assets": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "kind"],
                "properties": {
                    "id": {"type": "string", "minLength": 1},
                    "kind": {"enum": ["figure", "table"]},
                    "caption": {"type": "string"},
                },
                "allOf": [
                    {
                        "if": {"properties": {"kind": {"const": "figure"}}},
                        "then": {
                            "required": ["image", "size"],
                            "properties": {
                                "image": {"type": "string"},
                                "size": {
                                    "type": "array",
                                    "items": {"type": "number", "exclusiveMinimum": 0},
                                    "minItems": 2,
                                    "maxItems": 2,
                                },
                            },
                        },
                    },
                    {
                        "if": {"properties": {"kind": {"const": "table"}}},
                        "then": {
                            "required": ["cells"],
                            "properties": {
                                "cells": {
                                    "type": "array",
                                    "minItems": 1,
                                    "items": {"type": "array", "minItems": 1},
                                }
                            },
                        },
                    },
                ],
            },
        },
    },
}


def _json_path(error: jsonschema.ValidationError) -> str:
    path = "$"
    for part in error.absolute_path:
        path += f"[{part}]" if isinstance(part, int) else f".{part}"
    return path


def _check_assets(body: Iterable[Block], assets: tuple[Asset, ...]) -> None:
    seen: set[str] = set()
    for i, a in enumerate(assets):
        if a.id in seen:
            raise SchemaError(f"$.assets[{i}].id", f"duplicate asset id {a.id!r}")
        seen.add(a.id)
    kinds = {a.id: a.kind for a in assets}
    for i, block in enumerate(body):
        if block.type in ("figure", "table"):
            if block.asset_id not in kinds:
                raise DanglingAssetRef(block.asset_id)
            if kinds[block.asset_id] != block.type:
                raise SchemaError(
                    f"$.body[{i}].ref",
                    f"{block.type} block references {kinds[block.asset_id]} asset {block.asset_id!r}",
                )


def _clean_body(blocks: Iterable[Block]) -> tuple[Block, ...]:
    out = []
    for b in blocks:
        if b.type == "heading":
            out.append(replace(b, text=normalize_ws(b.text), level=min(max(b.level, 1), 2)))
        elif b.type == "paragraph":
            text = normalize_ws(b.text)
            if text:
                out.append(replace(b, text=text))
        else:
            out.append(b)
    return tuple(out)


def parse_canonical(data: bytes | str) -> SourceDocument:
    """Parse a ``pf-doc/1`` JSON document."""
    try:
        obj = json.loads(data)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise SchemaError("$", f"invalid JSON: {exc}") from exc
    validator = jsonschema.Draft202012Validator(_DOC_JSON_SCHEMA)
    errors = sorted(validator.iter_errors(obj), key=lambda e: list(e.absolute_path))
    if errors:
        raise SchemaError(_json_path(errors[0]), errors[0].message)
    body = []
    for raw in obj["body"]:
        kind = raw["type"]
        if kind == "heading":
            body.append(Block("heading", text=raw["text"], level=raw["level"]))
        elif kind == "paragraph":
            body.append(Block("paragraph", text=raw["text"]))
        else:
            body.append(Block(kind, asset_id=raw["ref"]))
    assets = tuple(Asset.from_dict(a) for a in obj.get("assets", []))
    _check_assets(body, assets)
    return SourceDocument(
        title=normalize_ws(obj["title"]),
        authors=tuple(obj.get("authors", [])),
        body=_clean_body(body),
        assets=assets,
        source_format="canonical-json",
    )


def to_canonical(doc: SourceDocument) -> bytes:
    obj = {
        "schema": DOC_SCHEMA_ID,
        "title": doc.title,
        "authors": list(doc.authors),
        "body": [b.to_dict() for b in doc.body],
        "assets": [a.to_dict() for a in doc.assets],
    }
    return (json.dumps(obj, indent=2, ensure_ascii=False) + "\n").encode("utf-8")


# ---------------------------------------------------------------------------
# markdown
# ---------------------------------------------------------------------------

_MD_HEADING = re.compile(r"^(#{1,6})\s+(.*?)\s*#*\s*$")
_MD_ASSET = re.compile(r"!\[([^\]]+)\](?:\([^)]*\))?")
_MD_AUTHORS = re.compile(r"^authors?\s*:\s*(.+)$", re.IGNORECASE)


def parse_markdown(text: str, asset_manifest: Iterable[Asset] = ()) -> SourceDocument:
    """Parse the Markdown dialect.

    The first ``#`` heading is the title.  ``##`` is a section and ``###``
    or deeper a subsection.  ``![id]`` markers reference manifest assets;
    an ``Authors:`` line before the first section lists the authors.
    """
    assets = tuple(asset_manifest)
    kinds = {a.id: a.kind for a in assets}
    title: str | None = None
    authors: tuple[str, ...] = ()
    body: list[Block] = []
    para: list[str] = []
    pending_refs: list[str] = []

    def flush() -> None:
        if para:
            body.append(Block("paragraph", text=" ".join(para)))
            para.clear()
        for ref in pending_refs:
            if ref not in kinds:
                raise DanglingAssetRef(ref)
            body.append(Block(kinds[ref], asset_id=ref))
        pending_refs.clear()

    for line in text.splitlines():
        stripped = line.strip()
        heading = _MD_HEADING.match(stripped)
        if heading:
            flush()
            depth = len(heading.group(1))
            if title is None and depth == 1:
                title = heading.group(2)
                continue
            body.append(Block("heading", text=heading.group(2), level=min(max(depth - 1, 1), 2)))
            continue
        if not stripped:
            flush()
            continue
        if title is not None and not body and not para and _MD_AUTHORS.match(stripped):
            names = _MD_AUTHORS.match(stripped).group(1)
            authors = tuple(n.strip() for n in names.split(",") if n.strip())
            continue
        refs = _MD_ASSET.findall(stripped)
        pending_refs.extend(refs)
        remainder = _MD_ASSET.sub("", stripped).strip()
        if remainder:
            para.append(remainder)
    flush()
    if not title:
        raise EmptyDocument("markdown document has no '# ' title heading")
    _check_assets(body, assets)
    return SourceDocument(
        title=normalize_ws(title),
        authors=authors,
        body=_clean_body(body),
        assets=assets,
        source_format="markdown",
    )


def load_manifest(data: bytes | str) -> tuple[Asset, ...]:
    """Read a JSON asset manifest: a list of asset objects or ``{"assets": [...]}``."""
    obj = json.loads(data)
    if isinstance(obj, dict):
        obj = obj.get("assets", [])
    wrapper = {"schema": DOC_SCHEMA_ID, "title": "manifest", "body": [], "assets": obj}
    errors = list(jsonschema.Draft202012Validator(_DOC_JSON_SCHEMA).iter_errors(wrapper))
    if errors:
        raise SchemaError(_json_path(errors[0]), errors[0].message)
    return tuple(Asset.from_dict(a) for a in obj)


# ---------------------------------------------------------------------------
# raw document tree
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DocNode:
    id: str
    kind: str
    heading: str = ""
    text: str = ""
    asset_id: str | None = None
    children: tuple[str, ...] = ()


@dataclass(frozen=True)
class RawDocTree:
    nodes: dict[str, DocNode]
    root: str
    title: str
    authors: tuple[str, ...]
    assets: tuple[Asset, ...]
    # asset id -> structural node containing its ref block (None: never placed)
    asset_hosts: dict[str, str | None]
    diagnostics: tuple[str, ...] = ()
    asset_root: str = "."

    def __getitem__(self, node_id: str) -> DocNode:
        return self.nodes[node_id]

    def walk(self, start: str | None = None) -> list[DocNode]:
        """Nodes in depth-first pre-order."""
        out = []
        stack = [start or self.root]
        while stack:
            node = self.nodes[stack.pop()]
            out.append(node)
            stack.extend(reversed(node.children))
        return out

    def parents(self) -> dict[str, str]:
        return {c: n.id for n in self.nodes.values() for c in n.children}

    def depth(self) -> int:
        """Number of levels on the longest root-to-leaf path."""

        def _d(nid: str) -> int:
            kids = self.nodes[nid].children
            return 1 + max((_d(c) for c in kids), default=0)

        return _d(self.root)

    def paragraphs(self) -> list[DocNode]:
        return [n for n in self.walk() if n.kind == PARAGRAPH]

    def asset(self, asset_id: str) -> Asset:
        for a in self.assets:
            if a.id == asset_id:
                return a
        raise KeyError(asset_id)

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema": RAW_SCHEMA_ID,
            "root": self.root,
            "title": self.title,
            "authors": list(self.authors),
            "asset_root": self.asset_root,
            "assets": [a.to_dict() for a in self.assets],
            "asset_hosts": dict(self.asset_hosts),
            "diagnostics": list(self.diagnostics),
            "nodes": [
                {
                    "id": n.id,
                    "kind": n.kind,
                    "heading": n.heading,
                    "text": n.text,
                    "asset_id": n.asset_id,
                    "children": list(n.children),
                }
                for n in self.walk()
            ],
        }

    @classmethod
    def from_dict(cls, obj: dict[str, Any]) -> "RawDocTree":
        if obj.get("schema") != RAW_SCHEMA_ID:
            raise SchemaError("$.schema", f"expected {RAW_SCHEMA_ID!r}")
        nodes = {
            n["id"]: DocNode(
                id=n["id"],
                kind=n["kind"],
                heading=n["heading"],
                text=n["text"],
                asset_id=n["asset_id"],
                children=tuple(n["children"]),
            )
            for n in obj["nodes"]
        }
        return cls(
            nodes=nodes,
            root=obj["root"],
            title=obj["title"],
            authors=tuple(obj["authors"]),
            assets=tuple(Asset.from_dict(a) for a in obj["assets"]),
            asset_hosts=dict(obj["asset_hosts"]),
            diagnostics=tuple(obj["diagnostics"]),
            asset_root=obj.get("asset_root", "."),
        )


def dumps_raw(tree: RawDocTree) -> bytes:
    return (json.dumps(tree.to_dict(), indent=2, sort_keys=True, ensure_ascii=False) + "\n").encode()


def loads_raw(data: bytes | str) -> RawDocTree:
    return RawDocTree.from_dict(json.loads(data))


class _Builder:
    def __init__(self) -> None:
        self.specs: dict[str, dict[str, Any]] = {}

    def add(self, key: str, kind: str, parent: str | None, **attrs: Any) -> None:
        self.specs[key] = {"kind": kind, "children": [], **attrs}
        if parent is not None:
            self.specs[parent]["children"].append(key)


def _renumber(
    specs: dict[str, dict[str, Any]], root_key: str
) -> tuple[dict[str, DocNode], dict[str, str]]:
    """Assign ``<kind>-<n>`` ids by depth-first ordinal, per kind."""
    counters: Counter[str] = Counter()
    ids: dict[str, str] = {}
    stack = [root_key]
    order = []
    while stack:
        key = stack.pop()
        order.append(key)
        kind = specs[key]["kind"]
        if kind == ROOT:
            ids[key] = "root"
        else:
            counters[kind] += 1
            ids[key] = f"{_ID_PREFIX[kind]}-{counters[kind]}"
        stack.extend(reversed(specs[key]["children"]))
    nodes = {}
    for key in order:
        spec = specs[key]
        nodes[ids[key]] = DocNode(
            id=ids[key],
            kind=spec["kind"],
            heading=spec.get("heading", ""),
            text=spec.get("text", ""),
            asset_id=spec.get("asset_id"),
            children=tuple(ids[c] for c in spec["children"]),
        )
    return nodes, ids


def build_raw_tree(doc: SourceDocument, asset_root: str = ".") -> RawDocTree:
    """Build the structural tree (root, sections, subsections, paragraphs).

    Asset nodes are not created here; the section that contains each
    figure/table block is remembered in ``asset_hosts`` for
    :func:`link_assets`.  Paragraphs that precede every heading go into an
    untitled section, and a subsection heading with no enclosing section is
    promoted to a section.
    """
    b = _Builder()
    b.add("R", ROOT, None)
    section: str | None = None
    current: str | None = None
    hosts: dict[str, str | None] = {a.id: None for a in doc.assets}
    counter = 0

    def key() -> str:
        nonlocal counter
        counter += 1
        return f"k{counter}"

    for block in doc.body:
        if block.type == "heading":
            if block.level == 1 or section is None:
                section = key()
                b.add(section, SECTION, "R", heading=block.text)
                current = section
            else:
                current = key()
                b.add(current, SUBSECTION, section, heading=block.text)
        elif block.type == "paragraph":
            if current is None:
                section = current = key()
                b.add(section, SECTION, "R", heading="")
            b.add(key(), PARAGRAPH, current, text=block.text)
        else:
            if current is None:
                section = current = key()
                b.add(section, SECTION, "R", heading="")
            if hosts.get(block.asset_id) is None:
                hosts[block.asset_id] = current
    nodes, ids = _renumber(b.specs, "R")
    tree = RawDocTree(
        nodes=nodes,
        root="root",
        title=doc.title,
        authors=doc.authors,
        assets=doc.assets,
        asset_hosts={a: (ids[h] if h else None) for a, h in hosts.items()},
        asset_root=asset_root,
    )
    check_raw_tree(tree)
    return tree


# ---------------------------------------------------------------------------
# asset linking
# ---------------------------------------------------------------------------

_CAPTION_LABEL = re.compile(r"^\s*(figure|fig\.?|table|tab\.?)\s*(\d+)", re.IGNORECASE)


def asset_label(asset: Asset, assets: Iterable[Asset]) -> tuple[str, int]:
    """(kind, number) used to find textual references to ``asset``.

    Taken from a caption prefix such as "Figure 3:" when present, else the
    asset's ordinal among assets of the same kind.
    """
    match = _CAPTION_LABEL.match(asset.caption or "")
    if match:
        return asset.kind, int(match.group(2))
    same = [a.id for a in assets if a.kind == asset.kind]
    return asset.kind, same.index(asset.id) + 1


def reference_pattern(kind: str, number: int) -> re.Pattern[str]:
    word = r"(?:figure|fig\.?)" if kind == "figure" else r"(?:table|tab\.?)"
    return re.compile(rf"\b{word}\s*{number}(?!\d)", re.IGNORECASE)


def _strip_assets(tree: RawDocTree) -> dict[str, dict[str, Any]]:
    specs: dict[str, dict[str, Any]] = {}
    for node in tree.nodes.values():
        if node.kind in (FIGURE, TABLE):
            continue
        specs[node.id] = {
            "kind": node.kind,
            "heading": node.heading,
            "text": node.text,
            "children": [c for c in node.children if tree.nodes[c].kind not in (FIGURE, TABLE)],
        }
    return specs


def _fallback_paragraph(tree: RawDocTree, host: str | None) -> str | None:
    order = [n.id for n in tree.walk() if n.kind in (SECTION, SUBSECTION, PARAGRAPH)]
    paragraphs = [n.id for n in tree.walk() if n.kind == PARAGRAPH]
    if not paragraphs:
        return None
    if host is None:
        return paragraphs[-1]
    own = [c for c in tree.nodes[host].children if tree.nodes[c].kind == PARAGRAPH]
    if own:
        return own[-1]
    sub = [n.id for n in tree.walk(host) if n.kind == PARAGRAPH]
    if sub:
        return sub[-1]
    before = [p for p in paragraphs if order.index(p) < order.index(host)]
    return before[-1] if before else paragraphs[0]


def link_assets(tree: RawDocTree, doc: SourceDocument | None = None) -> RawDocTree:
    """Attach every asset as a child of the paragraph that references it.

    The first paragraph in document order whose text matches the asset's
    reference pattern wins.  Unreferenced assets go under the last paragraph
    of the section that held their block.  Each fallback or failure is
    recorded in ``diagnostics``.  Idempotent.
    """
    assets = doc.assets if doc is not None else tree.assets
    specs = _strip_assets(tree)
    paragraphs = [n for n in tree.walk() if n.kind == PARAGRAPH]
    diagnostics = [d for d in tree.diagnostics if not d.startswith("link:")]
    attach: dict[str, list[str]] = {}
    for asset in assets:
        kind, number = asset_label(asset, assets)
        pattern = reference_pattern(kind, number)
        target = next((p.id for p in paragraphs if pattern.search(p.text)), None)
        if target is None:
            target = _fallback_paragraph(tree, tree.asset_hosts.get(asset.id))
            if target is None:
                diagnostics.append(f"link: asset {asset.id} unresolved (document has no paragraphs)")
                continue
            diagnostics.append(f"link: asset {asset.id} not referenced in text; attached to {target}")
        attach.setdefault(target, []).append(asset.id)
    kinds = {a.id: a.kind for a in assets}
    for par_id, asset_ids in attach.items():
        for asset_id in asset_ids:
            key = f"asset:{asset_id}"
            specs[key] = {
                "kind": FIGURE if kinds[asset_id] == "figure" else TABLE,
                "asset_id": asset_id,
                "children": [],
            }
            specs[par_id]["children"].append(key)
    nodes, ids = _renumber(specs, tree.root)
    hosts = {a: (ids[h] if h and h in ids else h) for a, h in tree.asset_hosts.items()}
    linked = replace(tree, nodes=nodes, asset_hosts=hosts, diagnostics=tuple(diagnostics))
    check_raw_tree(linked)
    return linked


def check_raw_tree(tree: RawDocTree) -> None:
    """Raise :class:`InvariantViolation` unless all tree invariants hold."""
    nodes = tree.nodes
    if tree.root not in nodes or nodes[tree.root].kind != ROOT:
        raise InvariantViolation("root missing or not of kind Root")
    parent_count: Counter[str] = Counter()
    for node in nodes.values():
        for child in node.children:
            if child not in nodes:
                raise InvariantViolation(f"{node.id}: unknown child {child}")
            parent_count[child] += 1
            if nodes[child].kind not in _ALLOWED_CHILDREN[node.kind]:
                raise InvariantViolation(f"{node.kind} {node.id} cannot contain {nodes[child].kind}")
    for node in nodes.values():
        expected = 0 if node.id == tree.root else 1
        if parent_count[node.id] != expected:
            raise InvariantViolation(f"{node.id} has {parent_count[node.id]} parents")
        if node.kind == PARAGRAPH and not normalize_ws(node.text):
            raise InvariantViolation(f"{node.id}: empty paragraph")
        if node.kind in (FIGURE, TABLE) and (node.children or not node.asset_id):
            raise InvariantViolation(f"{node.id}: asset nodes must be leaves with asset_id")
    reachable = {n.id for n in tree.walk()}
    if reachable != set(nodes):
        raise InvariantViolation("tree is disconnected or cyclic")
    placed = Counter(n.asset_id for n in nodes.values() if n.asset_id)
    dup = [a for a, c in placed.items() if c > 1]
    if dup:
        raise InvariantViolation(f"assets attached more than once: {dup}")


def paragraph_words(tree: RawDocTree, node_id: str) -> int:
    return sum(word_count(n.text) for n in tree.walk(node_id) if n.kind == PARAGRAPH)
