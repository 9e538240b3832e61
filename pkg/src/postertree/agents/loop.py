"""Node-level analyze / collaborate / finalize stages and the optimization loop."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from typing import Any, Protocol

from ..errors import InvariantViolation
from ..evaluate import EvalReport, EvalThresholds, eval_tree
from ..layout import OVERFLOW_TOL_IN, LayoutPatch
from ..poster import PosterTree, StagedUpdate, bfs_order, commit, stage, update_node
from .actions import (
    CONTENT,
    LAYOUT,
    SPACE_ACTIONS,
    TEXT_ACTIONS,
    Action,
    Decision,
    Opinion,
    apply_actions,
    empty_opinion,
    validate_action,
)
from .rules import NodeView, RuleContentAgent, RuleLayoutAgent, node_view

logger = logging.getLogger(__name__)

AGENT_MODES = ("both", "content", "layout", "none")
EPS = 1e-9


class AgentBackend(Protocol):
    role: str
    mode: str

    def analyze(self, view: NodeView) -> Opinion: ...

    def respond(self, view: NodeView, own: Opinion, peer: Opinion, round_index: int) -> Opinion: ...


@dataclass
class AgentSet:
    """The enabled agents plus a count of backend invocations."""

    content: AgentBackend | None = None
    layout: AgentBackend | None = None
    calls: int = 0

    def _call(self, agent: AgentBackend, method: str, *args: Any) -> Opinion:
        self.calls += 1
        return getattr(agent, method)(*args)

    def events(self) -> list[str]:
        out = []
        for agent in (self.content, self.layout):
            drain = getattr(agent, "drain_events", None)
            if drain is not None:
                out.extend(drain())
        return out

    @property
    def enabled(self) -> bool:
        return self.content is not None or self.layout is not None


def make_agents(mode: str = "both", content: AgentBackend | None = None, layout: AgentBackend | None = None) -> AgentSet:
    """Agents for an ablation mode; unspecified backends default to rule-based."""
    if mode not in AGENT_MODES:
        raise ValueError(f"agents mode must be one of {AGENT_MODES}")
    return AgentSet(
        content=(content or RuleContentAgent()) if mode in ("both", "content") else None,
        layout=(layout or RuleLayoutAgent()) if mode in ("both", "layout") else None,
    )


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------


def analyze(view: NodeView, agents: AgentSet) -> tuple[Opinion, Opinion]:
    o_c = agents._call(agents.content, "analyze", view) if agents.content else empty_opinion(CONTENT, "disabled")
    o_l = agents._call(agents.layout, "analyze", view) if agents.layout else empty_opinion(LAYOUT, "disabled")
    return o_c, o_l


def collaborate(view: NodeView, o_c: Opinion, o_l: Opinion, agents: AgentSet, k: int) -> tuple[Opinion, Opinion]:
    """``k`` rounds in which each agent revises its opinion against the peer's.

    Both revisions in a round see the opinions from the previous round; the
    primed opinions then replace the originals.
    """
    if k < 0:
        raise ValueError("k must be non-negative")
    for r in range(k):
        new_c = agents._call(agents.content, "respond", view, o_c, o_l, r) if agents.content else o_c
        new_l = agents._call(agents.layout, "respond", view, o_l, o_c, r) if agents.layout else o_l
        o_c, o_l = new_c, new_l
    return o_c, o_l


def _unique(pairs: list[tuple[str, Action]]) -> list[tuple[str, Action]]:
    seen, out = set(), []
    for p in pairs:
        if p not in seen:
            seen.add(p)
            out.append(p)
    return out


def finalize(
    tree: PosterTree,
    view: NodeView,
    o_c: Opinion,
    o_l: Opinion,
    exchanged: list[tuple[str, Action]] = (),
    tolerance: float = OVERFLOW_TOL_IN,
) -> Decision:
    """Arbitrate the final proposals into one accepted set and apply it.

    Two fixes from different agents for the same overflow, each of which
    clears it alone, conflict: the one that strictly reduces overflow wins,
    then the one that changes panel area less, then content.  Accepted
    actions are dropped last-first while the result breaks an invariant or
    raises overflow anywhere in the tree.
    """
    nid = view.node_id
    node = tree.content[nid]
    figures = [f.asset_id for f in view.figures]
    subpanels = list(view.subpanels)
    proposals = _unique([(CONTENT, a) for a in o_c.proposals] + [(LAYOUT, a) for a in o_l.proposals])
    rejected: list[tuple[str, Action, str]] = []
    final = set(proposals)
    for who, a in _unique(list(exchanged)):
        if (who, a) not in final:
            rejected.append((who, a, "withdrawn during collaboration"))

    legal = []
    for who, a in proposals:
        why = validate_action(
            a, words=view.words, items=view.items, font_pt=view.font_pt,
            figures=figures, subpanels=subpanels, has_panel=view.has_panel,
        )
        if why:
            rejected.append((who, a, f"invalid: {why}"))
        else:
            legal.append((who, a))

    def trial(actions: list[tuple[str, Action]]) -> PosterTree:
        c_star, patch = apply_actions(node, view.font_pt, figures, subpanels, [a for _, a in actions])
        return update_node(tree, nid, c_star, patch)

    def overflow_after(actions: list[tuple[str, Action]]) -> float:
        try:
            return trial(actions).overflow_in(nid)
        except InvariantViolation:
            return float("inf")

    def area_change(actions: list[tuple[str, Action]]) -> float:
        if not view.has_panel:
            return 0.0
        before = tree.layout.panel_of(nid).region.area
        try:
            return abs(trial(actions).layout.panel_of(nid).region.area - before)
        except InvariantViolation:
            return float("inf")

    base_node = tree.overflow_in(nid)
    base_total = tree.total_overflow_in()
    losers: dict[tuple[str, Action], str] = {}
    if base_node > tolerance:
        text_fixes = [p for p in legal if p[0] == CONTENT and p[1].kind in TEXT_ACTIONS]
        space_fixes = [p for p in legal if p[0] == LAYOUT and p[1].kind in SPACE_ACTIONS]
        for c in text_fixes:
            for l in space_fixes:
                if c in losers or l in losers:
                    continue
                oc, ol = overflow_after([c]), overflow_after([l])
                if oc > tolerance or ol > tolerance:
                    continue
                reduces_c, reduces_l = oc < base_node - EPS, ol < base_node - EPS
                if reduces_c != reduces_l:
                    winner = c if reduces_c else l
                else:
                    winner = l if area_change([l]) < area_change([c]) else c
                loser = l if winner is c else c
                losers[loser] = "overflow already resolved"
    accepted = [p for p in legal if p not in losers]
    rejected.extend((who, a, losers[(who, a)]) for who, a in legal if (who, a) in losers)

    while accepted:
        try:
            result = trial(accepted)
            if result.total_overflow_in() <= base_total + EPS and result.overflow_in(nid) <= base_node + EPS:
                break
            reason = "increases overflow"
        except InvariantViolation as exc:
            reason = f"violates invariant: {exc}"
        who, a = accepted.pop()
        rejected.append((who, a, reason))

    c_star, patch = apply_actions(node, view.font_pt, figures, subpanels, [a for _, a in accepted])
    if not accepted:
        c_star, patch = node, LayoutPatch()
    return Decision(nid, tuple(accepted), tuple(rejected), c_star, patch)


# ---------------------------------------------------------------------------
# optimization loop
# ---------------------------------------------------------------------------


@dataclass
class RunLog:
    """Newline-delimited JSON records of every stage of every node."""

    records: list[dict[str, Any]] = field(default_factory=list)

    def add(self, iteration: int, node: str | None, stage_name: str, payload: dict[str, Any]) -> None:
        self.records.append({"iteration": iteration, "node": node, "stage": stage_name, "payload": payload})

    def dumps(self) -> str:
        return "".join(json.dumps(r, sort_keys=True, ensure_ascii=False) + "\n" for r in self.records)


@dataclass
class OptimizeResult:
    tree: PosterTree
    reports: list[EvalReport]
    log: RunLog
    calls_per_iteration: list[int]
    overflow_history: list[float]

    @property
    def report(self) -> EvalReport:
        return self.reports[-1]


def guarded_commit(snapshot: PosterTree, staged: PosterTree, log: RunLog | None = None) -> PosterTree:
    """Commit, dropping layout patches from the end while total overflow would grow."""
    before = snapshot.total_overflow_in()
    updates = list(staged.staged)
    while True:
        committed = commit(replace(snapshot, staged=tuple(updates)))
        if committed.total_overflow_in() <= before + EPS:
            return committed
        idx = next((i for i in range(len(updates) - 1, -1, -1) if not updates[i].patch.is_identity), None)
        if idx is None:
            return committed
        if log is not None:
            log.add(snapshot.iteration, updates[idx].node_id, "guard", {"dropped_patch": updates[idx].patch.to_dict()})
        updates[idx] = replace(updates[idx], patch=LayoutPatch())


def optimize(
    tree0: PosterTree,
    agents: AgentSet | None = None,
    t_max: int = 2,
    k: int = 1,
    thresholds: EvalThresholds = EvalThresholds(),
) -> OptimizeResult:
    """Refine the poster tree until it passes evaluation or ``t_max`` runs out.

    Each iteration visits nodes breadth-first on a fixed snapshot, stages
    every node's decision, commits them together and evaluates the result.
    """
    if t_max < 1:
        raise ValueError("t_max must be at least 1")
    if k < 0:
        raise ValueError("k must be non-negative")
    agents = agents if agents is not None else make_agents("both")
    log = RunLog()
    tree = tree0
    reports: list[EvalReport] = []
    calls: list[int] = []
    history = [tree0.total_overflow_in()]
    for _ in range(t_max):
        snapshot = tree
        t = snapshot.iteration
        staged = snapshot
        start_calls = agents.calls
        if agents.enabled:
            for nid in bfs_order(snapshot):
                view = node_view(snapshot, nid)
                o_c, o_l = analyze(view, agents)
                log.add(t, nid, "analyze", {"content": o_c.to_dict(), "layout": o_l.to_dict()})
                exchanged = [(CONTENT, a) for a in o_c.proposals] + [(LAYOUT, a) for a in o_l.proposals]
                o_c, o_l = collaborate(view, o_c, o_l, agents, k)
                log.add(t, nid, "collaborate", {"content": o_c.to_dict(), "layout": o_l.to_dict()})
                decision = finalize(snapshot, view, o_c, o_l, exchanged)
                log.add(t, nid, "finalize", decision.to_dict())
                for event in agents.events():
                    log.add(t, nid, "substitute", {"event": event})
                if decision.changes:
                    staged = stage(staged, StagedUpdate(nid, decision.c_star, decision.patch))
        tree = guarded_commit(snapshot, staged, log)
        for note in tree.rejected:
            log.add(t, None, "commit_rejected", {"reason": note})
        report = eval_tree(tree, thresholds)
        reports.append(report)
        calls.append(agents.calls - start_calls)
        history.append(tree.total_overflow_in())
        log.add(t, None, "eval", report.to_dict())
        logger.info("iteration %d: %s", tree.iteration, report.summary())
        if report.satisfied:
            break
    return OptimizeResult(tree, reports, log, calls, history)
