"""Chat-model agents that fall back to the rule-based agents on bad replies."""

from __future__ import annotations

import json
import logging
from importlib import resources
from typing import Any

from ..errors import BackendError, SchemaError
from .actions import ACTION_PARAMS, CONTENT, LAYOUT, Opinion
from .rules import MAX_PROPOSALS, NodeView, RuleContentAgent, RuleLayoutAgent

logger = logging.getLogger(__name__)


def agent_prompt(role: str) -> str:
    return resources.files("postertree").joinpath(f"prompts/agents/{role}.txt").read_text(encoding="utf-8")


def action_vocabulary() -> dict[str, dict[str, str]]:
    return {kind: {name: typ.__name__ for name, typ in params} for kind, params in ACTION_PARAMS.items()}


class RemoteAgent:
    """One agent role backed by a chat endpoint.

    A reply that fails to parse or validate is retried with a note about
    the failure; after ``retries`` more attempts the rule-based agent for
    the same role answers instead and the substitution is recorded.
    """

    mode = "remote"

    def __init__(self, role: str, client: Any, retries: int = 2, fallback: Any = None) -> None:
        if role not in (CONTENT, LAYOUT):
            raise ValueError(f"unknown agent role {role!r}")
        self.role = role
        self.client = client
        self.retries = retries
        self.fallback = fallback or (RuleContentAgent() if role == CONTENT else RuleLayoutAgent())
        self.system = agent_prompt(role)
        self._events: list[str] = []

    def drain_events(self) -> list[str]:
        out, self._events = self._events, []
        return out

    def _ask(self, payload: dict[str, Any]) -> Opinion:
        user = json.dumps(payload, sort_keys=True, ensure_ascii=False)
        last = ""
        for attempt in range(self.retries + 1):
            messages = [{"role": "system", "content": self.system}, {"role": "user", "content": user}]
            if attempt:
                messages.append({"role": "user", "content": f"Attempt {attempt + 1}. Previous reply rejected: {last}"})
            try:
                return Opinion.from_dict(self.client.complete_json(messages), author=self.role, max_proposals=MAX_PROPOSALS)
            except (BackendError, SchemaError, KeyError, TypeError, ValueError) as exc:
                last = str(exc)
        raise BackendError(f"{self.role} agent failed after {self.retries + 1} attempts: {last}")

    def _substitute(self, stage: str, view: NodeView, error: BackendError) -> None:
        event = f"{self.role} {stage} on {view.node_id}: rule-based opinion substituted ({error})"
        logger.warning(event)
        self._events.append(event)

    def analyze(self, view: NodeView) -> Opinion:
        payload = {"stage": "analyze", "node": view.to_dict(), "actions": action_vocabulary()}
        try:
            return self._ask(payload)
        except BackendError as exc:
            self._substitute("analyze", view, exc)
            return self.fallback.analyze(view)

    def respond(self, view: NodeView, own: Opinion, peer: Opinion, round_index: int) -> Opinion:
        payload = {
            "stage": "respond",
            "round": round_index,
            "node": view.to_dict(),
            "own": own.to_dict(),
            "peer": peer.to_dict(),
            "actions": action_vocabulary(),
        }
        try:
            return self._ask(payload)
        except BackendError as exc:
            self._substitute("respond", view, exc)
            return self.fallback.respond(view, own, peer, round_index)
