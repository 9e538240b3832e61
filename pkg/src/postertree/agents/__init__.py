"""Content and layout agents and the collaborative refinement loop."""

from .actions import Action, Decision, Issue, Opinion
from .loop import AgentSet, OptimizeResult, RunLog, analyze, collaborate, finalize, make_agents, optimize
from .rules import NodeView, RuleContentAgent, RuleLayoutAgent, node_view

__all__ = [
    "Action",
    "AgentSet",
    "Decision",
    "Issue",
    "NodeView",
    "OptimizeResult",
    "Opinion",
    "RuleContentAgent",
    "RuleLayoutAgent",
    "RunLog",
    "analyze",
    "collaborate",
    "finalize",
    "make_agents",
    "node_view",
    "optimize",
]
