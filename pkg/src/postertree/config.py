"""Pipeline configuration: one JSON file, every field defaulted."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

from .agents.loop import AGENT_MODES
from .content import PosterBudget
from .errors import SchemaError
from .evaluate import EvalThresholds
from .layout import DEFAULT_BODY_PT, DEFAULT_TITLE_PT, PosterCanvas
from .llm import DEFAULT_MODEL
from .render import Theme

BACKENDS = ("rule_based", "remote")
SUMMARIZERS = ("extractive", "remote")
PLANNERS = ("fallback", "remote")
FORMATS = ("svg", "html")


@dataclass(frozen=True)
class AgentConfig:
    mode: str = "both"
    content: str = "rule_based"
    layout: str = "rule_based"
    t_max: int = 2
    k: int = 1
    retries: int = 2

    def __post_init__(self) -> None:
        if self.mode not in AGENT_MODES:
            raise SchemaError("$.agents.mode", f"expected one of {AGENT_MODES}")
        for role in ("content", "layout"):
            if getattr(self, role) not in BACKENDS:
                raise SchemaError(f"$.agents.{role}", f"expected one of {BACKENDS}")
        if self.t_max < 1:
            raise SchemaError("$.agents.t_max", "must be at least 1")
        if self.k < 0:
            raise SchemaError("$.agents.k", "must be non-negative")
        if self.retries < 0:
            raise SchemaError("$.agents.retries", "must be non-negative")


@dataclass(frozen=True)
class LLMConfig:
    model: str = DEFAULT_MODEL
    timeout_s: float = 60.0
    http_retries: int = 2


@dataclass(frozen=True)
class TextConfig:
    body_pt: float = DEFAULT_BODY_PT
    title_pt: float = DEFAULT_TITLE_PT


@dataclass(frozen=True)
class PipelineConfig:
    input: str | None = None
    canvas: PosterCanvas = field(default_factory=PosterCanvas)
    budget: PosterBudget = field(default_factory=PosterBudget)
    text: TextConfig = field(default_factory=TextConfig)
    summarizer: str = "extractive"
    planner: str = "fallback"
    agents: AgentConfig = field(default_factory=AgentConfig)
    llm: LLMConfig = field(default_factory=LLMConfig)
    eval: EvalThresholds = field(default_factory=EvalThresholds)
    theme: Theme = field(default_factory=Theme)
    format: str = "svg"
    output_dir: str = "out"
    cache_dir: str = ".postertree-cache"

    def __post_init__(self) -> None:
        if self.summarizer not in SUMMARIZERS:
            raise SchemaError("$.summarizer", f"expected one of {SUMMARIZERS}")
        if self.planner not in PLANNERS:
            raise SchemaError("$.planner", f"expected one of {PLANNERS}")
        if self.format not in FORMATS:
            raise SchemaError("$.format", f"expected one of {FORMATS}")
        if self.budget.total_words <= 0 or self.budget.asset_cap < 0:
            raise SchemaError("$.budget", "total_words must be positive and asset_cap non-negative")

    @property
    def uses_remote(self) -> bool:
        a = self.agents
        return (
            self.summarizer == "remote"
            or self.planner == "remote"
            or (a.content == "remote" and a.mode in ("both", "content"))
            or (a.layout == "remote" and a.mode in ("both", "layout"))
        )

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "PipelineConfig":
        return _build(cls, d, "$")

    def with_overrides(self, **sections: dict[str, Any]) -> "PipelineConfig":
        """Copy with some fields of nested sections replaced, e.g. ``agents={"k": 2}``."""
        changes = {}
        for name, values in sections.items():
            values = {k: v for k, v in values.items() if v is not None}
            if values:
                current = getattr(self, name)
                changes[name] = replace(current, **values)
        return replace(self, **changes)


_NESTED = {
    "canvas": PosterCanvas,
    "budget": PosterBudget,
    "text": TextConfig,
    "agents": AgentConfig,
    "llm": LLMConfig,
    "eval": EvalThresholds,
    "theme": Theme,
}


def _build(cls: type, d: Any, path: str) -> Any:
    if not isinstance(d, dict):
        raise SchemaError(path, "expected an object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(d) - known)
    if unknown:
        raise SchemaError(f"{path}.{unknown[0]}", "unknown field")
    kwargs = {}
    for name, value in d.items():
        sub = _NESTED.get(name) if cls is PipelineConfig else None
        kwargs[name] = _build(sub, value, f"{path}.{name}") if sub else value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise SchemaError(path, str(exc)) from exc


def load_config(path: str | Path | None) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError("$", f"config is not valid JSON: {exc}") from exc
    return PipelineConfig.from_dict(data)
