"""Command-line driver: one command per pipeline stage plus ``pipeline``.

Every stage reads and writes files.  ``pipeline`` runs the same stage
functions and round-trips each artifact through its serialized form, so its
outputs are byte-identical to running the stages one at a time.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

from .agents.loop import AGENT_MODES, OptimizeResult, make_agents, optimize
from .agents.remote import RemoteAgent
from .config import FORMATS, PipelineConfig, load_config
from .content import ExtractiveSummarizer, RemoteSummarizer, build_content_tree
from .errors import (
    BackendError,
    CorrespondenceError,
    DanglingAssetRef,
    EmptyDocument,
    EmptyInput,
    InvariantViolation,
    MissingAssetFile,
    PlannerError,
    PosterTreeError,
    SchemaError,
)
from .evaluate import EvalReport, eval_tree
from .ingest import RawDocTree, build_raw_tree, dumps_raw, link_assets, load_manifest, loads_raw, parse_canonical, parse_markdown
from .layout import FallbackPlanner, RemotePlanner, init_layout
from .llm import ChatClient
from .poster import PosterTree, dumps_tree, loads_tree, merge
from .render import render

logger = logging.getLogger("postertree")

EXIT_OK = 0
EXIT_UNSATISFIED = 1
EXIT_PARSE = 2
EXIT_PLANNER = 3
EXIT_BACKEND = 4
EXIT_RENDER = 5
EXIT_INVARIANT = 6

PIPELINE_FILES = {
    "raw": "raw.json",
    "tree0": "tree0.json",
    "tree": "tree.json",
    "log": "run.ndjson",
    "report": "report.json",
}


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------


def _manifest_for(path: Path, manifest: str | Path | None) -> Path | None:
    if manifest is not None:
        return Path(manifest)
    guess = path.with_name(path.stem + ".assets.json")
    return guess if guess.is_file() else None


def stage_ingest(input_path: str | Path, manifest: str | Path | None = None) -> RawDocTree:
    """Parse a canonical JSON or Markdown document and attach its assets."""
    path = Path(input_path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise EmptyInput(f"cannot read {path}: {exc}") from exc
    if path.suffix.lower() in (".md", ".markdown"):
        mpath = _manifest_for(path, manifest)
        assets = load_manifest(mpath.read_text(encoding="utf-8")) if mpath else ()
        doc = parse_markdown(text, assets)
    else:
        doc = parse_canonical(text)
    return link_assets(build_raw_tree(doc, str(path.resolve().parent)), doc)


@dataclass
class Backends:
    client: ChatClient | None = None

    @classmethod
    def for_config(cls, config: PipelineConfig, client: ChatClient | None = None) -> "Backends":
        if client is None and config.uses_remote:
            client = ChatClient(
                model=config.llm.model,
                cache_dir=config.cache_dir,
                timeout=config.llm.timeout_s,
                retries=config.llm.http_retries,
            )
        return cls(client)

    def summarizer(self, config: PipelineConfig) -> Any:
        if config.summarizer == "remote":
            return RemoteSummarizer(self.client, retries=config.agents.retries)
        return ExtractiveSummarizer()

    def planner(self, config: PipelineConfig) -> Any:
        if config.planner == "remote":
            return RemotePlanner(self.client, retries=config.agents.retries)
        return FallbackPlanner()

    def agents(self, config: PipelineConfig) -> Any:
        a = config.agents
        content = RemoteAgent("content", self.client, a.retries) if a.content == "remote" else None
        layout = RemoteAgent("layout", self.client, a.retries) if a.layout == "remote" else None
        return make_agents(a.mode, content=content, layout=layout)


def stage_plan(raw: RawDocTree, config: PipelineConfig, backends: Backends | None = None) -> PosterTree:
    backends = backends or Backends.for_config(config)
    content = build_content_tree(raw, backends.summarizer(config), config.budget)
    layout = init_layout(content, config.canvas, backends.planner(config), config.text.body_pt, config.text.title_pt)
    return merge(content, layout, config.canvas)


def stage_optimize(tree: PosterTree, config: PipelineConfig, backends: Backends | None = None) -> OptimizeResult:
    backends = backends or Backends.for_config(config)
    return optimize(tree, backends.agents(config), config.agents.t_max, config.agents.k, config.eval)


def stage_render(tree: PosterTree, config: PipelineConfig) -> bytes:
    return render(tree, config.format, config.theme)


def stage_eval(tree: PosterTree, config: PipelineConfig) -> EvalReport:
    return eval_tree(tree, config.eval)


def report_json(report: EvalReport) -> str:
    return json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"


def run_pipeline(
    input_path: str | Path,
    config: PipelineConfig,
    out_dir: str | Path,
    manifest: str | Path | None = None,
    client: ChatClient | None = None,
) -> EvalReport:
    """All stages in sequence, writing every intermediate artifact to ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    backends = Backends.for_config(config, client)

    raw_bytes = dumps_raw(stage_ingest(input_path, manifest))
    (out / PIPELINE_FILES["raw"]).write_bytes(raw_bytes)

    tree0_text = dumps_tree(stage_plan(loads_raw(raw_bytes), config, backends))
    (out / PIPELINE_FILES["tree0"]).write_text(tree0_text, encoding="utf-8")

    result = stage_optimize(loads_tree(tree0_text), config, backends)
    tree_text = dumps_tree(result.tree)
    (out / PIPELINE_FILES["tree"]).write_text(tree_text, encoding="utf-8")
    (out / PIPELINE_FILES["log"]).write_text(result.log.dumps(), encoding="utf-8")

    final = loads_tree(tree_text)
    (out / f"poster.{config.format}").write_bytes(stage_render(final, config))
    report = stage_eval(final, config)
    (out / PIPELINE_FILES["report"]).write_text(report_json(report), encoding="utf-8")
    return report


# ---------------------------------------------------------------------------
# argument handling
# ---------------------------------------------------------------------------


def _config_from_args(args: argparse.Namespace) -> PipelineConfig:
    config = load_config(getattr(args, "config", None))
    config = config.with_overrides(
        agents={"mode": getattr(args, "agents", None), "t_max": getattr(args, "t_max", None), "k": getattr(args, "k", None)},
    )
    overrides: dict[str, Any] = {}
    if getattr(args, "format", None):
        overrides["format"] = args.format
    if getattr(args, "cache_dir", None):
        overrides["cache_dir"] = args.cache_dir
    if overrides:
        config = PipelineConfig.from_dict({**config.to_dict(), **overrides})
    return config


def _read_tree(path: str) -> PosterTree:
    try:
        return loads_tree(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise EmptyInput(f"cannot read {path}: {exc}") from exc
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise SchemaError("$", f"{path} is not a poster tree: {exc}") from exc


def _read_raw(path: str) -> RawDocTree:
    try:
        return loads_raw(Path(path).read_bytes())
    except OSError as exc:
        raise EmptyInput(f"cannot read {path}: {exc}") from exc
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise SchemaError("$", f"{path} is not a raw document tree: {exc}") from exc


def _write(path: str | Path, data: str | bytes) -> None:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        p.write_text(data, encoding="utf-8")
    else:
        p.write_bytes(data)


def cmd_config_init(args: argparse.Namespace) -> int:
    text = PipelineConfig().dumps()
    if args.out:
        _write(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_ingest(args: argparse.Namespace) -> int:
    _write(args.out, dumps_raw(stage_ingest(args.input, args.assets)))
    return EXIT_OK


def cmd_plan(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    _write(args.out, dumps_tree(stage_plan(_read_raw(args.raw), config)))
    return EXIT_OK


def cmd_optimize(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    result = stage_optimize(_read_tree(args.tree), config)
    _write(args.out, dumps_tree(result.tree))
    log_path = args.log or str(Path(args.out).with_name(PIPELINE_FILES["log"]))
    _write(log_path, result.log.dumps())
    print(result.report.summary())
    return EXIT_OK


def cmd_render(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    _write(args.out, stage_render(_read_tree(args.tree), config))
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    report = stage_eval(_read_tree(args.tree), config)
    sys.stdout.write(report_json(report))
    print(report.summary(), file=sys.stderr)
    return EXIT_OK if report.satisfied else EXIT_UNSATISFIED


def cmd_pipeline(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    report = run_pipeline(args.input, config, args.out, args.assets)
    print(report.summary())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="postertree", description="Turn a paper into a poster through a refined poster tree.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(p: argparse.ArgumentParser) -> argparse.ArgumentParser:
        p.add_argument("--config", help="JSON config file (see `config init`)")
        return p

    def with_agents(p: argparse.ArgumentParser) -> None:
        p.add_argument("--agents", choices=AGENT_MODES, help="which agents take part")
        p.add_argument("--t-max", dest="t_max", type=int, help="maximum refinement iterations")
        p.add_argument("--k", type=int, help="collaboration rounds per node")
        p.add_argument("--cache-dir", dest="cache_dir", help="response cache for remote backends")

    cfg = sub.add_parser("config", help="configuration helpers")
    cfg_sub = cfg.add_subparsers(dest="config_command", required=True)
    init = cfg_sub.add_parser("init", help="print the default config")
    init.add_argument("--out", help="write to this file instead of stdout")
    init.set_defaults(func=cmd_config_init)

    p = sub.add_parser("ingest", help="parse a document into a raw document tree")
    p.add_argument("input")
    p.add_argument("--assets", help="asset manifest for Markdown input")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = with_config(sub.add_parser("plan", help="summarize and lay out a raw tree"))
    p.add_argument("raw")
    p.add_argument("--cache-dir", dest="cache_dir")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plan)

    p = with_config(sub.add_parser("optimize", help="refine a poster tree with the agents"))
    p.add_argument("tree")
    with_agents(p)
    p.add_argument("--out", required=True)
    p.add_argument("--log", help="run log path (default: run.ndjson next to --out)")
    p.set_defaults(func=cmd_optimize)

    p = with_config(sub.add_parser("render", help="render a poster tree"))
    p.add_argument("tree")
    p.add_argument("--format", choices=FORMATS)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_render)

    p = with_config(sub.add_parser("eval", help="evaluate a poster tree; exit 1 if unsatisfied"))
    p.add_argument("tree")
    p.set_defaults(func=cmd_eval)

    p = with_config(sub.add_parser("pipeline", help="run every stage, writing artifacts to --out"))
    p.add_argument("input")
    p.add_argument("--assets", help="asset manifest for Markdown input")
    with_agents(p)
    p.add_argument("--format", choices=FORMATS)
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_pipeline)
    return parser


def _classify(exc: PosterTreeError) -> tuple[int, str]:
    if isinstance(exc, (SchemaError, DanglingAssetRef, EmptyDocument, EmptyInput, CorrespondenceError)):
        return EXIT_PARSE, "input error"
    if isinstance(exc, PlannerError):
        return EXIT_PLANNER, "planner error"
    if isinstance(exc, BackendError):
        return EXIT_BACKEND, "backend error"
    if isinstance(exc, MissingAssetFile):
        return EXIT_RENDER, "render error"
    if isinstance(exc, InvariantViolation):
        return EXIT_INVARIANT, "invariant violation"
    return EXIT_INVARIANT, "error"


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except PosterTreeError as exc:
        code, kind = _classify(exc)
        print(f"postertree: {kind}: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
