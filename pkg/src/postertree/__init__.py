"""Paper-to-poster generation through a jointly refined content and layout tree."""

from .agents import make_agents, optimize
from .config import PipelineConfig, load_config
from .content import ContentTree, PosterBudget, build_content_tree
from .evaluate import EvalReport, EvalThresholds, eval_tree
from .ingest import RawDocTree, SourceDocument, build_raw_tree, link_assets, parse_canonical, parse_markdown
from .layout import LayoutTree, PosterCanvas, init_layout, measure_text
from .poster import PosterTree, bfs_order, dumps_tree, loads_tree, merge
from .render import Theme, render_html, render_svg

__version__ = "0.1.0"

__all__ = [
    "ContentTree",
    "EvalReport",
    "EvalThresholds",
    "LayoutTree",
    "PipelineConfig",
    "PosterBudget",
    "PosterCanvas",
    "PosterTree",
    "RawDocTree",
    "SourceDocument",
    "Theme",
    "bfs_order",
    "build_content_tree",
    "build_raw_tree",
    "dumps_tree",
    "eval_tree",
    "init_layout",
    "link_assets",
    "load_config",
    "loads_tree",
    "make_agents",
    "measure_text",
    "merge",
    "optimize",
    "parse_canonical",
    "parse_markdown",
    "render_html",
    "render_svg",
]
