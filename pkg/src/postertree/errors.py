"""Exception hierarchy shared by every pipeline stage."""

from __future__ import annotations


class PosterTreeError(Exception):
    """Base class for all errors raised by the package."""


class SchemaError(PosterTreeError):
    def __init__(self, path: str, message: str) -> None:
        super().__init__(f"{path}: {message}")
        self.path = path
        self.message = message


class DanglingAssetRef(PosterTreeError):
    def __init__(self, asset_id: str) -> None:
        super().__init__(f"block references unknown asset {asset_id!r}")
        self.asset_id = asset_id


class EmptyDocument(PosterTreeError):
    pass


class EmptyInput(PosterTreeError):
    pass


class BackendError(PosterTreeError):
    """A remote model call failed or returned unusable output."""


class PlannerError(PosterTreeError):
    """The layout planner could not produce a feasible layout."""


class CorrespondenceError(PosterTreeError):
    """Content and layout trees do not describe the same structure."""


class InvariantViolation(PosterTreeError):
    """A tree update would break a geometric or content invariant."""


class MissingAssetFile(PosterTreeError):
    def __init__(self, asset_id: str, path: str) -> None:
        super().__init__(f"asset {asset_id!r}: cannot read {path}")
        self.asset_id = asset_id
        self.path = path


class ScoreParseError(PosterTreeError):
    pass
