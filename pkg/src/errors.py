# src/errors.py
"""
Exception types shared by every stage of the pipeline.

The CLI maps WignerBridgeError subclasses to exit status 2.
"""

from __future__ import annotations
from typing import Optional


class WignerBridgeError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(WignerBridgeError):
    """Invalid or inconsistent experiment configuration."""


class DomainError(WignerBridgeError, ValueError):
    """A precondition on an argument was violated."""


class DecompositionError(WignerBridgeError):
    """The eigensolver failed on a sampled matrix."""

    def __init__(self, message: str, seed: Optional[int] = None, replica: Optional[int] = None):
        super().__init__(message)
        self.seed = seed
        self.replica = replica


class IntegrityError(WignerBridgeError):
    """A persisted artifact does not match its recorded hash."""


class ArtifactParseError(WignerBridgeError):
    """A persisted artifact is truncated or malformed."""

    def __init__(self, message: str, path: Optional[str] = None, row: Optional[int] = None):
        where = f" ({path}, row {row})" if path is not None and row is not None else ""
        super().__init__(message + where)
        self.path = path
        self.row = row
