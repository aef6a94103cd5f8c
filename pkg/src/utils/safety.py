"""
Safety primitives shared across the library and the harness commands.

Every public operation validates its inputs at the boundary and raises one of
the typed errors below. The harness commands catch these at the command
boundary and turn them into short, single-line messages via `safe_error`:

  1. Numeric faults (non-finite gradients, NaN rewards) are reported with the
     offending component so a run can be triaged from its manifest alone.
  2. Caller-controlled knobs coming from the CLI (`workers`, `episodes`) are
     clamped to bounded ranges before they reach a training loop.
  3. Messages surfaced in manifests are size-bounded regardless of how long
     the underlying exception text is.
"""

from __future__ import annotations

import logging
import re
from collections.abc import Iterable

import numpy as np

logger = logging.getLogger(__name__)


class DWSError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(DWSError):
    """Dimension mismatch between an input and the network/spec expecting it."""


class UsageError(DWSError):
    """An operation was called out of order (no forward context, step after done)."""


class NumericError(DWSError):
    """A non-finite value reached an update."""

    def __init__(self, message: str, index: int | None = None):
        super().__init__(message)
        self.index = index


class ParameterError(DWSError):
    """An argument is outside its documented range."""


class OrderingError(DWSError):
    """A transition was pushed out of order within its episode."""


class AvailabilityError(DWSError):
    """A store or batch that must be non-empty is empty."""


class ContractError(DWSError):
    """A precondition on a segment or a target was violated."""


class CapabilityError(DWSError):
    """The environment does not provide the requested capability."""


class ModelError(DWSError):
    """A finite MDP specification is malformed."""


class DataError(DWSError):
    """A training row is missing a field its flags require."""


class InsufficientDataError(DWSError):
    """A metric was asked for on a sequence that is too short."""


class LogParseError(DWSError):
    """A trajectory log row could not be parsed."""

    def __init__(self, message: str, row: int):
        super().__init__(f"row {row}: {message}")
        self.row = row


class ConfigError(DWSError):
    """A configuration field failed validation."""

    def __init__(self, message: str, fields: Iterable[str] = ()):
        super().__init__(message)
        self.fields = tuple(fields)


class CompatibilityError(DWSError):
    """A checkpoint does not fit the environment it is evaluated on."""


class RunAbortedError(DWSError):
    """A training run stopped because the environment failed mid-episode."""

    def __init__(self, message: str, episode: int, step: int):
        super().__init__(f"episode {episode} step {step}: {message}")
        self.episode = episode
        self.step = step


# Absolute paths are noise in a manifest; keep the file name only.
_PATH_PATTERN = re.compile(r"(?:/[\w.-]+)+/([\w.-]+)")


def safe_error(exc: BaseException, op: str | None = None) -> str:
    """Render an exception as a one-line message for manifests and the CLI.

    Args:
        exc: The exception caught at the command boundary.
        op: Short verb describing what was running ("train", "sweep cell h=3").

    Returns:
        "<op> failed: <message>", at most 240 characters of message. The full
        traceback is logged at WARNING.
    """
    op = op or "command"
    logger.warning("safe_error: %s failed: %r", op, exc, exc_info=True)
    msg = str(exc) or exc.__class__.__name__
    msg = _PATH_PATTERN.sub(r"\1", msg)
    if len(msg) > 240:
        msg = msg[:240] + "..."
    return f"{op} failed: {msg}"


def clamp(value, lo: int, hi: int, default: int | None = None) -> int:
    """Coerce value to int and clamp to [lo, hi].

    Falls back to `default` (or `lo` if default is None) when the value cannot
    be coerced. Always returns a value in [lo, hi].
    """
    try:
        v = int(value) if value is not None else (default if default is not None else lo)
    except (TypeError, ValueError):
        v = default if default is not None else lo
    return max(lo, min(hi, v))


def require_finite(values: np.ndarray, what: str) -> None:
    """Raise NumericError naming the first non-finite component of `values`."""
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        idx = int(bad[0])
        raise NumericError(f"{what} has a non-finite component at index {idx}", index=idx)


def as_vector(values, length: int | None = None, what: str = "input") -> np.ndarray:
    """Convert to a 1-D float64 array, optionally checking its length."""
    arr = np.asarray(values, dtype=np.float64).reshape(-1)
    if length is not None and arr.shape[0] != length:
        raise ShapeError(f"{what} has length {arr.shape[0]}, expected {length}")
    return arr
