"""Exception types shared across the package.

Everything raised on a contract violation derives from IntentKitError so
callers can catch one base class at the boundary (the CLI maps subtrees of
this hierarchy onto exit codes).
"""

from __future__ import annotations


class IntentKitError(Exception):
    """Base class for all package-specific errors."""


class DataFormatError(IntentKitError):
    """A data file (records, library, script, SFT lines) failed validation."""


class ConfigError(IntentKitError):
    """A run configuration is malformed, inconsistent, or has unknown keys."""


# --- embedding ---------------------------------------------------------------

class EmptyTextError(IntentKitError):
    """Text to embed was empty or whitespace-only."""


class EmbeddingFailedError(IntentKitError):
    """The embedding backend could not produce a vector."""


class DimensionMismatchError(IntentKitError):
    """Two vectors with different dimensions were combined."""


class ZeroVectorError(IntentKitError):
    """Cosine similarity was requested against an all-zero vector."""


# --- remote backends ----------------------------------------------------------

class RemoteBackendError(IntentKitError):
    """Base class for failures while talking to a remote HTTP backend."""


class RemoteUnavailableError(RemoteBackendError):
    """The remote endpoint refused, errored, or answered with a bad payload.

    ``status`` carries the HTTP status code, or None when the connection
    itself failed.
    """

    def __init__(self, message: str, status: int | None = None):
        super().__init__(message)
        self.status = status


class RequestTimeoutError(RemoteBackendError):
    """The remote call exceeded its per-request timeout."""

    def __init__(self, message: str, timeout_ms: int):
        super().__init__(message)
        self.timeout_ms = timeout_ms


class ScriptExhaustedError(IntentKitError):
    """A scripted model backend ran out of canned steps."""


class InferenceAbortedError(IntentKitError):
    """A model backend failed mid-episode.

    Carries the partial trajectory built so far, so callers can log or skip.
    """

    def __init__(self, message: str, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory


# --- history library ----------------------------------------------------------

class UnknownLabelError(IntentKitError):
    """A label outside the active taxonomy was inserted into the library."""


class InsufficientDataError(IntentKitError):
    """Not enough entries to compute the requested statistic."""


# --- rewards ------------------------------------------------------------------

class MissingOptionsError(IntentKitError):
    """A rollout claims a tool call but carries no emitted option set."""


class GroupTooSmallError(IntentKitError):
    """Group-relative advantages need at least two rollouts."""


class LengthMismatchError(IntentKitError):
    """Parallel per-token sequences had different lengths."""


class NonFiniteInputError(IntentKitError):
    """A numeric input contained NaN or infinity."""


class EmptyInputError(IntentKitError):
    """A sequence input that must be non-empty was empty."""


# --- metrics ------------------------------------------------------------------

class InsufficientSamplesError(IntentKitError):
    """A row carries fewer sampled predictions than pass@n requires."""


class DegenerateRangeError(IntentKitError):
    """A normalization range had equal endpoints."""


class InsufficientClassesError(IntentKitError):
    """Fewer supported classes than a head/tail split requires."""
