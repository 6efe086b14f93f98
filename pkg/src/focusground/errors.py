"""Exception hierarchy shared across the package."""

from __future__ import annotations


class FocusGroundError(Exception):
    """Base class for all package errors."""


class InvalidSpecError(FocusGroundError, ValueError):
    """Tool parameters or geometric inputs are non-finite or out of range."""


class ContractError(FocusGroundError):
    """An operation was called outside its precondition."""


class DegenerateTargetError(FocusGroundError, ValueError):
    """A ground-truth box has zero area."""


class EmptyCropError(FocusGroundError, ValueError):
    """A crop region rounds to zero pixels."""


class InvalidScaleError(FocusGroundError, ValueError):
    """A zoom scale is non-positive or yields an empty image."""


class InvalidGroupError(FocusGroundError, ValueError):
    """A GRPO group is too small to normalise."""


class InvalidRatioError(FocusGroundError, ValueError):
    """An importance ratio is not strictly positive."""


class GenerationError(FocusGroundError):
    """Synthetic screen packing failed."""


class EpisodeError(FocusGroundError):
    """A rollout failed for reasons other than the policy's output format."""


class TransportError(EpisodeError):
    """The remote model could not be reached."""


class HTTPStatusError(EpisodeError):
    """The remote model answered with a non-2xx status."""

    def __init__(self, status: int, body: str = ""):
        super().__init__(f"remote returned HTTP {status}: {body[:200]}")
        self.status = status


class MalformedResponseError(EpisodeError):
    """The remote model's response body did not match the wire schema."""


class DatasetError(FocusGroundError):
    """A dataset file is missing or has no valid records."""
