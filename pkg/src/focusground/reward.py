"""Trajectory reward: format, accuracy and the spatial tool reward."""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Optional

from .config import load_kv
from .errors import DegenerateTargetError, InvalidSpecError
from .tools import BBox, NoTool, Point, ToolSpec, boundary_distance, coverage_fraction


class RewardVariant(str, enum.Enum):
    FULL = "full"
    CENTER_ONLY = "center"
    OVERLAP_ONLY = "overlap"


@dataclass(frozen=True)
class RewardWeights:
    lambda_acc: float = 0.6
    lambda_format: float = 0.1
    lambda_tool: float = 0.3
    lambda_center: float = 0.7
    lambda_overlap: float = 0.3
    alpha: float = 1.5
    sigma_scale: float = 1.6

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not math.isfinite(v) or v < 0:
                raise InvalidSpecError(f"{f.name} must be finite and >= 0, got {v}")
        if self.alpha <= 0 or self.sigma_scale <= 0:
            raise InvalidSpecError("alpha and sigma_scale must be positive")

    @classmethod
    def from_mapping(cls, values: dict, strict: bool = True) -> RewardWeights:
        """Build from a mapping; unknown keys raise unless ``strict`` is off."""
        names = {f.name for f in fields(cls)}
        unknown = set(values) - names
        if strict and unknown:
            raise KeyError(f"unknown reward weight keys: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in values.items() if k in names})

    @classmethod
    def load(cls, path: str | Path) -> RewardWeights:
        return cls.from_mapping(load_kv(path))

    def as_dict(self) -> dict[str, float]:
        return asdict(self)

    def with_variant(self, variant: RewardVariant) -> RewardWeights:
        """Weights with the dropped component's coefficient set to zero."""
        variant = RewardVariant(variant)
        if variant is RewardVariant.CENTER_ONLY:
            return replace(self, lambda_overlap=0.0)
        if variant is RewardVariant.OVERLAP_ONLY:
            return replace(self, lambda_center=0.0)
        return self


@dataclass(frozen=True)
class TrajectoryOutcome:
    format_ok: bool
    tool: ToolSpec
    gt: BBox
    tool_region: Optional[BBox] = None
    final_point_original: Optional[Point] = None


@dataclass(frozen=True)
class ToolTerms:
    center_term: float
    overlap_term: float
    r_tool: float


@dataclass(frozen=True)
class RewardBreakdown:
    r_format: int
    r_acc: int
    r_tool: float
    center_term: float
    overlap_term: float
    total: float

    def as_dict(self) -> dict[str, float]:
        return asdict(self)


def _check_gt(gt: BBox) -> None:
    if gt.area <= 0:
        raise DegenerateTargetError(f"ground-truth box {gt.as_list()} has zero area")


def sigma_of(gt: BBox, w: RewardWeights) -> float:
    _check_gt(gt)
    return w.sigma_scale * gt.diagonal


def center_proximity(c: Point, gt: BBox, w: RewardWeights) -> float:
    d = boundary_distance(c, gt)
    return math.exp(-w.alpha * (d / sigma_of(gt, w)) ** 2)


def accuracy_reward(outcome: TrajectoryOutcome) -> int:
    p = outcome.final_point_original
    return int(p is not None and outcome.gt.contains(p))


def format_reward(outcome: TrajectoryOutcome) -> int:
    return int(outcome.format_ok)


def tool_reward(outcome: TrajectoryOutcome, w: RewardWeights,
                variant: RewardVariant = RewardVariant.FULL) -> ToolTerms:
    gt = outcome.gt
    _check_gt(gt)
    eff = w.with_variant(variant)
    tool = outcome.tool
    if isinstance(tool, NoTool):
        # no tool: the answer point stands in for the centre and coverage is zero
        c = outcome.final_point_original
        overlap = 0.0
    else:
        c = tool.center
        overlap = coverage_fraction(outcome.tool_region, gt)
    center = center_proximity(c, gt, w) if c is not None else 0.0
    return ToolTerms(center, overlap, eff.lambda_center * center + eff.lambda_overlap * overlap)


def total_reward(outcome: TrajectoryOutcome, w: RewardWeights,
                 variant: RewardVariant = RewardVariant.FULL) -> RewardBreakdown:
    _check_gt(outcome.gt)
    if not outcome.format_ok:
        return RewardBreakdown(0, 0, 0.0, 0.0, 0.0, 0.0)
    r_format = format_reward(outcome)
    r_acc = accuracy_reward(outcome)
    terms = tool_reward(outcome, w, variant)
    total = w.lambda_acc * r_acc + w.lambda_format * r_format + w.lambda_tool * terms.r_tool
    return RewardBreakdown(r_format, r_acc, terms.r_tool, terms.center_term, terms.overlap_term, total)
