"""Running policies over benchmark records."""

from __future__ import annotations

from typing import Mapping, Optional, Sequence

import numpy as np

from ..errors import EpisodeError, FocusGroundError
from ..protocol import (
    Answer,
    FormatError,
    Observation,
    Policy,
    ToolMeta,
    parse_action,
    render_prompt,
    run_episode,
)
from ..reward import RewardVariant, RewardWeights
from ..tools import BBox, Image, ImageDims, Point, crop_image, map_from_crop, read_png
from .dataset import DatasetRecord
from .report import EvalReport, RecordResult

MODES = ("full-episode", "direct-only")


def score_prediction(pred: Optional[Point], gt: BBox) -> int:
    """1 iff ``pred`` lies inside or on the border of ``gt``."""
    return int(pred is not None and gt.contains(pred))


class _ImageCache:
    def __init__(self):
        self._cache: dict = {}

    def __call__(self, rec: DatasetRecord) -> Image:
        if rec.image_path not in self._cache:
            self._cache[rec.image_path] = read_png(rec.image_path)
        return self._cache[rec.image_path]


def static_window(ref: Point, alpha: float, dims: ImageDims) -> BBox:
    """Window of size ``(alpha*W, alpha*H)`` centred on ``ref``, slid to stay inside the image.

    Sliding rather than truncating keeps the window size fixed, so ``alpha = 1``
    always yields the whole image.
    """
    w, h = alpha * dims.width, alpha * dims.height
    x1 = min(max(ref.x - w / 2, 0.0), dims.width - w)
    y1 = min(max(ref.y - h / 2, 0.0), dims.height - h)
    return BBox(x1, y1, x1 + w, y1 + h)


def direct_query(policy: Policy, rec: DatasetRecord, image: Image, seed: int,
                 region: Optional[BBox] = None) -> tuple[Optional[Point], dict]:
    """One stage-2-style query on ``region`` (default: the whole image).

    Returns the click mapped to original-image pixels, or ``None`` if the
    output did not parse as an answer.
    """
    region = image.dims.rect if region is None else region
    view = crop_image(image, region)
    obs = Observation(2, render_prompt(2, rec.instruction, ToolMeta(region, 1.0)), view, rec.instruction)
    out = policy.act(obs, np.random.default_rng(seed))
    detail = {"raw": out.text, "region": region.as_list()}
    try:
        action = parse_action(out.text, 2)
    except FormatError as exc:
        detail["format_error"] = exc.code.value
        return None, detail
    assert isinstance(action, Answer)
    return map_from_crop(action.point, region), detail


def _result(rec: DatasetRecord, pred: Optional[Point], detail: dict) -> RecordResult:
    return RecordResult(rec.key, rec.platform, rec.ui_type, rec.group,
                        bool(score_prediction(pred, rec.gt)),
                        prediction=pred.as_list() if pred is not None else None, detail=detail)


def _errored(rec: DatasetRecord, exc: Exception) -> RecordResult:
    return RecordResult(rec.key, rec.platform, rec.ui_type, rec.group, False,
                        errored=True, error=f"{type(exc).__name__}: {exc}")


def evaluate(records: Sequence[DatasetRecord], policy: Policy, mode: str = "full-episode",
             seed: int = 0, weights: Optional[RewardWeights] = None,
             variant: RewardVariant = RewardVariant.FULL, exclude_errors: bool = False,
             config: Optional[dict] = None) -> EvalReport:
    """Score ``policy`` on ``records``.

    Each record draws its randomness from ``seed`` and its own identity, so
    reports do not depend on record order. Policy-side failures
    (:class:`EpisodeError`) and unreadable images are recorded per record.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    weights = weights if weights is not None else RewardWeights()
    load = _ImageCache()
    results = []
    for rec in records:
        try:
            image = load(rec)
            if mode == "direct-only":
                pred, detail = direct_query(policy, rec, image, rec.seed(seed))
            else:
                ep = run_episode(policy, rec.instruction, image, rec.gt, rec.seed(seed),
                                 weights, variant, image_ref=rec.image)
                pred = ep.outcome.final_point_original
                detail = {"step_count": ep.step_count, "format_ok": ep.outcome.format_ok,
                          "reward": ep.reward.total}
            results.append(_result(rec, pred, detail))
        except (EpisodeError, OSError, FocusGroundError) as exc:
            results.append(_errored(rec, exc))
    echo = {"mode": mode, "seed": seed, "variant": variant.value, **weights.as_dict(), **(config or {})}
    return EvalReport(results, echo, exclude_errors)


def static_crop_baseline(records: Sequence[DatasetRecord], reference_points: Mapping[str, Point],
                         alpha: float, policy: Policy, seed: int = 0, exclude_errors: bool = False,
                         config: Optional[dict] = None) -> EvalReport:
    """Fixed-ratio crop around a reference click, then one direct query.

    ``reference_points`` is keyed by :attr:`DatasetRecord.key`. With
    ``alpha == 0`` this is exactly :func:`evaluate` in direct-only mode.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    if alpha == 0:
        return evaluate(records, policy, "direct-only", seed, exclude_errors=exclude_errors, config=config)
    load = _ImageCache()
    results = []
    for rec in records:
        ref = reference_points.get(rec.key)
        if ref is None:
            results.append(_errored(rec, KeyError(f"no reference point for {rec.key!r}")))
            continue
        try:
            image = load(rec)
            region = static_window(ref, alpha, image.dims)
            pred, detail = direct_query(policy, rec, image, rec.seed(seed), region)
            results.append(_result(rec, pred, detail))
        except (EpisodeError, OSError, FocusGroundError) as exc:
            results.append(_errored(rec, exc))
    echo = {"mode": "static-crop", "alpha": alpha, "seed": seed, **(config or {})}
    return EvalReport(results, echo, exclude_errors)
