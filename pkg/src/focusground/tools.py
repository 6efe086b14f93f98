"""Pixel-space geometry for the crop and zoom tools.

Coordinates are real-valued pixels with the origin at the top-left corner of
the image. Rasterisation only happens in :func:`crop_image` and
:func:`zoom_image`, which round half up.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np
from PIL import Image as PILImage

from .errors import (
    ContractError,
    DegenerateTargetError,
    EmptyCropError,
    InvalidScaleError,
    InvalidSpecError,
)


def _finite(*values: float) -> bool:
    return all(math.isfinite(v) for v in values)


def round_half_up(v: float) -> int:
    return int(math.floor(v + 0.5))


@dataclass(frozen=True)
class Point:
    x: float
    y: float

    def __post_init__(self):
        if not _finite(self.x, self.y):
            raise InvalidSpecError(f"non-finite point ({self.x}, {self.y})")

    def as_list(self) -> list[float]:
        return [self.x, self.y]


@dataclass(frozen=True)
class BBox:
    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        if not _finite(self.x1, self.y1, self.x2, self.y2):
            raise InvalidSpecError(f"non-finite box {self.as_list()}")
        if self.x1 > self.x2 or self.y1 > self.y2:
            raise InvalidSpecError(f"inverted box {self.as_list()}")

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> Point:
        return Point((self.x1 + self.x2) / 2, (self.y1 + self.y2) / 2)

    @property
    def diagonal(self) -> float:
        return math.hypot(self.width, self.height)

    def contains(self, p: Point) -> bool:
        """Inclusive point membership; boundary points count as inside."""
        return self.x1 <= p.x <= self.x2 and self.y1 <= p.y <= self.y2

    def contains_box(self, other: BBox) -> bool:
        return (self.x1 <= other.x1 and self.y1 <= other.y1
                and other.x2 <= self.x2 and other.y2 <= self.y2)

    def intersect(self, other: BBox) -> BBox | None:
        x1, y1 = max(self.x1, other.x1), max(self.y1, other.y1)
        x2, y2 = min(self.x2, other.x2), min(self.y2, other.y2)
        if x2 < x1 or y2 < y1:
            return None
        return BBox(x1, y1, x2, y2)

    def as_list(self) -> list[float]:
        return [self.x1, self.y1, self.x2, self.y2]


@dataclass(frozen=True)
class ImageDims:
    width: int
    height: int

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise InvalidSpecError(f"image dims must be positive, got {self.width}x{self.height}")

    @property
    def rect(self) -> BBox:
        return BBox(0, 0, self.width, self.height)


@dataclass(frozen=True)
class NoTool:
    pass


@dataclass(frozen=True)
class Crop:
    center: Point
    size: tuple[float, float]

    def __post_init__(self):
        _check_size(self.size)


@dataclass(frozen=True)
class Zoom:
    center: Point
    size: tuple[float, float]
    scale: float

    def __post_init__(self):
        _check_size(self.size)
        if not _finite(self.scale):
            raise InvalidSpecError(f"non-finite zoom scale {self.scale}")
        if self.scale <= 0:
            raise InvalidScaleError(f"zoom scale must be positive, got {self.scale}")


ToolSpec = Union[NoTool, Crop, Zoom]


def _check_size(size) -> None:
    w, h = size
    if not _finite(w, h):
        raise InvalidSpecError(f"non-finite tool size {size}")
    if w < 0 or h < 0:
        raise InvalidSpecError(f"tool size must be non-negative, got {size}")


@dataclass(frozen=True, eq=False)
class Image:
    """RGB8 image backed by a row-major ``(height, width, 3)`` uint8 array."""

    pixels: np.ndarray

    def __post_init__(self):
        px = self.pixels
        if px.dtype != np.uint8 or px.ndim != 3 or px.shape[2] != 3:
            raise InvalidSpecError(f"expected (H, W, 3) uint8 pixels, got {px.dtype} {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise InvalidSpecError("image must have at least one pixel")

    @property
    def dims(self) -> ImageDims:
        return ImageDims(self.pixels.shape[1], self.pixels.shape[0])

    def __eq__(self, other):
        if not isinstance(other, Image):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and np.array_equal(self.pixels, other.pixels)

    @classmethod
    def from_bytes(cls, buf: bytes, width: int, height: int) -> Image:
        if len(buf) != 3 * width * height:
            raise InvalidSpecError(f"buffer length {len(buf)} != 3*{width}*{height}")
        return cls(np.frombuffer(buf, dtype=np.uint8).reshape(height, width, 3).copy())

    def to_bytes(self) -> bytes:
        return np.ascontiguousarray(self.pixels).tobytes()


def crop_region(spec: ToolSpec, dims: ImageDims) -> BBox:
    """Box of the requested size centred on ``spec.center``, clipped to the image."""
    if isinstance(spec, NoTool):
        raise ContractError("crop_region called with NoTool")
    cx, cy = spec.center.x, spec.center.y
    w, h = spec.size
    if not _finite(cx, cy, w, h):
        raise InvalidSpecError("non-finite tool parameters")
    x1 = min(max(cx - w / 2, 0.0), dims.width)
    y1 = min(max(cy - h / 2, 0.0), dims.height)
    x2 = min(max(cx + w / 2, 0.0), dims.width)
    y2 = min(max(cy + h / 2, 0.0), dims.height)
    return BBox(x1, y1, x2, y2)


def boundary_distance(c: Point, box: BBox) -> float:
    """Euclidean distance from ``c`` to the box; zero inside or on the edge."""
    if not _finite(c.x, c.y):
        raise InvalidSpecError("non-finite point")
    dx = max(box.x1 - c.x, c.x - box.x2, 0.0)
    dy = max(box.y1 - c.y, c.y - box.y2, 0.0)
    return math.hypot(dx, dy)


def intersection_area(a: BBox, b: BBox) -> float:
    w = min(a.x2, b.x2) - max(a.x1, b.x1)
    h = min(a.y2, b.y2) - max(a.y1, b.y1)
    if w <= 0 or h <= 0:
        return 0.0
    return w * h


def coverage_fraction(crop: BBox, gt: BBox) -> float:
    """Fraction of ``gt``'s area that lies inside ``crop``."""
    if gt.area <= 0:
        raise DegenerateTargetError(f"ground-truth box {gt.as_list()} has zero area")
    return intersection_area(crop, gt) / gt.area


def iou(a: BBox, b: BBox) -> float:
    inter = intersection_area(a, b)
    union = a.area + b.area - inter
    return inter / union if union > 0 else 0.0


def map_from_crop(p_crop: Point, crop: BBox) -> Point:
    return Point(p_crop.x + crop.x1, p_crop.y + crop.y1)


def map_from_zoom(p_zoomed: Point, crop: BBox, z: float) -> Point:
    if not _finite(z) or z <= 0:
        raise InvalidScaleError(f"zoom scale must be positive, got {z}")
    return Point(p_zoomed.x / z + crop.x1, p_zoomed.y / z + crop.y1)


def raster_window(region: BBox, dims: ImageDims) -> tuple[int, int, int, int]:
    """Integer ``(left, top, width, height)`` that :func:`crop_image` copies."""
    w = round_half_up(region.width)
    h = round_half_up(region.height)
    if w < 1 or h < 1:
        raise EmptyCropError(f"region {region.as_list()} rounds to {w}x{h} pixels")
    w, h = min(w, dims.width), min(h, dims.height)
    left = min(max(round_half_up(region.x1), 0), dims.width - w)
    top = min(max(round_half_up(region.y1), 0), dims.height - h)
    return left, top, w, h


def crop_image(img: Image, region: BBox) -> Image:
    left, top, w, h = raster_window(region, img.dims)
    return Image(img.pixels[top:top + h, left:left + w].copy())


def _bilinear_axis(n_in: int, n_out: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # half-pixel centres: output i samples input coordinate (i + 0.5) * n_in / n_out - 0.5
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    lo = np.floor(src).astype(np.intp)
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, src - lo


def zoom_image(img: Image, z: float) -> Image:
    """Bilinear resample by factor ``z`` (half-pixel-centre convention)."""
    if not _finite(z) or z <= 0:
        raise InvalidScaleError(f"zoom scale must be positive, got {z}")
    h, w = img.pixels.shape[:2]
    out_w, out_h = round_half_up(z * w), round_half_up(z * h)
    if out_w < 1 or out_h < 1:
        raise InvalidScaleError(f"zoom {z} of {w}x{h} yields an empty image")
    if out_w == w and out_h == h:
        return Image(img.pixels.copy())
    x0, x1, fx = _bilinear_axis(w, out_w)
    y0, y1, fy = _bilinear_axis(h, out_h)
    px = img.pixels.astype(np.float64)
    top = px[y0][:, x0] * (1 - fx)[None, :, None] + px[y0][:, x1] * fx[None, :, None]
    bot = px[y1][:, x0] * (1 - fx)[None, :, None] + px[y1][:, x1] * fx[None, :, None]
    out = top * (1 - fy)[:, None, None] + bot * fy[:, None, None]
    return Image(np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8))


def read_png(path: str | Path) -> Image:
    with PILImage.open(path) as im:
        return _from_pil(im)


def decode_png(data: bytes) -> Image:
    with PILImage.open(io.BytesIO(data)) as im:
        return _from_pil(im)


def _from_pil(im: PILImage.Image) -> Image:
    if im.mode in ("RGBA", "LA") or (im.mode == "P" and "transparency" in im.info):
        rgba = im.convert("RGBA")
        background = PILImage.new("RGBA", rgba.size, (255, 255, 255, 255))
        im = PILImage.alpha_composite(background, rgba)
    return Image(np.asarray(im.convert("RGB"), dtype=np.uint8).copy())


def encode_png(img: Image) -> bytes:
    buf = io.BytesIO()
    PILImage.fromarray(img.pixels, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def write_png(img: Image, path: str | Path) -> None:
    Path(path).write_bytes(encode_png(img))


def png_dims(path: str | Path) -> ImageDims:
    """Read dimensions from the PNG header without decoding pixels."""
    with PILImage.open(path) as im:
        return ImageDims(*im.size)
