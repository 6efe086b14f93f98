"""Synthetic GUI screens: solid-colour rectangles on a flat background."""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from ..errors import GenerationError
from ..tools import BBox, Image, ImageDims

BACKGROUND = (236, 236, 236)

PALETTE: tuple[tuple[str, tuple[int, int, int]], ...] = (
    ("red", (220, 40, 40)),
    ("green", (40, 170, 60)),
    ("blue", (40, 80, 220)),
    ("orange", (245, 140, 20)),
    ("purple", (140, 60, 190)),
    ("teal", (20, 160, 160)),
    ("pink", (240, 110, 180)),
    ("brown", (130, 80, 40)),
    ("olive", (120, 130, 20)),
    ("navy", (20, 30, 110)),
    ("black", (20, 20, 20)),
    ("gold", (210, 180, 30)),
)

_COLOR_RE = re.compile(r"\(color (\d+)\)")


def color_rgb(color_id: int) -> tuple[int, int, int]:
    return PALETTE[color_id][1]


def instruction_for(color_id: int) -> str:
    return f"Click the {PALETTE[color_id][0]} element (color {color_id})."


def target_color(instruction: str) -> int | None:
    """Colour id named by an instruction built with :func:`instruction_for`."""
    m = _COLOR_RE.search(instruction)
    if m is None:
        return None
    cid = int(m.group(1))
    return cid if cid < len(PALETTE) else None


@dataclass(frozen=True)
class ScreenConfig:
    width: int = 256
    height: int = 256
    n_elements: int = 6
    min_size: int = 12
    max_size: int = 28
    grid: int = 8
    max_retries: int = 200


@dataclass(frozen=True)
class Element:
    bbox: BBox
    color_id: int
    is_target: bool


@dataclass(frozen=True, eq=False)
class SyntheticScreen:
    dims: ImageDims
    elements: tuple[Element, ...]
    instruction: str
    gt: BBox
    image: Image

    @property
    def target(self) -> Element:
        return next(e for e in self.elements if e.is_target)


def _touches(a: BBox, b: BBox) -> bool:
    # closed-box test so that elements never share an edge
    return a.x1 <= b.x2 and b.x1 <= a.x2 and a.y1 <= b.y2 and b.y1 <= a.y2


def generate_screen(seed: int, config: ScreenConfig = ScreenConfig()) -> SyntheticScreen:
    if config.n_elements < 1:
        raise GenerationError("n_elements must be >= 1")
    if config.n_elements > len(PALETTE):
        raise GenerationError(f"at most {len(PALETTE)} elements have distinct colours")
    if config.max_size > min(config.width, config.height) or config.min_size < 1:
        raise GenerationError("element sizes do not fit the screen")
    rng = np.random.default_rng(seed)
    colors = rng.choice(len(PALETTE), size=config.n_elements, replace=False)
    target_idx = int(rng.integers(config.n_elements))
    boxes: list[BBox] = []
    for _ in range(config.n_elements):
        for _attempt in range(config.max_retries):
            w, h = rng.integers(config.min_size, config.max_size + 1, size=2)
            x = int(rng.integers(0, config.width - w + 1))
            y = int(rng.integers(0, config.height - h + 1))
            box = BBox(x, y, x + int(w), y + int(h))
            if not any(_touches(box, other) for other in boxes):
                boxes.append(box)
                break
        else:
            raise GenerationError(f"could not place {config.n_elements} disjoint elements "
                                  f"after {config.max_retries} retries (seed {seed})")

    pixels = np.empty((config.height, config.width, 3), dtype=np.uint8)
    pixels[:] = BACKGROUND
    elements = []
    for i, (box, cid) in enumerate(zip(boxes, colors)):
        pixels[int(box.y1):int(box.y2), int(box.x1):int(box.x2)] = color_rgb(int(cid))
        elements.append(Element(box, int(cid), i == target_idx))
    target = elements[target_idx]
    return SyntheticScreen(
        dims=ImageDims(config.width, config.height),
        elements=tuple(elements),
        instruction=instruction_for(target.color_id),
        gt=target.bbox,
        image=Image(pixels),
    )
