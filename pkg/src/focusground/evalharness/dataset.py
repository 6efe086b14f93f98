"""Grounding benchmark records in line-delimited JSON.

Each line holds exactly these fields::

    {"image": "relative/or/absolute.png", "instruction": "...",
     "bbox": [x1, y1, x2, y2], "platform": "mobile|desktop|web",
     "ui_type": "text|icon", "group": "free-form label"}

Image paths are resolved relative to the dataset file.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional

import numpy as np

from ..agents.screens import ScreenConfig, generate_screen
from ..errors import DatasetError
from ..tools import BBox, Point, png_dims, write_png

PLATFORMS = ("mobile", "desktop", "web")
UI_TYPES = ("text", "icon")
FIELDS = frozenset({"image", "instruction", "bbox", "platform", "ui_type", "group"})


@dataclass(frozen=True)
class DatasetRecord:
    image: str
    instruction: str
    gt: BBox
    platform: str
    ui_type: str
    group: str
    image_path: Path = field(compare=False)

    @property
    def key(self) -> str:
        """Stable identity used for seeding and reference-point lookup."""
        return f"{self.image}\t{self.instruction}"

    def seed(self, base: int) -> int:
        digest = hashlib.sha256(f"{self.key}\t{self.gt.as_list()}".encode()).digest()
        return int(np.random.SeedSequence([base, int.from_bytes(digest[:8], "little")]).generate_state(1)[0])

    def to_json(self) -> dict:
        return {"image": self.image, "instruction": self.instruction, "bbox": self.gt.as_list(),
                "platform": self.platform, "ui_type": self.ui_type, "group": self.group}


@dataclass
class LoadedDataset:
    records: list[DatasetRecord]
    errors: list[tuple[int, str]]

    def __iter__(self) -> Iterator[DatasetRecord]:
        return iter(self.records)

    def __len__(self) -> int:
        return len(self.records)

    def error_report(self) -> str:
        return "\n".join(f"line {n}: {msg}" for n, msg in self.errors)


def _validate(obj: object, base: Path) -> DatasetRecord:
    if not isinstance(obj, dict):
        raise ValueError("line is not a JSON object")
    missing, extra = FIELDS - set(obj), set(obj) - FIELDS
    if missing or extra:
        raise ValueError(f"fields must be exactly {sorted(FIELDS)} (missing {sorted(missing)}, extra {sorted(extra)})")
    for key in ("image", "instruction", "platform", "ui_type", "group"):
        if not isinstance(obj[key], str):
            raise ValueError(f"{key} must be a string")
    if obj["platform"] not in PLATFORMS:
        raise ValueError(f"platform {obj['platform']!r} not in {PLATFORMS}")
    if obj["ui_type"] not in UI_TYPES:
        raise ValueError(f"ui_type {obj['ui_type']!r} not in {UI_TYPES}")
    bbox = obj["bbox"]
    if (not isinstance(bbox, list) or len(bbox) != 4
            or not all(isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v) for v in bbox)):
        raise ValueError("bbox must be 4 finite numbers")
    x1, y1, x2, y2 = (float(v) for v in bbox)
    if x1 > x2 or y1 > y2:
        raise ValueError(f"invariant violation: inverted bbox {bbox}")
    if x2 - x1 <= 0 or y2 - y1 <= 0:
        raise ValueError(f"invariant violation: zero-area bbox {bbox}")
    path = Path(obj["image"])
    path = path if path.is_absolute() else base / path
    try:
        dims = png_dims(path)
    except (OSError, ValueError) as exc:
        raise ValueError(f"cannot read image {obj['image']!r}: {exc}") from None
    if x1 < 0 or y1 < 0 or x2 > dims.width or y2 > dims.height:
        raise ValueError(f"invariant violation: bbox {bbox} exceeds image {dims.width}x{dims.height}")
    return DatasetRecord(obj["image"], obj["instruction"], BBox(x1, y1, x2, y2),
                         obj["platform"], obj["ui_type"], obj["group"], path)


def load_dataset(path: str | Path) -> LoadedDataset:
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"dataset file not found: {path}")
    records, errors = [], []
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            records.append(_validate(json.loads(line), path.parent))
        except ValueError as exc:
            errors.append((lineno, str(exc)))
    if not records:
        raise DatasetError(f"no valid records in {path}:\n" + "\n".join(f"line {n}: {m}" for n, m in errors))
    return LoadedDataset(records, errors)


def load_reference_points(path: str | Path) -> dict[str, Point]:
    """JSONL of ``{"image": ..., "instruction": ..., "point": [x, y]}`` keyed like records."""
    refs = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        obj = json.loads(line)
        try:
            refs[f"{obj['image']}\t{obj['instruction']}"] = Point(*map(float, obj["point"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise DatasetError(f"{path}:{lineno}: bad reference point: {exc}") from None
    return refs


def write_synthetic_benchmark(out_dir: str | Path, n: int, seed: int = 0,
                              config: ScreenConfig = ScreenConfig(),
                              groups: tuple[str, ...] = ("CAD", "Office", "Development"),
                              ref_noise: Optional[float] = 12.0) -> Path:
    """Render ``n`` synthetic screens as PNGs plus ``dataset.jsonl``.

    Platforms cycle fastest, then UI type, then group. With ``ref_noise`` set,
    also writes ``refs.jsonl`` holding the target centre perturbed by Gaussian
    noise of that many pixels, as a stand-in for a reference model's guesses.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    lines, refs = [], []
    for i in range(n):
        screen = generate_screen(int(np.random.SeedSequence([seed, i]).generate_state(1)[0]), config)
        name = f"screen_{i:03d}.png"
        write_png(screen.image, out / name)
        rec = {"image": name, "instruction": screen.instruction, "bbox": screen.gt.as_list(),
               "platform": PLATFORMS[i % 3], "ui_type": UI_TYPES[(i // 3) % 2],
               "group": groups[(i // 6) % len(groups)]}
        lines.append(json.dumps(rec))
        if ref_noise is not None:
            c = screen.gt.center
            dx, dy = rng.normal(0.0, ref_noise, 2)
            refs.append(json.dumps({"image": name, "instruction": screen.instruction,
                                    "point": [c.x + float(dx), c.y + float(dy)]}))
    (out / "dataset.jsonl").write_text("\n".join(lines) + "\n")
    if refs:
        (out / "refs.jsonl").write_text("\n".join(refs) + "\n")
    return out / "dataset.jsonl"
