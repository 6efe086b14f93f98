"""Seed-replicated sweeps over reward settings, crop ratios or other knobs."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from ..protocol import Policy
from ..reward import RewardVariant, RewardWeights
from ..tools import Point
from ..training import ToyTrainConfig, train_toy
from .dataset import DatasetRecord
from .evaluate import evaluate, static_crop_baseline

# reward-coefficient grid: (lambda_acc, lambda_tool) with lambda_format fixed at 0.1
COEFFICIENT_GRID = [
    {"name": f"acc={a}, tool={t}", "lambda_acc": a, "lambda_format": 0.1, "lambda_tool": t}
    for a, t in ((0.4, 0.5), (0.55, 0.35), (0.6, 0.3), (0.65, 0.25), (0.7, 0.2))
]
VARIANT_GRID = [{"name": v, "variant": v} for v in ("center", "overlap", "full")]
STATIC_CROP_GRID = [{"name": f"alpha={a}", "alpha": a} for a in (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)]
BUILTIN_GRIDS = {"coefficients": COEFFICIENT_GRID, "variants": VARIANT_GRID, "static-crop": STATIC_CROP_GRID}

Runner = Callable[[dict, int], float]


@dataclass
class SweepRow:
    name: str
    config: dict
    values: list[Optional[float]]
    errors: list[str] = field(default_factory=list)

    @property
    def ok(self) -> list[float]:
        return [v for v in self.values if v is not None]

    @property
    def mean(self) -> Optional[float]:
        return float(np.mean(self.ok)) if self.ok else None

    @property
    def std(self) -> Optional[float]:
        """Sample standard deviation over seeds; 0 for a single seed."""
        if not self.ok:
            return None
        return float(np.std(self.ok, ddof=1)) if len(self.ok) > 1 else 0.0


@dataclass
class SweepTable:
    rows: list[SweepRow]
    seeds: list[int]
    metric: str

    def row(self, name: str) -> SweepRow:
        return next(r for r in self.rows if r.name == name)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["config", "mean", "std", *[f"seed_{s}" for s in self.seeds], "errors"])
        for r in self.rows:
            w.writerow([r.name, "" if r.mean is None else f"{r.mean:.6f}",
                        "" if r.std is None else f"{r.std:.6f}",
                        *["error" if v is None else f"{v:.6f}" for v in r.values], "; ".join(r.errors)])
        return buf.getvalue()

    def to_markdown(self) -> str:
        out = [f"| config | {self.metric} (mean ± std) | seeds |", "|---|---|---|"]
        for r in self.rows:
            cell = "error" if r.mean is None else f"{r.mean:.4f} ± {r.std:.4f}"
            if r.errors:
                cell += f" ({len(r.errors)} failed)"
            out.append(f"| {r.name} | {cell} | {len(r.ok)}/{len(r.values)} |")
        return "\n".join(out) + "\n"


def config_name(cfg: Mapping) -> str:
    return str(cfg.get("name") or json.dumps({k: v for k, v in cfg.items()}, sort_keys=True))


def sweep(configs: Sequence[Mapping], runner: Runner, seeds: Sequence[int], metric: str = "success") -> SweepTable:
    """Call ``runner(config, seed)`` for every pair; failures annotate the cell."""
    if not configs:
        raise ValueError("sweep needs at least one config")
    if not seeds:
        raise ValueError("sweep needs at least one seed")
    rows = []
    for cfg in configs:
        params = {k: v for k, v in cfg.items() if k != "name"}
        row = SweepRow(config_name(cfg), params, [])
        for seed in seeds:
            try:
                value = float(runner(params, seed))
                if not math.isfinite(value):
                    raise ValueError(f"runner returned {value}")
                row.values.append(value)
            except Exception as exc:  # noqa: BLE001 - recorded in the table instead
                row.values.append(None)
                row.errors.append(f"seed {seed}: {type(exc).__name__}: {exc}")
        rows.append(row)
    return SweepTable(rows, list(seeds), metric)


def toy_training_runner(base: Optional[Mapping] = None) -> Runner:
    """Final held-out success of a toy policy trained with ``base`` updated by the row config."""
    base = dict(base or {})

    def run(cfg: dict, seed: int) -> float:
        return train_toy(ToyTrainConfig.from_mapping({**base, **cfg}), seed).final_success

    return run


def evaluation_runner(records: Sequence[DatasetRecord], policy: Policy,
                      reference_points: Optional[Mapping[str, Point]] = None) -> Runner:
    """Micro-averaged accuracy (fraction) of ``policy`` on ``records``.

    Row configs may set ``mode`` (full-episode, direct-only), ``alpha`` (static
    crop; needs reference points), ``variant`` and reward weights.
    """
    def run(cfg: dict, seed: int) -> float:
        cfg = dict(cfg)
        if "alpha" in cfg:
            if reference_points is None:
                raise ValueError("alpha sweep needs reference points")
            report = static_crop_baseline(records, reference_points, float(cfg["alpha"]), policy, seed)
        else:
            variant = RewardVariant(cfg.pop("variant", "full"))
            mode = cfg.pop("mode", "full-episode")
            weights = RewardWeights.from_mapping(cfg, strict=False)
            report = evaluate(records, policy, mode, seed, weights, variant)
        return (report.micro_average or 0.0) / 100.0

    return run


def load_grid(spec: str) -> list[dict]:
    """A built-in grid name or a JSON file holding a list of row configs."""
    if spec in BUILTIN_GRIDS:
        return [dict(c) for c in BUILTIN_GRIDS[spec]]
    data = json.loads(Path(spec).read_text())
    if not isinstance(data, list) or not all(isinstance(c, dict) for c in data):
        raise ValueError(f"{spec}: grid file must hold a JSON list of objects")
    return data
