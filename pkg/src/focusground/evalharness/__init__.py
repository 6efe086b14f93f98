"""Benchmark ingestion, scoring, reports, static-crop baseline and sweeps."""

from .dataset import (
    PLATFORMS,
    UI_TYPES,
    DatasetRecord,
    LoadedDataset,
    load_dataset,
    load_reference_points,
    write_synthetic_benchmark,
)
from .evaluate import MODES, direct_query, evaluate, score_prediction, static_crop_baseline, static_window
from .report import EvalReport, RecordResult
from .sweep import (
    BUILTIN_GRIDS,
    COEFFICIENT_GRID,
    STATIC_CROP_GRID,
    VARIANT_GRID,
    SweepTable,
    evaluation_runner,
    load_grid,
    sweep,
    toy_training_runner,
)

__all__ = [
    "BUILTIN_GRIDS", "COEFFICIENT_GRID", "MODES", "PLATFORMS", "STATIC_CROP_GRID", "UI_TYPES",
    "VARIANT_GRID", "DatasetRecord", "EvalReport", "LoadedDataset", "RecordResult", "SweepTable",
    "direct_query", "evaluate", "evaluation_runner", "load_dataset", "load_grid",
    "load_reference_points", "score_prediction", "static_crop_baseline", "static_window", "sweep",
    "toy_training_runner", "write_synthetic_benchmark",
]
