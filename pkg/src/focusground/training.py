"""Desk-scale GRPO training of the toy grid policy on synthetic screens."""

from __future__ import annotations

import csv
import time
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .agents.screens import ScreenConfig, SyntheticScreen, generate_screen
from .agents.toy import ToyPolicy, ToyPolicyParams
from .config import load_kv
from .grpo import GrpoConfig, StepMetrics, episode_seed, train_step
from .protocol import run_episode
from .reward import RewardVariant, RewardWeights

METRIC_FIELDS = ("step", "mean_reward", "success_rate", "tool_rate")

# seeds >= this offset are reserved for held-out evaluation screens
EVAL_SEED_OFFSET = 1_000_000


@dataclass(frozen=True)
class ToyTrainConfig:
    weights: RewardWeights = RewardWeights()
    variant: RewardVariant = RewardVariant.FULL
    # the toy policy's 8 linear parameters need far larger steps than a full-size model
    grpo: GrpoConfig = GrpoConfig(learning_rate=1.0)
    screen: ScreenConfig = ScreenConfig()
    crop_fraction: float = 0.4
    n_groups: int = 100
    screens_per_step: int = 1
    eval_screens: int = 200
    eval_greedy: bool = False

    @classmethod
    def from_mapping(cls, values: dict) -> ToyTrainConfig:
        values = dict(values)
        weight_keys = {f.name for f in fields(RewardWeights)}
        grpo_keys = {f.name for f in fields(GrpoConfig)}
        screen_keys = {f.name for f in fields(ScreenConfig)}
        own = {"variant", "crop_fraction", "n_groups", "screens_per_step", "eval_screens", "eval_greedy"}
        unknown = set(values) - weight_keys - grpo_keys - screen_keys - own
        if unknown:
            raise KeyError(f"unknown config keys: {sorted(unknown)}")
        weights = RewardWeights.from_mapping({k: v for k, v in values.items() if k in weight_keys})
        grpo = GrpoConfig.from_mapping({"learning_rate": 1.0,
                                        **{k: v for k, v in values.items() if k in grpo_keys}})
        screen = ScreenConfig(**{k: int(v) for k, v in values.items() if k in screen_keys})
        kw = {}
        if "variant" in values:
            kw["variant"] = RewardVariant(values["variant"])
        if "crop_fraction" in values:
            kw["crop_fraction"] = float(values["crop_fraction"])
        for k in ("n_groups", "screens_per_step", "eval_screens"):
            if k in values:
                kw[k] = int(values[k])
        if "eval_greedy" in values:
            kw["eval_greedy"] = str(values["eval_greedy"]).lower() in ("1", "true", "yes")
        return cls(weights=weights, grpo=grpo, screen=screen, **kw)

    @classmethod
    def load(cls, path: str | Path) -> ToyTrainConfig:
        return cls.from_mapping(load_kv(path))

    def echo(self) -> dict:
        return {**self.weights.as_dict(), **asdict(self.grpo), **asdict(self.screen),
                "variant": self.variant.value, "crop_fraction": self.crop_fraction,
                "n_groups": self.n_groups, "screens_per_step": self.screens_per_step,
                "eval_screens": self.eval_screens, "eval_greedy": self.eval_greedy}


@dataclass
class TrainResult:
    seed: int
    initial_success: float
    final_success: float
    metrics: list[dict]
    params: ToyPolicyParams
    seconds: float

    @property
    def improvement(self) -> float:
        return self.final_success - self.initial_success


def eval_screens(config: ToyTrainConfig, count: Optional[int] = None) -> list[SyntheticScreen]:
    n = config.eval_screens if count is None else count
    return [generate_screen(EVAL_SEED_OFFSET + i, config.screen) for i in range(n)]


def toy_success(policy: ToyPolicy, screens: Sequence[SyntheticScreen], seed: int,
                greedy: bool = False) -> float:
    """Grounding success of ``policy`` over ``screens`` (one episode each)."""
    saved = policy.temperature
    policy.temperature = 0.0 if greedy else saved
    try:
        hits = [
            run_episode(policy, s.instruction, s.image, s.gt, episode_seed(seed, i)).reward.r_acc
            for i, s in enumerate(screens)
        ]
    finally:
        policy.temperature = saved
    return float(np.mean(hits))


def train_toy(config: ToyTrainConfig, seed: int, metrics_out: Optional[Path] = None) -> TrainResult:
    start = time.perf_counter()
    policy = ToyPolicy(ToyPolicyParams(grid=config.screen.grid, crop_fraction=config.crop_fraction))
    held_out = eval_screens(config)
    # evaluation episodes use a stream independent of the training seed
    initial = toy_success(policy, held_out, EVAL_SEED_OFFSET, config.eval_greedy)
    rows: list[dict] = []
    for step in range(config.n_groups):
        screens = [generate_screen(episode_seed(seed, step, k), config.screen)
                   for k in range(config.screens_per_step)]
        m: StepMetrics = train_step(policy, screens, config.grpo, episode_seed(seed, step, 1 << 20),
                                    config.weights, config.variant)
        rows.append({"step": step, "mean_reward": m.mean_reward,
                     "success_rate": m.success_rate, "tool_rate": m.tool_rate})
    final = toy_success(policy, held_out, EVAL_SEED_OFFSET, config.eval_greedy)
    if metrics_out is not None:
        write_metrics(rows, metrics_out)
    return TrainResult(seed, initial, final, rows, policy.params, time.perf_counter() - start)


def write_metrics(rows: Sequence[dict], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=METRIC_FIELDS, extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def with_overrides(config: ToyTrainConfig, **overrides) -> ToyTrainConfig:
    return replace(config, **overrides)
