"""Self-check of the reward implementation against brute-force references.

Run via ``focusground reward-check``. Each check prints one pass/fail line.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .reward import RewardWeights, TrajectoryOutcome, tool_reward, total_reward
from .tools import BBox, Crop, NoTool, Point


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail}"


def _pixel_coverage(crop: tuple, gt: tuple) -> float:
    # count unit pixels of gt whose square lies inside crop
    xs = np.arange(gt[0], gt[2])
    ys = np.arange(gt[1], gt[3])
    in_x = (crop[0] <= xs) & (xs + 1 <= crop[2])
    in_y = (crop[1] <= ys) & (ys + 1 <= crop[3])
    return float(in_x.sum() * in_y.sum()) / (len(xs) * len(ys))


def _center_direct(c: tuple, gt: tuple, w: RewardWeights) -> float:
    dx = gt[0] - c[0] if c[0] < gt[0] else (c[0] - gt[2] if c[0] > gt[2] else 0.0)
    dy = gt[1] - c[1] if c[1] < gt[1] else (c[1] - gt[3] if c[1] > gt[3] else 0.0)
    diag2 = (gt[2] - gt[0]) ** 2 + (gt[3] - gt[1]) ** 2
    return math.exp(-w.alpha * (dx * dx + dy * dy) / (w.sigma_scale ** 2 * diag2))


def _random_box(rng: np.random.Generator, size: int) -> tuple[int, int, int, int]:
    x1, x2 = sorted(rng.choice(size + 1, 2, replace=False))
    y1, y2 = sorted(rng.choice(size + 1, 2, replace=False))
    return int(x1), int(y1), int(x2), int(y2)


def check_random_cases(n: int = 1000, seed: int = 0, grid: int = 64) -> CheckResult:
    rng = np.random.default_rng(seed)
    w = RewardWeights()
    worst_center, overlap_mismatch = 0.0, 0
    for _ in range(n):
        gt, crop = _random_box(rng, grid), _random_box(rng, grid)
        c = (int(rng.integers(0, grid + 1)), int(rng.integers(0, grid + 1)))
        outcome = TrajectoryOutcome(True, Crop(Point(*c), (1.0, 1.0)), BBox(*gt), BBox(*crop), Point(*c))
        terms = tool_reward(outcome, w)
        if terms.overlap_term != _pixel_coverage(crop, gt):
            overlap_mismatch += 1
        worst_center = max(worst_center, abs(terms.center_term - _center_direct(c, gt, w)))
    ok = overlap_mismatch == 0 and worst_center <= 1e-12
    return CheckResult("random integer cases", ok,
                       f"{n} cases, overlap mismatches {overlap_mismatch}, max center error {worst_center:.2e}")


def check_worked_case() -> CheckResult:
    gt = BBox(100, 100, 200, 150)
    outcome = TrajectoryOutcome(True, Crop(Point(250, 125), (150, 100)), gt, BBox(150, 100, 300, 200), None)
    r = tool_reward(outcome, RewardWeights()).r_tool
    return CheckResult("worked case", abs(r - 0.77259) <= 1e-5, f"r_tool = {r:.6f} (expected 0.77259)")


def check_identities() -> CheckResult:
    w = RewardWeights()
    gt = BBox(10, 10, 40, 30)
    best = total_reward(TrajectoryOutcome(True, Crop(gt.center, (60, 40)), gt, BBox(0, 0, 60, 40), gt.center), w)
    sigma = w.sigma_scale * gt.diagonal
    c = Point(gt.x2 + sigma, gt.center.y)
    at_sigma = tool_reward(TrajectoryOutcome(True, NoTool(), gt, None, c), w).center_term
    ok = best.total == 1.0 and abs(at_sigma - math.exp(-w.alpha)) <= 1e-12
    return CheckResult("coefficient identities", ok,
                       f"max total = {best.total!r}, center at d=sigma = {at_sigma:.15f}")


CHECKS: list[Callable[[], CheckResult]] = [check_worked_case, check_identities, check_random_cases]


def run_checks(print_fn: Callable[[str], None] = print) -> bool:
    start = time.perf_counter()
    results = [check() for check in CHECKS]
    for r in results:
        print_fn(r.line())
    print_fn(f"{sum(r.passed for r in results)}/{len(results)} checks passed "
             f"in {time.perf_counter() - start:.2f}s")
    return all(r.passed for r in results)
