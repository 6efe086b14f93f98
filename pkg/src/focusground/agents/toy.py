"""Linear-softmax grid policy with exact log-probabilities and gradients.

The visible image is split into a ``G x G`` grid. Each cell gets a small
feature vector computed from the pixels matching the instruction's target
colour; location logits are a linear function of those features with weights
shared across cells. Stage 1 samples a (direct | crop) decision and a cell,
stage 2 samples a cell of the tool image. Every action is emitted as text in
the rollout grammar, so the policy runs through the same parser and reward
as a real model would.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from ..protocol import Observation, PolicyOutput, format_answer, format_tool_call
from ..tools import Crop, Image, Point
from .screens import color_rgb, target_color

N_FEATURES = 3
DIRECT, CROP = 0, 1


def cell_edges(n: int, grid: int) -> np.ndarray:
    return np.floor(np.linspace(0, n, grid + 1) + 0.5).astype(np.intp)


def cell_features(image: Image, color_id: Optional[int], grid: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-cell target features and cell centres.

    Returns ``(features, centres)`` with shapes ``(grid*grid, N_FEATURES)`` and
    ``(grid*grid, 2)``; cells are ordered row-major. Feature channels are the
    fraction of target pixels in the cell, whether the cell touches the
    target at all, and the mean of that indicator over the 3x3 neighbourhood.
    """
    h, w = image.pixels.shape[:2]
    xs, ys = cell_edges(w, grid), cell_edges(h, grid)
    cx = (xs[:-1] + xs[1:]) / 2
    cy = (ys[:-1] + ys[1:]) / 2
    centres = np.stack(np.meshgrid(cx, cy), axis=-1).reshape(-1, 2)
    if color_id is None:
        return np.zeros((grid * grid, N_FEATURES)), centres

    mask = np.all(image.pixels == np.asarray(color_rgb(color_id), dtype=np.uint8), axis=-1)
    integral = np.zeros((h + 1, w + 1), dtype=np.int64)
    integral[1:, 1:] = mask.cumsum(0).cumsum(1)
    counts = (integral[np.ix_(ys[1:], xs[1:])] - integral[np.ix_(ys[:-1], xs[1:])]
              - integral[np.ix_(ys[1:], xs[:-1])] + integral[np.ix_(ys[:-1], xs[:-1])])
    areas = np.outer(np.diff(ys), np.diff(xs))
    frac = counts / np.maximum(areas, 1)
    hit = (counts > 0).astype(np.float64)
    padded = np.pad(hit, 1)
    neigh = sum(padded[dy:dy + grid, dx:dx + grid] for dy in range(3) for dx in range(3)) / 9.0
    feats = np.stack([frac, hit, neigh], axis=-1).reshape(-1, N_FEATURES)
    return feats, centres


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max()
    return z - np.log(np.exp(z).sum())


@dataclass
class ToyPolicyParams:
    grid: int = 8
    crop_fraction: float = 0.4
    w_locate: np.ndarray = field(default_factory=lambda: np.zeros(N_FEATURES))
    tool_logits: np.ndarray = field(default_factory=lambda: np.zeros(2))
    w_answer: np.ndarray = field(default_factory=lambda: np.zeros(N_FEATURES))

    def __post_init__(self):
        if not 0 < self.crop_fraction <= 1:
            raise ValueError(f"crop_fraction must be in (0, 1], got {self.crop_fraction}")
        if self.grid < 1:
            raise ValueError("grid must be >= 1")
        self.w_locate = np.asarray(self.w_locate, dtype=np.float64).reshape(N_FEATURES)
        self.tool_logits = np.asarray(self.tool_logits, dtype=np.float64).reshape(2)
        self.w_answer = np.asarray(self.w_answer, dtype=np.float64).reshape(N_FEATURES)
        if not all(np.all(np.isfinite(a)) for a in (self.w_locate, self.tool_logits, self.w_answer)):
            raise ValueError("policy parameters must be finite")

    @property
    def size(self) -> int:
        return 2 * N_FEATURES + 2

    def flat(self) -> np.ndarray:
        return np.concatenate([self.w_locate, self.tool_logits, self.w_answer])

    def with_flat(self, theta: np.ndarray) -> ToyPolicyParams:
        theta = np.asarray(theta, dtype=np.float64)
        return replace(
            self,
            w_locate=theta[:N_FEATURES].copy(),
            tool_logits=theta[N_FEATURES:N_FEATURES + 2].copy(),
            w_answer=theta[N_FEATURES + 2:].copy(),
        )

    def to_json(self) -> str:
        return json.dumps({"grid": self.grid, "crop_fraction": self.crop_fraction,
                           "w_locate": self.w_locate.tolist(), "tool_logits": self.tool_logits.tolist(),
                           "w_answer": self.w_answer.tolist()}, indent=2)

    @classmethod
    def from_json(cls, text: str) -> ToyPolicyParams:
        d = json.loads(text)
        return cls(grid=int(d.get("grid", 8)), crop_fraction=float(d.get("crop_fraction", 0.4)),
                   w_locate=d["w_locate"], tool_logits=d["tool_logits"], w_answer=d["w_answer"])

    @classmethod
    def random(cls, rng: np.random.Generator, scale: float = 1.0, **kw) -> ToyPolicyParams:
        p = cls(**kw)
        return p.with_flat(rng.normal(0.0, scale, size=p.size))


@dataclass(frozen=True, eq=False)
class ToyStep:
    """Replay record for one sampled action."""

    stage: int
    features: np.ndarray
    cell: int
    decision: int = DIRECT


def toy_logprob(params: ToyPolicyParams, step: ToyStep, temperature: float = 1.0) -> tuple[float, np.ndarray]:
    """Exact ``log pi(action)`` and its gradient w.r.t. ``params.flat()``."""
    grad = np.zeros(params.size)
    if step.stage == 1:
        cell_lp = _log_softmax(step.features @ params.w_locate / temperature)
        dec_lp = _log_softmax(params.tool_logits / temperature)
        p_cell = np.exp(cell_lp)
        grad[:N_FEATURES] = (step.features[step.cell] - p_cell @ step.features) / temperature
        grad[N_FEATURES:N_FEATURES + 2] = (np.eye(2)[step.decision] - np.exp(dec_lp)) / temperature
        return float(dec_lp[step.decision] + cell_lp[step.cell]), grad
    cell_lp = _log_softmax(step.features @ params.w_answer / temperature)
    p_cell = np.exp(cell_lp)
    grad[N_FEATURES + 2:] = (step.features[step.cell] - p_cell @ step.features) / temperature
    return float(cell_lp[step.cell]), grad


def _pick(logp: np.ndarray, rng: np.random.Generator, greedy: bool) -> int:
    if greedy:
        return int(np.argmax(logp))
    return int(rng.choice(len(logp), p=np.exp(logp)))


def toy_act(params: ToyPolicyParams, obs: Observation, rng: np.random.Generator,
            temperature: float = 1.0) -> tuple[str, Optional[float], np.ndarray, ToyStep]:
    """Sample one action; returns ``(text, logprob, grad_logprob, replay_step)``.

    ``temperature == 0`` selects argmax actions; the returned log-prob and
    gradient are then those of the temperature-1 policy.
    """
    greedy = temperature == 0
    t = 1.0 if greedy else temperature
    feats, centres = cell_features(obs.image, target_color(obs.instruction), params.grid)
    if obs.stage == 1:
        decision = _pick(_log_softmax(params.tool_logits / t), rng, greedy)
        cell = _pick(_log_softmax(feats @ params.w_locate / t), rng, greedy)
        step = ToyStep(1, feats, cell, decision)
        centre = Point(float(centres[cell, 0]), float(centres[cell, 1]))
        if decision == DIRECT:
            text = format_answer(centre)
        else:
            dims = obs.image.dims
            size = (params.crop_fraction * dims.width, params.crop_fraction * dims.height)
            text = format_tool_call(Crop(centre, size))
    else:
        cell = _pick(_log_softmax(feats @ params.w_answer / t), rng, greedy)
        step = ToyStep(2, feats, cell)
        text = format_answer(Point(float(centres[cell, 0]), float(centres[cell, 1])))
    lp, grad = toy_logprob(params, step, t)
    return text, lp, grad, step


class ToyPolicy:
    """:class:`~focusground.protocol.Policy` wrapper around :func:`toy_act`."""

    def __init__(self, params: Optional[ToyPolicyParams] = None, temperature: float = 1.0):
        self.params = params if params is not None else ToyPolicyParams()
        self.temperature = temperature

    def act(self, obs: Observation, rng: np.random.Generator) -> PolicyOutput:
        text, lp, _grad, step = toy_act(self.params, obs, rng, self.temperature)
        return PolicyOutput(text, lp, step)

    def logprob(self, step: ToyStep) -> tuple[float, np.ndarray]:
        t = 1.0 if self.temperature == 0 else self.temperature
        return toy_logprob(self.params, step, t)
