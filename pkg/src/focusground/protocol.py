"""Two-stage active-perception rollout.

Stage 1 sees the full screenshot and either answers directly or calls a crop
or zoom tool. Stage 2, reached only after a tool call, sees just the tool
image with a fresh prompt and must answer in tool-image coordinates; the
answer is mapped back to the original screenshot before scoring.

Action grammar (whitespace between blocks is ignored)::

    [<think>free text</think>]
    <tool_call>{"name": "crop"|"zoom", "center": [x, y], "size": [w, h], "scale": z}</tool_call>
  | <answer>{"point": [x, y]}</answer>

``scale`` is required for zoom and forbidden for crop. Tool calls are only
legal at stage 1.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from typing import Any, Optional, Protocol, Union

import numpy as np

from .errors import ContractError, EmptyCropError, FocusGroundError, InvalidScaleError
from .reward import RewardBreakdown, RewardVariant, RewardWeights, TrajectoryOutcome, total_reward
from .tools import (
    BBox,
    Crop,
    Image,
    ImageDims,
    NoTool,
    Point,
    ToolSpec,
    Zoom,
    crop_image,
    crop_region,
    map_from_crop,
    map_from_zoom,
    zoom_image,
)

PROMPT_VERSION = 1


class FormatCode(str, enum.Enum):
    UNCLOSED_TAG = "UnclosedTag"
    BAD_PAYLOAD = "BadPayload"
    WRONG_STAGE_ACTION = "WrongStageAction"
    NON_FINITE_NUMBER = "NonFiniteNumber"


class FormatError(FocusGroundError):
    """Policy output that does not parse under the action grammar."""

    def __init__(self, code: FormatCode, detail: str = ""):
        super().__init__(f"{code.value}: {detail}" if detail else code.value)
        self.code = code
        self.detail = detail


@dataclass(frozen=True)
class ToolCall:
    spec: Union[Crop, Zoom]
    think: Optional[str] = None


@dataclass(frozen=True)
class Answer:
    point: Point
    think: Optional[str] = None


Action = Union[ToolCall, Answer]


# -- prompts -----------------------------------------------------------------

def _load_template(stage: int) -> str:
    text = resources.files(__package__).joinpath("prompts", f"stage{stage}.txt").read_text()
    lines = text.splitlines()
    if lines and lines[0].startswith("#"):
        lines = lines[1:]
    return "\n".join(lines) + "\n"


_TEMPLATES = {1: _load_template(1), 2: _load_template(2)}


def _fmt(v: float) -> str:
    v = float(v)
    return str(int(v)) if v.is_integer() else repr(v)


@dataclass(frozen=True)
class ToolMeta:
    region: BBox
    scale: float = 1.0


def render_prompt(stage: int, instruction: str, tool_meta: Optional[ToolMeta] = None,
                  dims: Optional[ImageDims] = None) -> str:
    if stage == 1:
        w, h = (dims.width, dims.height) if dims is not None else ("?", "?")
        return _TEMPLATES[1].format(instruction=instruction, width=w, height=h)
    if stage == 2:
        if tool_meta is None:
            raise ContractError("stage-2 prompt requires tool metadata")
        r = tool_meta.region
        return _TEMPLATES[2].format(
            instruction=instruction,
            offset_x=_fmt(r.x1), offset_y=_fmt(r.y1),
            region_w=_fmt(r.width), region_h=_fmt(r.height),
            scale=_fmt(tool_meta.scale),
        )
    raise ContractError(f"stage must be 1 or 2, got {stage!r}")


# -- parsing -----------------------------------------------------------------

def _reject_constant(name: str):
    raise FormatError(FormatCode.NON_FINITE_NUMBER, f"literal {name} is not a finite number")


def _number(value: Any, what: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise FormatError(FormatCode.BAD_PAYLOAD, f"{what} must be a number")
    try:
        f = float(value)
    except OverflowError:
        raise FormatError(FormatCode.NON_FINITE_NUMBER, f"{what} overflows") from None
    if not math.isfinite(f):
        raise FormatError(FormatCode.NON_FINITE_NUMBER, f"{what} is not finite")
    return f


def _pair(value: Any, what: str) -> tuple[float, float]:
    if not isinstance(value, list) or len(value) != 2:
        raise FormatError(FormatCode.BAD_PAYLOAD, f"{what} must be a 2-element list")
    return _number(value[0], what), _number(value[1], what)


def _payload(body: str) -> dict:
    try:
        obj = json.loads(body, parse_constant=_reject_constant)
    except FormatError:
        raise
    except (ValueError, RecursionError) as exc:
        raise FormatError(FormatCode.BAD_PAYLOAD, f"invalid JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise FormatError(FormatCode.BAD_PAYLOAD, "payload must be a JSON object")
    return obj


def _take_block(text: str, tag: str) -> tuple[str, str]:
    """Split ``<tag>body</tag>rest`` into ``(body, rest)``; text starts with the open tag."""
    open_tag, close_tag = f"<{tag}>", f"</{tag}>"
    end = text.find(close_tag, len(open_tag))
    if end < 0:
        raise FormatError(FormatCode.UNCLOSED_TAG, f"missing {close_tag}")
    return text[len(open_tag):end], text[end + len(close_tag):]


def _tool_spec(obj: dict) -> Union[Crop, Zoom]:
    name = obj.get("name")
    if name == "crop":
        expected = {"name", "center", "size"}
    elif name == "zoom":
        expected = {"name", "center", "size", "scale"}
    else:
        raise FormatError(FormatCode.BAD_PAYLOAD, f"unknown tool {name!r}")
    if set(obj) != expected:
        raise FormatError(FormatCode.BAD_PAYLOAD, f"{name} takes keys {sorted(expected)}, got {sorted(obj)}")
    cx, cy = _pair(obj["center"], "center")
    w, h = _pair(obj["size"], "size")
    if w < 0 or h < 0:
        raise FormatError(FormatCode.BAD_PAYLOAD, "size must be non-negative")
    if name == "crop":
        return Crop(Point(cx, cy), (w, h))
    z = _number(obj["scale"], "scale")
    if z <= 0:
        raise FormatError(FormatCode.BAD_PAYLOAD, "scale must be positive")
    return Zoom(Point(cx, cy), (w, h), z)


def parse_action(raw: Union[str, bytes], stage: int) -> Action:
    """Parse one stage output; raises :class:`FormatError` on anything off-grammar."""
    if stage not in (1, 2):
        raise ContractError(f"stage must be 1 or 2, got {stage!r}")
    if isinstance(raw, bytes):
        try:
            raw = raw.decode("utf-8")
        except UnicodeDecodeError:
            raise FormatError(FormatCode.BAD_PAYLOAD, "output is not valid UTF-8") from None
    text = raw.strip()
    think = None
    if text.startswith("<think>"):
        think, text = _take_block(text, "think")
        text = text.lstrip()
    if text.startswith("<tool_call>"):
        if stage == 2:
            raise FormatError(FormatCode.WRONG_STAGE_ACTION, "stage 2 must answer")
        body, rest = _take_block(text, "tool_call")
        kind = "tool_call"
    elif text.startswith("<answer>"):
        body, rest = _take_block(text, "answer")
        kind = "answer"
    else:
        raise FormatError(FormatCode.BAD_PAYLOAD, "expected <tool_call> or <answer>")
    if rest.strip():
        raise FormatError(FormatCode.BAD_PAYLOAD, "trailing text after action")
    obj = _payload(body)
    if kind == "tool_call":
        return ToolCall(_tool_spec(obj), think)
    if set(obj) != {"point"}:
        raise FormatError(FormatCode.BAD_PAYLOAD, f"answer takes key 'point', got {sorted(obj)}")
    x, y = _pair(obj["point"], "point")
    return Answer(Point(x, y), think)


def format_answer(point: Point, think: Optional[str] = None) -> str:
    head = f"<think>{think}</think>" if think is not None else ""
    return head + "<answer>" + json.dumps({"point": [point.x, point.y]}) + "</answer>"


def format_tool_call(spec: Union[Crop, Zoom], think: Optional[str] = None) -> str:
    payload: dict[str, Any] = {
        "name": "zoom" if isinstance(spec, Zoom) else "crop",
        "center": [spec.center.x, spec.center.y],
        "size": list(spec.size),
    }
    if isinstance(spec, Zoom):
        payload["scale"] = spec.scale
    head = f"<think>{think}</think>" if think is not None else ""
    return head + "<tool_call>" + json.dumps(payload) + "</tool_call>"


# -- policies and episodes ---------------------------------------------------

@dataclass(frozen=True, eq=False)
class Observation:
    stage: int
    prompt: str
    image: Image
    instruction: str


@dataclass(eq=False)
class PolicyOutput:
    text: str
    logprob: Optional[float] = None
    # policy-private replay data (e.g. features and sampled indices); never serialised
    info: Any = None


class Policy(Protocol):
    def act(self, obs: Observation, rng: np.random.Generator) -> PolicyOutput: ...


@dataclass(eq=False)
class StageRecord:
    raw: str
    action: Optional[Action] = None
    error: Optional[FormatError] = None
    logprob: Optional[float] = None
    info: Any = None

    @property
    def parsed(self) -> bool:
        return self.action is not None

    def to_dict(self) -> dict:
        return {
            "raw": self.raw,
            "action": action_to_dict(self.action) if self.action is not None else None,
            "error": None if self.error is None else {"code": self.error.code.value, "detail": self.error.detail},
            "logprob": self.logprob,
        }


@dataclass(eq=False)
class EpisodeRecord:
    instruction: str
    image_ref: Optional[str]
    stage1: StageRecord
    stage2: Optional[StageRecord]
    tool_region: Optional[BBox]
    zoom_scale: Optional[float]
    outcome: TrajectoryOutcome
    reward: RewardBreakdown
    step_count: int
    seed: Optional[int] = None
    extra: dict = field(default_factory=dict)

    @property
    def steps(self) -> list[StageRecord]:
        return [s for s in (self.stage1, self.stage2) if s is not None]

    def to_dict(self) -> dict:
        o = self.outcome
        return {
            "instruction": self.instruction,
            "image": self.image_ref,
            "seed": self.seed,
            "step_count": self.step_count,
            "stage1": self.stage1.to_dict(),
            "stage2": self.stage2.to_dict() if self.stage2 is not None else None,
            "tool": tool_to_dict(o.tool),
            "tool_region": self.tool_region.as_list() if self.tool_region is not None else None,
            "zoom_scale": self.zoom_scale,
            "format_ok": o.format_ok,
            "final_point": o.final_point_original.as_list() if o.final_point_original is not None else None,
            "gt": o.gt.as_list(),
            "reward": self.reward.as_dict(),
            **self.extra,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def tool_to_dict(spec: ToolSpec) -> dict:
    if isinstance(spec, NoTool):
        return {"name": "none"}
    d = {"name": "zoom" if isinstance(spec, Zoom) else "crop",
         "center": spec.center.as_list(), "size": list(spec.size)}
    if isinstance(spec, Zoom):
        d["scale"] = spec.scale
    return d


def action_to_dict(action: Action) -> dict:
    if isinstance(action, Answer):
        return {"type": "answer", "point": action.point.as_list()}
    return {"type": "tool_call", **tool_to_dict(action.spec)}


def _ask(policy: Policy, obs: Observation, rng: np.random.Generator) -> StageRecord:
    out = policy.act(obs, rng)
    rec = StageRecord(raw=out.text, logprob=out.logprob, info=out.info)
    try:
        rec.action = parse_action(out.text, obs.stage)
    except FormatError as exc:
        rec.error = exc
    return rec


def run_episode(policy: Policy, instruction: str, image: Image, gt: BBox, seed: int,
                weights: Optional[RewardWeights] = None,
                variant: RewardVariant = RewardVariant.FULL,
                image_ref: Optional[str] = None) -> EpisodeRecord:
    """Roll out one episode and score it.

    Errors raised by the policy itself (``EpisodeError`` and subclasses, e.g.
    transport failures) propagate; malformed outputs are recorded as format
    failures and score zero.
    """
    weights = weights if weights is not None else RewardWeights()
    rng = np.random.default_rng(seed)
    dims = image.dims

    def finish(stage1, stage2, tool, region, scale, final, ok) -> EpisodeRecord:
        outcome = TrajectoryOutcome(ok, tool, gt, region, final if ok else None)
        return EpisodeRecord(
            instruction=instruction, image_ref=image_ref, stage1=stage1, stage2=stage2,
            tool_region=region, zoom_scale=scale, outcome=outcome,
            reward=total_reward(outcome, weights, variant),
            step_count=1 if stage2 is None and isinstance(tool, NoTool) else 2, seed=seed,
        )

    s1 = _ask(policy, Observation(1, render_prompt(1, instruction, dims=dims), image, instruction), rng)
    if s1.action is None:
        return finish(s1, None, NoTool(), None, None, None, False)
    if isinstance(s1.action, Answer):
        return finish(s1, None, NoTool(), None, None, s1.action.point, True)

    spec = s1.action.spec
    region = crop_region(spec, dims)
    scale = spec.scale if isinstance(spec, Zoom) else None
    try:
        tool_img = crop_image(image, region)
        if scale is not None:
            tool_img = zoom_image(tool_img, scale)
    except (EmptyCropError, InvalidScaleError) as exc:
        # an unexecutable tool call is an invalid action
        s1.error = FormatError(FormatCode.BAD_PAYLOAD, str(exc))
        return finish(s1, None, spec, region, scale, None, False)

    meta = ToolMeta(region, scale if scale is not None else 1.0)
    s2 = _ask(policy, Observation(2, render_prompt(2, instruction, meta), tool_img, instruction), rng)
    if s2.action is None:
        return finish(s1, s2, spec, region, scale, None, False)
    p = s2.action.point
    final = map_from_zoom(p, region, scale) if scale is not None else map_from_crop(p, region)
    return finish(s1, s2, spec, region, scale, final, True)
