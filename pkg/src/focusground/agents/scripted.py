"""Deterministic policies for tests and fixtures."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from ..protocol import Observation, PolicyOutput


class ScriptedPolicy:
    """Replays fixed outputs keyed by instruction.

    ``script[instruction]`` is a list of raw outputs indexed by stage, so
    ``["<tool_call>...", "<answer>..."]`` answers stage 1 with a crop and
    stage 2 with a click. A single string answers every stage. Unknown
    instructions get ``default``.
    """

    def __init__(self, script: Mapping[str, Sequence[str] | str], default: str = ""):
        self.script = dict(script)
        self.default = default

    def act(self, obs: Observation, rng: np.random.Generator) -> PolicyOutput:
        entry = self.script.get(obs.instruction, self.default)
        if isinstance(entry, str):
            return PolicyOutput(entry)
        return PolicyOutput(entry[obs.stage - 1] if len(entry) >= obs.stage else self.default)

    @classmethod
    def load(cls, path: str | Path) -> ScriptedPolicy:
        """Load ``{"script": {instruction: [stage1, stage2]}, "default": ...}`` or a bare mapping."""
        data = json.loads(Path(path).read_text())
        if "script" in data:
            return cls(data["script"], data.get("default", ""))
        return cls(data)


class FunctionPolicy:
    """Wraps ``fn(obs, rng) -> str``."""

    def __init__(self, fn: Callable[[Observation, np.random.Generator], str]):
        self.fn = fn

    def act(self, obs: Observation, rng: np.random.Generator) -> PolicyOutput:
        return PolicyOutput(self.fn(obs, rng))
