"""HTTP client for a chat-completions style multimodal model server.

Wire format (one JSON document per request)::

    {"model": str,
     "messages": [{"role": "user",
                   "content": [{"type": "text", "text": str},
                               {"type": "image_url",
                                "image_url": {"url": "data:image/png;base64,..."}}]}],
     "temperature": float,
     "max_tokens": int}

Response::

    {"choices": [{"message": {"content": str},
                  "logprobs": {"content": [{"logprob": float}, ...]}}]}

``logprobs`` is optional. See ``docs/wire_schema.md`` for field details.
"""

from __future__ import annotations

import base64
import os
import time
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
import requests

from ..errors import HTTPStatusError, MalformedResponseError, TransportError
from ..protocol import Observation, PolicyOutput
from ..tools import encode_png


@dataclass(frozen=True)
class PngPart:
    data: bytes


Part = Union[str, PngPart]


@dataclass
class ChatMessage:
    role: str
    parts: list[Part]

    def to_json(self) -> dict:
        content = []
        for part in self.parts:
            if isinstance(part, PngPart):
                b64 = base64.b64encode(part.data).decode("ascii")
                content.append({"type": "image_url", "image_url": {"url": f"data:image/png;base64,{b64}"}})
            else:
                content.append({"type": "text", "text": part})
        return {"role": self.role, "content": content}


@dataclass
class ChatRequest:
    model: str
    messages: list[ChatMessage]
    temperature: float = 0.0
    max_tokens: int = 1024

    def to_json(self) -> dict:
        return {
            "model": self.model,
            "messages": [m.to_json() for m in self.messages],
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        }


@dataclass
class ChatResponse:
    text: str
    token_logprobs: Optional[list[float]] = None
    raw: dict = field(default_factory=dict, repr=False)


def stage_request(obs: Observation, model: str, temperature: float = 0.0, max_tokens: int = 1024) -> ChatRequest:
    """One user message carrying the stage prompt and exactly one PNG."""
    return ChatRequest(model, [ChatMessage("user", [obs.prompt, PngPart(encode_png(obs.image))])],
                       temperature, max_tokens)


def parse_response(body: object) -> ChatResponse:
    try:
        choice = body["choices"][0]
        text = choice["message"]["content"]
    except (KeyError, IndexError, TypeError):
        raise MalformedResponseError("response lacks choices[0].message.content") from None
    if not isinstance(text, str):
        raise MalformedResponseError("message content must be a string")
    logprobs = None
    lp = choice.get("logprobs") if isinstance(choice, dict) else None
    if isinstance(lp, dict) and isinstance(lp.get("content"), list):
        try:
            logprobs = [float(tok["logprob"]) for tok in lp["content"]]
        except (KeyError, TypeError, ValueError):
            raise MalformedResponseError("malformed logprobs") from None
    return ChatResponse(text, logprobs, body)


def remote_complete(endpoint: str, req: ChatRequest, timeout: float = 60.0, retries: int = 2,
                    backoff: float = 0.5, session: Optional[requests.Session] = None) -> ChatResponse:
    """POST ``req`` to ``endpoint``; retries transport failures and 5xx responses."""
    post = session.post if session is not None else requests.post
    payload = req.to_json()
    last: Exception | None = None
    for attempt in range(retries + 1):
        if attempt:
            time.sleep(backoff * attempt)
        try:
            resp = post(endpoint, json=payload, timeout=timeout)
        except (requests.ConnectionError, requests.Timeout) as exc:
            last = TransportError(f"POST {endpoint} failed: {exc}")
            continue
        if resp.status_code >= 500:
            last = HTTPStatusError(resp.status_code, resp.text)
            continue
        if not 200 <= resp.status_code < 300:
            raise HTTPStatusError(resp.status_code, resp.text)
        try:
            body = resp.json()
        except ValueError:
            raise MalformedResponseError("response body is not JSON") from None
        return parse_response(body)
    assert last is not None
    raise last


@dataclass
class RemoteSettings:
    endpoint: str
    model: str = "default"
    timeout: float = 60.0
    retries: int = 2
    temperature: float = 0.0
    max_tokens: int = 1024

    @classmethod
    def from_env(cls, **overrides) -> RemoteSettings:
        """Read ``FOCUSGROUND_ENDPOINT``/``_MODEL``/``_TIMEOUT``/``_RETRIES``; non-None overrides win."""
        env = os.environ
        values = {
            "endpoint": env.get("FOCUSGROUND_ENDPOINT"),
            "model": env.get("FOCUSGROUND_MODEL", "default"),
            "timeout": float(env.get("FOCUSGROUND_TIMEOUT", 60.0)),
            "retries": int(env.get("FOCUSGROUND_RETRIES", 2)),
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        if not values["endpoint"]:
            raise ValueError("no endpoint given (use --endpoint or FOCUSGROUND_ENDPOINT)")
        return cls(**values)


class RemotePolicy:
    """Evaluation-only policy backed by :func:`remote_complete`."""

    def __init__(self, settings: RemoteSettings, session: Optional[requests.Session] = None):
        self.settings = settings
        self.session = session

    def act(self, obs: Observation, rng: np.random.Generator) -> PolicyOutput:
        s = self.settings
        resp = remote_complete(s.endpoint, stage_request(obs, s.model, s.temperature, s.max_tokens),
                               timeout=s.timeout, retries=s.retries, session=self.session)
        return PolicyOutput(resp.text)


def image_part_count(payload: dict) -> int:
    return sum(1 for m in payload["messages"] for c in m["content"] if c.get("type") == "image_url")

