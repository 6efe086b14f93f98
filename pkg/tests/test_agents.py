import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from focusground.agents.screens import ScreenConfig, generate_screen, target_color
from focusground.agents.toy import (
    CROP,
    DIRECT,
    N_FEATURES,
    ToyPolicy,
    ToyPolicyParams,
    ToyStep,
    cell_features,
    toy_act,
    toy_logprob,
)
from focusground.errors import GenerationError
from focusground.protocol import Observation, parse_action, render_prompt, run_episode
from focusground.tools import ImageDims

from oracles import finite_difference


class TestScreens:
    def test_deterministic(self):
        a, b = generate_screen(0), generate_screen(0)
        assert a.image == b.image and a.elements == b.elements and a.instruction == b.instruction

    def test_single_element(self):
        s = generate_screen(5, ScreenConfig(n_elements=1))
        assert len(s.elements) == 1 and s.gt == s.elements[0].bbox and s.elements[0].is_target

    def test_disjoint_over_many_seeds(self):
        cfg = ScreenConfig()
        for seed in range(1000):
            s = generate_screen(seed, cfg)
            assert sum(e.is_target for e in s.elements) == 1
            assert s.gt.area > 0
            for a, b in itertools.combinations(s.elements, 2):
                overlap_w = min(a.bbox.x2, b.bbox.x2) - max(a.bbox.x1, b.bbox.x1)
                overlap_h = min(a.bbox.y2, b.bbox.y2) - max(a.bbox.y1, b.bbox.y1)
                assert overlap_w < 0 or overlap_h < 0

    def test_rendered_target_matches_gt(self):
        s = generate_screen(3)
        feats, _ = cell_features(s.image, target_color(s.instruction), 1)
        assert feats[0, 0] * 256 * 256 == pytest.approx(s.gt.area)

    def test_infeasible(self):
        with pytest.raises(GenerationError):
            generate_screen(0, ScreenConfig(width=40, height=40, n_elements=12, min_size=20, max_size=20))


def obs_for(screen, stage=1):
    return Observation(stage, render_prompt(1, screen.instruction), screen.image, screen.instruction)


SCREEN = generate_screen(11)


class TestToyPolicy:
    def test_uniform_cells(self):
        g = 4
        params = ToyPolicyParams(grid=g)
        rng = np.random.default_rng(0)
        obs = obs_for(SCREEN)
        counts = np.zeros(g * g)
        for _ in range(10_000):
            _, _, _, step = toy_act(params, obs, rng)
            counts[step.cell] += 1
        _, p_value = stats.chisquare(counts)
        assert p_value > 1e-3

    def test_logprob_exact_by_enumeration(self):
        g = 3
        params = ToyPolicyParams.random(np.random.default_rng(1), grid=g)
        feats, _ = cell_features(SCREEN.image, target_color(SCREEN.instruction), g)
        total = sum(math.exp(toy_logprob(params, ToyStep(1, feats, k, d))[0])
                    for d in (DIRECT, CROP) for k in range(g * g))
        assert total == pytest.approx(1.0, abs=1e-12)
        total2 = sum(math.exp(toy_logprob(params, ToyStep(2, feats, k))[0]) for k in range(g * g))
        assert total2 == pytest.approx(1.0, abs=1e-12)

    def test_sampled_logprob_is_product_of_categoricals(self):
        params = ToyPolicyParams.random(np.random.default_rng(2), grid=4)
        rng = np.random.default_rng(3)
        _, lp, _, step = toy_act(params, obs_for(SCREEN), rng)
        logits = step.features @ params.w_locate
        p_cell = np.exp(logits - logits.max()) / np.exp(logits - logits.max()).sum()
        p_dec = np.exp(params.tool_logits) / np.exp(params.tool_logits).sum()
        assert math.exp(lp) == pytest.approx(p_cell[step.cell] * p_dec[step.decision], rel=1e-12)

    @pytest.mark.parametrize("stage", [1, 2])
    def test_gradient_finite_differences(self, stage):
        rng = np.random.default_rng(stage)
        for _ in range(20):
            params = ToyPolicyParams.random(rng, scale=2.0, grid=4)
            feats = rng.uniform(0, 1, size=(16, N_FEATURES))
            step = ToyStep(stage, feats, int(rng.integers(16)), int(rng.integers(2)))
            _, grad = toy_logprob(params, step)
            fd = finite_difference(lambda t: toy_logprob(params.with_flat(t), step)[0], params.flat())
            np.testing.assert_allclose(grad, fd, rtol=1e-4, atol=1e-8)

    def test_argmax_hits_target(self):
        cfg = ScreenConfig(n_elements=3, min_size=70, max_size=90)
        params = ToyPolicyParams(w_locate=[10, 0, 0], tool_logits=[0, 5], w_answer=[10, 0, 0])
        policy = ToyPolicy(params, temperature=0)
        for seed in range(20):
            s = generate_screen(seed, cfg)
            ep = run_episode(policy, s.instruction, s.image, s.gt, seed)
            assert ep.step_count == 2
            assert s.gt.contains(ep.outcome.final_point_original)

    @settings(max_examples=100, deadline=None)
    @given(seed=st.integers(0, 10_000), theta=st.lists(st.floats(-5, 5), min_size=8, max_size=8))
    def test_emitted_text_parses(self, seed, theta):
        params = ToyPolicyParams().with_flat(np.array(theta))
        s = generate_screen(seed % 50)
        rng = np.random.default_rng(seed)
        for stage in (1, 2):
            text, *_ = toy_act(params, obs_for(s, stage), rng)
            parse_action(text, stage)

    def test_unknown_color_is_uniform(self):
        feats, centres = cell_features(SCREEN.image, None, 8)
        assert (feats == 0).all() and centres.shape == (64, 2)

    def test_params_json_round_trip(self):
        params = ToyPolicyParams.random(np.random.default_rng(9), grid=5, crop_fraction=0.3)
        back = ToyPolicyParams.from_json(params.to_json())
        assert back.grid == 5 and back.crop_fraction == 0.3
        np.testing.assert_array_equal(back.flat(), params.flat())

    def test_crop_size_is_fraction_of_image(self):
        params = ToyPolicyParams(tool_logits=[-50, 50], crop_fraction=0.25)
        text, *_ = toy_act(params, obs_for(SCREEN), np.random.default_rng(0))
        action = parse_action(text, 1)
        assert action.spec.size == (64.0, 64.0)


# ---------------------------------------------------------------- remote client

import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

from focusground.agents.remote import (
    ChatRequest,
    RemotePolicy,
    RemoteSettings,
    image_part_count,
    remote_complete,
    stage_request,
)
from focusground.errors import EpisodeError, HTTPStatusError, MalformedResponseError, TransportError


class _Handler(BaseHTTPRequestHandler):
    def do_POST(self):
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        self.server.requests.append(body)
        status, payload = self.server.reply(body)
        data = payload.encode() if isinstance(payload, str) else json.dumps(payload).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


@pytest.fixture
def server():
    srv = HTTPServer(("127.0.0.1", 0), _Handler)
    srv.requests = []
    srv.reply = lambda body: (200, {"choices": [{"message": {"content": '<answer>{"point":[5,6]}</answer>'}}]})
    thread = threading.Thread(target=srv.serve_forever, daemon=True)
    thread.start()
    yield srv
    srv.shutdown()
    srv.server_close()


def url(srv):
    return f"http://127.0.0.1:{srv.server_address[1]}/v1/chat/completions"


SMALL = generate_screen(0, ScreenConfig(width=100, height=100, n_elements=2, min_size=10, max_size=20))


class TestRemote:
    def test_loopback(self, server):
        req = stage_request(obs_for(SMALL), "m")
        resp = remote_complete(url(server), req, timeout=5)
        assert resp.text == '<answer>{"point":[5,6]}</answer>'
        assert resp.token_logprobs is None

    def test_request_schema(self, server):
        remote_complete(url(server), stage_request(obs_for(SMALL), "qwen", 0.7, 256), timeout=5)
        body = server.requests[0]
        assert body["model"] == "qwen" and body["temperature"] == 0.7 and body["max_tokens"] == 256
        assert image_part_count(body) == 1
        parts = body["messages"][0]["content"]
        assert parts[0]["type"] == "text" and SMALL.instruction in parts[0]["text"]
        assert parts[1]["image_url"]["url"].startswith("data:image/png;base64,")

    def test_logprobs(self, server):
        server.reply = lambda b: (200, {"choices": [{"message": {"content": "x"},
                                                     "logprobs": {"content": [{"logprob": -0.5}, {"logprob": -1}]}}]})
        resp = remote_complete(url(server), stage_request(obs_for(SMALL), "m"), timeout=5)
        assert resp.token_logprobs == [-0.5, -1.0]

    def test_server_error_after_retries(self, server):
        server.reply = lambda b: (500, {"error": "boom"})
        with pytest.raises(HTTPStatusError) as e:
            remote_complete(url(server), stage_request(obs_for(SMALL), "m"), timeout=5, retries=2, backoff=0)
        assert e.value.status == 500
        assert len(server.requests) == 3

    def test_client_error_not_retried(self, server):
        server.reply = lambda b: (400, {"error": "bad"})
        with pytest.raises(HTTPStatusError):
            remote_complete(url(server), stage_request(obs_for(SMALL), "m"), timeout=5, retries=3, backoff=0)
        assert len(server.requests) == 1

    def test_malformed_body(self, server):
        server.reply = lambda b: (200, {"nope": 1})
        with pytest.raises(MalformedResponseError):
            remote_complete(url(server), stage_request(obs_for(SMALL), "m"), timeout=5)
        server.reply = lambda b: (200, "not json")
        with pytest.raises(MalformedResponseError):
            remote_complete(url(server), stage_request(obs_for(SMALL), "m"), timeout=5)

    def test_unreachable(self):
        with pytest.raises(TransportError):
            remote_complete("http://127.0.0.1:9/none", ChatRequest("m", []), timeout=0.5, retries=1, backoff=0)

    def test_episode_with_remote_policy(self, server):
        policy = RemotePolicy(RemoteSettings(url(server), timeout=5))
        ep = run_episode(policy, SMALL.instruction, SMALL.image, SMALL.gt, 0)
        assert ep.step_count == 1 and ep.outcome.format_ok

    def test_server_error_is_episode_error_not_format(self, server):
        server.reply = lambda b: (500, "down")
        policy = RemotePolicy(RemoteSettings(url(server), timeout=5, retries=0))
        with pytest.raises(EpisodeError):
            run_episode(policy, SMALL.instruction, SMALL.image, SMALL.gt, 0)

    def test_settings_from_env(self, monkeypatch):
        monkeypatch.setenv("FOCUSGROUND_ENDPOINT", "http://x")
        monkeypatch.setenv("FOCUSGROUND_RETRIES", "5")
        s = RemoteSettings.from_env(model="m")
        assert (s.endpoint, s.retries, s.model) == ("http://x", 5, "m")
        monkeypatch.delenv("FOCUSGROUND_ENDPOINT")
        with pytest.raises(ValueError):
            RemoteSettings.from_env()
