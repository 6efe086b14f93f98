import json
import re

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from focusground.agents.scripted import FunctionPolicy, ScriptedPolicy
from focusground.errors import ContractError, TransportError
from focusground.protocol import (
    Answer,
    FormatCode,
    FormatError,
    ToolCall,
    ToolMeta,
    format_answer,
    format_tool_call,
    parse_action,
    render_prompt,
    run_episode,
)
from focusground.tools import BBox, Crop, Image, Point, Zoom, map_from_crop, map_from_zoom

GT = BBox(100, 100, 200, 150)
IMG = Image(np.full((300, 400, 3), 200, dtype=np.uint8))
INSTR = "click Save"


def reference_parse(raw: str):
    """Regex oracle for the well-formed subset of the grammar."""
    m = re.fullmatch(r"\s*(?:<think>(.*?)</think>)?\s*<(tool_call|answer)>(.*?)</\2>\s*", raw, re.S)
    if not m:
        return None
    return m.group(2), json.loads(m.group(3))


class TestPrompts:
    def test_stage1_contains_instruction_and_grammar(self):
        text = render_prompt(1, INSTR)
        assert INSTR in text
        assert "<tool_call>" in text and "<answer>" in text

    def test_stage2_states_offset_and_scale(self):
        text = render_prompt(2, INSTR, ToolMeta(BBox(30, 40, 70, 60), 2))
        assert "offset=(30,40)" in text and "scale=2" in text

    def test_deterministic(self):
        meta = ToolMeta(BBox(30.5, 40, 70, 60), 1.5)
        assert render_prompt(2, INSTR, meta) == render_prompt(2, INSTR, meta)
        assert render_prompt(1, INSTR) == render_prompt(1, INSTR)

    def test_stage2_needs_meta(self):
        with pytest.raises(ContractError):
            render_prompt(2, INSTR)


class TestParse:
    def test_crop_with_think(self):
        raw = '<think>the button is top left</think><tool_call>{"name":"crop","center":[120,80],"size":[200,150]}</tool_call>'
        kind, payload = reference_parse(raw)
        action = parse_action(raw, 1)
        assert kind == "tool_call" and isinstance(action, ToolCall)
        assert action.spec == Crop(Point(*payload["center"]), tuple(payload["size"]))
        assert action.think == "the button is top left"

    def test_zoom(self):
        action = parse_action('<tool_call>{"name":"zoom","center":[1,2],"size":[3,4],"scale":2.5}</tool_call>', 1)
        assert action.spec == Zoom(Point(1, 2), (3, 4), 2.5)

    def test_answer(self):
        assert parse_action('<answer>{"point":[40,45]}</answer>', 2) == Answer(Point(40, 45))
        assert parse_action('  <answer>{"point": [40.5, 45]}</answer>\n', 1).point == Point(40.5, 45)

    def test_tool_at_stage2(self):
        with pytest.raises(FormatError) as e:
            parse_action('<tool_call>{"name":"crop","center":[1,1],"size":[2,2]}</tool_call>', 2)
        assert e.value.code is FormatCode.WRONG_STAGE_ACTION

    @pytest.mark.parametrize("raw,code", [
        ("<answer>{\"point\":[1,2]}", FormatCode.UNCLOSED_TAG),
        ("<think>hmm", FormatCode.UNCLOSED_TAG),
        ("<answer>{\"point\":[NaN,2]}</answer>", FormatCode.NON_FINITE_NUMBER),
        ("<answer>{\"point\":[Infinity,2]}</answer>", FormatCode.NON_FINITE_NUMBER),
        ("<answer>{\"point\":[1e999,2]}</answer>", FormatCode.NON_FINITE_NUMBER),
        ('<tool_call>{"name":"crop","center":[1,1],"size":[1e400,2]}</tool_call>', FormatCode.NON_FINITE_NUMBER),
        ("<answer>{\"point\":[1]}</answer>", FormatCode.BAD_PAYLOAD),
        ("<answer>{\"point\":[true,2]}</answer>", FormatCode.BAD_PAYLOAD),
        ("<answer>{\"point\":[1,2],\"x\":1}</answer>", FormatCode.BAD_PAYLOAD),
        ("<answer>[1,2]</answer>", FormatCode.BAD_PAYLOAD),
        ("<answer>{\"point\":[1,2]}</answer> trailing", FormatCode.BAD_PAYLOAD),
        ('<tool_call>{"name":"crop","center":[1,1],"size":[2,2],"scale":2}</tool_call>', FormatCode.BAD_PAYLOAD),
        ('<tool_call>{"name":"zoom","center":[1,1],"size":[2,2]}</tool_call>', FormatCode.BAD_PAYLOAD),
        ('<tool_call>{"name":"zoom","center":[1,1],"size":[2,2],"scale":0}</tool_call>', FormatCode.BAD_PAYLOAD),
        ('<tool_call>{"name":"crop","center":[1,1],"size":[-2,2]}</tool_call>', FormatCode.BAD_PAYLOAD),
        ('<tool_call>{"name":"rotate","center":[1,1],"size":[2,2]}</tool_call>', FormatCode.BAD_PAYLOAD),
        ("I think it is at (3, 4)", FormatCode.BAD_PAYLOAD),
        ("", FormatCode.BAD_PAYLOAD),
        (b"\xff\xfe", FormatCode.BAD_PAYLOAD),
    ])
    def test_rejections(self, raw, code):
        with pytest.raises(FormatError) as e:
            parse_action(raw, 1)
        assert e.value.code is code

    @settings(max_examples=200)
    @given(x=st.floats(-1e6, 1e6), y=st.floats(-1e6, 1e6), think=st.one_of(st.none(), st.text().filter(lambda t: "</think>" not in t)))
    def test_emitters_round_trip(self, x, y, think):
        assert parse_action(format_answer(Point(x, y), think), 2) == Answer(Point(x, y), think)
        spec = Zoom(Point(x, y), (abs(x), abs(y)), 1.5)
        assert parse_action(format_tool_call(spec), 1).spec == spec

    @settings(max_examples=2000)
    @given(raw=st.one_of(st.binary(max_size=200), st.text(max_size=200),
                         st.builds(lambda a, b: f"<answer>{a}</answer>{b}", st.text(max_size=40), st.text(max_size=5))))
    def test_total(self, raw):
        try:
            action = parse_action(raw, 1)
        except FormatError as e:
            assert isinstance(e.code, FormatCode)
        else:
            assert isinstance(action, (Answer, ToolCall))


def crop_then_click(region_center, size, click_original):
    """Script: crop around ``region_center``, then click ``click_original`` in crop coordinates."""
    def fn(obs, rng):
        if obs.stage == 1:
            return format_tool_call(Crop(Point(*region_center), size))
        m = re.search(r"offset=\(([-\d.e]+),([-\d.e]+)\)", obs.prompt)
        ox, oy = float(m.group(1)), float(m.group(2))
        return format_answer(Point(click_original[0] - ox, click_original[1] - oy))
    return FunctionPolicy(fn)


class TestEpisode:
    def test_direct_answer_inside(self):
        policy = ScriptedPolicy({INSTR: ['<answer>{"point":[150,125]}</answer>']})
        ep = run_episode(policy, INSTR, IMG, GT, seed=0)
        assert ep.step_count == 1 and ep.stage2 is None
        assert ep.reward.r_acc == 1
        assert ep.reward.r_tool == pytest.approx(0.7)
        assert ep.reward.total == pytest.approx(0.91)

    def test_crop_then_click_center(self):
        ep = run_episode(crop_then_click((150, 125), (200, 120), (150, 125)), INSTR, IMG, GT, seed=0)
        assert ep.step_count == 2
        assert ep.tool_region == BBox(50, 65, 250, 185)
        assert ep.outcome.final_point_original == Point(150, 125)
        assert ep.reward.total == 1.0

    def test_zoom_mapping(self):
        def fn(obs, rng):
            if obs.stage == 1:
                return format_tool_call(Zoom(Point(150, 125), (100, 50), 2.0))
            assert obs.image.dims.width == 200 and obs.image.dims.height == 100
            return format_answer(Point(100, 50))
        ep = run_episode(FunctionPolicy(fn), INSTR, IMG, GT, seed=0)
        assert ep.zoom_scale == 2.0
        assert ep.outcome.final_point_original == Point(150, 125)

    def test_garbage(self):
        ep = run_episode(ScriptedPolicy({}, default="no idea"), INSTR, IMG, GT, seed=0)
        assert ep.step_count == 1 and ep.reward.total == 0.0
        assert ep.stage1.error.code is FormatCode.BAD_PAYLOAD

    def test_stage2_tool_call_is_format_failure(self):
        tool = format_tool_call(Crop(Point(150, 125), (100, 100)))
        ep = run_episode(ScriptedPolicy({INSTR: [tool, tool]}), INSTR, IMG, GT, seed=0)
        assert ep.step_count == 2
        assert ep.stage2.error.code is FormatCode.WRONG_STAGE_ACTION
        assert ep.reward.total == 0.0 and not ep.outcome.format_ok

    def test_zero_size_crop_is_invalid_action(self):
        tool = format_tool_call(Crop(Point(150, 125), (0, 0)))
        ep = run_episode(ScriptedPolicy({INSTR: [tool, '<answer>{"point":[0,0]}</answer>']}), INSTR, IMG, GT, seed=0)
        assert ep.stage2 is None and ep.reward.total == 0.0

    def test_transport_error_propagates(self):
        def fn(obs, rng):
            raise TransportError("down")
        with pytest.raises(TransportError):
            run_episode(FunctionPolicy(fn), INSTR, IMG, GT, seed=0)

    def test_stage2_gets_fresh_context(self):
        seen = []

        def fn(obs, rng):
            seen.append(obs.prompt)
            if obs.stage == 1:
                return "<think>SECRET</think>" + format_tool_call(Crop(Point(150, 125), (100, 100)))
            return format_answer(Point(1, 1))
        run_episode(FunctionPolicy(fn), INSTR, IMG, GT, seed=0)
        assert "SECRET" not in seen[1] and "<tool_call>{" not in seen[1].split("Reply")[0]

    def test_deterministic_serialisation(self):
        def noisy(obs, rng):
            x, y = rng.uniform(0, 300, 2)
            if obs.stage == 1:
                return format_tool_call(Crop(Point(x, y), (120, 90)))
            return format_answer(Point(x / 3, y / 3))
        a = run_episode(FunctionPolicy(noisy), INSTR, IMG, GT, seed=7).to_json()
        b = run_episode(FunctionPolicy(noisy), INSTR, IMG, GT, seed=7).to_json()
        assert a == b
        rec = json.loads(a)
        assert set(rec["reward"]) == {"r_format", "r_acc", "r_tool", "center_term", "overlap_term", "total"}

    @settings(max_examples=100, deadline=None)
    @given(cx=st.floats(-50, 450), cy=st.floats(-50, 350), w=st.floats(1, 500), h=st.floats(1, 400),
           z=st.one_of(st.none(), st.floats(0.5, 3)), u=st.floats(0, 1), v=st.floats(0, 1))
    def test_coordinate_soundness(self, cx, cy, w, h, z, u, v):
        def fn(obs, rng):
            if obs.stage == 1:
                spec = Crop(Point(cx, cy), (w, h)) if z is None else Zoom(Point(cx, cy), (w, h), z)
                return format_tool_call(spec)
            d = obs.image.dims
            return format_answer(Point(u * d.width, v * d.height))
        ep = run_episode(FunctionPolicy(fn), INSTR, IMG, GT, seed=0)
        if ep.stage2 is None:
            return  # region rounded to nothing: invalid action
        assert IMG.dims.rect.contains_box(ep.tool_region)
        p = ep.stage2.action.point
        expect = map_from_crop(p, ep.tool_region) if z is None else map_from_zoom(p, ep.tool_region, z)
        got = ep.outcome.final_point_original
        assert abs(got.x - expect.x) <= 1e-9 and abs(got.y - expect.y) <= 1e-9
