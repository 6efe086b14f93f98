"""Hand-built benchmark fixture shared by the harness and acceptance tests."""

import json

import numpy as np

from focusground.agents.scripted import ScriptedPolicy
from focusground.protocol import format_answer
from focusground.tools import Image, Point, write_png

# hand-built fixture: (platform, ui_type, group, policy answers correctly)
FIXTURE = [
    ("mobile", "text", "CAD", True),
    ("mobile", "text", "CAD", True),
    ("mobile", "icon", "CAD", False),
    ("mobile", "icon", "Office", True),
    ("desktop", "text", "Office", True),
    ("desktop", "text", "Office", False),
    ("desktop", "icon", "CAD", True),
    ("desktop", "icon", "Dev", False),
    ("web", "text", "Dev", True),
    ("web", "text", "Dev", True),
    ("web", "icon", "Office", False),
    ("web", "icon", "CAD", True),
]
# counted by hand from the table above
EXPECTED_PLATFORM = {
    ("mobile", "text"): (2, 2), ("mobile", "icon"): (1, 2),
    ("desktop", "text"): (1, 2), ("desktop", "icon"): (1, 2),
    ("web", "text"): (2, 2), ("web", "icon"): (1, 2),
}
EXPECTED_GROUP = {
    ("CAD", "text"): (2, 2), ("CAD", "icon"): (2, 3),
    ("Dev", "text"): (2, 2), ("Dev", "icon"): (0, 1),
    ("Office", "text"): (1, 2), ("Office", "icon"): (1, 2),
}


def _blank(w=120, h=90):
    return Image(np.full((h, w, 3), 200, dtype=np.uint8))


def write_fixture(tmp_path, rows=FIXTURE):
    lines, script = [], {}
    for i, (platform, ui, group, correct) in enumerate(rows):
        name = f"img{i}.png"
        write_png(_blank(), tmp_path / name)
        bbox = [10 + i, 20, 40 + i, 50]
        instr = f"click item {i}"
        lines.append(json.dumps({"image": name, "instruction": instr, "bbox": bbox,
                                 "platform": platform, "ui_type": ui, "group": group}))
        # correct: centre of the box; wrong: just outside its right edge
        x = (bbox[0] + bbox[2]) / 2 if correct else bbox[2] + 1
        script[instr] = format_answer(Point(x, 35))
    path = tmp_path / "data.jsonl"
    path.write_text("\n".join(lines) + "\n")
    return path, ScriptedPolicy(script)
