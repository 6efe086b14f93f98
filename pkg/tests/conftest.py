import pathlib
import sys

import pytest

sys.path.insert(0, str(pathlib.Path(__file__).parent))

_VERDICTS: list[tuple[str, str]] = []


@pytest.fixture
def verdict():
    """Record a one-line pass/fail verdict, then assert it."""

    def record(label: str, ok: bool, detail: str = "") -> None:
        line = f"{'PASS' if ok else 'FAIL'}  {label}" + (f"  [{detail}]" if detail else "")
        _VERDICTS.append((label, line))
        assert ok, f"{label}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        # labels start with the criterion number
        for _, line in sorted(_VERDICTS, key=lambda v: (int(v[0].split()[0]), v[0])):
            terminalreporter.write_line(line)
