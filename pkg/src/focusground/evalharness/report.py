"""Per-category accuracy tables.

Accuracies are kept as integer counts and only turned into percentages on
output, so aggregation is an order-independent sum.
"""

from __future__ import annotations

import csv
import io
import json
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .dataset import PLATFORMS, UI_TYPES

NA = "n/a"


@dataclass(frozen=True)
class RecordResult:
    key: str
    platform: str
    ui_type: str
    group: str
    correct: bool
    errored: bool = False
    error: Optional[str] = None
    prediction: Optional[list[float]] = None
    detail: dict = field(default_factory=dict, compare=False)

    def to_dict(self) -> dict:
        return {"key": self.key, "platform": self.platform, "ui_type": self.ui_type,
                "group": self.group, "correct": self.correct, "errored": self.errored,
                "error": self.error, "prediction": self.prediction, **self.detail}


def pct(correct: int, total: int) -> Optional[float]:
    return None if total == 0 else 100.0 * correct / total


def _fmt_pct(v: Optional[float]) -> str:
    return NA if v is None else f"{v:.2f}"


@dataclass
class EvalReport:
    """Counts per (platform, ui_type) and (group, ui_type), plus overall averages.

    ``exclude_errors`` drops errored records from every denominator; by
    default they stay in and count as incorrect.
    """

    results: list[RecordResult]
    config: dict = field(default_factory=dict)
    exclude_errors: bool = False

    def __post_init__(self):
        self.results = sorted(self.results, key=lambda r: r.key)

    def _counted(self) -> list[RecordResult]:
        return [r for r in self.results if not (self.exclude_errors and r.errored)]

    def _tally(self, attr: str) -> tuple[Counter, Counter]:
        correct, total = Counter(), Counter()
        for r in self._counted():
            k = (getattr(r, attr), r.ui_type)
            total[k] += 1
            correct[k] += int(r.correct)
        return correct, total

    @property
    def n_records(self) -> int:
        return len(self.results)

    @property
    def n_errored(self) -> int:
        return sum(r.errored for r in self.results)

    @property
    def n_correct(self) -> int:
        return sum(r.correct for r in self._counted())

    @property
    def n_counted(self) -> int:
        return len(self._counted())

    @property
    def micro_average(self) -> Optional[float]:
        return pct(self.n_correct, self.n_counted)

    def groups(self) -> list[str]:
        return sorted({r.group for r in self.results})

    def platform_cells(self) -> dict[tuple[str, str], tuple[int, int]]:
        correct, total = self._tally("platform")
        return {(p, u): (correct[(p, u)], total[(p, u)]) for p in PLATFORMS for u in UI_TYPES}

    def group_cells(self) -> dict[tuple[str, str], tuple[int, int]]:
        correct, total = self._tally("group")
        return {(g, u): (correct[(g, u)], total[(g, u)]) for g in self.groups() for u in UI_TYPES}

    def accuracy(self, platform: str, ui_type: str) -> Optional[float]:
        return pct(*self.platform_cells()[(platform, ui_type)])

    def group_accuracy(self, group: str, ui_type: str) -> Optional[float]:
        return pct(*self.group_cells()[(group, ui_type)])

    @property
    def cell_weighted_average(self) -> Optional[float]:
        """Unweighted mean of the non-empty (group, ui_type) cell accuracies."""
        accs = [pct(c, t) for c, t in self.group_cells().values() if t]
        return sum(accs) / len(accs) if accs else None

    def _rows(self, label: str, cells: dict, keys: Iterable[str]) -> list[dict]:
        rows = []
        for k in keys:
            text, icon = cells[(k, "text")], cells[(k, "icon")]
            rows.append({label: k, "text": pct(*text), "icon": pct(*icon),
                         "avg": pct(text[0] + icon[0], text[1] + icon[1]),
                         "n_text": text[1], "n_icon": icon[1]})
        return rows

    def platform_rows(self) -> list[dict]:
        return self._rows("platform", self.platform_cells(), PLATFORMS)

    def group_rows(self) -> list[dict]:
        return self._rows("group", self.group_cells(), self.groups())

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "records": self.n_records,
            "counted": self.n_counted,
            "correct": self.n_correct,
            "errored": self.n_errored,
            "exclude_errors": self.exclude_errors,
            "micro_average": self.micro_average,
            "cell_weighted_average": self.cell_weighted_average,
            "platforms": self.platform_rows(),
            "groups": self.group_rows(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["table", "category", "ui_type", "correct", "total", "accuracy"])
        for table, cells in (("platform", self.platform_cells()), ("group", self.group_cells())):
            for (cat, ui), (c, t) in cells.items():
                w.writerow([table, cat, ui, c, t, _fmt_pct(pct(c, t))])
        w.writerow(["overall", "micro", "all", self.n_correct, self.n_counted, _fmt_pct(self.micro_average)])
        w.writerow(["overall", "cell_weighted", "all", "", "", _fmt_pct(self.cell_weighted_average)])
        return buf.getvalue()

    def to_markdown(self) -> str:
        out = ["# Grounding accuracy", ""]
        if self.config:
            out += ["Config: " + ", ".join(f"{k}={v}" for k, v in sorted(self.config.items())), ""]
        for title, label, rows in (("By platform", "platform", self.platform_rows()),
                                   ("By group", "group", self.group_rows())):
            out += [f"## {title}", "", f"| {label} | Text | Icon | Avg | n |", "|---|---|---|---|---|"]
            for r in rows:
                out.append(f"| {r[label]} | {_fmt_pct(r['text'])} | {_fmt_pct(r['icon'])} "
                           f"| {_fmt_pct(r['avg'])} | {r['n_text'] + r['n_icon']} |")
            out.append("")
        out += [
            f"Micro-average: {_fmt_pct(self.micro_average)} ({self.n_correct}/{self.n_counted})",
            f"Cell-weighted average: {_fmt_pct(self.cell_weighted_average)}",
            f"Errored records: {self.n_errored}" + (" (excluded)" if self.exclude_errors else " (counted incorrect)"),
            "",
        ]
        return "\n".join(out)
