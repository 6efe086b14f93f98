import csv
import json

import pytest

from focusground.cli import main


@pytest.fixture
def fixture_dir(tmp_path):
    assert main(["make-fixture", "--out", str(tmp_path / "fx"), "--count", "12", "--seed", "1"]) == 0
    return tmp_path / "fx"


def test_reward_check(capsys):
    assert main(["reward-check"]) == 0
    out = capsys.readouterr().out
    assert out.count("[PASS]") == 3 and "[FAIL]" not in out


def test_eval_scripted(fixture_dir, tmp_path, capsys):
    first = json.loads((fixture_dir / "dataset.jsonl").read_text().splitlines()[0])
    script = tmp_path / "script.json"
    x1, y1, x2, y2 = first["bbox"]
    script.write_text(json.dumps({"script": {first["instruction"]:
                                             f'<answer>{{"point":[{(x1 + x2) / 2},{(y1 + y2) / 2}]}}</answer>'},
                                  "default": "garbage"}))
    out = tmp_path / "out"
    assert main(["eval", "--dataset", str(fixture_dir / "dataset.jsonl"), "--scripted", str(script),
                 "--out", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["correct"] == 1 and report["records"] == 12
    rows = list(csv.DictReader((out / "report.csv").open()))
    assert rows[-2]["category"] == "micro" and rows[-2]["accuracy"] == "8.33"
    assert "Micro-average: 8.33" in capsys.readouterr().out


def test_train_eval_baseline_pipeline(fixture_dir, tmp_path):
    cfg = tmp_path / "toy.cfg"
    cfg.write_text("n_groups = 3\neval_screens = 4\n")
    params = tmp_path / "p.json"
    metrics = tmp_path / "m.csv"
    assert main(["train-toy", "--config", str(cfg), "--metrics-out", str(metrics),
                 "--params-out", str(params)]) == 0
    rows = list(csv.DictReader(metrics.open()))
    assert len(rows) == 3 and list(rows[0]) == ["step", "mean_reward", "success_rate", "tool_rate"]
    out = tmp_path / "b"
    assert main(["baseline", "--dataset", str(fixture_dir / "dataset.jsonl"),
                 "--refs", str(fixture_dir / "refs.jsonl"), "--alpha", "0", "0.4",
                 "--toy-params", str(params), "--out", str(out)]) == 0
    assert (out / "baseline_alpha0.4.md").exists() and (out / "baseline_alpha0.csv").exists()


def test_train_toy_multiple_seeds(tmp_path):
    cfg = tmp_path / "toy.cfg"
    cfg.write_text("n_groups = 2\neval_screens = 2\n")
    assert main(["train-toy", "--config", str(cfg), "--seeds", "2", "--seed", "5",
                 "--metrics-out", str(tmp_path / "m.csv")]) == 0
    assert (tmp_path / "m_seed5.csv").exists() and (tmp_path / "m_seed6.csv").exists()


def test_sweep_toy(tmp_path, capsys):
    cfg = tmp_path / "toy.cfg"
    cfg.write_text("n_groups = 2\neval_screens = 2\n")
    out = tmp_path / "s.csv"
    assert main(["sweep", "--grid-file", "variants", "--config", str(cfg), "--seeds", "2",
                 "--out", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    assert [r["config"] for r in rows] == ["center", "overlap", "full"]
    assert set(rows[0]) >= {"mean", "std", "seed_0", "seed_1"}


def test_sweep_evaluation(fixture_dir, tmp_path):
    params = tmp_path / "p.json"
    params.write_text(json.dumps({"w_locate": [0, 0, 0], "tool_logits": [0, 0], "w_answer": [10, 0, 0]}))
    out = tmp_path / "s.csv"
    assert main(["sweep", "--grid-file", "static-crop", "--runner", "evaluation",
                 "--dataset", str(fixture_dir / "dataset.jsonl"), "--refs", str(fixture_dir / "refs.jsonl"),
                 "--toy-params", str(params), "--seeds", "1", "--out", str(out)]) == 0
    assert len(list(csv.DictReader(out.open()))) == 6


def test_missing_dataset_is_error(tmp_path):
    assert main(["eval", "--dataset", str(tmp_path / "none.jsonl"), "--scripted", str(tmp_path / "s.json")]) == 2


def test_policy_source_required(fixture_dir, monkeypatch):
    monkeypatch.delenv("FOCUSGROUND_ENDPOINT", raising=False)
    assert main(["eval", "--dataset", str(fixture_dir / "dataset.jsonl")]) == 2


def test_policy_sources_exclusive(fixture_dir, tmp_path):
    with pytest.raises(SystemExit):
        main(["eval", "--dataset", str(fixture_dir / "dataset.jsonl"), "--endpoint", "http://x",
              "--scripted", str(tmp_path / "s.json")])
