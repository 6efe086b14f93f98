"""Command-line entry point: ``focusground <command> [...]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from .agents.remote import RemotePolicy, RemoteSettings
from .agents.scripted import ScriptedPolicy
from .agents.toy import ToyPolicy, ToyPolicyParams
from .config import load_kv
from .errors import DatasetError, FocusGroundError
from .evalharness import (
    MODES,
    EvalReport,
    evaluate,
    evaluation_runner,
    load_dataset,
    load_grid,
    load_reference_points,
    static_crop_baseline,
    sweep,
    toy_training_runner,
    write_synthetic_benchmark,
)
from .reward import RewardVariant, RewardWeights
from .rewardcheck import run_checks
from .training import ToyTrainConfig, train_toy

log = logging.getLogger("focusground")


def _seed_list(base: int, count: int) -> list[int]:
    if count < 1:
        raise SystemExit("--seeds must be >= 1")
    return list(range(base, base + count))


def _add_policy_args(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group()
    src.add_argument("--endpoint", help="chat-completions URL (default: $FOCUSGROUND_ENDPOINT)")
    src.add_argument("--scripted", type=Path, help="JSON script of fixed outputs per instruction")
    src.add_argument("--toy-params", type=Path, help="JSON parameters of a trained toy policy")
    p.add_argument("--model", help="model name sent to --endpoint")
    p.add_argument("--timeout", type=float, help="request timeout in seconds")
    p.add_argument("--retries", type=int, help="retries on 5xx or connection errors")
    p.add_argument("--temperature", type=float, default=0.0,
                   help="sampling temperature (remote or toy policy)")


def _policy(args):
    """Scripted or toy policy if given, else the remote endpoint (flag or environment)."""
    if not (args.scripted or args.toy_params):
        settings = RemoteSettings.from_env(endpoint=args.endpoint, model=args.model,
                                           timeout=args.timeout, retries=args.retries,
                                           temperature=args.temperature)
        return RemotePolicy(settings), {"policy": "remote", "model": settings.model}
    if args.scripted:
        return ScriptedPolicy.load(args.scripted), {"policy": f"scripted:{args.scripted.name}"}
    params = ToyPolicyParams.from_json(args.toy_params.read_text())
    return ToyPolicy(params, args.temperature), {"policy": f"toy:{args.toy_params.name}"}


def _load_records(path: Path):
    ds = load_dataset(path)
    if ds.errors:
        log.warning("%d malformed dataset line(s) skipped:\n%s", len(ds.errors), ds.error_report())
    return ds.records


def _write_report(report: EvalReport, out: Optional[Path], stem: str = "report") -> None:
    print(report.to_markdown())
    if out is None:
        return
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{stem}.md").write_text(report.to_markdown())
    (out / f"{stem}.csv").write_text(report.to_csv())
    (out / f"{stem}.json").write_text(report.to_json() + "\n")
    with open(out / f"{stem}_records.jsonl", "w") as fh:
        for r in report.results:
            fh.write(json.dumps(r.to_dict(), sort_keys=True) + "\n")
    log.info("wrote %s/%s.{md,csv,json}", out, stem)


def cmd_eval(args) -> int:
    records = _load_records(args.dataset)
    policy, echo = _policy(args)
    weights = RewardWeights.load(args.weights) if args.weights else None
    report = evaluate(records, policy, args.mode, args.seed, weights, RewardVariant(args.variant),
                      args.exclude_errors, config=echo)
    _write_report(report, args.out)
    return 0


def cmd_baseline(args) -> int:
    records = _load_records(args.dataset)
    refs = load_reference_points(args.refs)
    policy, echo = _policy(args)
    for alpha in args.alpha:
        report = static_crop_baseline(records, refs, alpha, policy, args.seed, args.exclude_errors, config=echo)
        _write_report(report, args.out, f"baseline_alpha{alpha:g}")
    return 0


def cmd_sweep(args) -> int:
    configs = load_grid(args.grid_file)
    seeds = _seed_list(args.seed, args.seeds)
    if args.runner == "toy-training":
        base = load_kv(args.config) if args.config else {}
        runner = toy_training_runner(base)
        metric = "final success"
    else:
        if args.dataset is None:
            raise SystemExit("--runner evaluation needs --dataset")
        policy, _ = _policy(args)
        refs = load_reference_points(args.refs) if args.refs else None
        runner = evaluation_runner(_load_records(args.dataset), policy, refs)
        metric = "accuracy"
    table = sweep(configs, runner, seeds, metric)
    print(table.to_markdown())
    if args.out:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(table.to_csv())
        log.info("wrote %s", args.out)
    return 0 if all(not r.errors for r in table.rows) else 1


def cmd_train_toy(args) -> int:
    config = ToyTrainConfig.load(args.config) if args.config else ToyTrainConfig()
    log.info("config: %s", json.dumps(config.echo(), sort_keys=True))
    seeds = _seed_list(args.seed, args.seeds)
    for seed in seeds:
        metrics_out = None
        if args.metrics_out is not None:
            metrics_out = args.metrics_out if len(seeds) == 1 else \
                args.metrics_out.with_name(f"{args.metrics_out.stem}_seed{seed}{args.metrics_out.suffix}")
            metrics_out.parent.mkdir(parents=True, exist_ok=True)
        res = train_toy(config, seed, metrics_out)
        print(f"seed {seed}: success {res.initial_success:.3f} -> {res.final_success:.3f} "
              f"({res.improvement:+.3f}) in {res.seconds:.1f}s")
        if args.params_out is not None:
            path = args.params_out if len(seeds) == 1 else \
                args.params_out.with_name(f"{args.params_out.stem}_seed{seed}{args.params_out.suffix}")
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(res.params.to_json() + "\n")
    return 0


def cmd_reward_check(args) -> int:
    return 0 if run_checks() else 1


def cmd_make_fixture(args) -> int:
    path = write_synthetic_benchmark(args.out, args.count, args.seed, ref_noise=args.ref_noise)
    print(f"wrote {args.count} records to {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="focusground", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eval", help="score a policy on a JSONL benchmark")
    p.add_argument("--dataset", type=Path, required=True)
    _add_policy_args(p)
    p.add_argument("--mode", choices=MODES, default="full-episode")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--weights", type=Path, help="reward weights file (key = value)")
    p.add_argument("--variant", choices=[v.value for v in RewardVariant], default="full")
    p.add_argument("--exclude-errors", action="store_true",
                   help="drop errored records from denominators instead of counting them wrong")
    p.add_argument("--out", type=Path, help="directory for report.{md,csv,json}")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("baseline", help="static-crop baseline around reference clicks")
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--refs", type=Path, required=True, help="JSONL of reference points")
    p.add_argument("--alpha", type=float, nargs="+", required=True, help="crop ratio(s) in [0, 1]")
    _add_policy_args(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--exclude-errors", action="store_true")
    p.add_argument("--out", type=Path)
    p.set_defaults(fn=cmd_baseline)

    p = sub.add_parser("sweep", help="mean +- std over seeds for a grid of configs")
    p.add_argument("--grid-file", required=True,
                   help="JSON list of row configs, or one of: coefficients, variants, static-crop")
    p.add_argument("--runner", choices=["toy-training", "evaluation"], default="toy-training")
    p.add_argument("--seeds", type=int, default=5, help="number of seeds, starting at --seed")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", type=Path, help="base toy-training config (key = value)")
    p.add_argument("--dataset", type=Path, help="benchmark for --runner evaluation")
    p.add_argument("--refs", type=Path, help="reference points for alpha rows")
    _add_policy_args(p)
    p.add_argument("--out", type=Path, help="CSV output path")
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("train-toy", help="GRPO-train the toy grid policy on synthetic screens")
    p.add_argument("--config", type=Path, help="key = value config file")
    p.add_argument("--seeds", type=int, default=1, help="number of seeds, starting at --seed")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--metrics-out", type=Path, help="per-step metrics CSV (suffixed per seed)")
    p.add_argument("--params-out", type=Path, help="trained parameters JSON (suffixed per seed)")
    p.set_defaults(fn=cmd_train_toy)

    p = sub.add_parser("reward-check", help="check the reward against brute-force references")
    p.set_defaults(fn=cmd_reward_check)

    p = sub.add_parser("make-fixture", help="write a synthetic benchmark (PNGs + JSONL)")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--count", type=int, default=60)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ref-noise", type=float, default=12.0, help="std of reference-point noise in px")
    p.set_defaults(fn=cmd_make_fixture)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except (DatasetError, FocusGroundError, ValueError, KeyError, OSError) as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
