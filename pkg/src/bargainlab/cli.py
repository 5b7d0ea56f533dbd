"""Command-line entry point: train, evaluate, verify, report.

All commands exit 0 on success and nonzero on any error, printing the reason
to stderr. Experiments are described by YAML configs (see `configs/` for the
bundled ones); every run directory receives a manifest sufficient to
reproduce it.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .config import ConfigError, load_config


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, help="experiment config (YAML)")
    p.add_argument("--out", default=None, help="output directory (overrides config)")
    p.add_argument("--seed", type=int, default=None, help="master seed (overrides config)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bargainlab",
        description="Bargaining-game experiments: training, cross-play evaluation, "
                    "bound verification, results reporting.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train all runs requested by a config")
    _add_common(p_train)
    p_train.add_argument("--jobs", type=int, default=os.cpu_count() or 1,
                         help="parallel workers for independent training runs")

    p_eval = sub.add_parser("evaluate", help="evaluate trained runs into results files")
    _add_common(p_eval)
    p_eval.add_argument("--filter", action="append", default=[],
                        metavar="KEY=VALUE", help="keep only matching records")

    p_verify = sub.add_parser("verify", help="check the cross-play minimax bound")
    p_verify.add_argument("--games", default="iasymbos,extreme_bos",
                          help="comma-separated matrix game names")
    p_verify.add_argument("--out", default=None, help="directory for the reports")

    p_report = sub.add_parser("report", help="validate a results directory's schema")
    p_report.add_argument("--results", required=True,
                          help="directory holding results.tsv / aggregates.tsv")
    return parser


def _load(args) -> "ExperimentConfig":
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def cmd_train(args) -> int:
    from .harness import train_experiment

    cfg = _load(args)
    train_experiment(cfg, out=args.out, jobs=args.jobs)
    return 0


def cmd_evaluate(args) -> int:
    from .harness import evaluate_experiment

    cfg = _load(args)
    filters = {}
    for item in args.filter:
        if "=" not in item:
            raise ValueError(f"--filter expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        filters[key] = value
    evaluate_experiment(cfg, out=args.out, filters=filters or None)
    return 0


def cmd_verify(args) -> int:
    from .exploitability import verify_bound
    from .games import make_environment
    from .scoring import welfare_spec
    from .welfare import WELFARE_KINDS

    names = [g for g in args.games.split(",") if g]
    reports = []
    for name in names:
        game = make_environment(name)
        for w_kind in WELFARE_KINDS:
            for wp_kind in WELFARE_KINDS:
                if w_kind == wp_kind:
                    continue
                rep = verify_bound(game, welfare_spec(game, w_kind),
                                   welfare_spec(game, wp_kind))
                reports.append(rep)

    lines = []
    for rep in reports:
        line = f"{rep.game:<14} {rep.welfare_1:>5} vs {rep.welfare_2:<5} {rep.status:<15}"
        if rep.status == "holds":
            line += (f" trigger_t={rep.t_found} tail={tuple(round(v, 3) for v in rep.tail_values)}"
                     f" <= bound={tuple(round(v, 3) for v in rep.bounds)}")
        elif rep.reason:
            line += f" ({rep.reason})"
        lines.append(line)
    text = "\n".join(lines) + "\n"
    print(text, end="")

    out_dir = Path(args.out) if args.out else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "verify_report.txt").write_text(text)
        (out_dir / "verify_report.json").write_text(
            json.dumps([r.to_dict() for r in reports], indent=2) + "\n")
    violated = [r for r in reports if r.status == "violated"]
    if violated:
        print(f"ERROR: {len(violated)} bound violation(s)", file=sys.stderr)
        return 1
    return 0


def cmd_report(args) -> int:
    from .evaluation import AGGREGATE_COLUMNS, RESULTS_COLUMNS, read_results

    root = Path(args.results)
    results = root / "results.tsv"
    if not results.exists():
        raise FileNotFoundError(f"no results.tsv under {root}")
    records = read_results(results)
    print(f"{results}: {len(records)} records, schema ok "
          f"({len(RESULTS_COLUMNS)} columns)")
    agg = root / "aggregates.tsv"
    if agg.exists():
        header = agg.read_text().splitlines()[0].split("\t")
        if header != AGGREGATE_COLUMNS:
            raise ValueError(f"aggregates header mismatch in {agg}")
        n = len(agg.read_text().splitlines()) - 1
        print(f"{agg}: {n} cells, schema ok")
    manifest = root / "results_manifest.json"
    if manifest.exists():
        json.loads(manifest.read_text())
        print(f"{manifest}: valid JSON")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {"train": cmd_train, "evaluate": cmd_evaluate,
                "verify": cmd_verify, "report": cmd_report}
    try:
        return handlers[args.command](args)
    except (ConfigError, ValueError, FileNotFoundError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
