"""Command-line entry point: ``xai-attacks run|validate|explain``."""

import argparse
import csv
import json
import sys

import numpy as np

from ..explainers import METHODS, ExplainerConfig, explain
from ..models import load_model
from .config import ConfigError, ExperimentConfig
from .runner import HarnessError, run_experiment

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def _read_rows(path, names=None):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ConfigError(f"{path} is empty")
    header, body = rows[0], rows[1:]
    if names is not None:
        missing = [n for n in names if n not in header]
        if missing:
            raise ConfigError(f"{path} lacks columns {missing}")
        order = [header.index(n) for n in names]
    else:
        order = list(range(len(header)))
    try:
        return np.array([[float(r[j]) for j in order] for r in body], dtype=float)
    except ValueError as exc:
        raise ConfigError(f"{path}: non-numeric value ({exc})") from exc


def cmd_run(args):
    report = run_experiment(args.config, seed=args.seed, out_dir=args.out_dir, jobs=args.jobs)
    print(f"status={report.status} cells={len(report.attacks)} runtime_s={report.runtime_s:.2f}")
    for row in report.attacks:
        print(f"  {row['model']:>12} {row['attack']:<18} status={row.get('status')} "
              f"fe_success={row.get('fe_success')} asr={row.get('asr')}")
    return EXIT_OK


def cmd_validate(args):
    cfg = ExperimentConfig.from_json(args.config)
    print(f"ok: {len(cfg.models)} model(s), {len(cfg.attacks)} attack(s), {len(cfg.defenses)} defense(s)")
    return EXIT_OK


def cmd_explain(args):
    model, reference = load_model(args.model)
    names = getattr(model, "feature_names", None)
    X = _read_rows(args.instance, names)
    if args.background is not None:
        B = _read_rows(args.background, names)
    elif reference is not None:
        B = np.asarray(reference, dtype=float)
    else:
        raise ConfigError("no background: pass --background or save the model with reference rows")
    cfg = ExplainerConfig(background=B, seed=args.seed or 0, output=args.output, feature_names=names)
    out = [explain(args.method, model, x, cfg, instance_id=i).to_dict() for i, x in enumerate(X)]
    json.dump(out, sys.stdout, indent=2)
    sys.stdout.write("\n")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="xai-attacks", description="Attacks on post-hoc explainers for tabular models.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment config end to end")
    run.add_argument("config")
    run.add_argument("--seed", type=int, default=None, help="override the config seed")
    run.add_argument("--out-dir", default=None, help="override the output directory")
    run.add_argument("--jobs", type=int, default=1, help="parallel (model, attack) cells")
    run.set_defaults(func=cmd_run)

    val = sub.add_parser("validate", help="check a config without running it")
    val.add_argument("config")
    val.set_defaults(func=cmd_validate)

    exp = sub.add_parser("explain", help="explain instances with a saved model")
    exp.add_argument("model", help="model JSON written by save_model")
    exp.add_argument("instance", help="CSV of instances with a header row")
    exp.add_argument("--method", choices=METHODS, default="kernel_shap")
    exp.add_argument("--background", default=None, help="CSV of background rows")
    exp.add_argument("--output", choices=("probability", "margin"), default="probability")
    exp.add_argument("--seed", type=int, default=0)
    exp.set_defaults(func=cmd_explain)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except HarnessError as exc:
        print(f"runtime error in stage {exc.stage}: {exc.message}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
