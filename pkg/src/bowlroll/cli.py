"""Command-line entry points: generate, train, evaluate, report.

    bowlroll generate --out data/ --config cfg.json --seed 7
    bowlroll train --variant position --dataset data/ --out run/
    bowlroll evaluate --checkpoint run/position.ckpt --dataset data/ --out run/
    bowlroll evaluate --variant linear --dataset data/ --out run/
    bowlroll report run/*_metrics.csv --out run/

Every stage is a pure function of (config, seed); --deterministic is
accepted on all subcommands and pins the already-default single-threaded
fixed-order execution, so reruns reproduce outputs byte for byte.
"""

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from . import evaluate as ev
from . import models
from .config import ExperimentConfig, desk_config
from .dataset import generate_dataset
from .training import train_model, train_state_mlp

BASELINES = ("linear", "quadratic", "state_mlp", "state_mlp_av")


def _load_config(args):
    cfg = ExperimentConfig.load(args.config) if args.config else desk_config()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def _add_common(parser):
    parser.add_argument("--config", default=None, help="experiment config JSON")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--deterministic", action="store_true",
                        help="force fixed-order reductions (already the default)")


def cmd_generate(args):
    cfg = _load_config(args)
    manifest = generate_dataset(cfg, args.out)
    sizes = {split: len(entries) for split, entries in manifest["splits"].items()}
    print(f"generated dataset at {args.out}: {sizes}")
    return 0


def cmd_train(args):
    cfg = _load_config(args)
    if args.variant in ("state_mlp", "state_mlp_av"):
        path, losses = train_state_mlp(cfg, args.dataset, args.out,
                                       with_angular=args.variant.endswith("_av"))
        print(f"trained {args.variant}: checkpoint {path}, "
              f"final one-step loss {losses[-1]:.6g}")
        return 0
    if args.variant not in models.VARIANTS:
        raise SystemExit(f"unknown variant {args.variant!r}; choose from "
                         f"{models.VARIANTS + ('state_mlp', 'state_mlp_av')}")
    result = train_model(cfg, args.variant, args.dataset, args.out,
                         horizon=args.horizon)
    print(f"trained {args.variant}: {result.epochs_run} epochs, validation "
          f"{result.epoch0_val:.3f} -> {result.best_val:.3f} px, "
          f"checkpoint {result.checkpoint_path}")
    return 0


def cmd_evaluate(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.checkpoint:
        if args.variant in ("state_mlp", "state_mlp_av"):
            result = ev.evaluate_state_mlp(args.checkpoint, args.dataset,
                                           horizon=args.horizon)
        else:
            result = ev.evaluate_model(args.checkpoint, args.dataset,
                                       horizon=args.horizon,
                                       expect_variant=args.variant)
    elif args.variant in ("linear", "quadratic"):
        result = ev.evaluate_polyfit(1 if args.variant == "linear" else 2,
                                     args.dataset, horizon=args.horizon)
    else:
        raise SystemExit("evaluate needs --checkpoint, or --variant linear/quadratic")
    row = ev.metrics_row(result)
    tag = f"{result['method']}_{result['case']}"
    ev.write_rows_csv(out / f"{tag}_metrics.csv", [row])
    ev.write_curves(out / f"{tag}_curves.csv", result)
    print(ev.render_report([row]))
    return 0


def cmd_report(args):
    rows = []
    for path in args.rows:
        rows.extend(ev.read_rows_csv(path))
    text = ev.render_report(rows)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ev.write_rows_csv(out / "report.csv", rows)
    (out / "report.txt").write_text(text)
    print(text)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="bowlroll",
                                     description="ball-in-bowl trajectory "
                                                 "extrapolation laboratory")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="simulate, render and write a dataset")
    _add_common(p)
    p.add_argument("--out", required=True, help="dataset output directory")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train a predictor variant")
    _add_common(p)
    p.add_argument("--variant", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--horizon", type=int, default=None,
                   help="training horizon override")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint or baseline")
    _add_common(p)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--variant", default=None,
                   help="baseline name, or expected checkpoint variant")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--horizon", type=int, default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="merge metric rows into one table")
    _add_common(p)
    p.add_argument("rows", nargs="+", help="metric row CSVs from evaluate")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
