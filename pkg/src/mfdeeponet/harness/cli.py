"""Command-line entry point: ``mfdeeponet <verb> ...``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from ..datagen.io import read_dataset, write_dataset
from .config import ExperimentConfig, load_preset, preset_names, resolve
from .experiment import compare, evaluate_run, run_experiment
from .problems import build_problem


def _config(args) -> ExperimentConfig:
    if args.config and args.preset:
        raise SystemExit("give either --config or --preset, not both")
    if args.config:
        cfg = resolve(args.config, args.model)
    elif args.preset:
        cfg = load_preset(args.preset, args.model)
    else:
        raise SystemExit("a --config or --preset is required")
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if getattr(args, "steps", None) is not None:
        changes["steps"] = args.steps
    return cfg.replace(**changes) if changes else cfg


def _add_common(p, out_required=True):
    p.add_argument("--config", help="experiment config JSON (flat or preset-style)")
    p.add_argument("--preset", help="bundled preset name")
    p.add_argument("--model", help="variant/model kind within a preset")
    p.add_argument("--seed", type=int, help="training seed override")
    p.add_argument("--out", required=out_required, help="output directory")


def cmd_generate(args):
    cfg = _config(args)
    problem = build_problem(cfg.benchmark, cfg.data)
    out = Path(args.out)
    written = []
    for name in ("lf", "hf", "test"):
        ds = getattr(problem, name)
        if ds is not None:
            write_dataset(out / name, ds, name=f"{cfg.benchmark}-{name}")
            written.append(name)
    print(json.dumps({"benchmark": cfg.benchmark, "written": written, "out": str(out)}))


def cmd_train(args):
    cfg = _config(args)
    result = run_experiment(cfg, args.out)
    m = result.metrics
    print(json.dumps({"name": cfg.name, "mean_mse": m.mean_mse, "mean_rel_l2": m.mean_rel_l2, "out": args.out}))


def cmd_evaluate(args):
    report = evaluate_run(args.run, args.out)
    print(json.dumps({k: report["metrics"][k] for k in ("mean_mse", "mean_rel_l2")}))


def cmd_compare(args):
    a = resolve(args.a)
    b = resolve(args.b)
    if args.seed is not None:
        a, b = a.replace(seed=args.seed), b.replace(seed=args.seed)
    table = compare(a, b, args.out)
    for r in table["rows"]:
        print(f"{r['metric']:>12}  {table['a']}={r['a']:.6g}  {table['b']}={r['b']:.6g}  ratio={r['ratio']:.6g}")


def cmd_plot_data(args):
    ds, extras = read_dataset(Path(args.run) / "predictions", with_extras=True)
    truth = extras.get("truth")
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    d = ds.queries.shape[1]
    with out.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        coords = ["x", "t"] if d == 2 else ["x", "y", "z"][:d]
        w.writerow(["sample", "param"] + coords + ["component", "prediction", "truth", "abs_error"])
        for i in range(ds.n_samples):
            param = "" if ds.params is None else format(float(ds.params[i, 0]), ".10g")
            for j, q in enumerate(ds.queries):
                for c in range(ds.n_out):
                    p = ds.outputs[i, j, c]
                    t = np.nan if truth is None else truth[i, j, c]
                    w.writerow([i, param] + [format(v, ".10g") for v in q] +
                               [c, format(p, ".10g"), format(t, ".10g"), format(abs(p - t), ".10g")])
    print(json.dumps({"rows": ds.n_samples * ds.queries.shape[0] * ds.n_out, "out": str(out)}))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mfdeeponet", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("generate", help="write the benchmark's lf/hf/test datasets")
    _add_common(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train and evaluate one config")
    _add_common(p)
    p.add_argument("--steps", type=int, help="override training steps")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="re-evaluate a finished run from its checkpoint")
    p.add_argument("--run", required=True, help="run directory written by train")
    p.add_argument("--out", help="directory for evaluation.json")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="run two configs on the same test set")
    p.add_argument("a", help="config path or preset[:variant]")
    p.add_argument("b", help="config path or preset[:variant]")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("plot-data", help="flatten a run's predictions to CSV")
    p.add_argument("--run", required=True)
    p.add_argument("--out", required=True, help="CSV path")
    p.set_defaults(func=cmd_plot_data)

    p = sub.add_parser("presets", help="list bundled presets")
    p.set_defaults(func=lambda a: print("\n".join(preset_names())))
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except SystemExit as exc:
        if exc.code not in (0, None):
            print(f"error: {exc.code}", file=sys.stderr)
            return 2
        return 0
    except Exception as exc:  # noqa: BLE001
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
