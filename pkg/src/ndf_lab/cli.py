"""Command line entry point.

    ndf-lab train-policy --dataset mnist:/data/mnist --subset 10000 --out runs/policy
    ndf-lab run --strategy ndf --policy runs/policy/policy.npz --runs 5 --out runs/ndf
    ndf-lab replay-randdrop --droplog runs/ndf --runs 5 --out runs/randdrop
    ndf-lab report runs/*/curve.csv --out curves.svg

Every run-config key is available as a flag (``--policy-lr``, ``--eval-every``,
...); ``--config FILE`` loads ``key = value`` lines first and flags override.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from . import kernels
from .config import RunConfig, dump_config, load_config
from .harness import run_policy_training, run_strategy
from .strategies import read_droplog

log = logging.getLogger("ndf_lab")


def _add_config_flags(parser):
    parser.add_argument("--config", help="key = value run configuration file")
    for f in dataclasses.fields(RunConfig):
        flag = "--" + f.name.replace("_", "-")
        if isinstance(f.default, bool):
            parser.add_argument(flag, dest=f.name, default=None,
                                action=argparse.BooleanOptionalAction)
        else:
            parser.add_argument(flag, dest=f.name, type=type(f.default), default=None,
                                help=f"(default: {f.default})")


def _config_from_args(args, **forced):
    config = load_config(args.config) if args.config else RunConfig()
    overrides = {f.name: getattr(args, f.name) for f in dataclasses.fields(RunConfig)
                 if getattr(args, f.name, None) is not None}
    overrides.update(forced)
    return dataclasses.replace(config, **overrides).validate()


def _save_config(config, out):
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(dump_config(config))


def cmd_train_policy(args):
    config = _config_from_args(args, strategy="ndf")
    out = Path(args.out)
    _save_config(config, out)
    result = run_policy_training(config, out)
    print(f"best episode {result.best_episode} "
          f"(reward {result.records[result.best_episode - 1].reward:.4f}); "
          f"policy written to {out / 'policy.npz'}")


def cmd_run(args):
    config = _config_from_args(args)
    out = Path(args.out)
    _save_config(config, out)
    results = run_strategy(config, out)
    for r in results:
        final = r.curve[-1].test_accuracy if r.curve else float("nan")
        print(f"run {r.run_id}: {r.updates} updates, {r.filtered}/{r.arrivals * config.batch_size}"
              f" filtered, final test accuracy {final:.4f}")


def cmd_replay_randdrop(args):
    config = _config_from_args(args, strategy="randdrop")
    source = Path(config.droplog)
    ratios_by_run = None
    if source.is_dir():
        ratios_by_run = [read_droplog(source / f"run_{k}" / "droplog.csv")
                         for k in range(config.runs)]
    elif not source.is_file():
        raise SystemExit(f"no drop log at {source}")
    out = Path(args.out)
    _save_config(config, out)
    results = run_strategy(config, out, ratios_by_run=ratios_by_run)
    for r in results:
        print(f"run {r.run_id}: {r.filtered}/{r.arrivals * config.batch_size} filtered")


def cmd_report(args):
    from .reporting import collect_curves, plot_curves, plot_hardness, summarize, write_summary

    curves = collect_curves(args.curves)
    plot_curves(curves, args.out, target=args.target, title=args.title)
    rows = summarize(curves, args.target)
    for row in rows:
        print(f"{row['strategy']:>10}: reaches {args.target} at {row['instances_to_target']} "
              f"instances; final {row['final_accuracy']:.4f} at {row['final_instances']}")
    if args.summary:
        write_summary(rows, args.summary)
    if args.filterlog:
        plot_hardness(args.filterlog, Path(args.out).with_name(Path(args.out).stem + "_hardness.svg"))


def build_parser():
    parser = argparse.ArgumentParser(prog="ndf-lab", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    parser.add_argument("--kernels", choices=kernels.available_backends(),
                        help="kernel backend (default: compiled if available)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-policy", help="train the filtration policy on a subset")
    _add_config_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_policy)

    p = sub.add_parser("run", help="train the base model on the full data with a strategy")
    _add_config_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("replay-randdrop", help="random filtering at logged per-epoch ratios")
    _add_config_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_replay_randdrop)

    p = sub.add_parser("report", help="plot averaged accuracy curves as SVG")
    p.add_argument("curves", nargs="+", help="curve.csv files")
    p.add_argument("--out", required=True, help="output .svg path")
    p.add_argument("--target", type=float, default=0.9)
    p.add_argument("--title")
    p.add_argument("--summary", help="optional summary CSV path")
    p.add_argument("--filterlog", help="also plot this filterlog.csv")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    if args.kernels:
        kernels.set_backend(args.kernels)
    try:
        args.func(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"ndf-lab: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
