"""Command-line surface: simulate, pretrain, estimate, report.

Exit codes: 0 success, 2 configuration error, 3 numerical abort.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import pipeline
from .config import ConfigError, load_config
from .inverse.training import NonFiniteLoss
from .sim import SimulationAborted

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, default=None, help="INI config file")
    parser.add_argument("--seed", type=int, default=None, help="override run.seed")
    parser.add_argument("--out", type=Path, default=None, help="override run.out")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dieseltwin", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="generate the case datasets")
    _common(sim)
    sim.add_argument("--force", action="store_true", help="overwrite existing datasets")

    pre = sub.add_parser("pretrain", help="train helper networks")
    pre.add_argument("which", choices=["empiricals", "deeponets", "multihead"])
    _common(pre)
    pre.add_argument("--force", action="store_true", help="retrain over existing checkpoints")
    pre.add_argument("--epochs", type=int, default=None, help="override the epoch budget")

    est = sub.add_parser("estimate", help="run the inverse estimation ensemble")
    _common(est)
    est.add_argument("--method", choices=["baseline", "multistage", "fewshot"], default=None)
    est.add_argument("--points", type=int, choices=[151, 301], default=None)
    est.add_argument("--noise", choices=["none", "paper"], default=None)
    est.add_argument("--epochs", type=int, default=None, help="baseline epoch budget")
    est.add_argument("--seeds", type=int, default=None, help="ensemble size")

    rep = sub.add_parser("report", help="consolidate an estimate run")
    rep.add_argument("run_dir", type=Path)
    rep.add_argument("--plots", action="store_true", help="render static plots")
    return p


def _load(args) -> "pipeline.RunConfig":
    overrides = {}
    if args.seed is not None:
        overrides["run.seed"] = args.seed
    if getattr(args, "out", None) is not None:
        overrides["run.out"] = str(args.out)
    if getattr(args, "method", None) is not None:
        overrides["estimate.method"] = args.method
    if getattr(args, "points", None) is not None:
        overrides["estimate.points"] = args.points
    if getattr(args, "noise", None) is not None:
        overrides["estimate.noise"] = args.noise
    if getattr(args, "seeds", None) is not None:
        overrides["estimate.seeds"] = args.seeds
    if getattr(args, "epochs", None) is not None:
        if args.command == "estimate":
            overrides["estimate.epochs_baseline"] = args.epochs
        else:
            overrides["pretrain.surrogate_epochs"] = args.epochs
            overrides["pretrain.deeponet_epochs"] = args.epochs
            overrides["pretrain.multihead_epochs"] = args.epochs
    return load_config(args.config, overrides)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "report":
            report = pipeline.consolidate_report(args.run_dir, plots=args.plots)
            for seg, entry in report["segments"].items():
                frac = {k: v["in_band_fraction"] for k, v in entry.items()}
                print(f"segment {seg}: in-band fractions {frac}")
            print(f"report written to {args.run_dir}/report.json")
            return EXIT_OK

        cfg = _load(args)
        out = Path(cfg["run.out"])
        data_dir = out / "data"
        pre_dir = out / "pretrained"

        if args.command == "simulate":
            if data_dir.exists() and any(data_dir.glob("case*.csv")) and not args.force:
                print(f"{data_dir} already holds datasets; use --force to regenerate",
                      file=sys.stderr)
                return EXIT_CONFIG
            written = pipeline.simulate_cases(cfg, data_dir)
            print(f"wrote {len(written)} case datasets to {data_dir}")
            return EXIT_OK

        if args.command == "pretrain":
            fn = {
                "empiricals": pipeline.pretrain_empiricals,
                "deeponets": pipeline.pretrain_deeponets,
                "multihead": pipeline.pretrain_multihead,
            }[args.which]
            try:
                report = fn(cfg, data_dir, pre_dir, force=args.force)
            except FileExistsError as exc:
                print(str(exc), file=sys.stderr)
                return EXIT_CONFIG
            print(f"pretrained {args.which}: {report}")
            return EXIT_OK

        if args.command == "estimate":
            run_dir = pipeline.estimate(cfg, data_dir, pre_dir, out)
            print(f"estimation run written to {run_dir}")
            return EXIT_OK

        raise AssertionError(f"unhandled command {args.command}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_CONFIG
    except (NonFiniteLoss, SimulationAborted) as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
