"""Command line entry point: ``mgbcc <command> [options]``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .data import DataError, load_dataset, save_dataset, synth
from .evaluation import format_text
from .experiment import D_GRID, P_GRID, export_embeddings, run_evaluate, run_sweep, run_train
from .model import NumericalError, TrainConfig

EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 2, 3, 4

log = logging.getLogger("mgbcc")


class ConfigError(ValueError):
    pass


def _ints(text):
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _train_flags(ap):
    ap.add_argument("--config", type=Path, help="JSON file of training options")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--p", type=int, help="granularity (average ball size)")
    ap.add_argument("--tau", type=float, help="cross-view association threshold")
    ap.add_argument("--lambda", dest="lam", type=float, help="reconstruction weight")
    ap.add_argument("--dim", type=int, help="latent dimension d")
    ap.add_argument("--epochs", type=int)
    ap.add_argument("--batch-size", type=int)
    ap.add_argument("--lr", type=float)
    ap.add_argument("--temperature", type=float)
    ap.add_argument("--hidden", type=_ints, help="hidden layer sizes, e.g. 2000,500,500")
    ap.add_argument("--variant", choices=("mlp", "linear"))


def build_config(args) -> TrainConfig:
    opts = {}
    if getattr(args, "config", None):
        try:
            opts.update(json.loads(Path(args.config).read_text()))
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {args.config}: {e}") from None
    for key in ("seed", "p", "tau", "lam", "dim", "epochs", "batch_size", "lr",
                "temperature", "hidden", "variant"):
        val = getattr(args, key, None)
        if val is not None:
            opts[key] = val
    # accept the report spelling too
    if "lambda" in opts:
        opts["lam"] = opts.pop("lambda")
    try:
        return TrainConfig.from_dict(opts)
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from None


def make_parser():
    ap = argparse.ArgumentParser(prog="mgbcc", description="Multi-view granular-ball contrastive clustering")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="write a planted-cluster multi-view dataset")
    s.add_argument("--out", type=Path, required=True)
    s.add_argument("--clusters", type=int, default=3)
    s.add_argument("--per-cluster", type=int, default=150)
    s.add_argument("--views", type=int, default=2)
    s.add_argument("--dims", type=_ints, default=[20])
    s.add_argument("--sigma", type=float, default=0.1)
    s.add_argument("--private", type=float, default=0.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--format", choices=("gbmv", "csv"), default="gbmv")

    t = sub.add_parser("train", help="train a model and write checkpoint, loss log and metrics")
    t.add_argument("--data", type=Path, required=True)
    t.add_argument("--out", type=Path, required=True)
    t.add_argument("--resume", type=Path)
    t.add_argument("--clusters", type=int)
    _train_flags(t)

    e = sub.add_parser("evaluate", help="cluster a dataset with a trained checkpoint")
    e.add_argument("--data", type=Path, required=True)
    e.add_argument("--checkpoint", type=Path, required=True)
    e.add_argument("--clusters", type=int)
    e.add_argument("--out", type=Path)

    w = sub.add_parser("sweep", help="train + evaluate over a grid of p and d")
    w.add_argument("--data", type=Path, required=True)
    w.add_argument("--out", type=Path, required=True)
    w.add_argument("--p-grid", type=_ints, default=list(P_GRID))
    w.add_argument("--d-grid", type=_ints, default=list(D_GRID))
    w.add_argument("--workers", type=int, default=1)
    w.add_argument("--clusters", type=int)
    _train_flags(w)

    x = sub.add_parser("export-embeddings", help="write per-view and fused latent features")
    x.add_argument("--data", type=Path, required=True)
    x.add_argument("--checkpoint", type=Path, required=True)
    x.add_argument("--out", type=Path, required=True)
    x.add_argument("--format", choices=("gbmv", "csv"), default="gbmv")
    return ap


def _dispatch(args):
    if args.command == "synth":
        dims = args.dims if len(args.dims) == args.views else args.dims[:1] * args.views
        try:
            ds = synth(args.clusters, args.per_cluster, args.views, dims, args.sigma,
                       args.seed, private=args.private)
        except ValueError as e:
            raise ConfigError(str(e)) from None
        print(save_dataset(ds, args.out, args.format))
        return

    if args.command in ("train", "sweep"):
        cfg = build_config(args)
    ds = load_dataset(args.data)

    if args.command == "train":
        res = run_train(ds, cfg, args.out, resume=args.resume, n_clusters=args.clusters)
        if "metrics" in res:
            sys.stdout.write(format_text(res["metrics"]))
    elif args.command == "evaluate":
        sys.stdout.write(format_text(run_evaluate(args.checkpoint, ds, args.clusters, args.out)))
    elif args.command == "sweep":
        if not args.p_grid or not args.d_grid:
            raise ConfigError("sweep grids must be non-empty")
        run_sweep(ds, cfg, args.p_grid, args.d_grid, args.out, args.workers, args.clusters)
        print(args.out / "sweep.csv")
    elif args.command == "export-embeddings":
        for p in export_embeddings(args.checkpoint, ds, args.out, args.format):
            print(p)


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _dispatch(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, OSError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as e:
        # dimension mismatches between checkpoint and data, etc.
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    return 0


if __name__ == "__main__":
    sys.exit(main())
