"""Command-line entry point: ``kronograph {verify|bench|gen|train|eval|config}``.

Exit codes: 0 success, 1 failed verification, 2 invalid input (config,
files, shapes), 3 numeric failure during training.
"""
from __future__ import annotations

import argparse
import json
import sys
from contextlib import contextmanager

from . import config as cfgmod
from . import kernels
from .numkit.errors import KronographError, NumericError


@contextmanager
def _output(path: str | None):
    if path is None:
        yield sys.stdout
    else:
        with open(path, "w") as fh:
            yield fh


def _emitter(stream):
    from .training import format_record

    def emit(record: dict) -> None:
        stream.write(format_record(record) + "\n")
        stream.flush()

    return emit


def _add_config_flags(ap: argparse.ArgumentParser) -> None:
    group = ap.add_argument_group("run config overrides (same keys as the JSON config)")
    for name, f in cfgmod.FIELDS.items():
        flags = [f"--{name}"] + ([f"--{name.replace('_', '-')}"] if "_" in name else [])
        group.add_argument(*flags, dest=f"cfg_{name}", metavar="VALUE", default=argparse.SUPPRESS,
                           help=f.metadata["help"])
    ap.add_argument("--config", dest="config_file", help="JSON run config file")
    ap.add_argument("--preset", choices=sorted(cfgmod.PRESETS), help="named ablation preset")


def _config_from_args(args) -> "cfgmod.RunConfig":
    overrides = {k[4:]: cfgmod.parse_value(k[4:], v) for k, v in vars(args).items() if k.startswith("cfg_")}
    return cfgmod.build_config(args.preset, args.config_file, overrides)


# ---- commands ---------------------------------------------------------------

def cmd_verify(args) -> int:
    from .verify import run_all

    return 0 if run_all() else 1


def cmd_bench(args) -> int:
    from .bench import bench, speedup, to_csv

    sizes = [int(v) for v in args.n.split(",")]
    rows = bench(sizes, K=args.K, c=args.c, repeats=args.repeats)
    with _output(args.out) as out:
        out.write(to_csv(rows))
    for n in sizes:
        modes = {r["mode"] for r in rows if r["n1"] == n}
        if len(modes) == 2:
            print(f"n={n}: measured speedup {speedup(rows, n):.1f}x", file=sys.stderr)
    return 0


def cmd_gen(args) -> int:
    from . import datagen

    if args.kind == "dynseq":
        samples = datagen.gen_dynseq(args.num_train + args.num_test, classes=args.classes, T=args.T, n=args.n,
                                     seed=args.seed, noise=args.noise)
        datagen.save_sequence_dataset(args.out, samples[:args.num_train], samples[args.num_train:])
    else:
        inst = datagen.gen_netflix(args.rows, args.cols, args.rank, args.clusters_r, args.clusters_c,
                                   args.density, args.noise_sd, args.seed)
        datagen.save_completion(args.out, inst)
    print(f"wrote {args.kind} dataset to {args.out}", file=sys.stderr)
    return 0


def cmd_train(args) -> int:
    from .training import save_result, sweep, train

    config = _config_from_args(args)
    with _output(args.out) as out:
        emit = _emitter(out)
        if args.sweep:
            key, values = cfgmod.parse_sweep(args.sweep)
            records = sweep(config, key, values, emit, timing=args.timing)
            return 3 if any(r["status"] != "ok" for r in records) else 0
        result = train(config, emit, timing=args.timing)
    if args.checkpoint:
        save_result(args.checkpoint, result)
        print(f"wrote checkpoint {args.checkpoint}", file=sys.stderr)
    return 0


def cmd_eval(args) -> int:
    from .training import evaluate_checkpoint, format_record

    _, result = evaluate_checkpoint(args.checkpoint, args.data)
    with _output(args.out) as out:
        out.write(format_record(result) + "\n")
    return 0


def cmd_config(args) -> int:
    if args.schema:
        print(json.dumps(cfgmod.schema(), indent=2))
        return 0
    config = _config_from_args(args)
    print(json.dumps(config.to_dict(), indent=2))
    return 0


# ---- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kronograph", description="Cross-graph convolution engine")
    ap.add_argument("--backend", choices=kernels.BACKENDS, help="kernel backend (default: $KRONOGRAPH_BACKEND or numpy)")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", help="run every invariant suite")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("bench", help="dense versus factorized filter timings as CSV")
    p.add_argument("--n", default="8,16,32,64", help="comma-separated sizes (n1 = n2 = n)")
    p.add_argument("--K", type=int, default=2)
    p.add_argument("--c", type=int, default=1)
    p.add_argument("--repeats", type=int, default=20)
    p.add_argument("--out", help="CSV file (default stdout)")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("gen", help="write a synthetic dataset")
    p.add_argument("kind", choices=("dynseq", "netflix"))
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--num-train", type=int, default=1000)
    p.add_argument("--num-test", type=int, default=500)
    p.add_argument("--T", type=int, default=12)
    p.add_argument("--n", type=int, default=15)
    p.add_argument("--classes", type=int, default=2)
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--rows", type=int, default=30)
    p.add_argument("--cols", type=int, default=40)
    p.add_argument("--rank", type=int, default=3)
    p.add_argument("--clusters-r", type=int)
    p.add_argument("--clusters-c", type=int)
    p.add_argument("--density", type=float, default=0.5)
    p.add_argument("--noise-sd", type=float, default=0.0)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train a model and stream per-epoch metrics as JSON lines")
    _add_config_flags(p)
    p.add_argument("--checkpoint", help="write the trained parameters here")
    p.add_argument("--out", help="metrics file (default stdout)")
    p.add_argument("--sweep", help="train once per value, e.g. K=2..5")
    p.add_argument("--timing", action="store_true", help="add wall_s to metric records")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="recompute test metrics from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", help="dataset directory (default: the one recorded in the checkpoint)")
    p.add_argument("--out", help="metrics file (default stdout)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("config", help="print the resolved config or its schema")
    _add_config_flags(p)
    p.add_argument("--dump", action="store_true", help="print the resolved config (the default action)")
    p.add_argument("--schema", action="store_true", help="print the JSON schema of config files")
    p.set_defaults(func=cmd_config)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.backend:
            kernels.set_backend(args.backend)
        return args.func(args)
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except (KronographError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
