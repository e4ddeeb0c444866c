"""Command line entry point: ``peel {simulate,detect,comm-cost,bench,gen-data}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from peel import data as datamod
from peel.config import load_config
from peel.errors import ConfigurationError, StageError
from peel.harness import bench, comm_cost, detect_file, run_experiment, write_bench, write_report

log = logging.getLogger("peel")


def _simulate(args) -> int:
    cfg = load_config(args.config)
    report = run_experiment(cfg)
    out = write_report(report, args.output_dir)
    for row in report.detection:
        log.info("trial detection: estimated ratio %.4f, precision %.4f, recall %.4f",
                 row["estimated_ratio"], row["precision"], row["recall"])
    print(out)
    return 0


def _detect(args) -> int:
    cfg = load_config(args.config)
    summaries = detect_file(cfg, args.input, args.output_dir or cfg.run.output_dir)
    print(json.dumps(summaries))
    return 0


def _comm_cost(args) -> int:
    for k in args.k:
        print(f"{k},{comm_cost(k)}")
    return 0


def _bench(args) -> int:
    cfg = load_config(args.config)
    rows = bench(cfg, iterations=args.iterations, warmup=args.warmup)
    path = write_bench(rows, cfg, args.output_dir or cfg.run.output_dir)
    for r in rows:
        print(f"{r['stage']} k={r['k']}: mean {r['mean_us']:.2f} us, p99 {r['p99_us']:.2f} us")
    print(path)
    return 0


def _gen_data(args) -> int:
    rng = np.random.default_rng(args.seed)
    freqs = [float(v) for v in args.frequencies.split(",")] if args.frequencies else None
    means = [float(v) for v in args.means.split(",")] if args.means else None
    cols = datamod.write_synthetic_csv(args.output, args.n, args.k, args.role, rng, freqs, means)
    print(f"{args.output}: {args.n} rows, columns {','.join(cols)}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="peel", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run the full pipeline and write report tables")
    p.add_argument("config")
    p.add_argument("-o", "--output-dir", default=None, help="overrides run.output_dir")
    p.set_defaults(func=_simulate)

    p = sub.add_parser("detect", help="classify a saved transmitted.csv")
    p.add_argument("config")
    p.add_argument("input")
    p.add_argument("-o", "--output-dir", default=None)
    p.set_defaults(func=_detect)

    p = sub.add_parser("comm-cost", help="bits per report, (k-1) * ceil(log2(k-1))")
    p.add_argument("k", type=int, nargs="+")
    p.set_defaults(func=_comm_cost)

    p = sub.add_parser("bench", help="time the client encode path")
    p.add_argument("config")
    p.add_argument("--iterations", type=int, default=100_000)
    p.add_argument("--warmup", type=int, default=1_000)
    p.add_argument("-o", "--output-dir", default=None)
    p.set_defaults(func=_bench)

    p = sub.add_parser("gen-data", help="write a synthetic dataset")
    p.add_argument("output")
    p.add_argument("--role", choices=("categorical", "numeric"), required=True)
    p.add_argument("-n", type=int, default=10_000)
    p.add_argument("-k", type=int, required=True)
    p.add_argument("--frequencies", default=None, help="comma-separated category frequencies")
    p.add_argument("--means", default=None, help="comma-separated attribute means")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_gen_data)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ConfigurationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
