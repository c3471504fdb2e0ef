"""CLI: ``figures --in DIR --out DIR --fmt {png,svg}``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .render import SchemaError, render


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="figures",
        description="render benchmark CSVs into per-instance convergence panels")
    parser.add_argument("--in", dest="csv_dir", required=True,
                        help="directory holding the harness CSVs")
    parser.add_argument("--out", dest="out_dir", required=True,
                        help="directory for the rendered images")
    parser.add_argument("--fmt", choices=["png", "svg"], default="png")
    parser.add_argument("--mean", choices=["residual_sq", "residual"],
                        default="residual_sq",
                        help="quantity averaged over seeds")
    parser.add_argument("--self-test", action="store_true",
                        help="cross-check plotted means against an independent "
                             "recomputation before writing")
    args = parser.parse_args(argv)
    try:
        written = render(Path(args.csv_dir), Path(args.out_dir), args.fmt,
                         mean_of=args.mean, run_self_test=args.self_test)
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, AssertionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for path in written:
        print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
