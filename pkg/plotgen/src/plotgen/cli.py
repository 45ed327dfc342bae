"""plotgen command line: render figures from a sweep results directory."""

import argparse
import json
import sys
from pathlib import Path

from .core import PlotSpec, render, render_all


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plotgen", description="error-bar figures from sweep results")
    parser.add_argument("--results", required=True,
                        help="directory holding results.csv and manifest.json")
    parser.add_argument("--spec", default=None,
                        help="JSON plot spec (object or list); default: one "
                             "figure set per experiment in the manifest")
    parser.add_argument("--out", required=True, help="output directory")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.spec:
            with open(args.spec) as fh:
                doc = json.load(fh)
            specs = [PlotSpec.from_dict(d) for d in (doc if isinstance(doc, list) else [doc])]
            csv_path = Path(args.results) / "results.csv"
            written = [render(csv_path, spec, args.out) for spec in specs]
        else:
            written = render_all(args.results, args.out)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
