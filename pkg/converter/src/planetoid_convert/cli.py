"""Command-line wrapper: ``convert --src DIR --name NAME --out DIR``.

Prints the conversion report as ``key=value`` lines.  Exit codes:
0 success, 2 bad flags, 1 conversion failure.  A warn line goes to
standard error when the written edge count strays more than 10 from the
documented figure for the chosen dataset.
"""

from __future__ import annotations

import argparse
import sys

from .convert import DATASET_NAMES, DOCUMENTED_EDGES, ConvertError, convert_planetoid


def build_parser():
    parser = argparse.ArgumentParser(
        prog="convert",
        description="Convert distributed citation-network files to the "
                    "plain-text dataset format.",
    )
    parser.add_argument("--src", required=True, metavar="DIR",
                        help="directory holding the ind.<name>.* files")
    parser.add_argument("--name", required=True, choices=DATASET_NAMES,
                        help="which dataset to convert")
    parser.add_argument("--out", required=True, metavar="DIR",
                        help="output directory for the converted dataset")
    parser.add_argument("--row-normalize", action="store_true",
                        help="scale written feature rows to unit L1 norm")
    return parser


def run_cli(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code is None else int(exc.code)
    try:
        report = convert_planetoid(
            args.src, args.name, args.out, row_normalize=args.row_normalize
        )
    except (ConvertError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(report.as_text())
    documented = DOCUMENTED_EDGES[args.name]
    if abs(report.undirected_edges - documented) > 10:
        print(
            f"warning: wrote {report.undirected_edges} undirected edges, "
            f"documented count is {documented}",
            file=sys.stderr,
        )
    return 0


def main():
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
