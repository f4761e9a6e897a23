"""python -m nfaplots --dir DIR --figure fig3 --out fig3.png"""

from __future__ import annotations

import argparse
import sys

import matplotlib

matplotlib.use("Agg", force=True)

from . import __version__, figures
from .io import ArtifactError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nfaplots", description="render figures from nfa-lab artifacts"
    )
    parser.add_argument("--version", action="version", version=f"nfaplots {__version__}")
    parser.add_argument("--dir", required=True, help="artifact directory of an nfa-lab run")
    parser.add_argument(
        "--figure", required=True, help=f"one of: {', '.join(figures.FIGURES)}"
    )
    parser.add_argument("--out", required=True, help="output PNG path")
    parser.add_argument("--dpi", type=int, default=150)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        fig = figures.render(args.dir, args.figure)
    except KeyError as err:
        print(err.args[0], file=sys.stderr)
        return 2
    except ArtifactError as err:
        print(str(err), file=sys.stderr)
        return 2
    fig.savefig(args.out, dpi=args.dpi)
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
