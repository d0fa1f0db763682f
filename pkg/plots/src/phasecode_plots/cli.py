"""Command line: render figures from JSON figure specifications."""

from __future__ import annotations

import argparse
import sys

from .figspec import FigureSpec, SpecError
from .render import render


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="phasecode-plots",
        description="Render figures from phasecode CSV outputs.")
    parser.add_argument("specs", nargs="+",
                        help="JSON figure specification files")
    args = parser.parse_args(argv)
    status = 0
    for path in args.specs:
        try:
            spec = FigureSpec.from_file(path)
            for written in render(spec):
                print(f"wrote {written}")
        except SpecError as exc:
            print(f"error: {path}: {exc}", file=sys.stderr)
            status = 2
        except OSError as exc:
            print(f"error: {path}: {exc}", file=sys.stderr)
            status = 3
    return status


if __name__ == "__main__":
    sys.exit(main())
