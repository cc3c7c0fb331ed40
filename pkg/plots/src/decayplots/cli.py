"""decayplots render --config <figure spec JSON> --out <dir>"""

from __future__ import annotations

import argparse
import sys

from .figures import FigureSpec, SchemaError, render


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="decayplots",
                                     description="Decay figures from simulation artifacts")
    sub = parser.add_subparsers(dest="command", required=True)
    render_p = sub.add_parser("render", help="render the panels of a figure spec")
    render_p.add_argument("--config", required=True, help="figure spec JSON")
    render_p.add_argument("--out", required=True, help="output directory")
    args = parser.parse_args(argv)
    try:
        spec = FigureSpec.from_json(args.config)
        written = render(spec, args.out)
    except (SchemaError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
