"""``annealbench generate|solve|analyze|plot --config <path> [--out <dir>]``.

Exit codes: 0 success, 1 sweep truncated, 2 config error, 3 data error,
4 at least one scaling fit refused (all other outputs are still written).
"""
import argparse
import logging
import os
import sys

from .config import ExperimentConfig
from .exceptions import ConfigError, DataError, InvalidArgumentError
from .metrics import read_curves
from .pipeline import cmd_analyze, cmd_generate, cmd_solve, read_fits
from .plotting import group_fixed_t, render_svg
from .scaling import read_envelopes

EXIT_OK, EXIT_TRUNCATED, EXIT_CONFIG, EXIT_DATA, EXIT_REFUSED = 0, 1, 2, 3, 4

log = logging.getLogger("annealbench")


def cmd_plot(out):
    needed = [os.path.join(out, f) for f in ("curves.csv", "envelope.csv", "fits.txt")]
    missing = [p for p in needed if not os.path.exists(p)]
    if missing:
        raise DataError("missing analysis output(s): " + ", ".join(missing) + " (run 'analyze' first)")
    curves = read_curves(needed[0])
    envelopes = read_envelopes(needed[1])
    fits = read_fits(needed[2])
    os.makedirs(os.path.join(out, "plots"), exist_ok=True)
    paths = []
    for (solver, cls), fixed in sorted(group_fixed_t(curves).items()):
        svg = render_svg(fixed, envelopes.get((solver, cls)), fits.get((solver, cls)), f"{solver} / {cls}")
        path = os.path.join(out, "plots", f"{solver.lower()}_{cls.lower()}.svg")
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(svg)
        paths.append(path)
    return paths


def build_parser():
    parser = argparse.ArgumentParser(prog="annealbench", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=["generate", "solve", "analyze", "plot"])
    parser.add_argument("--config", required=True, help="key = value experiment config")
    parser.add_argument("--out", help="output directory (overrides output_dir)")
    parser.add_argument("--log", action="append", help="run log(s) to analyze; default <out>/runs.csv")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = ExperimentConfig.from_file(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out or cfg.output_dir
    try:
        if args.command == "generate":
            paths = cmd_generate(cfg, out)
            print(f"wrote {len(paths)} instance files to {os.path.join(out, 'instances')}")
        elif args.command == "solve":
            path, runs = cmd_solve(cfg, out)
            print(f"wrote {len(runs)} run records to {path}")
            if runs.truncated:
                print(f"sweep truncated ({runs.reason}); log is partial", file=sys.stderr)
                return EXIT_TRUNCATED
        elif args.command == "analyze":
            report = cmd_analyze(cfg, out, args.log)
            print(f"wrote analysis to {out}")
            if report.refused:
                for s in report.refused:
                    print(f"refused fit for {s.solver.value}/{s.problem_class.value}: {s.refusal}", file=sys.stderr)
                return EXIT_REFUSED
        else:
            paths = cmd_plot(out)
            print(f"wrote {len(paths)} plot(s) to {os.path.join(out, 'plots')}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, InvalidArgumentError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
