"""Command-line entry point: ``moment-ensemble <subcommand> ...``.

Exit status: 0 success, 2 usage or input error, 3 numerical failure
(blow-up or feedback stall), 4 I/O error.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import io
from .ensemble import IntegrationError
from .moments import (
    TruncationError,
    check_hausdorff_l1,
    check_hausdorff_l2,
    compute_ensemble_moments,
    compute_output_moments,
    invert_moments,
    inversion_lattice,
    rescale_moments,
)
from .scenarios import PRESETS, StallError, load_config, run

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4
ENV_OUT = "MOMENT_ENSEMBLE_OUT"
DEFAULT_OUT = "moment_ensemble_out"


def _positive_float(token: str) -> float:
    try:
        val = float(token)
    except ValueError:
        raise argparse.ArgumentTypeError(f"malformed number {token!r}") from None
    if not np.isfinite(val) or val <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {token!r}")
    return val


def _float(token: str) -> float:
    try:
        val = float(token)
    except ValueError:
        raise argparse.ArgumentTypeError(f"malformed number {token!r}") from None
    if not np.isfinite(val):
        raise argparse.ArgumentTypeError(f"expected a finite number, got {token!r}")
    return val


def _natural(token: str) -> int:
    try:
        val = int(token)
    except ValueError:
        raise argparse.ArgumentTypeError(f"malformed integer {token!r}") from None
    if val < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {token!r}")
    return val


def _positive_int(token: str) -> int:
    val = _natural(token)
    if val == 0:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {token!r}")
    return val


def _common() -> argparse.ArgumentParser:
    # shared flags accepted before or after the subcommand
    p = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    p.add_argument("--out", metavar="DIR", help=f"output directory (default ${ENV_OUT} or ./{DEFAULT_OUT})")
    p.add_argument("--dt", type=_positive_float, help="integration step")
    p.add_argument("--T", type=_positive_float, help="horizon")
    p.add_argument("--grid-points", type=_positive_int, help="number of parameter grid nodes")
    p.add_argument("--quiet", action="store_true", help="write files only, nothing on stdout")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(
        prog="moment-ensemble", parents=[common],
        description="Moment-based analysis and feedback control of parameterized ensembles.")
    sub = parser.add_subparsers(dest="command", metavar="SUBCOMMAND")
    sub.required = True

    p = sub.add_parser("simulate", parents=[common], help="run a preset or YAML scenario")
    p.add_argument("scenario", help=f"preset ({', '.join(PRESETS)}) or config path")

    p = sub.add_parser("moments", parents=[common], help="moments of a profile CSV")
    p.add_argument("profile", help="CSV with header beta_1..beta_d,x_1..x_n")
    p.add_argument("--order", type=_natural, default=10)
    p.add_argument("--output-moments", action="store_true",
                   help="moments of the state distribution instead of ensemble moments")

    p = sub.add_parser("check-hausdorff", parents=[common], help="Hausdorff condition sweep")
    p.add_argument("moments", help="moments CSV (k_1..k_d,state_i,value) on the unit cube")
    p.add_argument("--up-to", type=_natural, default=10)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--l1", dest="norm", action="store_const", const="l1")
    g.add_argument("--l2", dest="norm", action="store_const", const="l2")
    p.set_defaults(norm="l2")

    p = sub.add_parser("invert", parents=[common], help="density estimate from unit-cube moments")
    p.add_argument("moments")
    p.add_argument("--grid", type=_positive_int, default=10)

    p = sub.add_parser("rescale", parents=[common], help="map [0,1] moments onto [a,b]")
    p.add_argument("moments")
    p.add_argument("--a", type=_float, required=True)
    p.add_argument("--b", type=_float, required=True)
    return parser


def parse_args(argv=None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "rescale" and not args.b > args.a:
        parser.error(f"b must exceed a (got --a {args.a} --b {args.b})")
    for name, default in (("out", None), ("dt", None), ("T", None),
                          ("grid_points", None), ("quiet", False)):
        if not hasattr(args, name):
            setattr(args, name, default)
    return args


def output_dir(args) -> Path:
    return Path(args.out or os.environ.get(ENV_OUT) or DEFAULT_OUT)


def _say(args, *lines: str) -> None:
    if not args.quiet:
        for line in lines:
            print(line)


def cmd_simulate(args) -> int:
    cfg = load_config(args.scenario)
    overrides = {}
    if args.dt is not None:
        overrides["dt"] = args.dt
    if args.T is not None:
        overrides["T"] = args.T
    if args.grid_points is not None:
        overrides["grid_points"] = args.grid_points
    out = output_dir(args)
    if args.out is None and os.environ.get(ENV_OUT) is None:
        out = out / cfg.name
    overrides["output_dir"] = str(out)
    cfg = cfg.replace(**overrides)
    result = run(cfg)
    if cfg.kind == "output_moment_demo":
        _say(args, f"scenario {cfg.name}",
             f"radical_distance {io.fmt(result.radical_distance)}",
             f"l2_distance {io.fmt(result.l2_distance)}")
    else:
        lines = [f"scenario {cfg.name}", f"final_sup_error {io.fmt(result.final_sup_error)}",
                 f"final_V {io.fmt(result.V_trace[-1])}",
                 f"max_V_increase {io.fmt(result.max_V_increase)}"]
        for key, val in result.extras.items():
            if isinstance(val, (int, float)):
                lines.append(f"{key} {io.fmt(val)}")
            elif val is None:
                lines.append(f"{key} none")
        _say(args, *lines)
    _say(args, f"wrote {len(result.files)} files to {out}")
    return EXIT_OK


def cmd_moments(args) -> int:
    grid, profile = io.load_profile_csv(args.profile)
    if args.output_moments:
        m = compute_output_moments(profile, grid, args.order)
    else:
        m = compute_ensemble_moments(profile, grid, args.order)
    out = output_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    path = io.write_moments_csv(m, out / "moments.csv")
    _say(args, path.read_text().rstrip("\n"))
    return EXIT_OK


def cmd_check(args) -> int:
    m = io.read_moments_csv(args.moments)
    check = check_hausdorff_l1 if args.norm == "l1" else check_hausdorff_l2
    report = check(m, args.up_to)
    out = output_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    header = [f"n_{j + 1}" for j in range(m.dim_param)] + [f"value_{i + 1}" for i in range(m.dim_state)]
    io.write_series_csv(header, (list(n) + list(v) for n, v in report.per_n),
                        out / f"hausdorff_{report.norm}.csv")
    _say(args, f"norm {report.norm}", f"up_to {report.up_to}",
         f"max_value {io.fmt(report.max_value)}")
    return EXIT_OK


def cmd_invert(args) -> int:
    m = io.read_moments_csv(args.moments)
    profile = invert_moments(m, args.grid)
    lattice = inversion_lattice(m.dim_param, args.grid)
    out = output_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    header = [f"beta_{j + 1}" for j in range(m.dim_param)] + [f"x_{i + 1}" for i in range(profile.n)]
    path = io.write_series_csv(header, (list(b) + list(x) for b, x in zip(lattice, profile.states)),
                               out / "inverted_profile.csv")
    _say(args, path.read_text().rstrip("\n"))
    return EXIT_OK


def cmd_rescale(args) -> int:
    m = io.read_moments_csv(args.moments)
    r = rescale_moments(m, args.a, args.b)
    out = output_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    path = io.write_moments_csv(r, out / "rescaled_moments.csv")
    _say(args, path.read_text().rstrip("\n"))
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "moments": cmd_moments, "check-hausdorff": cmd_check,
            "invert": cmd_invert, "rescale": cmd_rescale}


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (IntegrationError, StallError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (TruncationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
