"""Command-line entry point.

Exit status: 0 on success, 2 for usage errors, 3 for unreadable or
malformed data, 4 for numerical failures (separation, non-convergence,
infeasible reports).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .datafiles import read_data, read_model, read_table, write_data, write_model, write_table
from .distributions import round_interior
from .errors import DomainError, NumericError, SchemaError, UndefinedMetricError, UnsupportedVariantError
from .evaluation import DEFAULT_METHODS, cross_validate, parse_link, render_report
from .figures import FIGURES, figure_data
from .fitting import DEFAULT_GRID, FitOptions, fit_glm, select_power
from .folds import split_folds
from .gp_ensemble import apply_fitted
from .scoring import asym_log_score, auc, extremizing_rate, log_score
from .simulation import SimConfig, simulate

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

log = logging.getLogger("poolcast")


class UsageError(Exception):
    pass


def _csv_floats(text: str) -> tuple:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _csv_words(text: str) -> tuple:
    return tuple(v.strip() for v in text.split(",") if v.strip())


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


def _readable(path: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise SchemaError(f"input file {p} does not exist or is not a file")
    return p


def _writable(path: str) -> Path:
    p = Path(path)
    parent = p.parent if str(p.parent) else Path(".")
    if not parent.is_dir():
        raise UsageError(f"output directory {parent} does not exist")
    if p.is_dir():
        raise UsageError(f"output path {p} is a directory")
    if not os.access(parent, os.W_OK) or (p.exists() and not os.access(p, os.W_OK)):
        raise UsageError(f"output path {p} is not writable")
    return p


def _fit_options(args) -> FitOptions:
    return FitOptions(
        gtol=args.gtol, max_iter=args.max_iter, restarts=args.restarts, clip=args.clip, seed=args.seed
    )


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    cfg_path = _readable(args.config)
    out = _writable(args.out)
    try:
        cfg = json.loads(cfg_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{cfg_path}: not valid JSON ({exc.msg})") from exc
    if not isinstance(cfg, dict):
        raise SchemaError(f"{cfg_path}: expected a JSON object")
    config = SimConfig.from_dict(cfg, rows=args.rows, seed=args.seed, kind=args.gen)
    res = simulate(config)
    write_data(out, res.data, res.oracle)
    log.info("wrote %d rows to %s", res.data.n, out)
    return EXIT_OK


def cmd_fit(args) -> int:
    data_path = _readable(args.data)
    out = _writable(args.out)
    data, _ = read_data(data_path)
    opts = _fit_options(args)
    training = {"n": data.n, "base_rate": data.base_rate, "seed": args.seed}
    if args.power_grid is not None and (args.link is not None or args.power is not None):
        raise UsageError("--power-grid cannot be combined with --link or --power")
    if args.power_grid is None and (args.link is not None or args.power is not None):
        family = args.link or "ep"
        if family == "ep":
            if args.power is None:
                raise UsageError("--link ep needs --power")
            link = parse_link(f"ep{args.power}")
        else:
            if args.power is not None:
                raise UsageError("--power only applies to --link ep")
            link = parse_link(family)
        model = fit_glm(link, data, opts)
        write_model(out, model, training=training)
        return EXIT_OK
    grid = args.power_grid if args.power_grid is not None else DEFAULT_GRID
    folds = split_folds(data.n, args.folds, args.seed)
    sel = select_power(grid, data, folds, opts, jobs=args.jobs)
    write_model(out, sel.model, training=training, grid_results=sel.grid_results)
    log.info("selected eta* = %g", sel.eta)
    return EXIT_OK


def cmd_predict(args) -> int:
    model_path = _readable(args.model)
    data_path = _readable(args.data)
    out = _writable(args.out)
    model = read_model(model_path)
    header, cols = read_table(data_path)
    missing = [n for n in model.names if n not in cols]
    if missing:
        raise SchemaError(f"{data_path}: missing expert columns required by the model: {', '.join(missing)}")
    reports = np.column_stack([cols[n] for n in model.names])
    if np.any(np.isnan(reports)) or np.any(reports < 0) or np.any(reports > 1):
        raise SchemaError(f"{data_path}: expert columns must hold probabilities in [0, 1]")
    pred = round_interior(apply_fitted(model, reports))
    result = {"pred": pred, "p_bar": np.clip(reports, model.clip, 1.0 - model.clip).mean(axis=1)}
    if "y" in cols:
        y = cols["y"]
        if not np.all((y == 0) | (y == 1)):
            raise SchemaError(f"{data_path}: column 'y' must contain only 0 and 1")
        result["y"] = y
    write_table(out, result)
    return EXIT_OK


def cmd_cv(args) -> int:
    data_path = _readable(args.data)
    out = _writable(args.report) if args.report else None
    data, _ = read_data(data_path)
    methods = args.methods if args.methods is not None else tuple(data.names) + DEFAULT_METHODS
    folds = split_folds(data.n, args.folds, args.seed, stratify=data.y if args.stratify else None)
    grid = args.power_grid if args.power_grid is not None else DEFAULT_GRID
    table = cross_validate(data, methods, folds, _fit_options(args), grid=grid, jobs=args.jobs)
    text = render_report(table, args.format)
    if out is None:
        sys.stdout.write(text)
    else:
        out.write_text(text, encoding="utf-8")
    return EXIT_OK


def _read_preds(path, need: tuple) -> dict:
    _, cols = read_table(_readable(path))
    for c in need:
        if c not in cols:
            raise SchemaError(f"{path}: required column {c!r} is missing")
    p = cols["pred"]
    if np.any(np.isnan(p)) or np.any(p < 0) or np.any(p > 1):
        raise SchemaError(f"{path}: column 'pred' must hold probabilities in [0, 1]")
    return cols


def cmd_score(args) -> int:
    cols = _read_preds(args.preds, ("pred", "y"))
    y = cols["y"]
    if not np.all((y == 0) | (y == 1)):
        raise SchemaError(f"{args.preds}: column 'y' must contain only 0 and 1")
    c = float(np.mean(y)) if args.base_rate is None else args.base_rate
    p = np.clip(cols["pred"], args.clip, 1.0 - args.clip)
    ls = float(np.mean(log_score(p, y)))
    als = float(np.mean(asym_log_score(p, y, c)))
    try:
        a = f"{auc(p, y):.4f}"
    except UndefinedMetricError:
        a = "nan"
    print(f"n,{y.size}")
    print(f"base_rate,{c:.4f}")
    print(f"ls,{ls:.4f}")
    print(f"als,{als:.4f}")
    print(f"auc,{a}")
    return EXIT_OK


def cmd_extremize_rate(args) -> int:
    cols = _read_preds(args.preds, ("pred", "p_bar"))
    res = extremizing_rate(cols["pred"], cols["p_bar"], args.prior)
    print(f"rate,{res.rate:.4f}")
    print(f"classified,{res.classified}")
    print(f"excluded,{res.excluded}")
    return EXIT_OK


def cmd_plot_data(args) -> int:
    out = _writable(args.out)
    write_table(out, figure_data(args.figure, args.points), int_columns=())
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


class _HelpFormatter(argparse.ArgumentDefaultsHelpFormatter):
    def _get_help_string(self, action):
        text = action.help or ""
        if "default" in text or action.default is None or isinstance(action, argparse._StoreTrueAction):
            return text
        return super()._get_help_string(action)


def _add_fit_flags(p):
    p.add_argument("--gtol", type=float, default=1e-8, help="gradient tolerance")
    p.add_argument("--max-iter", type=_positive_int, default=500, help="optimizer iteration cap")
    p.add_argument("--restarts", type=int, default=3, help="random restarts when every deterministic start fails")
    p.add_argument("--clip", type=float, default=1e-9, help="probability clipping epsilon")


def build_parser() -> argparse.ArgumentParser:
    fmt = _HelpFormatter
    parser = argparse.ArgumentParser(prog="poolcast", description="Aggregate probability forecasts.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="master seed for every random stage")
    common.add_argument("--jobs", type=_positive_int, default=1, help="worker cap; results do not depend on it")
    sub = parser.add_subparsers(dest="command", metavar="command", required=True)

    p = sub.add_parser("simulate", parents=[common], formatter_class=fmt, help="generate a synthetic data file")
    p.add_argument("--gen", choices=("conjugate", "latent"), default=None, help="generator (default: the config's 'generator' field)")
    p.add_argument("--config", required=True, help="JSON generator settings")
    p.add_argument("--rows", type=_positive_int, required=True, help="number of rows")
    p.add_argument("--out", required=True, help="output data file")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", parents=[common], formatter_class=fmt, help="fit a generalized probit aggregator")
    p.add_argument("--data", required=True, help="training data file")
    p.add_argument("--link", choices=("ep", "normal", "logistic"), default=None, help="fixed link family")
    p.add_argument("--power", type=float, default=None, help="exponential-power exponent for --link ep")
    p.add_argument("--power-grid", type=_csv_floats, default=None, help="comma-separated exponents to select from (default grid: %s)" % ",".join(f"{g:g}" for g in DEFAULT_GRID))
    p.add_argument("--folds", type=int, default=10, help="folds used for power selection")
    p.add_argument("--out", required=True, help="output model file")
    _add_fit_flags(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", parents=[common], formatter_class=fmt, help="apply a fitted model")
    p.add_argument("--model", required=True, help="model file written by fit")
    p.add_argument("--data", required=True, help="data file with the model's expert columns")
    p.add_argument("--out", required=True, help="output predictions file")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("cv", parents=[common], formatter_class=fmt, help="cross-validate aggregation methods")
    p.add_argument("--data", required=True, help="data file")
    p.add_argument("--methods", type=_csv_words, default=None, help="comma-separated methods (default: every p_ column, then %s)" % ",".join(DEFAULT_METHODS))
    p.add_argument("--folds", type=int, default=10, help="number of folds")
    p.add_argument("--stratify", action="store_true", help="keep the class ratio equal across folds")
    p.add_argument("--power-grid", type=_csv_floats, default=None, help="exponents scanned by glm-grid (default: %s)" % ",".join(f"{g:g}" for g in DEFAULT_GRID))
    p.add_argument("--report", default=None, help="output report file; standard output when omitted")
    p.add_argument("--format", choices=("markdown", "csv"), default="markdown", help="report format")
    _add_fit_flags(p)
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("score", parents=[common], formatter_class=fmt, help="score a predictions file")
    p.add_argument("--preds", required=True, help="file with 'pred' and 'y' columns")
    p.add_argument("--base-rate", type=float, default=None, help="ALS baseline (default: mean of y)")
    p.add_argument("--clip", type=float, default=1e-9, help="probability clipping epsilon")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("extremize-rate", parents=[common], formatter_class=fmt, help="share of rows where pred extremizes p_bar")
    p.add_argument("--preds", required=True, help="file with 'pred' and 'p_bar' columns")
    p.add_argument("--prior", type=float, required=True, help="prior-predictive probability p0")
    p.set_defaults(func=cmd_extremize_rate)

    p = sub.add_parser("plot-data", parents=[common], formatter_class=fmt, help="tabulate an illustrative figure")
    p.add_argument("--figure", choices=FIGURES, required=True, help="figure id")
    p.add_argument("--points", type=_positive_int, default=99, help="grid size for p_2")
    p.add_argument("--out", required=True, help="output file")
    p.set_defaults(func=cmd_plot_data)
    return parser


def _configure_logging():
    level = os.environ.get("POOLCAST_LOG", "error").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    if level not in levels:
        raise UsageError(f"POOLCAST_LOG must be one of error, info, debug; got {level!r}")
    logging.basicConfig(level=levels[level], format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        _configure_logging()
        return args.func(args)
    except UsageError as exc:
        print(f"poolcast {args.command}: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SchemaError, UndefinedMetricError) as exc:
        print(f"poolcast {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"poolcast {args.command}: numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DomainError, UnsupportedVariantError) as exc:
        print(f"poolcast {args.command}: invalid argument: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
