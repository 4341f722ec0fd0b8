"""Cross-validated stacking harness and report rendering.

One fold assignment drives the whole run.  For every method and fold the
method is fit on the other folds and predicts the held-out fold; scores use
the training complement's base rate as the asymmetric-log-score baseline.
"""

from __future__ import annotations

import csv
import io
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .distributions import LinkFamily, reg_inc_beta
from .errors import DomainError, NumericError, PoolcastError, SchemaError
from .fitting import (
    DEFAULT_GRID,
    FitOptions,
    TrainingSet,
    fit_blop,
    fit_glm,
    fit_olop,
    fit_scalar,
    scalar_feature,
    select_power,
)
from .folds import FoldAssignment, split_folds
from .gp_ensemble import FittedAggregator, apply_fitted
from .scoring import asym_log_score, auc, extremizing_rate, log_score

__all__ = ["FoldAssignment", "split_folds", "cross_validate", "render_report", "ScoreTable", "MethodResult"]

log = logging.getLogger(__name__)

FIT_METHODS = ("avg", "olop", "blop", "klop", "logit", "glm-grid")
DEFAULT_METHODS = ("avg", "olop", "blop", "logit", "glm-grid")


def parse_link(text: str) -> LinkFamily:
    """``normal``, ``logistic``, ``ep9`` / ``ep:9`` / ``ep(9)``."""
    t = text.strip().lower()
    if t in ("normal", "probit"):
        return LinkFamily.normal()
    if t in ("logistic", "logit"):
        return LinkFamily.logistic()
    if t.startswith("ep"):
        rest = t[2:].strip(":()")
        try:
            return LinkFamily.exponential_power(float(rest))
        except ValueError:
            pass
    raise DomainError(f"unknown link {text!r}; use normal, logistic or ep<power>")


def check_methods(methods, names) -> list:
    out = []
    for m in methods:
        if m in names or m in FIT_METHODS:
            out.append(m)
        elif m.startswith("glm:"):
            parse_link(m[4:])
            out.append(m)
        else:
            raise DomainError(
                f"unknown method {m!r}; choose from {', '.join(FIT_METHODS)}, glm:<link> or a data column"
            )
    if len(set(out)) != len(out):
        raise DomainError("methods must not repeat")
    return out


# ---------------------------------------------------------------------------
# per-fold fitting
# ---------------------------------------------------------------------------


def _fit_predict(method: str, train: TrainingSet, test: np.ndarray, opts: FitOptions) -> np.ndarray:
    """Fit ``method`` on ``train`` and return predictions for ``test`` reports."""
    P = np.clip(test, opts.clip, 1.0 - opts.clip)
    if method in train.names:
        return P[:, train.names.index(method)]
    if method == "avg":
        return P.mean(axis=1)
    if method == "olop":
        return P @ fit_olop(train, opts)
    if method == "blop":
        fit = fit_blop(train, opts)
        return reg_inc_beta(fit.a, fit.b, P @ fit.weights)
    if method in ("klop", "logit"):
        a = fit_scalar(method, train, opts)
        s = scalar_feature(method, TrainingSet(np.zeros(P.shape[0], dtype=np.int8), P, train.names), opts.clip)
        return special.expit(a * s)
    if method.startswith("glm:"):
        model = fit_glm(parse_link(method[4:]), train, opts)
        return apply_fitted(model, P)
    raise DomainError(f"unknown method {method!r}")


@dataclass
class FoldScore:
    ls: float
    als: float
    auc: float | None
    n: int


@dataclass
class MethodResult:
    name: str
    oof: np.ndarray
    fold_scores: dict = field(default_factory=dict)
    failures: dict = field(default_factory=dict)

    def ok_rows(self, folds: FoldAssignment) -> np.ndarray:
        fold_of = np.asarray(folds.fold_of)
        return ~np.isin(fold_of, list(self.failures))

    @property
    def available(self) -> bool:
        return bool(self.fold_scores)


@dataclass
class GridSummary:
    eta: float
    model: FittedAggregator
    grid_results: list
    extremize: object | None = None


@dataclass
class ScoreTable:
    methods: list
    folds: FoldAssignment
    y: np.ndarray
    als_rows: dict
    grid: GridSummary | None = None

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def base_rate(self) -> float:
        return float(self.y.mean())

    def summary(self, name: str) -> dict | None:
        """Mean LS and ALS over all scored out-of-fold rows, mean per-fold AUC."""
        res = self.result(name)
        if not res.available:
            return None
        rows = res.ok_rows(self.folds)
        p = res.oof[rows]
        y = self.y[rows]
        aucs = [s.auc for s in res.fold_scores.values() if s.auc is not None]
        return {
            "ls": float(np.mean(log_score(p, y))),
            "als": float(np.mean(self.als_rows[name][rows])),
            "auc": float(np.mean(aucs)) if aucs else float("nan"),
        }

    def result(self, name: str) -> MethodResult:
        for m in self.methods:
            if m.name == name:
                return m
        raise KeyError(name)


def _score_fold(p, y, c) -> FoldScore:
    try:
        a = auc(p, y)
    except PoolcastError:
        a = None
    return FoldScore(
        float(np.mean(log_score(p, y))), float(np.mean(asym_log_score(p, y, c))), a, int(y.size)
    )


def cross_validate(
    data: TrainingSet,
    methods,
    folds: FoldAssignment,
    opts: FitOptions = FitOptions(),
    *,
    grid=DEFAULT_GRID,
    jobs: int = 1,
) -> ScoreTable:
    """Out-of-fold fitting and scoring of every method on every fold."""
    if folds.n != data.n:
        raise DomainError(f"fold assignment covers {folds.n} rows but data has {data.n}")
    methods = check_methods(methods, data.names)
    fold_ids = list(range(folds.k))
    splits = [(folds.complement(f), folds.indices(f)) for f in fold_ids]
    # a one-class complement gives a 0 or 1 baseline; clip it like any forecast
    base_rates = [float(np.clip(data.y[tr].mean(), opts.clip, 1.0 - opts.clip)) for tr, _ in splits]

    def run(task):
        method, f = task
        train, test = splits[f]
        try:
            pred = _fit_predict(method, data.subset(train), data.reports[test], opts)
            return task, np.clip(pred, opts.clip, 1.0 - opts.clip), None
        except (NumericError, SchemaError, DomainError) as exc:
            log.info("%s failed on fold %d: %s", method, f, exc)
            return task, None, f"{type(exc).__name__}: {exc}"

    def run_grid():
        try:
            return select_power(grid, data, folds, opts, jobs=1), None
        except (NumericError, SchemaError, DomainError) as exc:
            return None, f"{type(exc).__name__}: {exc}"

    tasks = [(m, f) for m in methods if m != "glm-grid" for f in fold_ids]
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        grid_future = pool.submit(run_grid) if "glm-grid" in methods else None
        outcomes = list(pool.map(run, tasks))
        grid_out = grid_future.result() if grid_future is not None else None

    results = {m: MethodResult(m, np.full(data.n, np.nan)) for m in methods}
    for (method, f), pred, err in outcomes:
        if err is None:
            results[method].oof[splits[f][1]] = pred
        else:
            results[method].failures[f] = err

    grid_summary = None
    if grid_out is not None:
        selection, err = grid_out
        res = results["glm-grid"]
        if selection is None:
            res.failures = {f: err for f in fold_ids}
        else:
            chosen = next(r for r in selection.grid_results if r["eta"] == selection.eta)
            res.oof[:] = chosen["oof"]
            grid_summary = GridSummary(selection.eta, selection.model, selection.grid_results)

    als_rows = {}
    for m in methods:
        res = results[m]
        als = np.full(data.n, np.nan)
        for f in fold_ids:
            if f in res.failures:
                continue
            test = splits[f][1]
            p, y = res.oof[test], data.y[test]
            res.fold_scores[f] = _score_fold(p, y, base_rates[f])
            als[test] = asym_log_score(p, y, base_rates[f])
        als_rows[m] = als

    if grid_summary is not None:
        p_bar = np.clip(data.reports, opts.clip, 1.0 - opts.clip).mean(axis=1)
        p0 = np.empty(data.n)
        for f in fold_ids:
            p0[splits[f][1]] = base_rates[f]
        try:
            grid_summary.extremize = extremizing_rate(results["glm-grid"].oof, p_bar, p0)
        except PoolcastError:
            grid_summary.extremize = None

    return ScoreTable([results[m] for m in methods], folds, data.y.copy(), als_rows, grid_summary)


# ---------------------------------------------------------------------------
# rendering
# ---------------------------------------------------------------------------


def _f4(x) -> str:
    return "nan" if x is None or not np.isfinite(x) else f"{x:.4f}"


def _table2_rows(table: ScoreTable) -> list:
    g = table.grid
    rows = [("Constant", _f4(g.model.intercept))]
    for name, value in g.model.coefficients.items():
        rows.append((f"Coefficient {name}", _f4(value)))
    rows.append(("Power parameter eta*", f"{g.eta:g}"))
    ext = "n/a" if g.extremize is None else f"{100.0 * g.extremize.rate:.2f}%"
    rows.append(("Extremizes p_bar", ext))
    rows.append(("Base rate", _f4(table.base_rate)))
    rows.append(("No. of observations", str(table.n)))
    return rows


def render_report(table: ScoreTable, fmt: str = "markdown") -> str:
    """Methods x (LS, ALS, AUC) grid, followed by the glm-grid final estimate."""
    if not table.methods:
        raise DomainError("cannot render an empty score table")
    if fmt not in ("markdown", "csv"):
        raise DomainError(f"unknown report format {fmt!r}; use markdown or csv")
    lines = []
    notes = []
    grid_rows = _table2_rows(table) if table.grid is not None else []
    if fmt == "markdown":
        lines.append(f"Out-of-fold scores ({table.folds.k} folds, {table.n} rows)")
        lines.append("")
        lines.append("| Method | LS | ALS | AUC |")
        lines.append("| --- | ---: | ---: | ---: |")
    else:
        lines.append("method,ls,als,auc")
    for res in table.methods:
        s = table.summary(res.name)
        cells = ["nan", "nan", "nan"] if s is None else [_f4(s["ls"]), _f4(s["als"]), _f4(s["auc"])]
        if fmt == "markdown":
            lines.append(f"| {res.name} | " + " | ".join(cells) + " |")
        else:
            lines.append(",".join([res.name] + cells))
        for f, reason in sorted(res.failures.items()):
            notes.append(f"{res.name} fold {f}: {reason}")
    if grid_rows:
        lines.append("")
        if fmt == "markdown":
            lines.append("| Final estimate (glm-grid) | Value |")
            lines.append("| --- | ---: |")
            lines.extend(f"| {k} | {v} |" for k, v in grid_rows)
        else:
            lines.append("quantity,value")
            lines.extend(f"{k},{v}" for k, v in grid_rows)
    if notes:
        lines.append("")
        if fmt == "markdown":
            lines.append("Failures (excluded from averages):")
            lines.append("")
            lines.extend(f"- {n}" for n in notes)
        else:
            lines.append("failure")
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            for n in notes:
                w.writerow([n])
            lines.append(buf.getvalue().rstrip("\n"))
    return "\n".join(lines) + "\n"
