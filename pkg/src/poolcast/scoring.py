"""Scoring rules and extremizing diagnostics for probability forecasts."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.stats import rankdata

from .errors import DomainError, UndefinedClassificationError, UndefinedMetricError


def _probs(p, what="forecast"):
    arr = np.asarray(p, dtype=float)
    if np.any(np.isnan(arr)) or np.any(arr <= 0) or np.any(arr >= 1):
        raise DomainError(f"{what} must lie strictly inside (0, 1); clip before scoring")
    return arr


def _outcomes(y):
    arr = np.asarray(y)
    if not np.all((arr == 0) | (arr == 1)):
        raise DomainError("outcomes must be 0 or 1")
    return arr


def _out(value, *likes):
    return float(value) if all(np.ndim(x) == 0 for x in likes) else value


def log_score(p, y):
    """Negatively oriented log score, -(y log p + (1 - y) log(1 - p))."""
    p = _probs(p)
    y = _outcomes(y)
    return _out(-np.where(y == 1, np.log(p), np.log1p(-p)), p, y)


def asym_log_score(p, y, c):
    """Log-score skill over baseline ``c``, normalized by the cost of beating it.

    ``(LS(c, y) - LS(p, y)) / LS(c, 1{p > c})``; ties ``p == c`` take
    indicator 0.  Positive means ``p`` beat the baseline on this outcome.
    """
    p = _probs(p)
    y = _outcomes(y)
    c = _probs(c, "baseline")
    side = (p > c).astype(int)
    num = log_score(c, y) - log_score(p, y)
    return _out(num / log_score(c, side), p, y, c)


def auc(p, y) -> float:
    """Area under the ROC curve via the Mann-Whitney rank sum; ties count 1/2."""
    p = np.asarray(p, dtype=float)
    y = _outcomes(y)
    n_pos = int(np.sum(y == 1))
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC needs at least one positive and one negative outcome")
    ranks = rankdata(p, method="average")
    u = ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


class Extremizing(str, Enum):
    EXTREMIZES = "extremizes"
    ANTI_EXTREMIZES = "anti-extremizes"


def classify_extremizing(p_hat: float, p_bar: float, p0: float) -> Extremizing:
    """Does ``p_hat`` lie farther than ``p_bar`` from ``p0``, on the same side?"""
    if p_bar == p0 or p_hat == p_bar:
        raise UndefinedClassificationError(
            f"extremizing is undefined when p_bar equals p0 or p_hat ({p_hat!r}, {p_bar!r}, {p0!r})"
        )
    same_side = np.sign(p_hat - p0) == np.sign(p_bar - p0)
    if same_side and abs(p_hat - p0) > abs(p_bar - p0):
        return Extremizing.EXTREMIZES
    return Extremizing.ANTI_EXTREMIZES


def extremizing_mask(p_hat, p_bar, p0):
    """Vectorized classifier: (extremizes, classifiable) boolean arrays."""
    p_hat = np.asarray(p_hat, dtype=float)
    p_bar = np.asarray(p_bar, dtype=float)
    valid = (p_bar != p0) & (p_hat != p_bar)
    ext = valid & (np.sign(p_hat - p0) == np.sign(p_bar - p0)) & (np.abs(p_hat - p0) > np.abs(p_bar - p0))
    return ext, valid


@dataclass(frozen=True)
class ExtremizingRate:
    rate: float
    classified: int
    excluded: int


def extremizing_rate(p_hat, p_bar, p0: float) -> ExtremizingRate:
    """Share of classifiable rows on which ``p_hat`` extremizes ``p_bar``."""
    ext, valid = extremizing_mask(p_hat, p_bar, p0)
    n = int(valid.sum())
    if n == 0:
        raise UndefinedMetricError("no row has p_bar != p0 and p_hat != p_bar; extremizing rate is undefined")
    return ExtremizingRate(float(ext.sum()) / n, n, int(valid.size - n))


@dataclass(frozen=True)
class PredictionSet:
    """Forecasts with outcomes and, optionally, the average report per row."""

    p: np.ndarray
    y: np.ndarray
    p_bar: np.ndarray | None = None
    p0: float | None = None

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        y = np.asarray(self.y)
        if p.ndim != 1 or p.shape != y.shape or p.size == 0:
            raise DomainError("a prediction set needs equally long, nonempty forecast and outcome vectors")
        _outcomes(y)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "y", y)
        if self.p_bar is not None:
            object.__setattr__(self, "p_bar", np.asarray(self.p_bar, dtype=float))

    def clipped(self, eps: float = 1e-9) -> np.ndarray:
        return np.clip(self.p, eps, 1.0 - eps)

    def scores(self, c: float, eps: float = 1e-9) -> dict:
        p = self.clipped(eps)
        return {
            "ls": float(np.mean(log_score(p, self.y))),
            "als": float(np.mean(asym_log_score(p, self.y, c))),
            "auc": auc(p, self.y),
        }
