"""Maximum-likelihood fitting of ensembles and benchmark pools.

All objectives are the mean negative Bernoulli log-likelihood over the
training rows, minimized with the in-repo BFGS routine.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .distributions import LinkFamily, beta_logpdf, reg_inc_beta
from .errors import ConvergenceError, DomainError, NumericError, SchemaError, SeparationError
from .folds import FoldAssignment
from .gp_ensemble import FittedAggregator
from .optimize import OptimResult, bfgs, golden_section
from .rng import Stream

log = logging.getLogger(__name__)

DEFAULT_GRID = (1.0, 2.0, 3.0, 4.0, 6.0, 9.0, 12.0, 16.0, 25.0, 40.0, 64.0)
SEPARATION_NORM = 1e4
SEPARATION_RAY_NORM = 100.0
SCALAR_UPPER = 100.0
_TINY = 1e-300


@dataclass(eq=False)
class TrainingSet:
    """Binary outcomes with one column of expert probabilities per expert."""

    y: np.ndarray
    reports: np.ndarray
    names: tuple = ()

    def __post_init__(self):
        y = np.asarray(self.y)
        reports = np.asarray(self.reports, dtype=float)
        if reports.ndim == 1:
            reports = reports[:, None]
        if y.ndim != 1 or reports.ndim != 2 or reports.shape[0] != y.size:
            raise SchemaError(f"outcomes {y.shape} and reports {reports.shape} do not line up")
        if y.size == 0:
            raise SchemaError("training set is empty")
        if not np.all((y == 0) | (y == 1)):
            raise SchemaError("outcomes must be 0 or 1")
        if np.any(np.isnan(reports)) or np.any(reports < 0) or np.any(reports > 1):
            raise SchemaError("reports must be probabilities in [0, 1]")
        names = tuple(self.names) or tuple(f"p_{i + 1}" for i in range(reports.shape[1]))
        if len(names) != reports.shape[1] or len(set(names)) != len(names):
            raise SchemaError(f"need {reports.shape[1]} distinct expert names, got {names!r}")
        self.y = y.astype(np.int8)
        self.reports = reports
        self.names = names

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def k(self) -> int:
        return self.reports.shape[1]

    @property
    def base_rate(self) -> float:
        return float(self.y.mean())

    def require_both_classes(self):
        s = int(self.y.sum())
        if s == 0 or s == self.n:
            raise SchemaError("training data needs at least one positive and one negative outcome")

    def subset(self, rows) -> "TrainingSet":
        rows = np.asarray(rows)
        return TrainingSet(self.y[rows], self.reports[rows], self.names)


@dataclass(frozen=True)
class FitOptions:
    gtol: float = 1e-8
    max_iter: int = 500
    restarts: int = 3
    clip: float = 1e-9
    seed: int = 0

    def __post_init__(self):
        if not self.gtol > 0:
            raise DomainError("gradient tolerance must be positive")
        if self.restarts < 1:
            raise DomainError("restarts must be at least 1")
        if self.max_iter < 1:
            raise DomainError("max_iter must be at least 1")
        if not 0 < self.clip < 0.5:
            raise DomainError("clip epsilon must lie in (0, 0.5)")


def mean_log_score(p, y) -> float:
    p = np.asarray(p, dtype=float)
    y = np.asarray(y)
    return float(-np.mean(np.where(y == 1, np.log(p), np.log1p(-p))))


# ---------------------------------------------------------------------------
# GLM with a custom link
# ---------------------------------------------------------------------------


def glm_features(link: LinkFamily, reports, clip: float) -> np.ndarray:
    return link.quantile(np.clip(np.asarray(reports, dtype=float), clip, 1.0 - clip))


def glm_objective(link: LinkFamily, Z: np.ndarray, y: np.ndarray):
    """Mean negative log-likelihood of y under F(c + Z b) and its gradient."""
    X = np.column_stack([np.ones(Z.shape[0]), Z])
    pos = np.asarray(y) == 1
    n = Z.shape[0]

    def fun_grad(theta):
        eta = X @ theta
        lc, ls = link.logcdf_logsf(eta)
        hc, hs = link.log_hazards(eta)
        f = -float(np.mean(np.where(pos, lc, ls)))
        with np.errstate(over="ignore"):
            r = np.where(pos, np.exp(hc), -np.exp(hs))
        return f, -(X.T @ r) / n

    return fun_grad


def _pick_best(results):
    ok = [r for r in results if np.isfinite(r.fun)]
    return min(ok, key=lambda r: r.fun) if ok else results[0]


def _run_starts(fun_grad, starts, opts, random_start, max_norm=None):
    results = []
    for x0 in starts:
        results.append(bfgs(fun_grad, x0, gtol=opts.gtol, max_iter=opts.max_iter, max_norm=max_norm))
        if results[-1].converged:
            break
    if not any(r.converged for r in results):
        for j in range(opts.restarts):
            results.append(
                bfgs(fun_grad, random_start(j), gtol=opts.gtol, max_iter=opts.max_iter, max_norm=max_norm)
            )
            if results[-1].converged:
                break
    converged = [r for r in results if r.converged]
    return (_pick_best(converged) if converged else _pick_best(results)), results


def _separated(res: OptimResult) -> bool:
    if res.message == "iterate norm limit exceeded":
        return True
    h = res.history
    return (
        not res.converged
        and np.max(np.abs(res.x)) > 100.0
        and len(h) > 10
        and abs(h[-10] - h[-1]) < 1e-12 * 10
    )


def _diverging_ray(fun_grad, res: OptimResult) -> bool:
    """True if a converged fit keeps improving when pushed further out.

    Under separation the gradient decays to zero along a ray, so the
    tolerance test passes at a large but arbitrary point.  At a genuine
    optimum, doubling the coefficients cannot lower the loss.
    """
    if not res.converged or np.max(np.abs(res.x)) <= SEPARATION_RAY_NORM:
        return False
    return fun_grad(2.0 * res.x)[0] < res.fun


def _fit_glm_features(link, Z, y, names, opts: FitOptions) -> tuple:
    k = Z.shape[1]
    fun_grad = glm_objective(link, Z, y)
    stream = Stream(opts.seed, f"glm/{link.name}")
    equal = np.concatenate([[0.0], np.full(k, 1.0 / k)])

    def random_start(j):
        return equal + 0.5 * stream.child(str(j)).normal(k + 1)

    best, results = _run_starts(fun_grad, [np.zeros(k + 1), equal], opts, random_start, SEPARATION_NORM)
    model = FittedAggregator(link, float(best.x[0]), dict(zip(names, best.x[1:].tolist())), opts.clip)
    if _diverging_ray(fun_grad, best):
        raise SeparationError(
            f"{link.name} GLM loss keeps falling along the fitted direction; "
            "the outcomes are perfectly separated by the reports"
        )
    if not best.converged:
        if any(_separated(r) for r in results):
            raise SeparationError(
                f"{link.name} GLM coefficients diverge (|theta| > {SEPARATION_NORM:g} or stalled); "
                "the outcomes are perfectly separated by the reports"
            )
        raise ConvergenceError(
            f"{link.name} GLM did not reach gradient tolerance {opts.gtol:g} "
            f"(best |grad| = {best.grad_norm:.3g} after {best.n_iter} iterations)",
            best=model,
        )
    return model, best


def fit_glm(link: LinkFamily, data: TrainingSet, opts: FitOptions = FitOptions()) -> FittedAggregator:
    """Fit ``F(c + sum_i b_i F^-1(p_i))`` to ``data`` by maximum likelihood."""
    data.require_both_classes()
    Z = glm_features(link, data.reports, opts.clip)
    model, _ = _fit_glm_features(link, Z, data.y, data.names, opts)
    return model


def glm_loglik(model: FittedAggregator, data: TrainingSet) -> float:
    """Mean log-likelihood of ``data`` under a fitted aggregator."""
    Z = glm_features(model.link, data.reports, model.clip)
    theta = np.concatenate([[model.intercept], model.coef_array])
    f, _ = glm_objective(model.link, Z, data.y)(theta)
    return -f


@dataclass
class PowerSelection:
    eta: float
    model: FittedAggregator
    grid_results: list = field(default_factory=list)


def select_power(
    grid,
    data: TrainingSet,
    folds: FoldAssignment,
    opts: FitOptions = FitOptions(),
    *,
    jobs: int = 1,
) -> PowerSelection:
    """Pick the exponential-power exponent with the best out-of-fold log score.

    Each grid point is fit on every fold complement and scored on the held-out
    fold; ``mean_oof_ls`` is the mean log score over all out-of-fold rows.
    Grid points whose fits fail are recorded and skipped.  Ties go to the
    smaller exponent.  The winner is refit on all rows.  Each entry of
    ``grid_results`` also keeps the out-of-fold predictions under ``oof``.
    """
    powers = sorted({float(e) for e in grid})
    if not powers:
        raise DomainError("power grid is empty")
    for e in powers:
        LinkFamily.exponential_power(e)
    if folds.n != data.n:
        raise DomainError(f"fold assignment covers {folds.n} rows but data has {data.n}")
    data.require_both_classes()
    if len(powers) == 1:
        link = LinkFamily.exponential_power(powers[0])
        return PowerSelection(powers[0], fit_glm(link, data, opts), [{"eta": powers[0], "mean_oof_ls": None}])

    def evaluate(eta):
        link = LinkFamily.exponential_power(eta)
        Z = glm_features(link, data.reports, opts.clip)
        pred = np.empty(data.n)
        try:
            for f in range(folds.k):
                train, test = folds.complement(f), folds.indices(f)
                TrainingSet(data.y[train], data.reports[train], data.names).require_both_classes()
                model, _ = _fit_glm_features(link, Z[train], data.y[train], data.names, opts)
                theta = np.concatenate([[model.intercept], model.coef_array])
                pred[test] = link.cdf(np.column_stack([np.ones(test.size), Z[test]]) @ theta)
        except (NumericError, SchemaError) as exc:
            log.info("power %g skipped: %s", eta, exc)
            return {"eta": eta, "mean_oof_ls": None, "error": str(exc)}
        pred = np.clip(pred, opts.clip, 1.0 - opts.clip)
        return {"eta": eta, "mean_oof_ls": mean_log_score(pred, data.y), "oof": pred}

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(evaluate, powers))
    else:
        results = [evaluate(e) for e in powers]
    best = None
    for r in results:
        if r["mean_oof_ls"] is None:
            continue
        if best is None or r["mean_oof_ls"] < best["mean_oof_ls"]:
            best = r
    if best is None:
        raise ConvergenceError("every grid point failed to fit: " + "; ".join(r.get("error", "") for r in results))
    eta = best["eta"]
    model = fit_glm(LinkFamily.exponential_power(eta), data, opts)
    return PowerSelection(eta, model, results)


# ---------------------------------------------------------------------------
# Linear and beta-transformed pools
# ---------------------------------------------------------------------------


def _softmax(theta):
    e = np.exp(theta - theta.max())
    return e / e.sum()


def _clipped(data: TrainingSet, clip: float) -> np.ndarray:
    return np.clip(data.reports, clip, 1.0 - clip)


def olop_objective(P: np.ndarray, y: np.ndarray):
    yf = y.astype(float)
    n = P.shape[0]

    def fun_grad(theta):
        w = _softmax(theta)
        p = P @ w
        f = -float(np.mean(yf * np.log(p) + (1.0 - yf) * np.log1p(-p)))
        dp = -(yf / p - (1.0 - yf) / (1.0 - p)) / n
        gw = P.T @ dp
        return f, w * (gw - w @ gw)

    return fun_grad


def fit_olop(data: TrainingSet, opts: FitOptions = FitOptions()) -> np.ndarray:
    """Simplex weights of the likelihood-optimal linear opinion pool."""
    data.require_both_classes()
    if data.k == 1:
        return np.ones(1)
    P = _clipped(data, opts.clip)
    fun_grad = olop_objective(P, data.y)
    stream = Stream(opts.seed, "olop")
    best, _ = _run_starts(fun_grad, [np.zeros(data.k)], opts, lambda j: stream.child(str(j)).normal(data.k))
    if not best.converged:
        raise ConvergenceError(f"optimal linear pool did not converge (|grad| = {best.grad_norm:.3g})", best=_softmax(best.x))
    return _softmax(best.x)


def _blop_loss(pool, a, b, yf):
    p = np.maximum(reg_inc_beta(a, b, pool), _TINY)
    q = np.maximum(reg_inc_beta(b, a, 1.0 - pool), _TINY)
    return p, q, -float(np.mean(yf * np.log(p) + (1.0 - yf) * np.log(q)))


def blop_objective(P: np.ndarray, y: np.ndarray, *, step: float = 1e-6):
    """Objective over (softmax logits, log a, log b).

    The pool-weight gradient is analytic; the two shape derivatives are
    central differences in log a and log b.
    """
    yf = y.astype(float)
    n, k = P.shape

    def fun_grad(theta):
        w = _softmax(theta[:k])
        la, lb = theta[k], theta[k + 1]
        a, b = math.exp(la), math.exp(lb)
        pool = P @ w
        p, q, f = _blop_loss(pool, a, b, yf)
        dens = np.exp(beta_logpdf(a, b, pool))
        dpool = -(yf * dens / p - (1.0 - yf) * dens / q) / n
        gw = P.T @ dpool
        g = np.empty(k + 2)
        g[:k] = w * (gw - w @ gw)
        g[k] = (_blop_loss(pool, math.exp(la + step), b, yf)[2] - _blop_loss(pool, math.exp(la - step), b, yf)[2]) / (2 * step)
        g[k + 1] = (_blop_loss(pool, a, math.exp(lb + step), yf)[2] - _blop_loss(pool, a, math.exp(lb - step), yf)[2]) / (2 * step)
        return f, g

    return fun_grad


@dataclass(frozen=True)
class BlopFit:
    weights: np.ndarray
    a: float
    b: float


def fit_blop(data: TrainingSet, opts: FitOptions = FitOptions()) -> BlopFit:
    """Beta-transformed linear pool: simplex weights plus shapes (a, b)."""
    data.require_both_classes()
    P = _clipped(data, opts.clip)
    k = data.k
    w0 = fit_olop(data, opts)
    start = np.concatenate([np.log(np.maximum(w0, 1e-12)), [0.0, 0.0]])
    fun_grad = blop_objective(P, data.y)
    stream = Stream(opts.seed, "blop")
    # central-difference shape gradients carry ~1e-10 noise; a tighter
    # tolerance than that cannot be certified
    local = FitOptions(max(opts.gtol, 1e-7), opts.max_iter, opts.restarts, opts.clip, opts.seed)
    best, _ = _run_starts(fun_grad, [start], local, lambda j: start + 0.3 * stream.child(str(j)).normal(k + 2))
    fit = BlopFit(_softmax(best.x[:k]), math.exp(best.x[k]), math.exp(best.x[k + 1]))
    if not best.converged:
        raise ConvergenceError(f"beta-transformed pool did not converge (|grad| = {best.grad_norm:.3g})", best=fit)
    return fit


def blop_loglik(fit: BlopFit, data: TrainingSet, clip: float = 1e-9) -> float:
    pool = _clipped(data, clip) @ fit.weights
    return -_blop_loss(pool, fit.a, fit.b, data.y.astype(float))[2]


def olop_loglik(weights, data: TrainingSet, clip: float = 1e-9) -> float:
    p = _clipped(data, clip) @ np.asarray(weights, dtype=float)
    return -mean_log_score(p, data.y)


# ---------------------------------------------------------------------------
# One-parameter pools
# ---------------------------------------------------------------------------


def scalar_feature(method: str, data: TrainingSet, clip: float = 1e-9) -> np.ndarray:
    """Both scalar pools are logistic(a * s) for a per-row feature s."""
    P = _clipped(data, clip)
    if method == "klop":
        return special.logit(P.mean(axis=1))
    if method == "logit":
        return special.logit(P).mean(axis=1)
    raise DomainError(f"unknown scalar pool {method!r}; expected 'klop' or 'logit'")


def scalar_loss(s: np.ndarray, y: np.ndarray):
    yf = y.astype(float)

    def loss(a):
        t = a * s
        return -float(np.mean(yf * special.log_expit(t) + (1.0 - yf) * special.log_expit(-t)))

    return loss


def fit_scalar(method: str, data: TrainingSet, opts: FitOptions = FitOptions()) -> float:
    """Maximum-likelihood ``a`` in (0, 100] for the klop or logit pool."""
    data.require_both_classes()
    s = scalar_feature(method, data, opts.clip)
    yf = data.y.astype(float)
    loss = scalar_loss(s, data.y)
    a = golden_section(loss, 1e-8, SCALAR_UPPER, tol=1e-8)
    for _ in range(50):
        p = special.expit(a * s)
        g = -float(np.mean((yf - p) * s))
        h = float(np.mean(p * (1.0 - p) * s * s))
        if abs(g) < opts.gtol:
            break
        if h <= 0:
            break
        a_new = min(max(a - g / h, 1e-8), SCALAR_UPPER)
        if loss(a_new) > loss(a):
            break
        a = a_new
    p = special.expit(a * s)
    g = -float(np.mean((yf - p) * s))
    at_bound = a >= SCALAR_UPPER * (1 - 1e-9) and g < 0
    if abs(g) > max(opts.gtol, 1e-6) and not at_bound:
        raise ConvergenceError(f"{method} pool: |d loss/da| = {abs(g):.3g} at a = {a:.6g}", best=a)
    return float(a)
