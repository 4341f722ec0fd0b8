"""Generalized probit ensembles and the benchmark opinion pools.

The decision maker assumes the experts' information states are jointly
normal and that the event follows a GLM in those states with an inverse
link from a standard location-scale family.  The resulting optimal
aggregate is again a GLM in the link-transformed reports; the weights are
derived in :func:`derive_weights`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .distributions import LinkFamily, reg_inc_beta
from .errors import DegenerateModelError, DomainError, SchemaError

DEFAULT_CLIP = 1e-9
_SYM_TOL = 1e-12


def _clip(p, eps):
    if not 0 < eps < 0.5:
        raise DomainError(f"clip epsilon must lie in (0, 0.5), got {eps!r}")
    arr = np.asarray(p, dtype=float)
    if np.any(np.isnan(arr)):
        raise DomainError("probabilities contain NaN")
    return np.clip(arr, eps, 1.0 - eps)


@dataclass(frozen=True)
class InformationModel:
    """Latent information-state model: x ~ N(mean, cov), P(y=1|x) = F(a0 + a.x)."""

    mean: tuple
    cov: tuple
    intercept: float
    coefficients: tuple

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).ravel()
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        coef = np.asarray(self.coefficients, dtype=float).ravel()
        k = mean.size
        if k < 1 or cov.shape != (k, k) or coef.size != k:
            raise DomainError(
                f"inconsistent shapes: mean {mean.shape}, cov {cov.shape}, coefficients {coef.shape}"
            )
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov)) and np.all(np.isfinite(coef))):
            raise DomainError("information model parameters must be finite")
        if np.max(np.abs(cov - cov.T)) > _SYM_TOL * max(1.0, np.max(np.abs(cov))):
            raise DomainError("covariance matrix is not symmetric")
        try:
            np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as exc:
            raise DomainError("covariance matrix is not positive definite") from exc
        if np.any(coef == 0):
            raise DomainError("GLM coefficients must be nonzero")
        if not math.isfinite(self.intercept):
            raise DomainError("intercept must be finite")
        object.__setattr__(self, "mean", tuple(mean.tolist()))
        object.__setattr__(self, "cov", tuple(map(tuple, cov.tolist())))
        object.__setattr__(self, "coefficients", tuple(coef.tolist()))
        object.__setattr__(self, "intercept", float(self.intercept))

    @classmethod
    def exchangeable(
        cls,
        k: int,
        rho: float,
        *,
        sd: float = 1.0,
        mean: float = 0.0,
        coefficient: float = 1.0,
        intercept: float = 0.0,
    ) -> "InformationModel":
        """Equal means, variances, coefficients and pairwise correlation ``rho``."""
        if k < 1:
            raise DomainError("k must be at least 1")
        if k > 1 and not rho > -1.0 / (k - 1):
            raise DomainError(f"exchangeable correlation must exceed -1/(k-1) = {-1.0 / (k - 1):g}, got {rho!r}")
        if k > 1 and rho >= 1:
            raise DomainError("exchangeable correlation must be < 1")
        corr = np.full((k, k), float(rho))
        np.fill_diagonal(corr, 1.0)
        return cls((mean,) * k, sd * sd * corr, intercept, (coefficient,) * k)

    @property
    def k(self) -> int:
        return len(self.mean)

    @property
    def mean_array(self) -> np.ndarray:
        return np.asarray(self.mean)

    @property
    def cov_array(self) -> np.ndarray:
        return np.asarray(self.cov)

    @property
    def coef_array(self) -> np.ndarray:
        return np.asarray(self.coefficients)


@dataclass(frozen=True)
class EnsembleWeights:
    beta0: float
    beta: tuple
    v0: float
    v: tuple
    m0: float

    @property
    def k(self) -> int:
        return len(self.beta)


def derive_weights(model: InformationModel) -> EnsembleWeights:
    """Ensemble weights, residual variances and prior location of ``model``."""
    a = model.coef_array
    S = model.cov_array
    mu = model.mean_array
    k = model.k
    sd = np.sqrt(np.diag(S))
    rho = S / np.outer(sd, sd)
    denom = rho @ (a * sd)
    if np.any(np.abs(denom) < 1e-14 * np.max(np.abs(a * sd))):
        bad = int(np.argmin(np.abs(denom)))
        raise DegenerateModelError(
            f"weight denominator for expert {bad + 1} vanishes; the information model is degenerate"
        )
    beta = a * sd / denom
    v0 = float(a @ S @ a)
    v = np.empty(k)
    for i in range(k):
        rest = np.arange(k) != i
        ar = a[rest]
        cross = float(ar @ S[i, rest])
        v[i] = float(ar @ S[np.ix_(rest, rest)] @ ar) - cross * cross / S[i, i]
    # v_i is a conditional variance; rounding can leave it a hair below zero
    v = np.where(v < 0, np.where(v > -1e-12 * max(v0, 1.0), 0.0, v), v)
    if np.any(v < 0):
        raise DegenerateModelError("negative residual variance; covariance is numerically indefinite")
    m0 = float(model.intercept + a @ mu)
    return EnsembleWeights(
        beta0=float(1.0 - beta.sum()),
        beta=tuple(beta.tolist()),
        v0=v0,
        v=tuple(v.tolist()),
        m0=m0,
    )


def exchangeable_weights(k: int, rho: float) -> tuple:
    """(beta0, beta_i) for k exchangeable experts with correlation ``rho``."""
    bi = 1.0 / ((k - 1) * rho + 1.0)
    return 1.0 - k * bi, bi


# ---------------------------------------------------------------------------
# Convolved link: z0 + sqrt(v) x0
# ---------------------------------------------------------------------------


def _inflation(link: LinkFamily, v):
    """Scale of z0 + sqrt(v) x0 relative to z0.

    Exact for the normal link.  Otherwise the convolution is replaced by a
    rescaled copy of the link with the same variance.
    """
    return np.sqrt(1.0 + np.asarray(v, dtype=float) / link.variance)


def convolved_cdf(link: LinkFamily, v, u):
    return link.cdf(np.asarray(u, dtype=float) / _inflation(link, v))


def convolved_quantile(link: LinkFamily, v, p):
    return _inflation(link, v) * link.quantile(np.asarray(p, dtype=float))


def latent_prior_predictive(weights: EnsembleWeights, link: LinkFamily) -> float:
    """P(y=1) under the latent model, F_{z0 + sqrt(v0) x0}(m0)."""
    return float(convolved_cdf(link, weights.v0, weights.m0))


def expert_reports(model: InformationModel, weights: EnsembleWeights, link: LinkFamily, x) -> np.ndarray:
    """Calibrated reports P(y=1 | x_i) for information states ``x`` (rows)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    a = model.coef_array
    beta = np.asarray(weights.beta)
    u = weights.m0 + (a / beta) * (x - model.mean_array)
    return convolved_cdf(link, np.asarray(weights.v), u)


def aggregate_link(weights: EnsembleWeights, link: LinkFamily, p0: float, reports, *, clip: float = DEFAULT_CLIP):
    """Generalized probit ensemble for an arbitrary standard link.

    Exact for the normal link; for other links the convolved cdf uses the
    variance-matched approximation.
    """
    arr = _clip(reports, clip)
    single = arr.ndim == 1
    mat = np.atleast_2d(arr)
    if mat.shape[1] != weights.k:
        raise DomainError(f"expected {weights.k} reports per row, got shape {arr.shape}")
    p0c = float(_clip(p0, clip))
    beta = np.asarray(weights.beta)
    z = weights.beta0 * float(convolved_quantile(link, weights.v0, p0c))
    z = z + convolved_quantile(link, np.asarray(weights.v), mat) @ beta
    out = link.cdf(z)
    return float(out[0]) if single else out


def aggregate_normal_link(weights: EnsembleWeights, p0: float, reports, *, clip: float = DEFAULT_CLIP):
    """Probit ensemble, Phi(b0 sqrt(1+v0) Phi^-1(p0) + sum b_i sqrt(1+v_i) Phi^-1(p_i))."""
    return aggregate_link(weights, LinkFamily.normal(), p0, reports, clip=clip)


def aggregate_ep_link(weights: EnsembleWeights, eta: float, p0: float, reports, *, clip: float = DEFAULT_CLIP):
    """Approximate ensemble with an exponential-power link of power ``eta``.

    ``v_i' = v_i / Var(EP(eta))`` makes ``sqrt(1+v_i') z`` match the variance
    of ``z + sqrt(v_i) x0``.
    """
    return aggregate_link(weights, LinkFamily.exponential_power(eta), p0, reports, clip=clip)


# ---------------------------------------------------------------------------
# Fitted GLM form
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FittedAggregator:
    """``F(c + sum_i b_i F^-1(p_i))`` with named per-expert coefficients."""

    link: LinkFamily
    intercept: float
    coefficients: dict = field(default_factory=dict)
    clip: float = DEFAULT_CLIP

    def __post_init__(self):
        if not 0 < self.clip < 0.5:
            raise DomainError(f"clip epsilon must lie in (0, 0.5), got {self.clip!r}")
        if not self.coefficients:
            raise DomainError("a fitted aggregator needs at least one coefficient")
        object.__setattr__(self, "coefficients", {str(k): float(v) for k, v in self.coefficients.items()})

    @property
    def names(self) -> list:
        return list(self.coefficients)

    @property
    def coef_array(self) -> np.ndarray:
        return np.array(list(self.coefficients.values()))

    def linear_predictor(self, reports) -> np.ndarray:
        z = self.link.quantile(_clip(reports, self.clip))
        return self.intercept + z @ self.coef_array


def apply_fitted(model: FittedAggregator, reports, names=None):
    """Evaluate a fitted aggregator on one report vector or a matrix of rows.

    If ``names`` is given it must list the report columns in order and match
    the model's coefficient names exactly.
    """
    arr = np.asarray(reports, dtype=float)
    single = arr.ndim == 1
    mat = np.atleast_2d(arr)
    if names is not None and list(names) != model.names:
        raise SchemaError(f"report columns {list(names)} do not match model coefficients {model.names}")
    if mat.shape[1] != len(model.coefficients):
        raise SchemaError(
            f"model has {len(model.coefficients)} coefficients but reports have {mat.shape[1]} columns"
        )
    out = model.link.cdf(model.linear_predictor(mat))
    return float(out[0]) if single else out


# ---------------------------------------------------------------------------
# Benchmark pools
# ---------------------------------------------------------------------------


def _check_simplex(w, k):
    w = np.asarray(w, dtype=float).ravel()
    if w.size != k:
        raise DomainError(f"expected {k} weights, got {w.size}")
    if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
        raise DomainError("pool weights must be nonnegative and sum to 1")
    return w


def lop(weights, reports):
    """Linear opinion pool.  ``weights=None`` means equal weights."""
    arr = np.asarray(reports, dtype=float)
    mat = np.atleast_2d(arr)
    k = mat.shape[1]
    w = np.full(k, 1.0 / k) if weights is None else _check_simplex(weights, k)
    out = mat @ w
    return float(out[0]) if arr.ndim == 1 else out


def _check_positive(name, value):
    if not (math.isfinite(value) and value > 0):
        raise DomainError(f"{name} must be a positive finite number, got {value!r}")


def klop(a: float, pool):
    """Karmarkar transform p^a / (p^a + (1-p)^a) of a pooled probability."""
    _check_positive("a", a)
    p = np.asarray(pool, dtype=float)
    if np.any(np.isnan(p)) or np.any(p <= 0) or np.any(p >= 1):
        raise DomainError("klop needs a pooled probability strictly inside (0, 1)")
    out = special.expit(a * special.logit(p))
    return float(out) if p.ndim == 0 else out


def blop(a: float, b: float, pool):
    """Beta-cdf transform of a pooled probability."""
    _check_positive("a", a)
    _check_positive("b", b)
    return reg_inc_beta(a, b, pool)


def logit_pool(a: float, reports, *, weights=None, clip: float = DEFAULT_CLIP):
    """Logistic of (a/k) sum logit(p_i); optional per-expert ``weights`` replace a/k."""
    arr = _clip(reports, clip)
    mat = np.atleast_2d(arr)
    k = mat.shape[1]
    if weights is None:
        _check_positive("a", a)
        w = np.full(k, a / k)
    else:
        w = np.asarray(weights, dtype=float).ravel()
        if w.size != k:
            raise DomainError(f"expected {k} weights, got {w.size}")
    out = special.expit(special.logit(mat) @ w)
    return float(out[0]) if arr.ndim == 1 else out

