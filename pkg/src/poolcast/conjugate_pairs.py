"""Conjugate-pair Bayesian ensembles.

Every family here is a one-parameter exponential-family likelihood with its
conjugate prior.  What matters for aggregation is the predictive generating
function ``F_n(t)``: the probability of the event given ``n`` observations
with total statistic ``t`` (the prior hyperparameter ``tau1`` included).
Each family supplies ``F_n`` and its inverse in closed form.

Aggregators accept a single report vector of shape ``(k,)`` or a matrix of
shape ``(rows, k)`` and return a float or an array accordingly.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from math import comb

import numpy as np
from scipy import special

from .errors import DomainError, InfeasibleReportsError, UnsupportedVariantError

DEFAULT_CLIP = 1e-9
INTEGER_TOL = 1e-9
ENUMERATION_LIMIT = 25


def clip_reports(reports, eps: float = DEFAULT_CLIP) -> np.ndarray:
    """Clamp probabilities into ``[eps, 1 - eps]``."""
    if not 0 < eps < 0.5:
        raise DomainError(f"clip epsilon must lie in (0, 0.5), got {eps!r}")
    arr = np.asarray(reports, dtype=float)
    if np.any(np.isnan(arr)):
        raise DomainError("reports contain NaN")
    return np.clip(arr, eps, 1.0 - eps)


@dataclass(frozen=True)
class SampleDesign:
    """Private sample sizes per expert plus the size of the shared sample."""

    private: tuple
    shared: int = 0

    def __post_init__(self):
        sizes = tuple(int(n) for n in self.private)
        if len(sizes) < 1:
            raise DomainError("a design needs at least one expert")
        if any(n < 1 for n in sizes) or any(n != m for n, m in zip(sizes, self.private)):
            raise DomainError(f"private sample sizes must be positive integers, got {self.private!r}")
        if int(self.shared) != self.shared or self.shared < 0:
            raise DomainError(f"shared sample size must be a nonnegative integer, got {self.shared!r}")
        object.__setattr__(self, "private", sizes)
        object.__setattr__(self, "shared", int(self.shared))

    @property
    def k(self) -> int:
        return len(self.private)

    @property
    def total_private(self) -> int:
        return sum(self.private)

    @property
    def total(self) -> int:
        return self.total_private + self.shared


class ConjugatePair:
    """Base class; subclasses provide ``tau0``, ``tau1`` and ``F_n``."""

    event: str = ""

    @property
    def tau0(self) -> float:
        raise NotImplementedError

    @property
    def tau1(self) -> float:
        raise NotImplementedError

    def t_bounds(self, n: int) -> tuple:
        """Open interval of valid statistics for ``F_n``."""
        raise NotImplementedError

    def _prob(self, n, t):
        raise NotImplementedError

    def _inverse(self, n, p):
        raise NotImplementedError

    def check_t(self, n, t):
        lo, hi = self.t_bounds(n)
        t = np.asarray(t, dtype=float)
        if np.any(np.isnan(t)) or np.any(t <= lo) or np.any(t >= hi):
            bad = t[(np.isnan(t)) | (t <= lo) | (t >= hi)].ravel()[0]
            raise DomainError(
                f"statistic t={bad!r} outside ({lo!r}, {hi!r}) for {type(self).__name__} with n={n}"
            )
        return t

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class BetaBernoulli(ConjugatePair):
    alpha: float
    beta: float
    event = "x = 1"

    def __post_init__(self):
        _positive(alpha=self.alpha, beta=self.beta)

    @property
    def tau0(self):
        return self.alpha + self.beta - 2.0

    @property
    def tau1(self):
        return self.alpha - 1.0

    def t_bounds(self, n):
        return -1.0, self.alpha + self.beta + n - 1.0

    def _prob(self, n, t):
        return (t + 1.0) / (self.alpha + self.beta + n)

    def _inverse(self, n, p):
        return (self.alpha + self.beta + n) * p - 1.0

    def to_dict(self):
        return {"family": "beta_bernoulli", "alpha": self.alpha, "beta": self.beta}


@dataclass(frozen=True)
class GammaPoisson(ConjugatePair):
    alpha: float
    beta: float
    event = "x = 0"

    def __post_init__(self):
        _positive(alpha=self.alpha, beta=self.beta)

    @property
    def tau0(self):
        return self.beta

    @property
    def tau1(self):
        return self.alpha - 1.0

    def v(self, n):
        return math.log((self.beta + n) / (self.beta + n + 1.0))

    def t_bounds(self, n):
        return -1.0, math.inf

    def _prob(self, n, t):
        return np.exp(self.v(n) * (t + 1.0))

    def _inverse(self, n, p):
        return np.log(p) / self.v(n) - 1.0

    def to_dict(self):
        return {"family": "gamma_poisson", "alpha": self.alpha, "beta": self.beta}


@dataclass(frozen=True)
class NormalNormal(ConjugatePair):
    theta0: float
    sigma0: float
    sigma: float
    event = "x > 0"

    def __post_init__(self):
        _positive(sigma0=self.sigma0, sigma=self.sigma)
        if not math.isfinite(self.theta0):
            raise DomainError("theta0 must be finite")

    @property
    def tau0(self):
        return self.sigma**2 / self.sigma0**2

    @property
    def tau1(self):
        return self.sigma**2 * self.theta0 / self.sigma0**2

    def v(self, n):
        return (self.tau0 + n) * (self.tau0 + n + 1.0) * self.sigma**2

    def t_bounds(self, n):
        return -math.inf, math.inf

    def _prob(self, n, t):
        return special.ndtr(t / math.sqrt(self.v(n)))

    def _inverse(self, n, p):
        return math.sqrt(self.v(n)) * special.ndtri(p)

    def to_dict(self):
        return {"family": "normal_normal", "theta0": self.theta0, "sigma0": self.sigma0, "sigma": self.sigma}


@dataclass(frozen=True)
class GenGammaGumbel(ConjugatePair):
    """Gumbel(theta, sigma) data with ``exp(theta / sigma) ~ Ga(alpha, beta)``."""

    alpha: float
    beta: float
    sigma: float
    event = "x < 0"

    def __post_init__(self):
        _positive(alpha=self.alpha, beta=self.beta, sigma=self.sigma)

    @property
    def tau0(self):
        return self.alpha

    @property
    def tau1(self):
        return self.beta

    def t_bounds(self, n):
        return 0.0, math.inf

    def _prob(self, n, t):
        return (t / (1.0 + t)) ** (self.alpha + n)

    def _inverse(self, n, p):
        u = p ** (1.0 / (self.alpha + n))
        return u / (1.0 - u)

    def to_dict(self):
        return {"family": "gen_gamma_gumbel", "alpha": self.alpha, "beta": self.beta, "sigma": self.sigma}


_FAMILIES = {
    "beta_bernoulli": BetaBernoulli,
    "gamma_poisson": GammaPoisson,
    "normal_normal": NormalNormal,
    "gen_gamma_gumbel": GenGammaGumbel,
}


def pair_from_dict(d: dict) -> ConjugatePair:
    d = dict(d)
    family = d.pop("family", None)
    if family not in _FAMILIES:
        raise DomainError(f"unknown conjugate family {family!r}; expected one of {sorted(_FAMILIES)}")
    return _FAMILIES[family](**d)


def _positive(**params):
    for name, value in params.items():
        if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
            raise DomainError(f"{name} must be a positive finite number, got {value!r}")


def _scalar_or_array(value, like):
    value = np.asarray(value, dtype=float)
    return float(value) if np.ndim(like) == 0 else value


# ---------------------------------------------------------------------------
# Predictive generating function
# ---------------------------------------------------------------------------


def prior_predictive(pair: ConjugatePair) -> float:
    """Probability of the event before any data, ``F_0(tau1)``."""
    return float(pair._prob(0, pair.tau1))


def predictive_prob(pair: ConjugatePair, n: int, t):
    """``F_n(t)``: event probability after ``n`` observations with statistic ``t``."""
    if int(n) != n or n < 0:
        raise DomainError(f"sample size must be a nonnegative integer, got {n!r}")
    t_arr = pair.check_t(n, t)
    return _scalar_or_array(pair._prob(n, t_arr), t)


def predictive_inverse(pair: ConjugatePair, n: int, p):
    """Inverse of :func:`predictive_prob` in ``t``."""
    if int(n) != n or n < 0:
        raise DomainError(f"sample size must be a nonnegative integer, got {n!r}")
    p_arr = np.asarray(p, dtype=float)
    if np.any(np.isnan(p_arr)) or np.any(p_arr <= 0) or np.any(p_arr >= 1):
        raise DomainError("predictive_inverse needs probabilities strictly inside (0, 1)")
    return _scalar_or_array(pair._inverse(n, p_arr), p)


# ---------------------------------------------------------------------------
# Aggregators
# ---------------------------------------------------------------------------


def _prepare(design: SampleDesign, reports, clip):
    arr = np.asarray(reports, dtype=float)
    single = arr.ndim == 1
    mat = np.atleast_2d(arr)
    if mat.ndim != 2 or mat.shape[1] != design.k:
        raise DomainError(f"expected {design.k} reports per row, got shape {arr.shape}")
    return clip_reports(mat, clip), single


def _combine(pair, n_total, inner, clamp, eps):
    lo, hi = pair.t_bounds(n_total)
    bad = (inner <= lo) | (inner >= hi)
    if bad.any():
        if not clamp:
            value = inner[bad].ravel()[0]
            side = f"> {lo!r}" if value <= lo else f"< {hi!r}"
            raise InfeasibleReportsError(
                f"combined statistic {value!r} violates the bound t {side} of "
                f"F_{n_total} for {type(pair).__name__}; the reports are inconsistent "
                "with the declared information structure"
            )
        width = 1.0 if not (math.isfinite(lo) and math.isfinite(hi)) else hi - lo
        inner = np.clip(inner, lo + eps * width, hi - eps * width)
    return pair._prob(n_total, inner)


def aggregate_private(
    pair: ConjugatePair,
    design: SampleDesign,
    reports,
    *,
    clip: float = DEFAULT_CLIP,
    clamp: bool = False,
):
    """Exact posterior-predictive aggregate when experts hold only private data.

    ``F_{N_k}(-(k-1) F_0^{-1}(p_0) + sum_i F_{n_i}^{-1}(p_i))``.  With
    ``clamp=True`` an out-of-domain combination is pushed just inside the
    valid range instead of raising :class:`InfeasibleReportsError`.
    """
    if design.shared != 0:
        raise DomainError("aggregate_private requires a design without shared information")
    mat, single = _prepare(design, reports, clip)
    k = design.k
    inner = -(k - 1) * pair.tau1
    for i, n_i in enumerate(design.private):
        inner = inner + pair._inverse(n_i, mat[:, i])
    out = _combine(pair, design.total_private, inner, clamp, clip)
    return float(out[0]) if single else out


def _normal_moments(pair: NormalNormal, design: SampleDesign):
    """Joint moments of (t_s, t_1 + t_s, ..., t_k + t_s) from the closed forms."""
    n = np.asarray(design.private, dtype=float)
    ns = float(design.shared)
    s2, s02 = pair.sigma**2, pair.sigma0**2
    m_s = ns * pair.theta0
    m = (n + ns) * pair.theta0
    v_ss = ns * s2 + ns**2 * s02
    v_s = ns * s2 + (ns * n + ns**2) * s02
    v22 = ns * s2 + (np.outer(n, n) + ns * n[:, None] + ns * n[None, :] + ns**2) * s02
    v22[np.diag_indices_from(v22)] = (n + ns) * s2 + (n + ns) ** 2 * s02
    return m_s, m, v_ss, v_s, v22


def _conditional_shared(m_s, m, v_ss, v_s, v22, stats):
    """Mean (per row) and variance of t_s given the experts' statistics."""
    from scipy.linalg import LinAlgError, cho_factor, cho_solve

    try:
        factor = cho_factor(v22, lower=True)
    except LinAlgError as exc:  # pragma: no cover - impossible for valid sizes
        raise DomainError("shared-information covariance is not positive definite") from exc
    gain = cho_solve(factor, v_s)
    mean = m_s + (stats - m) @ gain
    var = max(v_ss - float(v_s @ gain), 0.0)
    return mean, var


def _shared_parts(pair, design, mat):
    k = design.k
    L = -(k - 1) * pair.tau1 + sum(
        pair._inverse(n_i + design.shared, mat[:, i]) for i, n_i in enumerate(design.private)
    )
    stats = np.column_stack(
        [pair._inverse(n_i + design.shared, mat[:, i]) - pair.tau1 for i, n_i in enumerate(design.private)]
    )
    return L, stats


def aggregate_shared_normal(pair: NormalNormal, design: SampleDesign, reports, *, clip: float = DEFAULT_CLIP):
    """Closed-form probit ensemble with private and shared normal data.

    The shared statistic given the reports is Gaussian; integrating the
    decision maker's predictive against it yields another normal cdf whose
    scale absorbs the conditional variance.
    """
    if not isinstance(pair, NormalNormal):
        raise UnsupportedVariantError("aggregate_shared_normal needs a NormalNormal pair")
    mat, single = _prepare(design, reports, clip)
    k = design.k
    L, stats = _shared_parts(pair, design, mat)
    mean, var = _conditional_shared(*_normal_moments(pair, design), stats)
    v_total = pair.v(design.total)
    out = special.ndtr((L - (k - 1) * mean) / math.sqrt((k - 1) ** 2 * var + v_total))
    return float(out[0]) if single else out


def _data_point_moments(pair: NormalNormal, design: SampleDesign):
    # Build the joint law of the segment sums as a linear map of the raw data,
    # whose covariance is sigma^2 I + sigma0^2 11'.
    sizes = list(design.private) + [design.shared]
    n_points = sum(sizes)
    cov_x = pair.sigma**2 * np.eye(n_points) + pair.sigma0**2 * np.ones((n_points, n_points))
    mean_x = np.full(n_points, pair.theta0)
    k = design.k
    shared_rows = np.zeros(n_points)
    shared_rows[design.total_private :] = 1.0
    A = np.zeros((k + 1, n_points))
    A[0] = shared_rows
    start = 0
    for i, n_i in enumerate(design.private):
        A[i + 1, start : start + n_i] = 1.0
        A[i + 1] += shared_rows
        start += n_i
    mu = A @ mean_x
    V = A @ cov_x @ A.T
    return mu[0], mu[1:], V[0, 0], V[0, 1:], V[1:, 1:]


def aggregate_shared_quadrature(
    pair: NormalNormal,
    design: SampleDesign,
    reports,
    *,
    nodes: int = 64,
    clip: float = DEFAULT_CLIP,
):
    """Numerical integration of the shared-information ensemble (normal case).

    Gauss-Hermite quadrature of ``F_{N_k + n_s}(L - (k-1) t_s)`` against the
    conditional density of ``t_s``.  The conditioning moments are rebuilt from
    the covariance of the raw data points, independently of the closed form.
    """
    if not isinstance(pair, NormalNormal):
        raise UnsupportedVariantError("aggregate_shared_quadrature needs a NormalNormal pair")
    mat, single = _prepare(design, reports, clip)
    k = design.k
    L, stats = _shared_parts(pair, design, mat)
    mean, var = _conditional_shared(*_data_point_moments(pair, design), stats)
    scale = math.sqrt(pair.v(design.total))
    if var < 1e-300:
        out = special.ndtr((L - (k - 1) * mean) / scale)
    else:
        x, w = np.polynomial.hermite.hermgauss(nodes)
        ts = mean[:, None] + math.sqrt(2.0 * var) * x[None, :]
        out = special.ndtr((L[:, None] - (k - 1) * ts) / scale) @ w / math.sqrt(math.pi)
    return float(out[0]) if single else out


def _deduce_counts(pair: BetaBernoulli, design: SampleDesign, row, tol):
    counts = []
    for i, n_i in enumerate(design.private):
        n = n_i + design.shared
        s = pair._inverse(n, row[i]) - pair.tau1
        r = round(s)
        if abs(s - r) > tol or r < 0 or r > n:
            raise InfeasibleReportsError(
                f"report p_{i + 1}={row[i]!r} does not correspond to an integer success count "
                f"in 0..{n} (deduced {s!r})"
            )
        counts.append(int(r))
    return counts


def _rising(x: Fraction, m: int) -> Fraction:
    out = Fraction(1)
    for j in range(m):
        out *= x + j
    return out


def _sequence_prob(alpha: Fraction, beta: Fraction, successes: int, trials: int) -> Fraction:
    """Beta-Bernoulli marginal probability of one specific 0/1 sequence."""
    return (
        _rising(alpha, successes) * _rising(beta, trials - successes) / _rising(alpha + beta, trials)
    )


def _enumerate_row(pair: BetaBernoulli, design: SampleDesign, row, tol) -> float:
    k = design.k
    ns = design.shared
    counts = _deduce_counts(pair, design, row, tol)
    alpha, beta = Fraction(pair.alpha), Fraction(pair.beta)
    n_all = design.total
    num = Fraction(0)
    den = Fraction(0)
    for ts in range(ns + 1):
        private = [c - ts for c in counts]
        if any(t < 0 or t > n for t, n in zip(private, design.private)):
            continue
        mult = comb(ns, ts)
        for t, n in zip(private, design.private):
            mult *= comb(n, t)
        S = sum(counts) - (k - 1) * ts
        weight = mult * _sequence_prob(alpha, beta, S, n_all)
        # F_{N_k+n_s}(tau1 + S) for the beta/Bernoulli pair
        num += weight * (alpha + S) / (alpha + beta + n_all)
        den += weight
    if den == 0:
        raise InfeasibleReportsError(
            f"reports {tuple(float(p) for p in row)} imply success counts {counts} that no "
            "shared-sample outcome can produce jointly"
        )
    return float(num / den)


def aggregate_shared_enumerate(
    pair: BetaBernoulli,
    design: SampleDesign,
    reports,
    *,
    tol: float = INTEGER_TOL,
):
    """Exact shared-information ensemble for the beta/Bernoulli pair.

    Each report reveals the expert's private-plus-shared success count.  The
    shared count ``t_s`` is summed out over its finite support with weights
    proportional to the number of sample sequences consistent with the
    deduced counts; the arithmetic is rational, so the result is exact up to
    the final conversion to float.
    """
    if not isinstance(pair, BetaBernoulli):
        raise UnsupportedVariantError(
            f"shared-information enumeration is only defined for BetaBernoulli, not {type(pair).__name__}"
        )
    if design.shared == 0:
        return aggregate_private(pair, design, reports)
    arr = np.asarray(reports, dtype=float)
    single = arr.ndim == 1
    mat = np.atleast_2d(arr)
    if mat.shape[1] != design.k:
        raise DomainError(f"expected {design.k} reports per row, got shape {arr.shape}")
    cache = {}
    out = np.empty(mat.shape[0])
    for r, row in enumerate(mat):
        key = tuple(row)
        if key not in cache:
            cache[key] = _enumerate_row(pair, design, row, tol)
        out[r] = cache[key]
    return float(out[0]) if single else out


def aggregate_shared(pair: ConjugatePair, design: SampleDesign, reports, **kwargs):
    """Dispatch to the exact aggregator available for ``pair`` and ``design``."""
    if design.shared == 0:
        return aggregate_private(pair, design, reports, **kwargs)
    if isinstance(pair, NormalNormal):
        return aggregate_shared_normal(pair, design, reports, **kwargs)
    if isinstance(pair, BetaBernoulli):
        return aggregate_shared_enumerate(pair, design, reports, **kwargs)
    raise UnsupportedVariantError(
        f"no closed form for {type(pair).__name__} with shared information"
    )


def exact_posterior_oracle(pair: BetaBernoulli, design: SampleDesign, reports, *, tol: float = INTEGER_TOL) -> float:
    """Brute-force P(y = 1 | reports) for the beta/Bernoulli pair.

    Walks every joint outcome of the private and shared samples (grouped by
    per-segment success counts, which is lossless under exchangeability),
    computes what each expert would report, keeps the outcomes matching the
    observed reports and applies Bayes' rule with rational arithmetic.  Used
    as ground truth in tests.
    """
    if not isinstance(pair, BetaBernoulli):
        raise UnsupportedVariantError("the enumeration oracle covers BetaBernoulli only")
    if design.total > ENUMERATION_LIMIT:
        raise DomainError(
            f"enumeration bound exceeded: {design.total} data points > {ENUMERATION_LIMIT}"
        )
    row = np.asarray(reports, dtype=float)
    if row.shape != (design.k,):
        raise DomainError(f"expected {design.k} reports, got shape {row.shape}")
    alpha, beta = Fraction(pair.alpha), Fraction(pair.beta)
    n_all = design.total
    num = Fraction(0)
    den = Fraction(0)
    ranges = [range(n + 1) for n in design.private] + [range(design.shared + 1)]
    for outcome in itertools.product(*ranges):
        *private, shared = outcome
        matches = True
        for i, (c, n) in enumerate(zip(private, design.private)):
            seen = n + design.shared
            report = (alpha + c + shared) / (alpha + beta + seen)
            if abs(float(report) - row[i]) > tol:
                matches = False
                break
        if not matches:
            continue
        mult = comb(design.shared, shared)
        for c, n in zip(private, design.private):
            mult *= comb(n, c)
        S = sum(private) + shared
        weight = mult * _sequence_prob(alpha, beta, S, n_all)
        num += weight * (alpha + S) / (alpha + beta + n_all)
        den += weight
    if den == 0:
        raise InfeasibleReportsError(f"no sample outcome reproduces the reports {tuple(row)}")
    return float(num / den)
