"""Location-scale link families and the special functions behind them.

Three standard members are supported: the standard normal, the standard
logistic, and the exponential-power family EP(0, 1, eta) whose density is
proportional to ``exp(-|z|**eta / eta)``.  Only standard members (location 0,
scale 1) are exposed; a rescaling of the link is absorbed by fitted
coefficients.

The exponential-power cdf is evaluated through the regularized incomplete
gamma function, and the beta-transformed pool needs the regularized
incomplete beta function.  Both are implemented here with the usual series
and continued-fraction expansions so results do not depend on a platform
library.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import DomainError

MAX_POWER = 64.0

_EPS = 1e-16
_FPMIN = 1e-300
_MAX_ITER = 10_000
_CF_BLOCK = 8
_LOG_HALF = math.log(0.5)


# ---------------------------------------------------------------------------
# Regularized incomplete gamma
# ---------------------------------------------------------------------------


def _log_gamma_series(a, x):
    """log P(a, x) by the power series; accurate for x < a + 1."""
    term = np.full_like(x, 1.0 / a)
    total = term.copy()
    # iterate only on the entries that have not converged yet
    idx = np.arange(x.size)
    xs, ts, ss = x, term, total
    for n in range(1, _MAX_ITER):
        ts = ts * xs / (a + n)
        ss = ss + ts
        keep = np.abs(ts) >= np.abs(ss) * _EPS
        if not keep.all():
            done = ~keep
            total[idx[done]] = ss[done]
            idx, xs, ts, ss = idx[keep], xs[keep], ts[keep], ss[keep]
            if idx.size == 0:
                break
    total[idx] = ss
    with np.errstate(divide="ignore"):
        return a * np.log(x) - x - math.lgamma(a) + np.log(total)


def _log_gamma_cf_factor(a, x):
    """log of the continued fraction h in Q(a, x) = exp(-x) x**a h / Gamma(a)."""
    b = x + 1.0 - a
    c = np.full_like(x, 1.0 / _FPMIN)
    d = 1.0 / b
    h = d.copy()
    idx = np.arange(x.size)
    bs, cs, ds, hs = b, c, d, h.copy()
    i = 0
    while i < _MAX_ITER and idx.size:
        # a converged fraction is unchanged by extra terms, so test in blocks
        for _ in range(_CF_BLOCK):
            i += 1
            an = -i * (i - a)
            bs = bs + 2.0
            ds = an * ds + bs
            ds[np.abs(ds) < _FPMIN] = _FPMIN
            cs = bs + an / cs
            cs[np.abs(cs) < _FPMIN] = _FPMIN
            ds = 1.0 / ds
            delta = ds * cs
            hs = hs * delta
        keep = np.abs(delta - 1.0) >= 4 * _EPS
        done = ~keep
        h[idx[done]] = hs[done]
        idx, bs, cs, ds, hs = idx[keep], bs[keep], cs[keep], ds[keep], hs[keep]
    h[idx] = hs
    return np.log(h)


def _log_gamma_cf(a, x):
    """log Q(a, x) by the modified Lentz continued fraction; x >= a + 1."""
    return -x + a * np.log(x) - math.lgamma(a) + _log_gamma_cf_factor(a, x)


def _log_gamma_pq(a: float, x: np.ndarray):
    """Return (log P, log Q) of the regularized incomplete gamma, elementwise.

    ``a`` is a scalar shape and ``x`` a nonnegative float array.  Whichever of
    P, Q is computed directly keeps full relative accuracy; the other is
    obtained through ``log1p`` of the first.
    """
    x = np.asarray(x, dtype=float)
    log_p = np.empty_like(x)
    log_q = np.empty_like(x)

    zero = x == 0.0
    big = np.isinf(x)
    use_series = (~zero) & (~big) & (x < a + 1.0)
    use_cf = (~zero) & (~big) & ~use_series

    log_p[zero] = -np.inf
    log_q[zero] = 0.0
    log_p[big] = 0.0
    log_q[big] = -np.inf
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        if use_series.any():
            lp = _log_gamma_series(a, x[use_series])
            lp = np.minimum(lp, 0.0)
            log_p[use_series] = lp
            log_q[use_series] = np.log1p(-np.exp(lp))
        if use_cf.any():
            lq = _log_gamma_cf(a, x[use_cf])
            lq = np.minimum(lq, 0.0)
            log_q[use_cf] = lq
            log_p[use_cf] = np.log1p(-np.exp(lq))
    return log_p, log_q


def reg_lower_gamma(shape: float, x):
    """Regularized lower incomplete gamma P(shape, x).

    Parameters
    ----------
    shape : float
        Positive shape parameter.
    x : float or array_like
        Nonnegative argument(s).

    Returns
    -------
    float or ndarray
        Values in [0, 1].
    """
    if not (shape > 0 and math.isfinite(shape)):
        raise DomainError(f"gamma shape must be positive and finite, got {shape!r}")
    arr = np.asarray(x, dtype=float)
    if np.any(np.isnan(arr)) or np.any(arr < 0):
        raise DomainError("incomplete gamma argument must be >= 0")
    log_p, _ = _log_gamma_pq(float(shape), np.atleast_1d(arr))
    out = np.exp(log_p)
    return float(out[0]) if arr.ndim == 0 else out.reshape(arr.shape)


def reg_upper_gamma(shape: float, x):
    """Regularized upper incomplete gamma Q(shape, x) = 1 - P(shape, x)."""
    if not (shape > 0 and math.isfinite(shape)):
        raise DomainError(f"gamma shape must be positive and finite, got {shape!r}")
    arr = np.asarray(x, dtype=float)
    if np.any(np.isnan(arr)) or np.any(arr < 0):
        raise DomainError("incomplete gamma argument must be >= 0")
    _, log_q = _log_gamma_pq(float(shape), np.atleast_1d(arr))
    out = np.exp(log_q)
    return float(out[0]) if arr.ndim == 0 else out.reshape(arr.shape)


# ---------------------------------------------------------------------------
# Regularized incomplete beta
# ---------------------------------------------------------------------------


def _beta_cf(a, b, x):
    # Numerical Recipes betacf, vectorized over x, convergence tested in blocks
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = np.ones_like(x)
    d = 1.0 - qab * x / qap
    d[np.abs(d) < _FPMIN] = _FPMIN
    d = 1.0 / d
    h = d.copy()
    idx = np.arange(x.size)
    xs, cs, ds, hs = x, c, d, h.copy()
    m = 0
    while m < _MAX_ITER and idx.size:
        for _ in range(_CF_BLOCK):
            m += 1
            m2 = 2 * m
            aa = m * (b - m) * xs / ((qam + m2) * (a + m2))
            ds = 1.0 + aa * ds
            ds[np.abs(ds) < _FPMIN] = _FPMIN
            cs = 1.0 + aa / cs
            cs[np.abs(cs) < _FPMIN] = _FPMIN
            ds = 1.0 / ds
            hs = hs * ds * cs
            aa = -(a + m) * (qab + m) * xs / ((a + m2) * (qap + m2))
            ds = 1.0 + aa * ds
            ds[np.abs(ds) < _FPMIN] = _FPMIN
            cs = 1.0 + aa / cs
            cs[np.abs(cs) < _FPMIN] = _FPMIN
            ds = 1.0 / ds
            delta = ds * cs
            hs = hs * delta
        keep = np.abs(delta - 1.0) >= 4 * _EPS
        done = ~keep
        h[idx[done]] = hs[done]
        idx, xs, cs, ds, hs = idx[keep], xs[keep], cs[keep], ds[keep], hs[keep]
    h[idx] = hs
    return h


def _inc_beta(a: float, b: float, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    lo = x <= 0.0
    hi = x >= 1.0
    out[lo] = 0.0
    out[hi] = 1.0
    mid = ~(lo | hi)
    if mid.any():
        xm = x[mid]
        lbeta = math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)
        with np.errstate(divide="ignore", under="ignore"):
            front = np.exp(a * np.log(xm) + b * np.log1p(-xm) - lbeta)
        direct = xm < (a + 1.0) / (a + b + 2.0)
        res = np.empty_like(xm)
        if direct.any():
            res[direct] = front[direct] * _beta_cf(a, b, xm[direct]) / a
        if (~direct).any():
            xr = 1.0 - xm[~direct]
            res[~direct] = 1.0 - front[~direct] * _beta_cf(b, a, xr) / b
        out[mid] = np.clip(res, 0.0, 1.0)
    return out


def reg_inc_beta(a: float, b: float, x):
    """Regularized incomplete beta I_x(a, b), the Beta(a, b) cdf at ``x``."""
    if not (a > 0 and b > 0 and math.isfinite(a) and math.isfinite(b)):
        raise DomainError(f"beta shapes must be positive, got a={a!r}, b={b!r}")
    arr = np.asarray(x, dtype=float)
    if np.any(np.isnan(arr)) or np.any(arr < 0) or np.any(arr > 1):
        raise DomainError("incomplete beta argument must lie in [0, 1]")
    out = _inc_beta(float(a), float(b), np.atleast_1d(arr))
    return float(out[0]) if arr.ndim == 0 else out.reshape(arr.shape)


def beta_logpdf(a: float, b: float, x):
    """Log density of Beta(a, b) on the open interval (0, 1)."""
    x = np.asarray(x, dtype=float)
    lbeta = math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)
    return (a - 1.0) * np.log(x) + (b - 1.0) * np.log1p(-x) - lbeta


# ---------------------------------------------------------------------------
# Link families
# ---------------------------------------------------------------------------

_KINDS = ("normal", "logistic", "ep")


@dataclass(frozen=True)
class LinkFamily:
    """A standard (location 0, scale 1) symmetric link distribution.

    Use the constructors :meth:`normal`, :meth:`logistic` and
    :meth:`exponential_power` rather than building instances directly.
    """

    kind: str
    power: float | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise DomainError(f"unknown link family {self.kind!r}")
        if self.kind == "ep":
            eta = self.power
            if eta is None or not math.isfinite(eta) or eta <= 0:
                raise DomainError(f"exponential-power power must be > 0, got {eta!r}")
            if eta > MAX_POWER:
                raise DomainError(f"exponential-power power must be <= {MAX_POWER:g}, got {eta!r}")
            object.__setattr__(self, "power", float(eta))
        elif self.power is not None:
            raise DomainError(f"{self.kind} link takes no power parameter")

    @classmethod
    def normal(cls) -> "LinkFamily":
        return cls("normal")

    @classmethod
    def logistic(cls) -> "LinkFamily":
        return cls("logistic")

    @classmethod
    def exponential_power(cls, eta: float) -> "LinkFamily":
        return cls("ep", float(eta))

    @property
    def name(self) -> str:
        if self.kind == "ep":
            return f"ep({self.power:g})"
        return self.kind

    def to_dict(self) -> dict:
        return {"family": self.kind, "power": self.power}

    @classmethod
    def from_dict(cls, d: dict) -> "LinkFamily":
        family = d.get("family")
        if family == "ep":
            return cls.exponential_power(d.get("power"))
        return cls(family)

    # -- exponential-power helpers -------------------------------------------

    @property
    def _ep_log_norm(self) -> float:
        eta = self.power
        return math.log(2.0) + math.log(eta) / eta + math.lgamma(1.0 + 1.0 / eta)

    def _ep_log_tail(self, z):
        """log P(Z > |z|) for the exponential-power member."""
        eta = self.power
        with np.errstate(over="ignore"):
            x = np.abs(z) ** eta / eta
        _, log_q = _log_gamma_pq(1.0 / eta, x)
        return _LOG_HALF + log_q

    # -- distribution functions ----------------------------------------------

    @property
    def variance(self) -> float:
        if self.kind == "normal":
            return 1.0
        if self.kind == "logistic":
            return math.pi**2 / 3.0
        eta = self.power
        return math.exp((2.0 / eta) * math.log(eta) + math.lgamma(3.0 / eta) - math.lgamma(1.0 / eta))

    def cdf(self, z):
        z = np.asarray(z, dtype=float)
        if self.kind == "normal":
            return special.ndtr(z)
        if self.kind == "logistic":
            return special.expit(z)
        tail = np.exp(self._ep_log_tail(z))
        return np.where(z < 0, tail, 1.0 - tail)

    def logcdf(self, z):
        z = np.asarray(z, dtype=float)
        if self.kind == "normal":
            return special.log_ndtr(z)
        if self.kind == "logistic":
            return special.log_expit(z)
        log_tail = self._ep_log_tail(z)
        return np.where(z < 0, log_tail, np.log1p(-np.exp(log_tail)))

    def logsf(self, z):
        """log(1 - F(z)); equals logcdf(-z) by symmetry."""
        return self.logcdf(-np.asarray(z, dtype=float))

    def logcdf_logsf(self, z):
        """(log F(z), log(1 - F(z))), sharing one tail evaluation."""
        z = np.asarray(z, dtype=float)
        if self.kind != "ep":
            return self.logcdf(z), self.logcdf(-z)
        log_tail = self._ep_log_tail(z)
        log_body = np.log1p(-np.exp(log_tail))
        neg = z < 0
        return np.where(neg, log_tail, log_body), np.where(neg, log_body, log_tail)

    def log_hazards(self, z):
        """(log f(z)/F(z), log f(z)/(1 - F(z))) without cancellation in the tails.

        Far in a tail both log f and the log tail probability are huge, and
        their difference is lost to rounding; each form below cancels the
        dominant term analytically.
        """
        z = np.asarray(z, dtype=float)
        if self.kind == "logistic":
            return special.log_expit(-z), special.log_expit(z)
        if self.kind == "normal":
            az = np.abs(z)
            # f / P(Z > |z|) = sqrt(2 / pi) / erfcx(|z| / sqrt(2))
            tail = 0.5 * math.log(2.0 / math.pi) - np.log(special.erfcx(az / math.sqrt(2.0)))
            body = self.logpdf(z) - special.log_ndtr(az)
        else:
            eta = self.power
            a = 1.0 / eta
            with np.errstate(over="ignore", divide="ignore"):
                x = np.abs(z) ** eta / eta
            lp = self.logpdf(z)
            log_tail = self._ep_log_tail(z)
            tail = lp - log_tail
            far = np.isfinite(x) & (x >= a + 1.0)
            if far.any():
                xf = x[far]
                tail[far] = (
                    -self._ep_log_norm - _LOG_HALF - a * np.log(xf) + math.lgamma(a) - _log_gamma_cf_factor(a, xf)
                )
            body = lp - np.log1p(-np.exp(log_tail))
        neg = z < 0
        return np.where(neg, tail, body), np.where(neg, body, tail)

    def logpdf(self, z):
        z = np.asarray(z, dtype=float)
        if self.kind == "normal":
            return -0.5 * z * z - 0.5 * math.log(2.0 * math.pi)
        if self.kind == "logistic":
            az = np.abs(z)
            return -az - 2.0 * np.log1p(np.exp(-az))
        eta = self.power
        with np.errstate(over="ignore"):
            return -(np.abs(z) ** eta) / eta - self._ep_log_norm

    def pdf(self, z):
        return np.exp(self.logpdf(z))

    def quantile(self, p):
        p = np.asarray(p, dtype=float)
        if self.kind == "normal":
            return special.ndtri(p)
        if self.kind == "logistic":
            return special.logit(p)
        return self._ep_quantile(p)

    def _ep_quantile(self, p):
        # With a = 1/eta and x = |z|**eta / eta, P(|Z| <= |z|) = P(a, x).
        # Tail probabilities are matched on log Q, central ones on log P, both
        # as functions of log x so the stopping rule is relative in x.  A
        # bracketed Newton iteration converges in a handful of steps.
        eta = self.power
        a = 1.0 / eta
        upper = p > 0.5
        q = np.where(upper, 1.0 - p, p)
        out = np.zeros_like(p)
        todo = q < 0.5
        if not todo.any():
            return out
        qt = q[todo]
        seed_z = np.abs(special.ndtri(qt)) * math.sqrt(self.variance)
        with np.errstate(divide="ignore", over="ignore"):
            seed_u = eta * np.log(seed_z) - math.log(eta)
        log_x = np.empty_like(qt)

        tail = qt < 0.25
        if tail.any():
            target = np.log(2.0 * qt[tail])

            def h_tail(u, i):
                x = np.exp(u)
                _, lq = _log_gamma_pq(a, x)
                with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
                    slope = -np.exp(a * u - x - math.lgamma(a) - lq)
                return lq - target[i], slope

            log_x[tail] = _bracketed_newton(h_tail, seed_u[tail], increasing=False, lower=None)
        if (~tail).any():
            target = np.log1p(-2.0 * qt[~tail])

            def h_mid(u, i):
                x = np.exp(u)
                lp, _ = _log_gamma_pq(a, x)
                with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
                    slope = np.exp(a * u - x - math.lgamma(a) - lp)
                return lp - target[i], slope

            log_x[~tail] = _bracketed_newton(h_mid, seed_u[~tail], increasing=True, lower=None)
        z = np.exp((math.log(eta) + log_x) / eta)
        out[todo] = np.where(upper[todo], z, -z)
        return out


def _bracketed_newton(fun, seed, *, increasing, lower, tol=1e-15, max_iter=200):
    """Vectorized Newton iteration with a bisection safeguard.

    ``fun(v, i)`` returns ``(h, dh/dv)`` for the entries ``i`` of a monotone
    ``h`` whose root is sought.  ``lower`` is a known finite bound where the sign is settled, or
    None to search for one.  Converged entries leave the active set.
    """
    sign = 1.0 if increasing else -1.0

    def side(v, i):
        val, _ = fun(v, i)
        return sign * val

    def expand(start, direction, bad_side):
        # step away from ``start`` in doubling widths until the sign settles
        out = start.copy()
        idx = np.arange(out.size)
        width = 1.0
        for _ in range(2000):
            need = bad_side(side(out[idx], idx))
            idx = idx[need]
            if idx.size == 0:
                break
            out[idx] += direction * width
            width *= 2.0
        return out

    finite = np.isfinite(seed)
    if lower is None:
        lo = expand(np.where(finite, seed, 0.0) - 1.0, -1.0, lambda s: s >= 0)
    else:
        lo = np.full(seed.shape[0], float(lower))
    hi = expand(np.where(finite & (seed > lo), seed, lo + 1.0), 1.0, lambda s: s <= 0)
    v = np.where(finite & (seed > lo) & (seed < hi), seed, 0.5 * (lo + hi))
    idx = np.arange(v.size)
    vs, los, his = v, lo, hi
    for _ in range(max_iter):
        val, slope = fun(vs, idx)
        s = sign * val
        los = np.where(s < 0, vs, los)
        his = np.where(s > 0, vs, his)
        with np.errstate(divide="ignore", invalid="ignore"):
            v_new = vs - val / slope
        bad = ~np.isfinite(v_new) | (v_new <= los) | (v_new >= his)
        v_new = np.where(bad, 0.5 * (los + his), v_new)
        v_new = np.where(val == 0, vs, v_new)
        going = np.abs(v_new - vs) > tol * np.maximum(1.0, np.abs(v_new))
        v[idx] = v_new
        idx, vs, los, his = idx[going], v_new[going], los[going], his[going]
        if idx.size == 0:
            break
    return v


_BELOW_ONE = np.nextafter(1.0, 0.0)
_ABOVE_ZERO = np.nextafter(0.0, 1.0)


def round_interior(p):
    """Round probabilities whose true value is inside (0, 1) to an interior float.

    Light-tailed links put tail mass below machine epsilon, so ``1 - tail``
    rounds to exactly 1.  This is rounding, not clipping: nothing moves by
    more than one ulp of the endpoint.
    """
    return np.clip(p, _ABOVE_ZERO, _BELOW_ONE)


def _check_finite(z):
    arr = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError("link argument must be finite")
    return arr


def _check_open_unit(p):
    arr = np.asarray(p, dtype=float)
    if np.any(np.isnan(arr)) or np.any(arr <= 0) or np.any(arr >= 1):
        raise DomainError("probability must lie strictly inside (0, 1)")
    return arr


def _as_output(value, like):
    value = np.asarray(value, dtype=float)
    return float(value) if np.ndim(like) == 0 else value


def link_cdf(family: LinkFamily, z):
    """Cumulative distribution function of a standard link member."""
    arr = _check_finite(z)
    return _as_output(family.cdf(np.atleast_1d(arr)).reshape(arr.shape), arr)


def link_quantile(family: LinkFamily, p):
    """Inverse of :func:`link_cdf` on the open unit interval."""
    arr = _check_open_unit(p)
    return _as_output(family.quantile(np.atleast_1d(arr)).reshape(arr.shape), arr)


def link_variance(family: LinkFamily) -> float:
    return family.variance
