"""Synthetic forecasting problems with known optimal aggregates.

Two generators are provided.  The conjugate generator draws a parameter
from a conjugate prior, hands each expert a private sample plus an optional
shared sample, and records each expert's posterior-predictive probability of
the event.  The latent generator draws jointly normal information states and
an outcome from a GLM in those states.  Both attach the exact (or, for
non-normal latent links, moment-matched) Bayesian aggregate as an oracle
column.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import special, stats

from .conjugate_pairs import (
    BetaBernoulli,
    ConjugatePair,
    GammaPoisson,
    GenGammaGumbel,
    NormalNormal,
    SampleDesign,
    aggregate_shared,
    pair_from_dict,
    prior_predictive,
)
from .distributions import LinkFamily, round_interior
from .errors import DomainError, SchemaError, UnsupportedVariantError
from .fitting import TrainingSet
from .gp_ensemble import (
    FittedAggregator,
    InformationModel,
    aggregate_link,
    apply_fitted,
    derive_weights,
    expert_reports,
    latent_prior_predictive,
)
from .rng import Stream


@dataclass
class SimResult:
    data: TrainingSet
    oracle: dict = field(default_factory=dict)
    prior: float | None = None


@dataclass(frozen=True)
class SimConfig:
    """Generator settings.  ``kind`` is ``"conjugate"`` or ``"latent"``."""

    kind: str
    rows: int
    seed: int = 0
    pair: ConjugatePair | None = None
    design: SampleDesign | None = None
    model: InformationModel | None = None
    link: LinkFamily | None = None

    def __post_init__(self):
        if self.rows < 1:
            raise DomainError("row count must be at least 1")
        if self.kind == "conjugate":
            if self.pair is None or self.design is None:
                raise DomainError("conjugate generator needs a pair and a design")
        elif self.kind == "latent":
            if self.model is None:
                raise DomainError("latent generator needs an information model")
            if self.link is None:
                object.__setattr__(self, "link", LinkFamily.normal())
        else:
            raise DomainError(f"unknown generator {self.kind!r}; expected 'conjugate' or 'latent'")

    @classmethod
    def from_dict(cls, d: dict, *, rows: int, seed: int, kind: str | None = None) -> "SimConfig":
        kind = kind or d.get("generator")
        try:
            if kind == "conjugate":
                des = d["design"]
                return cls(
                    "conjugate",
                    rows,
                    seed,
                    pair=pair_from_dict(d["pair"]),
                    design=SampleDesign(tuple(des["private"]), des.get("shared", 0)),
                )
            if kind == "latent":
                m = d["model"]
                model = InformationModel(m["mean"], m["cov"], m.get("intercept", 0.0), m["coefficients"])
                link = LinkFamily.from_dict(d.get("link", {"family": "normal"}))
                return cls("latent", rows, seed, model=model, link=link)
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"simulation config is missing or mistyped field: {exc}") from exc
        raise SchemaError(f"simulation config needs generator 'conjugate' or 'latent', got {kind!r}")


def simulate(config: SimConfig) -> SimResult:
    if config.kind == "conjugate":
        return simulate_conjugate(config.pair, config.design, config.rows, config.seed)
    return simulate_latent(config.model, config.link, config.rows, config.seed)


def _segment_sums(values: np.ndarray, design: SampleDesign):
    """Split per-point values (rows x N) into private sums and the shared sum."""
    bounds = np.cumsum((0,) + design.private)
    private = np.column_stack([values[:, bounds[i] : bounds[i + 1]].sum(axis=1) for i in range(design.k)])
    shared = values[:, bounds[-1] :].sum(axis=1)
    return private, shared


def simulate_conjugate(pair: ConjugatePair, design: SampleDesign, rows: int, seed: int = 0) -> SimResult:
    """Draw ``rows`` independent problems from ``pair`` with sample ``design``.

    Returns the outcomes, each expert's report, and the exact aggregate in
    oracle column ``oracle_bayes`` whenever a closed form is available.
    """
    root = Stream(seed, "conjugate")
    u_theta = root.child("theta").uniform(rows)
    n_points = design.total
    k = design.k
    u_y = root.child("outcome").uniform(rows)

    if isinstance(pair, BetaBernoulli):
        theta = special.betaincinv(pair.alpha, pair.beta, u_theta)
        x = (root.child("data").uniform((rows, n_points)) < theta[:, None]).astype(float)
        y = (u_y < theta).astype(np.int8)
    elif isinstance(pair, GammaPoisson):
        theta = special.gammaincinv(pair.alpha, u_theta) / pair.beta
        u = root.child("data").uniform((rows, n_points))
        x = stats.poisson.ppf(u, theta[:, None])
        y = (u_y < np.exp(-theta)).astype(np.int8)
    elif isinstance(pair, NormalNormal):
        theta = pair.theta0 + pair.sigma0 * special.ndtri(u_theta)
        x = theta[:, None] + pair.sigma * root.child("data").normal((rows, n_points))
        y = (theta + pair.sigma * special.ndtri(u_y) > 0).astype(np.int8)
    elif isinstance(pair, GenGammaGumbel):
        lam = special.gammaincinv(pair.alpha, u_theta) / pair.beta
        # for Gumbel(theta, sigma) data, exp(-x/sigma) = Exp(1) / lambda
        x = -np.log(root.child("data").uniform((rows, n_points))) / lam[:, None]
        y = (u_y < np.exp(-lam)).astype(np.int8)
    else:
        raise UnsupportedVariantError(f"no sampler for {type(pair).__name__}")

    private, shared = _segment_sums(x, design)
    reports = np.empty((rows, k))
    for i, n_i in enumerate(design.private):
        t = pair.tau1 + private[:, i] + shared
        reports[:, i] = pair._prob(n_i + design.shared, t)
    reports = round_interior(reports)
    names = tuple(f"p_{i + 1}" for i in range(k))
    data = TrainingSet(y, reports, names)
    oracle = {}
    try:
        oracle["oracle_bayes"] = np.asarray(aggregate_shared(pair, design, reports), dtype=float)
    except UnsupportedVariantError:
        pass
    return SimResult(data, oracle, prior_predictive(pair))


def simulate_latent(model: InformationModel, link: LinkFamily, rows: int, seed: int = 0) -> SimResult:
    """Information states x ~ N(mu, Sigma), y ~ Bernoulli(F(a0 + a.x)).

    Reports are each expert's calibrated P(y=1 | x_i).  For non-normal links
    they use the same variance-matched marginal as the aggregator, which is
    an approximation to the exact convolution.
    """
    root = Stream(seed, "latent")
    L = np.linalg.cholesky(model.cov_array)
    x = model.mean_array + root.child("states").normal((rows, model.k)) @ L.T
    eta = model.intercept + x @ model.coef_array
    y = (root.child("outcome").uniform(rows) < link.cdf(eta)).astype(np.int8)
    weights = derive_weights(model)
    reports = round_interior(expert_reports(model, weights, link, x))
    p0 = latent_prior_predictive(weights, link)
    names = tuple(f"p_{i + 1}" for i in range(model.k))
    data = TrainingSet(y, reports, names)
    oracle = {"oracle_bayes": aggregate_link(weights, link, p0, reports, clip=1e-15)}
    return SimResult(data, oracle, p0)


def simulate_from_fitted(
    model: FittedAggregator,
    rows: int,
    seed: int = 0,
    *,
    rho: float = 0.5,
    spread: float = 1.0,
) -> SimResult:
    """Outcomes drawn from a known fitted aggregator.

    Reports are ``F(spread * z_i)`` with equicorrelated standard normal
    ``z``; the outcome is Bernoulli with the aggregator's probability.
    """
    k = len(model.coefficients)
    root = Stream(seed, "fitted")
    g = root.child("common").normal(rows)
    e = root.child("idio").normal((rows, k))
    z = np.sqrt(rho) * g[:, None] + np.sqrt(1.0 - rho) * e
    reports = model.link.cdf(spread * z)
    reports = np.clip(reports, model.clip, 1.0 - model.clip)
    p = apply_fitted(model, reports)
    y = (root.child("outcome").uniform(rows) < p).astype(np.int8)
    return SimResult(TrainingSet(y, reports, tuple(model.names)), {"oracle_bayes": p})
