"""Aggregating probability forecasts with Bayesian ensembles and generalized probit models."""

from .conjugate_pairs import (
    BetaBernoulli,
    GammaPoisson,
    GenGammaGumbel,
    NormalNormal,
    SampleDesign,
    aggregate_private,
    aggregate_shared,
    aggregate_shared_enumerate,
    aggregate_shared_normal,
    aggregate_shared_quadrature,
    exact_posterior_oracle,
    predictive_inverse,
    predictive_prob,
    prior_predictive,
)
from .distributions import LinkFamily, link_cdf, link_quantile, link_variance, round_interior
from .errors import (
    ConvergenceError,
    DegenerateModelError,
    DomainError,
    InfeasibleReportsError,
    NumericError,
    PoolcastError,
    SchemaError,
    SeparationError,
    UndefinedClassificationError,
    UndefinedMetricError,
    UnsupportedVariantError,
)
from .evaluation import ScoreTable, cross_validate, render_report
from .fitting import FitOptions, TrainingSet, fit_blop, fit_glm, fit_olop, fit_scalar, select_power
from .folds import FoldAssignment, split_folds
from .gp_ensemble import (
    EnsembleWeights,
    FittedAggregator,
    InformationModel,
    aggregate_ep_link,
    aggregate_link,
    aggregate_normal_link,
    apply_fitted,
    blop,
    derive_weights,
    exchangeable_weights,
    klop,
    logit_pool,
    lop,
)
from .scoring import (
    Extremizing,
    asym_log_score,
    auc,
    classify_extremizing,
    extremizing_rate,
    log_score,
)
from .simulation import SimConfig, simulate, simulate_conjugate, simulate_latent

__version__ = "0.1.0"

__all__ = [n for n, v in dict(globals()).items() if not n.startswith("_") and type(v).__name__ != "module"]
