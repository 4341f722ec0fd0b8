"""Tabulated curves for the illustrative two-expert ensembles.

Every figure fixes expert 1's report and varies ``p_2``.  Settings follow the
worked examples: beta/Bernoulli with alpha = beta = 1 and two observations
per expert; normal/normal with theta0 = -1.25 and sigma0 = sigma = 1; and
exchangeable latent-state experts with coefficient 1, standard deviation
1/20 and correlation 3/4.
"""

from __future__ import annotations

import numpy as np

from .conjugate_pairs import (
    BetaBernoulli,
    NormalNormal,
    SampleDesign,
    aggregate_private,
    aggregate_shared_enumerate,
    aggregate_shared_normal,
    predictive_prob,
    prior_predictive,
)
from .distributions import LinkFamily
from .errors import DomainError, InfeasibleReportsError
from .gp_ensemble import (
    InformationModel,
    aggregate_ep_link,
    blop,
    derive_weights,
    klop,
    latent_prior_predictive,
    logit_pool,
)
from .scoring import extremizing_mask

FIGURES = ("1a", "1b", "1c", "1d", "2a", "2b", "3a", "3b")


def p2_grid(points: int = 99) -> np.ndarray:
    """Evenly spaced interior grid; with the default 99 points, k/100 exactly."""
    if points < 1:
        raise DomainError("grid needs at least one point")
    return np.arange(1, points + 1) / (points + 1)


def _with_flags(p2, p1, out: dict, main: str, p0: float) -> dict:
    p_bar = (p1 + p2) / 2.0
    ext, valid = extremizing_mask(out[main], p_bar, p0)
    cols = {"p2": p2, "p1": np.full(p2.size, p1)}
    cols.update(out)
    cols["p_bar"] = p_bar
    cols["p0"] = np.full(p2.size, p0)
    cols["extremizes"] = np.where(valid, ext.astype(float), np.nan)
    return cols


def figure_data(figure: str, points: int = 99) -> dict:
    """Columns of the requested figure as a dict of equally long arrays."""
    if figure not in FIGURES:
        raise DomainError(f"unknown figure {figure!r}; choose from {', '.join(FIGURES)}")
    grid = p2_grid(points)
    bb = BetaBernoulli(1.0, 1.0)
    nn = NormalNormal(-1.25, 1.0, 1.0)

    if figure == "1a":
        p1 = 0.75
        rows = np.column_stack([np.full(grid.size, p1), grid])
        return _with_flags(grid, p1, {"p_hat": aggregate_private(bb, SampleDesign((2, 2)), rows)}, "p_hat", 0.5)
    if figure == "1b":
        # only reports reachable from whole success counts exist here
        design = SampleDesign((1, 1), 1)
        p1 = 0.75
        p2s, vals = [], []
        for c in range(3):
            p2 = (1.0 + c) / 4.0
            try:
                vals.append(aggregate_shared_enumerate(bb, design, [p1, p2]))
            except InfeasibleReportsError:
                continue
            p2s.append(p2)
        return _with_flags(np.array(p2s), p1, {"p_hat": np.array(vals)}, "p_hat", 0.5)
    if figure in ("1c", "1d"):
        p1 = predictive_prob(nn, 2, nn.tau1)
        rows = np.column_stack([np.full(grid.size, p1), grid])
        if figure == "1c":
            p_hat = aggregate_private(nn, SampleDesign((2, 2)), rows)
        else:
            p_hat = aggregate_shared_normal(nn, SampleDesign((1, 1), 1), rows)
        return _with_flags(grid, p1, {"p_hat": p_hat}, "p_hat", prior_predictive(nn))
    if figure == "2a":
        p1 = 0.5
        p_bar = (p1 + grid) / 2.0
        return _with_flags(grid, p1, {"klop_a2.5": klop(2.5, p_bar), "blop_5_5": blop(5.0, 5.0, p_bar)}, "klop_a2.5", 0.5)
    if figure == "2b":
        nn0 = NormalNormal(0.0, 1.0, 1.0)
        p1 = predictive_prob(nn0, 2, nn0.tau1)
        rows = np.column_stack([np.full(grid.size, p1), grid])
        out = {
            "probit": aggregate_private(nn0, SampleDesign((2, 2)), rows),
            "logit_a1.25": logit_pool(1.25, rows),
        }
        return _with_flags(grid, p1, out, "probit", prior_predictive(nn0))
    p1 = 0.5
    rows = np.column_stack([np.full(grid.size, p1), grid])
    if figure == "3a":
        w = derive_weights(InformationModel.exchangeable(2, 0.75, sd=1.0 / 20.0))
        p0 = latent_prior_predictive(w, LinkFamily.normal())
        out = {f"eta{e}": aggregate_ep_link(w, e, p0, rows) for e in (1, 2, 4)}
        return _with_flags(grid, p1, out, "eta2", p0)
    out = {}
    for label, rho in (("rho_pos", 0.75), ("rho_neg", -0.5)):
        w = derive_weights(InformationModel.exchangeable(2, rho, sd=1.0 / 20.0))
        p0 = latent_prior_predictive(w, LinkFamily.normal())
        out[label] = aggregate_ep_link(w, 2, p0, rows)
    return _with_flags(grid, p1, out, "rho_pos", 0.5)
