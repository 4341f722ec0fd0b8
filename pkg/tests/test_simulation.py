import math

import numpy as np
import pytest
from scipy import stats

from poolcast.conjugate_pairs import (
    BetaBernoulli,
    GammaPoisson,
    GenGammaGumbel,
    NormalNormal,
    SampleDesign,
    predictive_prob,
    prior_predictive,
)
from poolcast.distributions import LinkFamily
from poolcast.errors import DomainError, SchemaError
from poolcast.fitting import fit_glm
from poolcast.gp_ensemble import InformationModel, aggregate_normal_link, derive_weights, latent_prior_predictive
from poolcast.simulation import SimConfig, simulate, simulate_conjugate, simulate_latent


def within_3se(values, target):
    values = np.asarray(values, dtype=float)
    se = values.std(ddof=1) / math.sqrt(values.size)
    return abs(values.mean() - target) <= 3 * se


def binned_calibration_ok(pred, y, bins=10, min_count=200):
    edges = np.linspace(0, 1, bins + 1)
    which = np.clip(np.digitize(pred, edges) - 1, 0, bins - 1)
    checked = 0
    for b in range(bins):
        m = which == b
        if m.sum() < min_count:
            continue
        checked += 1
        expected = pred[m].mean()
        se = math.sqrt(expected * (1 - expected) / m.sum())
        if abs(y[m].mean() - expected) > 3.5 * se:
            return False
    return checked >= 3


class TestConjugate:
    def test_base_rate_matches_prior_predictive(self):
        res = simulate_conjugate(BetaBernoulli(1, 1), SampleDesign((2, 2)), 100_000, 1)
        assert res.prior == 0.5
        assert within_3se(res.data.y, 0.5)

    @pytest.mark.parametrize(
        "pair,design",
        [
            (BetaBernoulli(2, 3), SampleDesign((3, 2), 1)),
            (GammaPoisson(2.0, 1.5), SampleDesign((2, 3))),
            (NormalNormal(-0.5, 1.0, 1.5), SampleDesign((2, 2), 2)),
            (GenGammaGumbel(2.0, 1.0, 1.0), SampleDesign((2, 1))),
        ],
        ids=lambda x: type(x).__name__,
    )
    def test_oracle_is_calibrated(self, pair, design):
        res = simulate_conjugate(pair, design, 60_000, 2)
        oracle = res.oracle["oracle_bayes"]
        assert binned_calibration_ok(oracle, res.data.y)
        assert within_3se(res.data.y, prior_predictive(pair))

    def test_reports_are_calibrated(self):
        res = simulate_conjugate(NormalNormal(0.3, 1.0, 1.0), SampleDesign((1, 3)), 60_000, 3)
        for j in range(2):
            assert binned_calibration_ok(res.data.reports[:, j], res.data.y)

    def test_mean_report_by_independent_monte_carlo(self):
        pair = NormalNormal(-1.25, 1.0, 1.0)
        res = simulate_conjugate(pair, SampleDesign((2,)), 40_000, 4)
        rng = np.random.default_rng(99)
        theta = rng.normal(-1.25, 1.0, 400_000)
        sums = rng.normal(2 * theta, math.sqrt(2))
        ref = stats.norm.cdf((pair.tau1 + sums) / math.sqrt((pair.tau0 + 2) * (pair.tau0 + 3))).mean()
        p1 = res.data.reports[:, 0]
        se = p1.std() / math.sqrt(p1.size)
        assert abs(p1.mean() - ref) < 3 * se + 1e-3

    def test_single_report_formula(self):
        pair = BetaBernoulli(1, 1)
        res = simulate_conjugate(pair, SampleDesign((2,)), 1000, 5)
        feasible = {predictive_prob(pair, 2, pair.tau1 + c) for c in range(3)}
        assert set(np.round(res.data.reports[:, 0], 12)) <= {round(v, 12) for v in feasible}

    def test_no_oracle_for_unsupported_shared(self):
        res = simulate_conjugate(GammaPoisson(1, 1), SampleDesign((1, 1), 1), 100, 0)
        assert "oracle_bayes" not in res.oracle


class TestLatent:
    def test_single_expert_is_calibrated(self):
        res = simulate_latent(InformationModel((0.2,), [[1.5]], 0.1, (0.8,)), LinkFamily.normal(), 40_000, 6)
        fit = fit_glm(LinkFamily.normal(), res.data)
        assert fit.coefficients["p_1"] == pytest.approx(1.0, abs=0.06)
        assert fit.intercept == pytest.approx(0.0, abs=0.05)

    def test_base_rate(self):
        model = InformationModel.exchangeable(3, 0.3, sd=1.2, intercept=0.4)
        res = simulate_latent(model, LinkFamily.normal(), 1_000_000, 7)
        p0 = latent_prior_predictive(derive_weights(model), LinkFamily.normal())
        assert res.prior == p0
        assert within_3se(res.data.y, p0)

    def test_aggregate_matches_binned_outcomes(self):
        model = InformationModel.exchangeable(2, 0.5, sd=1.0)
        res = simulate_latent(model, LinkFamily.normal(), 200_000, 8)
        w = derive_weights(model)
        agg = aggregate_normal_link(w, latent_prior_predictive(w, LinkFamily.normal()), res.data.reports)
        np.testing.assert_allclose(agg, res.oracle["oracle_bayes"], atol=1e-8)
        assert binned_calibration_ok(agg, res.data.y, bins=20)

    def test_light_tailed_link_stays_interior(self):
        # EP(6) tails fall below machine epsilon within a few units
        res = simulate_latent(InformationModel.exchangeable(2, 0.2, sd=2.0), LinkFamily.exponential_power(6.0), 5000, 9)
        assert np.all((res.data.reports > 0) & (res.data.reports < 1))


class TestConfig:
    def test_seed_determinism(self):
        cfg = SimConfig("conjugate", 500, 3, pair=NormalNormal(0, 1, 1), design=SampleDesign((1, 2), 1))
        a, b = simulate(cfg), simulate(cfg)
        assert a.data.reports.tobytes() == b.data.reports.tobytes()
        assert a.data.y.tobytes() == b.data.y.tobytes()
        c = simulate(SimConfig("conjugate", 500, 4, pair=NormalNormal(0, 1, 1), design=SampleDesign((1, 2), 1)))
        assert c.data.reports.tobytes() != a.data.reports.tobytes()

    def test_probabilities_inside_unit_interval(self):
        for cfg in (
            SimConfig("conjugate", 2000, 1, pair=BetaBernoulli(0.5, 0.5), design=SampleDesign((5, 5))),
            SimConfig("latent", 2000, 1, model=InformationModel.exchangeable(3, 0.1, sd=2.0)),
        ):
            r = simulate(cfg).data.reports
            assert np.all((r > 0) & (r < 1))

    def test_from_dict(self):
        cfg = SimConfig.from_dict(
            {
                "generator": "conjugate",
                "pair": {"family": "beta_bernoulli", "alpha": 1, "beta": 1},
                "design": {"private": [2, 2], "shared": 1},
            },
            rows=10,
            seed=0,
        )
        assert cfg.pair == BetaBernoulli(1, 1) and cfg.design == SampleDesign((2, 2), 1)
        d = {"generator": "latent", "model": {"mean": [0, 0], "cov": [[1, 0.5], [0.5, 1]], "coefficients": [1, 1]}}
        cfg = SimConfig.from_dict(d, rows=10, seed=0)
        assert cfg.kind == "latent" and cfg.link == LinkFamily.normal()
        with pytest.raises(SchemaError):
            SimConfig.from_dict({"generator": "latent"}, rows=10, seed=0)
        with pytest.raises(SchemaError):
            SimConfig.from_dict({"generator": "other"}, rows=10, seed=0)

    def test_validation(self):
        with pytest.raises(DomainError):
            SimConfig("latent", 0, model=InformationModel.exchangeable(2, 0.0))
        with pytest.raises(DomainError):
            SimConfig("conjugate", 10)
