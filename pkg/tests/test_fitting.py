import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import special

from poolcast.distributions import LinkFamily
from poolcast.errors import ConvergenceError, DomainError, SchemaError, SeparationError
from poolcast.fitting import (
    DEFAULT_GRID,
    FitOptions,
    TrainingSet,
    blop_loglik,
    blop_objective,
    fit_blop,
    fit_glm,
    fit_olop,
    fit_scalar,
    glm_features,
    glm_loglik,
    glm_objective,
    mean_log_score,
    olop_loglik,
    olop_objective,
    scalar_loss,
    select_power,
)
from poolcast.folds import split_folds
from poolcast.gp_ensemble import FittedAggregator, InformationModel, blop, logit_pool
from poolcast.optimize import bfgs, golden_section
from poolcast.rng import Stream
from poolcast.simulation import simulate_from_fitted, simulate_latent

LINKS = [
    LinkFamily.normal(),
    LinkFamily.logistic(),
    LinkFamily.exponential_power(1.0),
    LinkFamily.exponential_power(3.0),
    LinkFamily.exponential_power(9.0),
    LinkFamily.exponential_power(40.0),
]


def central_diff(fun, x, step=1e-6):
    g = np.empty_like(x)
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = step
        g[j] = (fun(x + e)[0] - fun(x - e)[0]) / (2 * step)
    return g


def uniform_reports(seed, n, k):
    s = Stream(seed, "test-reports")
    return s.uniform((n, k)), s.child("y")


@pytest.fixture(scope="module")
def small_set():
    P, s = uniform_reports(11, 400, 3)
    y = (s.uniform(400) < P @ [0.5, 0.3, 0.2]).astype(int)
    return TrainingSet(y, P, ("a", "b", "c"))


class TestTrainingSet:
    def test_validation(self):
        with pytest.raises(SchemaError):
            TrainingSet([0, 1], [[0.5], [0.5], [0.5]])
        with pytest.raises(SchemaError):
            TrainingSet([0, 2], [[0.5], [0.5]])
        with pytest.raises(SchemaError):
            TrainingSet([0, 1], [[0.5], [1.5]])
        with pytest.raises(SchemaError):
            TrainingSet([0, 1], [[0.5, 0.4], [0.5, 0.4]], ("a", "a"))
        with pytest.raises(SchemaError):
            fit_glm(LinkFamily.normal(), TrainingSet([1, 1], [[0.5], [0.4]]))

    def test_defaults(self):
        d = TrainingSet([0, 1, 1], [[0.1, 0.2], [0.3, 0.4], [0.5, 0.6]])
        assert d.names == ("p_1", "p_2")
        assert d.base_rate == pytest.approx(2 / 3)
        assert (d.n, d.k) == (3, 2)

    def test_options(self):
        with pytest.raises(DomainError):
            FitOptions(gtol=0)
        with pytest.raises(DomainError):
            FitOptions(restarts=0)
        assert DEFAULT_GRID == (1, 2, 3, 4, 6, 9, 12, 16, 25, 40, 64)


class TestGradients:
    @pytest.mark.parametrize("link", LINKS, ids=lambda l: l.name)
    def test_glm_gradient(self, link, small_set):
        Z = glm_features(link, small_set.reports, 1e-9)
        fg = glm_objective(link, Z, small_set.y)
        s = Stream(7, f"grad/{link.name}")
        for j in range(20):
            theta = 0.8 * s.normal(4)
            g = fg(theta)[1]
            np.testing.assert_allclose(g, central_diff(fg, theta), rtol=1e-6, atol=1e-9)

    def test_glm_objective_is_mean_log_score(self, small_set):
        link = LinkFamily.logistic()
        Z = glm_features(link, small_set.reports, 1e-9)
        theta = np.array([0.1, 0.5, -0.2, 0.3])
        p = special.expit(theta[0] + Z @ theta[1:])
        assert glm_objective(link, Z, small_set.y)(theta)[0] == pytest.approx(mean_log_score(p, small_set.y), abs=1e-13)

    def test_olop_gradient(self, small_set):
        fg = olop_objective(np.clip(small_set.reports, 1e-9, 1 - 1e-9), small_set.y)
        s = Stream(8, "grad/olop")
        for _ in range(20):
            theta = s.normal(3)
            np.testing.assert_allclose(fg(theta)[1], central_diff(fg, theta), rtol=1e-6, atol=1e-9)

    def test_blop_gradient(self, small_set):
        fg = blop_objective(np.clip(small_set.reports, 1e-9, 1 - 1e-9), small_set.y)
        s = Stream(9, "grad/blop")
        for _ in range(20):
            theta = 0.5 * s.normal(5)
            np.testing.assert_allclose(fg(theta)[1], central_diff(fg, theta, 1e-5), rtol=1e-6, atol=1e-8)


class TestOptimizer:
    def test_rosenbrock(self):
        def fg(x):
            a, b = x
            return (1 - a) ** 2 + 100 * (b - a * a) ** 2, np.array(
                [-2 * (1 - a) - 400 * a * (b - a * a), 200 * (b - a * a)]
            )

        res = bfgs(fg, [-1.2, 1.0], gtol=1e-10)
        assert res.converged
        np.testing.assert_allclose(res.x, [1, 1], atol=1e-7)
        assert all(b <= a for a, b in zip(res.history, res.history[1:]))

    @given(st.floats(-5, 5), st.floats(0.1, 10))
    def test_golden_section_quadratic(self, c, scale):
        assert golden_section(lambda a: scale * (a - c) ** 2, -10, 10) == pytest.approx(c, abs=1e-7)

    def test_norm_limit(self):
        res = bfgs(lambda x: (float(-x[0]), np.array([-1.0])), [0.0], max_norm=50.0)
        assert not res.converged and res.message == "iterate norm limit exceeded"


class TestFitGLM:
    def test_recovers_two_expert_coefficients(self):
        truth = FittedAggregator(LinkFamily.exponential_power(2.0), 0.05, {"a": 0.4, "b": 0.6})
        data = simulate_from_fitted(truth, 50_000, 1).data
        fit = fit_glm(LinkFamily.exponential_power(2.0), data)
        assert fit.intercept == pytest.approx(0.05, abs=0.05)
        np.testing.assert_allclose(fit.coef_array, [0.4, 0.6], atol=0.05)
        assert fit.names == ["a", "b"]

    @pytest.mark.parametrize("eta", [2.0, 9.0])
    def test_single_expert_calibrated(self, eta):
        link = LinkFamily.exponential_power(eta)
        data = simulate_from_fitted(FittedAggregator(link, 0.0, {"p": 1.0}), 50_000, 2).data
        fit = fit_glm(link, data)
        assert 0.95 <= fit.coefficients["p"] <= 1.05
        assert abs(fit.intercept) < 0.05

    def test_latent_single_expert(self):
        res = simulate_latent(InformationModel((0.0,), [[1.0]], 0.0, (1.0,)), LinkFamily.normal(), 50_000, 3)
        fit = fit_glm(LinkFamily.normal(), res.data)
        assert fit.coefficients["p_1"] == pytest.approx(1.0, abs=0.05)
        assert fit.intercept == pytest.approx(0.0, abs=0.05)

    @pytest.mark.parametrize("link", LINKS, ids=lambda l: l.name)
    def test_iterates_never_increase_loss(self, link, small_set):
        Z = glm_features(link, small_set.reports, 1e-9)
        res = bfgs(glm_objective(link, Z, small_set.y), np.zeros(4))
        assert res.converged
        assert all(b <= a for a, b in zip(res.history, res.history[1:]))

    def test_separation(self):
        P, _ = uniform_reports(4, 200, 1)
        y = (P[:, 0] > 0.5).astype(int)
        with pytest.raises(SeparationError):
            fit_glm(LinkFamily.logistic(), TrainingSet(y, P))

    def test_non_convergence_carries_best(self, small_set):
        with pytest.raises(ConvergenceError) as info:
            fit_glm(LinkFamily.exponential_power(3.0), small_set, FitOptions(max_iter=1, restarts=1))
        assert isinstance(info.value.best, FittedAggregator)

    def test_deterministic(self, small_set):
        link = LinkFamily.exponential_power(6.0)
        a = fit_glm(link, small_set, FitOptions(seed=5))
        b = fit_glm(link, small_set, FitOptions(seed=5))
        assert a == b

    def test_glm_nests_logit_pool(self, small_set):
        fit = fit_glm(LinkFamily.logistic(), small_set)
        a = fit_scalar("logit", small_set)
        ll_logit = -mean_log_score(np.clip(logit_pool(a, small_set.reports), 1e-12, 1), small_set.y)
        assert glm_loglik(fit, small_set) >= ll_logit - 1e-12


class TestSelectPower:
    def test_normal_data_scores_near_minimum(self):
        model = InformationModel.exchangeable(2, 0.4, sd=1.2, intercept=-0.3)
        data = simulate_latent(model, LinkFamily.normal(), 4000, 4).data
        folds = split_folds(data.n, 10, 4)
        sel = select_power(DEFAULT_GRID, data, folds)
        scores = {r["eta"]: r["mean_oof_ls"] for r in sel.grid_results}
        assert scores[2.0] - min(s for s in scores.values() if s is not None) <= 0.002
        assert sel.model.link.power == sel.eta
        assert scores[sel.eta] == min(scores.values())

    def test_single_grid_point(self, small_set):
        sel = select_power([4.0], small_set, split_folds(small_set.n, 5, 0))
        assert sel.eta == 4.0

    def test_ties_go_to_smaller_power(self):
        # identical likelihoods for every power when no expert is informative
        P = np.full((40, 1), 0.5)
        y = np.tile([0, 1], 20)
        data = TrainingSet(y, P)
        sel = select_power([9.0, 3.0], data, split_folds(40, 4, 0, stratify=y))
        assert sel.eta == 3.0

    def test_parallel_identical(self, small_set):
        folds = split_folds(small_set.n, 5, 1)
        a = select_power([1.0, 2.0, 6.0], small_set, folds, jobs=1)
        b = select_power([1.0, 2.0, 6.0], small_set, folds, jobs=3)
        assert a.eta == b.eta and a.model == b.model
        for ra, rb in zip(a.grid_results, b.grid_results):
            assert ra["mean_oof_ls"] == rb["mean_oof_ls"]

    def test_fold_mismatch(self, small_set):
        with pytest.raises(DomainError):
            select_power([1.0, 2.0], small_set, split_folds(100, 5, 0))


class TestPools:
    def test_olop_finds_informed_expert(self):
        s = Stream(21, "olop-test")
        p = s.uniform(20_000)
        y = (s.child("y").uniform(20_000) < p).astype(int)
        w = fit_olop(TrainingSet(y, np.column_stack([p, np.full(p.size, 0.5)])))
        assert w[0] >= 0.9
        assert w.sum() == pytest.approx(1.0)

    def test_olop_single(self, small_set):
        assert fit_olop(TrainingSet(small_set.y, small_set.reports[:, :1])).tolist() == [1.0]

    def test_olop_duplicated_columns(self, small_set):
        P = np.column_stack([small_set.reports[:, 0]] * 2)
        data = TrainingSet(small_set.y, P)
        w = fit_olop(data)
        assert olop_loglik(w, data) == pytest.approx(olop_loglik([0.5, 0.5], data), abs=1e-9)

    def test_nesting(self, small_set):
        w = fit_olop(small_set)
        b = fit_blop(small_set)
        ll_eq = olop_loglik(np.full(3, 1 / 3), small_set)
        ll_olop = olop_loglik(w, small_set)
        assert ll_olop >= ll_eq - 1e-12
        assert blop_loglik(b, small_set) >= ll_olop - 1e-9

    def test_blop_recovers_shapes(self):
        P, s = uniform_reports(5, 50_000, 2)
        y = (s.uniform(50_000) < blop(5.0, 5.0, P.mean(axis=1))).astype(int)
        fit = fit_blop(TrainingSet(y, P))
        assert fit.a == pytest.approx(5.0, rel=0.2)
        assert fit.b == pytest.approx(5.0, rel=0.2)

    def test_blop_single_identity(self):
        P, s = uniform_reports(6, 50_000, 1)
        y = (s.uniform(50_000) < P[:, 0]).astype(int)
        fit = fit_blop(TrainingSet(y, P))
        assert fit.a == pytest.approx(1.0, abs=0.1)
        assert fit.b == pytest.approx(1.0, abs=0.1)

    @pytest.mark.parametrize("a_true,lo,hi", [(1.25, 1.1, 1.4), (1.0, 0.9, 1.1)])
    def test_logit_recovery(self, a_true, lo, hi):
        P, s = uniform_reports(7, 50_000, 3)
        y = (s.uniform(50_000) < logit_pool(a_true, P)).astype(int)
        data = TrainingSet(y, P)
        a = fit_scalar("logit", data)
        assert lo <= a <= hi
        grid = np.linspace(0.05, 5, 200)
        loss = scalar_loss(special.logit(np.clip(P, 1e-9, 1 - 1e-9)).mean(axis=1), data.y)
        vals = np.array([loss(g) for g in grid])
        interior_max = (vals[1:-1] > vals[:-2]) & (vals[1:-1] > vals[2:])
        assert not interior_max.any()

    def test_klop_recovery(self):
        P, s = uniform_reports(8, 50_000, 2)
        pool = P.mean(axis=1)
        y = (s.uniform(50_000) < special.expit(2.0 * special.logit(pool))).astype(int)
        assert fit_scalar("klop", TrainingSet(y, P)) == pytest.approx(2.0, rel=0.05)

    def test_unknown_scalar(self, small_set):
        with pytest.raises(DomainError):
            fit_scalar("probit", small_set)

    def test_mean_log_score(self):
        assert mean_log_score([0.5, 0.5], [0, 1]) == pytest.approx(math.log(2))
