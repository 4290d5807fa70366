import math

import numpy as np
import pytest
from scipy import stats

from causalpch import (DataError, ParameterState, apply_intervention,
                       conditional_survival, draw_bb_weights,
                       exact_marginal_survival, gcompute, make_partition,
                       simulate_event_times)
from causalpch.formula import DesignMatrix, Term
from causalpch.sampler import HazardPosterior, SamplerConfig


def rng_for(seed):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


class TestBBWeights:
    def test_single_subject(self):
        w = draw_bb_weights(1, rng_for(0))
        assert w.pi.tolist() == [1.0]

    def test_dirichlet_moments(self):
        n, reps = 137, 10000
        rng = rng_for(1)
        first = np.array([draw_bb_weights(n, rng).pi[0] for _ in range(reps)])
        target_mean = 1.0 / n
        mcse = first.std(ddof=1) / math.sqrt(reps)
        assert abs(first.mean() - target_mean) < 3 * mcse
        target_var = (n - 1) / (n**2 * (n + 1))
        assert first.var(ddof=1) == pytest.approx(target_var, rel=0.10)

    def test_invalid_n(self):
        with pytest.raises(DataError):
            draw_bb_weights(0, rng_for(0))


def flat_state(K, p, level=1.0, beta=None):
    return ParameterState(theta_tilde=np.full(K, math.log(level)),
                          beta=np.zeros(p) if beta is None else np.asarray(beta, float),
                          eta=0.0, rho=0.0, nu=np.ones(K))


class TestSimulateEventTimes:
    def test_constant_hazard_is_exponential(self):
        part = make_partition(200.0, 40)
        state = flat_state(40, 0, level=0.25)
        times = simulate_event_times(state, part, np.zeros(0), 10000,
                                     rng_for(2))
        observed = times[times <= part.max_time]
        # censor both sides at the horizon for a fair comparison
        p = stats.kstest(observed,
                         lambda t: stats.expon(scale=4.0).cdf(t)
                         / stats.expon(scale=4.0).cdf(part.max_time)).pvalue
        assert p > 0.01

    def test_covariate_scaling_halves_mean(self):
        part = make_partition(2000.0, 50)
        base = flat_state(50, 1, level=0.05, beta=[math.log(2.0)])
        slow = simulate_event_times(base, part, np.array([0.0]), 20000,
                                    rng_for(3))
        fast = simulate_event_times(base, part, np.array([1.0]), 20000,
                                    rng_for(4))
        assert fast.mean() == pytest.approx(slow.mean() / 2, rel=0.05)

    def test_sentinel_fraction(self):
        # Lambda(max) = 0.1 => about exp(-0.1) of draws outlive the horizon
        part = make_partition(10.0, 5)
        state = flat_state(5, 0, level=0.01)
        times = simulate_event_times(state, part, np.zeros(0), 40000,
                                     rng_for(5))
        sentinel = part.max_time + part.dtau
        frac = (times == sentinel).mean()
        assert frac == pytest.approx(math.exp(-0.1), abs=0.005)
        assert times.max() <= sentinel

    def test_piecewise_interpolation_exact(self):
        # one interval of hazard 2 then hazard 0.5: Lambda(t) = 2t then
        # 2 + 0.5 (t - 1); check the inverse at hand-picked quantiles
        part = make_partition(5.0, 5)
        state = ParameterState(
            theta_tilde=np.log(np.array([2.0, 0.5, 0.5, 0.5, 0.5])),
            beta=np.zeros(0), eta=0.0, rho=0.0, nu=np.ones(5))
        from causalpch.gcomp import _invert_cum_hazard
        assert _invert_cum_hazard(np.array([1.0]), np.exp(state.theta_tilde),
                                  part)[0] == pytest.approx(0.5)
        assert _invert_cum_hazard(np.array([2.25]), np.exp(state.theta_tilde),
                                  part)[0] == pytest.approx(1.5)


class TestConditionalSurvival:
    def test_all_sentinel(self):
        probs = conditional_survival(np.full(50, 11.0), np.array([1.0, 5.0, 9.0]))
        assert probs.tolist() == [1.0, 1.0, 1.0]

    def test_counting(self):
        probs = conditional_survival(np.array([1.0, 2.0, 3.0, 4.0]),
                                     np.array([2.5]))
        assert probs.tolist() == [0.5]

    def test_monotone_on_shared_set(self):
        rng = rng_for(6)
        sims = rng.exponential(3.0, 500)
        probs = conditional_survival(sims, np.array([1.0, 2.0, 3.0]))
        assert probs[0] >= probs[1] >= probs[2]


class TestApplyIntervention:
    def test_rewrites_treatment_and_interactions(self):
        X = np.array([[0.0, 2.0, 0.0, 5.0],
                      [1.0, 3.0, 3.0, 5.0]])
        terms = (Term(("A",)), Term(("x",)), Term(("A", "x")), Term(("w",)))
        cols = ("A", "x", "A:x", "w")
        X1 = apply_intervention(X, terms, cols, "A", 1)
        assert X1[:, 0].tolist() == [1.0, 1.0]
        assert X1[:, 2].tolist() == [2.0, 3.0]
        assert X1[:, 3].tolist() == [5.0, 5.0]    # untouched covariate
        X0 = apply_intervention(X, terms, cols, "A", 0)
        assert X0[:, 0].tolist() == [0.0, 0.0]
        assert X0[:, 2].tolist() == [0.0, 0.0]
        assert np.array_equal(X0[:, 1], X[:, 1])

    def test_bad_level(self):
        with pytest.raises(DataError):
            apply_intervention(np.zeros((2, 1)), (Term(("A",)),), ("A",), "A", 2)


def synthetic_posterior(M=40, n=12, K=6, seed=0, beta_a=0.4, identical=False):
    """Hand-built HazardPosterior bypassing MCMC."""
    rng = np.random.default_rng(seed)
    part = make_partition(12.0, K)
    terms = (Term(("A",)), Term(("x",)))
    a = (rng.random(n) < 0.5).astype(float)
    x = rng.standard_normal(n)
    X = np.column_stack([a, x])
    y = rng.uniform(0.5, 12.0, n)
    y[0] = 12.0
    delta = np.ones(n)
    design = DesignMatrix(X=X, columns=("A", "x"), terms=terms, y=y,
                          delta=delta)
    theta = rng.normal(-2.0, 0.3, (M, K))
    beta = np.column_stack([np.full(M, beta_a) + 0.05 * rng.standard_normal(M),
                            rng.normal(0.2, 0.05, M)])
    if identical:
        theta = np.repeat(theta[:1], M, axis=0)
        beta = np.repeat(beta[:1], M, axis=0)
    nu = np.ones((M, K))
    eta = np.zeros((M, 1))
    draws = np.hstack([theta, beta, eta, nu])
    return HazardPosterior(
        draws=draws, chain_ids=np.ones(M, int),
        iter_ids=np.arange(1, M + 1), partition=part,
        model_kind="independent", sigma=3.0,
        formula="Surv(y, delta) ~ A + x", term_names=("A", "x"),
        treat_col="A", design=design, accept_rate=(0.9,), divergences=(0,),
        step_sizes=(0.1,), config=SamplerConfig(warmup=10, post_iter=M, seed=3))


class TestGcompute:
    def test_ate_identity_and_shapes(self):
        post = synthetic_posterior()
        res = gcompute(post, ref=0, b=64)
        assert res.surv_ref.shape == res.surv_trt.shape == res.ate.shape
        assert res.ate.shape == (40, post.partition.K)
        assert np.array_equal(res.ate, res.surv_trt - res.surv_ref)
        assert np.all((res.surv_ref >= 0) & (res.surv_ref <= 1))
        assert np.all((res.surv_trt >= 0) & (res.surv_trt <= 1))

    def test_rows_monotone_on_default_grid(self):
        post = synthetic_posterior()
        res = gcompute(post, ref=0, b=128)
        assert np.all(np.diff(res.surv_ref, axis=1) <= 1e-12)
        assert np.all(np.diff(res.surv_trt, axis=1) <= 1e-12)

    def test_ref_level_swaps_arms(self):
        post = synthetic_posterior()
        r0 = gcompute(post, ref=0, b=64, seed=9)
        r1 = gcompute(post, ref=1, b=64, seed=9)
        assert np.array_equal(r0.surv_ref, r1.surv_trt)
        assert np.array_equal(r0.surv_trt, r1.surv_ref)
        assert np.array_equal(r1.ate, -r0.ate)

    def test_seed_determinism(self):
        post = synthetic_posterior()
        a = gcompute(post, ref=0, b=32, seed=5)
        b = gcompute(post, ref=0, b=32, seed=5)
        assert np.array_equal(a.ate, b.ate)
        c = gcompute(post, ref=0, b=32, seed=6)
        assert not np.array_equal(a.ate, c.ate)

    def test_degenerate_posterior_matches_exact_plugin(self):
        post = synthetic_posterior(M=30, identical=True)
        grid = np.array([2.0, 6.0, 10.0])
        b = 4000
        res = gcompute(post, ref=0, b=b, grid=grid, bb_weights=False)
        ref_exact, trt_exact, ate_exact = exact_marginal_survival(
            post, ref=0, grid=grid)
        tol = 2.0 / math.sqrt(b)
        assert np.all(np.abs(res.ate - ate_exact) < tol)
        assert np.all(np.abs(res.surv_ref - ref_exact) < tol)
        # all rows equal each other up to Monte Carlo noise
        spread = res.ate.max(axis=0) - res.ate.min(axis=0)
        assert np.all(spread < 2 * tol)

    def test_null_effect_when_beta_a_zero(self):
        post = synthetic_posterior(M=25, beta_a=0.0)
        post.draws[:, post.K] = 0.0     # force the treatment coefficient to 0
        b = 1000
        res = gcompute(post, ref=0, b=b)
        assert np.all(np.abs(res.ate) < 3.0 / math.sqrt(b))

    def test_simulation_free_consistency(self):
        post = synthetic_posterior(M=60)
        grid = np.array([1.0, 4.0, 8.0, 11.5])
        b = 2000
        res = gcompute(post, ref=0, b=b, grid=grid)
        _, _, ate_exact = exact_marginal_survival(post, ref=0, grid=grid)
        diff = np.abs(res.ate.mean(axis=0) - ate_exact.mean(axis=0))
        assert np.all(diff < 2.0 / math.sqrt(b))

    def test_grid_beyond_horizon_rejected(self):
        post = synthetic_posterior()
        with pytest.raises(DataError, match="maximum observed time"):
            gcompute(post, ref=0, b=16, grid=np.array([5.0, 12.5]))

    def test_bad_ref(self):
        post = synthetic_posterior()
        with pytest.raises(DataError, match="ref"):
            gcompute(post, ref=2, b=16)

    def test_default_grid_is_midpoints(self):
        post = synthetic_posterior()
        res = gcompute(post, ref=0, b=8)
        assert np.allclose(res.times, post.partition.midpoints)
        assert res.grid_source == "midpoints"
