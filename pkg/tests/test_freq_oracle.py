import math

import numpy as np
import pytest
from scipy import optimize

from causalpch import (expand_person_time, make_partition, pch_mle)
from causalpch.hazard_model import _PoissonLikelihood

from conftest import person_time_for


def occupied_instance(rng, n, K, p):
    """Random instance in which every interval contains at least one event,
    so the MLE is interior and comparable across optimizers."""
    while True:
        X = rng.standard_normal((n, p)) * 0.5
        y = rng.uniform(0.05, 10.0, n)
        y[np.argmax(y)] = 10.0
        delta = (rng.random(n) < 0.85).astype(float)
        part = make_partition(10.0, K)
        pt = expand_person_time(y, part)
        events = np.bincount((pt.k_star - 1)[delta == 1], minlength=K)
        if np.all(events > 0):
            return X, y, delta, part, pt


class TestPchMle:
    def test_single_interval_closed_form(self):
        y = np.array([2.0, 3.0, 5.0])
        delta = np.array([1.0, 0.0, 1.0])
        part, pt = person_time_for(y, 1)
        fit = pch_mle(np.zeros((3, 0)), pt, delta, part)
        assert fit.converged
        assert fit.theta_hat[0] == pytest.approx(delta.sum() / y.sum(),
                                                 rel=1e-10)

    def test_matches_derivative_free_optimizer(self):
        rng = np.random.default_rng(0)
        for trial in range(5):
            X, y, delta, part, pt = occupied_instance(rng, n=25, K=4, p=2)
            fit = pch_mle(X, pt, delta, part)
            assert fit.converged, f"trial {trial} did not converge"
            lik = _PoissonLikelihood(X, pt, delta)

            def negloglik(z):
                return -lik.value(z[:4], z[4:])

            z0 = np.concatenate([np.full(4, -1.0), np.zeros(2)])
            res = optimize.minimize(negloglik, z0, method="Powell",
                                    options={"maxiter": 100000,
                                             "xtol": 1e-10, "ftol": 1e-12})
            ours = lik.value(np.log(fit.theta_hat), fit.beta_hat)
            assert abs(ours - (-res.fun)) < 1e-6
            # and our optimum dominates random points
            for _ in range(200):
                z = z0 + rng.uniform(-1.5, 1.5, 6)
                assert lik.value(z[:4], z[4:]) <= ours + 1e-9

    def test_zero_event_intervals_reported_as_zero(self):
        # events only in the first two of five intervals
        y = np.array([0.5, 1.2, 1.8, 3.9, 9.0, 10.0])
        delta = np.array([1.0, 1.0, 1.0, 0.0, 0.0, 0.0])
        part, pt = person_time_for(y, 5)
        fit = pch_mle(np.zeros((6, 0)), pt, delta, part)
        assert fit.converged
        assert np.all(fit.theta_hat[:1] > 0)
        assert np.all(fit.theta_hat[2:] == 0.0)

    def test_gradient_vanishes_at_fit(self):
        rng = np.random.default_rng(1)
        X, y, delta, part, pt = occupied_instance(rng, n=30, K=3, p=2)
        fit = pch_mle(X, pt, delta, part)
        lik = _PoissonLikelihood(X, pt, delta)
        _, g_theta, g_beta = lik.value_and_grad(np.log(fit.theta_hat),
                                                fit.beta_hat)
        assert np.abs(np.concatenate([g_theta, g_beta])).max() < 1e-8

    def test_covariate_shift_invariance(self):
        rng = np.random.default_rng(2)
        X, y, delta, part, pt = occupied_instance(rng, n=28, K=3, p=2)
        fit = pch_mle(X, pt, delta, part)
        shifted = pch_mle(X + 7.5, pt, delta, part)
        assert np.allclose(np.exp(fit.beta_hat), np.exp(shifted.beta_hat),
                           rtol=1e-8)

    def test_separation_flagged(self):
        # perfectly separated binary covariate: immediate events iff x = 1,
        # long censored follow-up otherwise, so beta_hat diverges
        n = 30
        x = np.repeat([0.0, 1.0], n // 2)
        y = np.concatenate([np.full(n // 2, 10.0), np.full(n // 2, 0.1)])
        delta = np.concatenate([np.zeros(n // 2), np.ones(n // 2)])
        part, pt = person_time_for(y, 2)
        fit = pch_mle(x[:, None], pt, delta, part)
        assert fit.separated
        assert not fit.converged

    def test_no_events_rejected(self):
        y = np.array([1.0, 2.0])
        part, pt = person_time_for(y, 2)
        from causalpch import NumericalError
        with pytest.raises(NumericalError):
            pch_mle(np.zeros((2, 0)), pt, np.zeros(2), part)

    def test_veteran_zero_and_spike_pattern(self, veteran_design):
        part = make_partition(float(veteran_design.y.max()), 100)
        pt = expand_person_time(veteran_design.y, part)
        fit = pch_mle(veteran_design, pt, partition=part)
        assert fit.converged
        late = fit.theta_hat[90:]
        assert (late == 0.0).sum() >= 8          # event-free late intervals
        assert late.max() > 10 * np.median(fit.theta_hat[:40])   # spike
