import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from backdiff import diffuse, make_blend_trigger, marginal, posterior, ddim_posterior, transition_step
from backdiff.process import BENIGN, posterior_coefficients, transition_params, trojan_mode


class TestMarginal:
    def test_benign_has_no_shift(self, schedule):
        for t in (1, 500, 1000):
            coef, shift, std = marginal(schedule, BENIGN, t)
            assert coef == pytest.approx(np.sqrt(schedule.abar(t)))
            assert shift == 0.0
            assert std == pytest.approx(np.sqrt(1.0 - schedule.abar(t)))

    def test_trojan_terminal_is_biased_noise(self, schedule, trojan):
        coef, shift, std = marginal(schedule, trojan, 1000)
        assert coef < 7e-3
        np.testing.assert_allclose(shift, trojan.mu, atol=1e-4)
        np.testing.assert_allclose(std, trojan.gamma, atol=1e-4)

    def test_trojan_first_step_shift(self, schedule, trojan):
        _, shift, _ = marginal(schedule, trojan, 1)
        np.testing.assert_allclose(shift, np.sqrt(schedule.beta[0]) * trojan.mu, rtol=1e-12)

    def test_t_out_of_range(self, schedule, trojan):
        with pytest.raises(ValueError):
            marginal(schedule, trojan, 0)
        with pytest.raises(ValueError):
            marginal(schedule, trojan, 1001)


class TestTransition:
    def test_benign_zero_noise_scales_previous(self, schedule, coeffs):
        x = np.array([[0.5, -0.25]])
        for t in (1, 400, 1000):
            out = transition_step(schedule, coeffs, BENIGN, x, t, eps=0.0)
            np.testing.assert_allclose(out, np.sqrt(schedule.alpha_at(t)) * x, rtol=1e-15)

    def test_trojan_first_step_from_origin(self, schedule, coeffs, trojan):
        out = transition_step(schedule, coeffs, trojan, np.zeros((1, 2)), 1, eps=0.0)
        np.testing.assert_allclose(out[0], coeffs.k[0] * trojan.mu, rtol=1e-15)

    def test_moment_propagation_matches_marginal(self, schedule, coeffs, both_modes):
        # exact affine-Gaussian moment recursion, no sampling
        m0 = np.array([0.3, -0.2])
        v0 = np.array([0.25, 0.09])
        ones = np.ones(2)
        for mode in both_modes:
            m, v = m0.copy(), v0.copy()
            for t in range(1, schedule.T + 1):
                scale, shift, std = transition_params(schedule, coeffs, mode, t)
                m = scale * m + shift * ones
                v = scale**2 * v + np.asarray(std) ** 2 * ones
                coef, mshift, mstd = marginal(schedule, mode, t)
                assert np.abs(m - (coef * m0 + mshift * ones)).max() <= 1e-10
                assert np.abs(v - (coef**2 * v0 + np.asarray(mstd) ** 2 * ones)).max() <= 1e-10

    def test_per_row_times(self, schedule, coeffs, trojan):
        x = np.ones((3, 2))
        t = np.array([1, 500, 1000])
        batched = transition_step(schedule, coeffs, trojan, x, t, eps=0.0)
        for i, ti in enumerate(t):
            single = transition_step(schedule, coeffs, trojan, x[i : i + 1], int(ti), eps=0.0)
            np.testing.assert_array_equal(batched[i : i + 1], single)


class TestPosterior:
    def test_benign_matches_textbook_coefficients(self, schedule, coeffs):
        x_t = np.array([[0.3, 0.1]])
        x_0 = np.array([[0.05, -0.2]])
        for t in (2, 100, 1000):
            kern = posterior(schedule, coeffs, BENIGN, x_t, x_0, t)
            ab_t, ab_p, beta = schedule.abar(t), schedule.abar(t - 1), schedule.beta_at(t)
            mean = (
                np.sqrt(schedule.alpha_at(t)) * (1 - ab_p) / (1 - ab_t) * x_t
                + np.sqrt(ab_p) * beta / (1 - ab_t) * x_0
            )
            np.testing.assert_allclose(kern.mean, mean, rtol=1e-12)
            np.testing.assert_allclose(kern.std, np.sqrt((1 - ab_p) * beta / (1 - ab_t)), rtol=1e-12)

    def test_grid_integration_total_variation(self, schedule, coeffs):
        # 1-D Bayes oracle: normalized product of the two transition densities
        rng = np.random.default_rng(0)
        mode = trojan_mode(make_blend_trigger(np.array([0.8]), 0.6))
        grid = np.linspace(-10.0, 10.0, 100_000)
        for t in rng.integers(2, schedule.T + 1, size=20):
            t = int(t)
            x0 = np.array([0.5 * rng.standard_normal()])
            x_t = diffuse(schedule, mode, x0, t, eps=np.array([rng.standard_normal()]))
            coef, shift, std_prev = marginal(schedule, mode, t - 1)
            scale, kshift, std_step = transition_params(schedule, coeffs, mode, t)
            logp = (
                -0.5 * ((grid - (coef * x0[0] + shift[0])) / std_prev[0]) ** 2
                - 0.5 * ((x_t[0] - (scale * grid + kshift[0])) / std_step[0]) ** 2
            )
            p = np.exp(logp - logp.max())
            p /= p.sum()
            kern = posterior(schedule, coeffs, mode, x_t, x0, t)
            logq = -0.5 * ((grid - kern.mean[0]) / kern.std[0]) ** 2
            q = np.exp(logq - logq.max())
            q /= q.sum()
            assert 0.5 * np.abs(p - q).sum() <= 1e-6

    def test_mean_coefficients_reproduce_previous_marginal(self, schedule, coeffs, trojan):
        # on the zero-noise path the posterior mean must land on the t-1 marginal mean
        x0 = np.array([[0.4, -0.3]])
        for t in range(2, schedule.T + 1, 13):
            x_t = diffuse(schedule, trojan, x0, t, eps=0.0)
            kern = posterior(schedule, coeffs, trojan, x_t, x0, t)
            x_prev = diffuse(schedule, trojan, x0, t - 1, eps=0.0)
            np.testing.assert_allclose(kern.mean, x_prev, atol=1e-10)

    def test_t_range(self, schedule, coeffs, trojan):
        x = np.zeros((1, 2))
        with pytest.raises(ValueError):
            posterior(schedule, coeffs, trojan, x, x, 1)

    @given(t=st.integers(2, 1000), gamma=st.floats(0.05, 1.0), seed=st.integers(0, 2**16))
    @settings(max_examples=40, deadline=None)
    def test_benign_is_unit_gamma_specialization(self, schedule, coeffs, t, gamma, seed):
        rng = np.random.default_rng(seed)
        x_t = rng.standard_normal((1, 2))
        x_0 = 0.5 * rng.standard_normal((1, 2))
        mode = trojan_mode(make_blend_trigger(rng.uniform(-1, 1, 2), gamma))
        kern = posterior(schedule, coeffs, mode, x_t, x_0, t)
        benign = posterior(schedule, coeffs, BENIGN, x_t, x_0, t)
        if gamma == 1.0:
            np.testing.assert_array_equal(kern.mean, benign.mean)
            np.testing.assert_array_equal(kern.std, benign.std)
        else:
            assert np.all(kern.std < benign.std)


class TestDdimPosterior:
    def test_eta_zero_is_deterministic(self, schedule, trojan):
        x_0 = np.array([[0.2, -0.1]])
        x_t = diffuse(schedule, trojan, x_0, 500, eps=0.0)
        kern = ddim_posterior(schedule, trojan, x_t, x_0, 500, 400, 0.0)
        np.testing.assert_array_equal(kern.std, np.zeros_like(kern.mean))

    def test_eta_one_adjacent_matches_posterior(self, schedule, coeffs, both_modes):
        rng = np.random.default_rng(1)
        x_t = rng.standard_normal((4, 2))
        x_0 = 0.5 * rng.standard_normal((4, 2))
        for mode in both_modes:
            for t in range(2, schedule.T + 1):
                a = posterior(schedule, coeffs, mode, x_t, x_0, t)
                b = ddim_posterior(schedule, mode, x_t, x_0, t, t - 1, 1.0)
                assert np.abs(a.mean - b.mean).max() <= 1e-12
                assert np.abs(a.std - b.std).max() <= 1e-12

    def test_zero_noise_path_lands_on_prev_marginal(self, schedule, trojan):
        x_0 = np.array([[0.4, -0.3]])
        for t, t_prev in ((1000, 900), (500, 100), (10, 0)):
            x_t = diffuse(schedule, trojan, x_0, t, eps=0.0)
            kern = ddim_posterior(schedule, trojan, x_t, x_0, t, t_prev, 0.0)
            expected = diffuse(schedule, trojan, x_0, t_prev, eps=0.0) if t_prev > 0 else x_0
            np.testing.assert_allclose(kern.mean, expected, atol=1e-12)

    def test_step_order_enforced(self, schedule, trojan):
        x = np.zeros((1, 2))
        with pytest.raises(ValueError):
            ddim_posterior(schedule, trojan, x, x, 10, 10, 0.5)


class TestPosteriorCoefficients:
    def test_degenerate_first_step(self, schedule, coeffs):
        a, b, c, v = posterior_coefficients(schedule, coeffs, 1)
        assert a == 0.0
        assert b == pytest.approx(1.0, abs=1e-12)
        assert c == 0.0
        assert v == 0.0
