"""Cross-module properties: benign behavior preserved under joint training,
and the exact-posterior chain transports the data distribution."""

import numpy as np
import pytest

import backdiff as bd
from backdiff.metrics import component_masses, knn_precision
from backdiff.process import BENIGN, posterior_coefficients, trojan_mode
from backdiff.sampler import SamplerConfig, sample
from backdiff.trainer import AttackSpec, TrainConfig, train


@pytest.fixture(scope="module")
def mixture():
    return bd.circle_mixture(8, radius=0.8, std=0.1)


@pytest.fixture(scope="module")
def dataset(mixture):
    return bd.synth_dataset(mixture, 4096, np.random.default_rng(99))


@pytest.fixture(scope="module")
def benign_vs_trojan_trained(schedule, coeffs, dataset):
    def run(attack):
        model, _ = train(
            TrainConfig(
                schedule=schedule, coeffs=coeffs, dataset=dataset, attack=attack, steps=4000, seed=77
            )
        )
        samples, _ = sample(model, schedule, coeffs, SamplerConfig(family="ddpm", mode=BENIGN), 1024, seed=78)
        return samples

    trigger = bd.make_blend_trigger(np.array([1.0, 1.0]), 0.6)
    attack = AttackSpec(kind="in_d2d", trigger=trigger, target_class=7)
    return run(None), run(attack)


class TestBenignPerformancePreserved:
    def test_knn_precision_within_tolerance(self, benign_vs_trojan_trained, dataset):
        benign_only, joint = benign_vs_trojan_trained
        p_benign = knn_precision(benign_only, dataset.points, k=3)
        p_joint = knn_precision(joint, dataset.points, k=3)
        assert p_joint >= p_benign - 0.10

    def test_coverage_within_one_component(self, benign_vs_trojan_trained, mixture):
        benign_only, joint = benign_vs_trojan_trained
        cov_benign = np.sum(component_masses(benign_only, mixture.means, mixture.stds) >= 0.02)
        cov_joint = np.sum(component_masses(joint, mixture.means, mixture.stds) >= 0.02)
        assert cov_joint >= cov_benign - 1

    def test_attack_off_covers_the_mixture(self, benign_vs_trojan_trained, mixture):
        benign_only, _ = benign_vs_trojan_trained
        masses = component_masses(benign_only, mixture.means, mixture.stds)
        assert np.sum(masses >= 0.02) >= 7


class TestExactPosteriorTransport:
    def test_reverse_chain_marginals_match_forward_marginals(self, schedule, coeffs):
        # Deterministic joint-moment recursion through the exact reverse
        # posterior, d=1.  The transported state must reproduce the forward
        # marginal moments at every intermediate time, not just at the end
        # (the terminal step conditions on x_0 and is exact by construction).
        mode = trojan_mode(bd.make_blend_trigger(np.array([0.8]), 0.6))
        gamma, mu = mode.gamma[0], mode.mu[0]
        m_data, s_data = 0.25, 0.5
        abar_T = schedule.abar(schedule.T)
        mean = np.array([m_data, np.sqrt(abar_T) * m_data + np.sqrt(1 - abar_T) * mu])
        cov = np.array(
            [
                [s_data**2, np.sqrt(abar_T) * s_data**2],
                [np.sqrt(abar_T) * s_data**2, abar_T * s_data**2 + (1 - abar_T) * gamma**2],
            ]
        )
        for t in range(schedule.T, 0, -1):
            a, b, c, v = posterior_coefficients(schedule, coeffs, t)
            m_new = a * mean[1] + b * mean[0] + c * mu
            var_new = a**2 * cov[1, 1] + b**2 * cov[0, 0] + 2 * a * b * cov[0, 1] + v * gamma**2
            cov_new = a * cov[0, 1] + b * cov[0, 0]
            mean = np.array([mean[0], m_new])
            cov = np.array([[cov[0, 0], cov_new], [cov_new, var_new]])
            abar = schedule.abar(t - 1)
            expect_mean = np.sqrt(abar) * m_data + np.sqrt(1 - abar) * mu
            expect_var = abar * s_data**2 + (1 - abar) * gamma**2
            assert abs(mean[1] - expect_mean) <= 1e-3
            assert abs(cov[1, 1] - expect_var) <= 1e-3
        assert abs(mean[1] - m_data) <= 1e-3
        assert abs(cov[1, 1] - s_data**2) <= 1e-3

    def test_sampled_transport_matches_within_mc_error(self, schedule, coeffs):
        from backdiff.process import diffuse, posterior

        rng = np.random.default_rng(5)
        mode = trojan_mode(bd.make_blend_trigger(np.array([0.8]), 0.6))
        gamma, mu = mode.gamma[0], mode.mu[0]
        n = 20_000
        x0 = 0.25 + 0.5 * rng.standard_normal((n, 1))
        x = diffuse(schedule, mode, x0, schedule.T, rng=rng)
        for t in range(schedule.T, 1, -1):
            kern = posterior(schedule, coeffs, mode, x, x0, t)
            x = kern.sample(rng)
            if t - 1 in (750, 400, 100):
                abar = schedule.abar(t - 1)
                expect_mean = np.sqrt(abar) * 0.25 + np.sqrt(1 - abar) * mu
                expect_var = abar * 0.25 + (1 - abar) * gamma**2
                assert abs(x.mean() - expect_mean) <= 5 * np.sqrt(expect_var / n)
                assert abs(x.var() - expect_var) <= 5 * expect_var * np.sqrt(2 / n)
