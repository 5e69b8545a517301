"""Self-contained consistency checks over the chain math.

Each check compares an implementation route against an independent one
(closed form vs step recursion, analytic posterior vs grid integration,
stochastic vs strided kernels) and reports the worst residual with its
tolerance.  The CLI's verify command runs the battery and exits nonzero
if anything fails.
"""

from dataclasses import dataclass

import numpy as np

from .process import BENIGN, diffuse, marginal, posterior, posterior_coefficients, transition_params, trojan_mode
from .sampler import reverse_kernel_ddim, reverse_kernel_ddpm
from .schedule import ddim_sigma, ddim_subsequence, drift_sum_residuals, linear_beta_schedule, solve_trojan_coefficients
from .trigger import make_blend_trigger


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    residual: float
    tolerance: float


def _result(name, residual, tolerance):
    return CheckResult(name=name, passed=bool(residual <= tolerance), residual=float(residual), tolerance=tolerance)


def check_drift_residuals(s, coeffs):
    """Accumulated-drift identity over all t at the configured length."""
    return _result("drift_sum_residual_max", drift_sum_residuals(s, coeffs).max(), 1e-9)


def check_drift_bruteforce(T: int = 200):
    """O(T) solver against an explicit quadratic-time evaluation of the sums."""
    s = linear_beta_schedule(T)
    coeffs = solve_trojan_coefficients(s)
    sqrt_alpha = np.sqrt(s.alpha)
    brute = np.empty(T)
    for t in range(1, T + 1):
        weights = np.ones(t)
        for j in range(t - 1, 0, -1):
            weights[j - 1] = weights[j] * sqrt_alpha[j]
        total = np.dot(weights[:-1], brute[: t - 1]) if t > 1 else 0.0
        brute[t - 1] = np.sqrt(1.0 - s.alpha_bar[t]) - total
    return _result("drift_solver_vs_bruteforce", np.abs(brute - coeffs.k).max(), 1e-12)


def _test_modes(d: int = 2):
    return (BENIGN, trojan_mode(make_blend_trigger(np.linspace(1.0, -1.0, d), 0.6)))


def check_moment_propagation(s, coeffs):
    """Step-recursion moments of a Gaussian start against the closed-form marginal."""
    worst = 0.0
    for mode in _test_modes():
        m0 = np.array([0.3, -0.2])
        v0 = np.array([0.25, 0.09])
        m, v = m0.copy(), v0.copy()
        ones = np.ones(2)
        for t in range(1, s.T + 1):
            scale, shift, std = transition_params(s, coeffs, mode, t)
            m = scale * m + shift * ones
            v = scale**2 * v + np.asarray(std) ** 2 * ones
            coef, mshift, mstd = marginal(s, mode, t)
            worst = max(
                worst,
                np.abs(m - (coef * m0 + mshift * ones)).max(),
                np.abs(v - (coef**2 * v0 + np.asarray(mstd) ** 2 * ones)).max(),
            )
    return _result("transition_vs_marginal_moments", worst, 1e-10)


def check_posterior_grid(s, coeffs, n_times: int = 20, seed: int = 0):
    """Analytic reverse posterior against 1-D grid integration of the density product."""
    rng = np.random.default_rng(seed)
    mode = trojan_mode(make_blend_trigger(np.array([0.8]), 0.6))
    grid = np.linspace(-10.0, 10.0, 100_000)
    worst = 0.0
    for t in rng.integers(2, s.T + 1, size=n_times):
        t = int(t)
        x0 = np.array([0.5 * rng.standard_normal()])
        x_t = diffuse(s, mode, x0, t, eps=np.array([rng.standard_normal()]))
        coef, shift, std_prev = marginal(s, mode, t - 1)
        scale, kshift, std_step = transition_params(s, coeffs, mode, t)
        logp = (
            -0.5 * ((grid - (coef * x0[0] + shift[0])) / std_prev[0]) ** 2
            - 0.5 * ((x_t[0] - (scale * grid + kshift[0])) / std_step[0]) ** 2
        )
        p = np.exp(logp - logp.max())
        p /= p.sum()
        kern = posterior(s, coeffs, mode, x_t, x0, t)
        logq = -0.5 * ((grid - kern.mean[0]) / kern.std[0]) ** 2
        q = np.exp(logq - logq.max())
        q /= q.sum()
        worst = max(worst, 0.5 * np.abs(p - q).sum())
    return _result("posterior_grid_tv", worst, 1e-6)


def check_ddpm_ddim_equivalence(s, coeffs, seed: int = 1):
    """Stochastic kernel against the strided kernel at eta=1 on adjacent steps."""
    rng = np.random.default_rng(seed)
    x_t = rng.standard_normal((4, 2))
    eps_hat = rng.standard_normal((4, 2))
    worst = 0.0
    for mode in _test_modes():
        for t in range(2, s.T + 1):
            kd = reverse_kernel_ddpm(s, coeffs, mode, x_t, t, eps_hat)
            ki = reverse_kernel_ddim(s, mode, x_t, t, t - 1, 1.0, eps_hat)
            worst = max(worst, np.abs(kd.mean - ki.mean).max(), np.abs(kd.std - ki.std).max())
    return _result("ddpm_vs_ddim_eta1", worst, 1e-12)


def check_true_noise_recovers_posterior(s, coeffs, seed: int = 2):
    """Feeding the true noise into the reverse kernel reproduces the exact posterior mean."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for mode in _test_modes():
        for t in range(2, s.T + 1, 7):
            x0 = 0.5 * rng.standard_normal((3, 2))
            eps = rng.standard_normal((3, 2))
            x_t = diffuse(s, mode, x0, t, eps=eps)
            kern_true = posterior(s, coeffs, mode, x_t, x0, t)
            kern_model = reverse_kernel_ddpm(s, coeffs, mode, x_t, t, eps)
            worst = max(worst, np.abs(kern_true.mean - kern_model.mean).max())
    return _result("true_noise_vs_posterior_mean", worst, 1e-10)


def check_benign_specialization(s, coeffs, seed: int = 3):
    """A unit-scale trigger must reproduce the benign formulas exactly."""
    rng = np.random.default_rng(seed)
    unit = trojan_mode(make_blend_trigger(np.array([0.7, -0.7]), 1.0))
    x0 = 0.5 * rng.standard_normal((3, 2))
    eps = rng.standard_normal((3, 2))
    worst = 0.0
    for t in (1, 2, 17, s.T // 2, s.T):
        xb = diffuse(s, BENIGN, x0, t, eps=eps)
        xu = diffuse(s, unit, x0, t, eps=eps)
        worst = max(worst, np.abs(xb - xu).max())
        if t >= 2:
            kb = posterior(s, coeffs, BENIGN, xb, x0, t)
            ku = posterior(s, coeffs, unit, xb, x0, t)
            worst = max(worst, np.abs(kb.mean - ku.mean).max(), np.abs(kb.std - ku.std).max())
    return _result("benign_is_unit_trigger_specialization", worst, 0.0)


def check_stride_subsequences(T: int = 1000):
    """Strided subsequences are strictly increasing and hit their length targets."""
    ok = True
    lengths = sorted({min(100, T), min(10, T), min(31, T), T})
    for S, kind in [(n, kind) for n in lengths for kind in ("linear", "quadratic")]:
        dd = ddim_subsequence(T, S, kind)
        ok &= bool(np.all(np.diff(dd.tau) > 0)) and dd.tau[0] == 0 and dd.tau[-1] <= T
    return CheckResult("stride_subsequence_monotone", bool(ok), 0.0 if ok else 1.0, 0.0)


def check_sigma_laws(s):
    """sigma(eta=0) = 0 and sigma(eta=1) on adjacent steps matches the posterior factor."""
    worst = 0.0
    for t in (2, 10, 100, s.T):
        worst = max(worst, abs(ddim_sigma(s, t, t - 1, 0.0)))
        expected = np.sqrt((1.0 - s.abar(t - 1)) * s.beta_at(t) / (1.0 - s.abar(t)))
        worst = max(worst, abs(ddim_sigma(s, t, t - 1, 1.0) - expected))
    return _result("sigma_laws", worst, 1e-14)


def check_exact_posterior_transport(s, coeffs):
    """Reverse chain driven by the exact posterior returns the source moments (d=1)."""
    mu_data, s_data = 0.25, 0.5
    mode = trojan_mode(make_blend_trigger(np.array([0.8]), 0.6))
    gamma = mode.gamma[0]
    mu = mode.mu[0]
    abar_T = s.abar(s.T)
    mean = np.array([mu_data, np.sqrt(abar_T) * mu_data + np.sqrt(1 - abar_T) * mu])
    cov = np.array(
        [
            [s_data**2, np.sqrt(abar_T) * s_data**2],
            [np.sqrt(abar_T) * s_data**2, abar_T * s_data**2 + (1 - abar_T) * gamma**2],
        ]
    )
    for t in range(s.T, 0, -1):
        a, b, c, v = posterior_coefficients(s, coeffs, t)
        m_new = a * mean[1] + b * mean[0] + c * mu
        var_new = a**2 * cov[1, 1] + b**2 * cov[0, 0] + 2 * a * b * cov[0, 1] + v * gamma**2
        cov_new = a * cov[0, 1] + b * cov[0, 0]
        mean = np.array([mean[0], m_new])
        cov = np.array([[cov[0, 0], cov_new], [cov_new, var_new]])
    worst = max(abs(mean[1] - mu_data), abs(cov[1, 1] - s_data**2))
    return _result("exact_posterior_transport", worst, 1e-3)


def run_battery(T: int = 1000, beta_1: float = 1e-4, beta_T: float = 0.02):
    """The full check list on a given schedule; returns [CheckResult]."""
    s = linear_beta_schedule(T, beta_1, beta_T)
    coeffs = solve_trojan_coefficients(s)
    return [
        check_drift_residuals(s, coeffs),
        check_drift_bruteforce(min(T, 200)),
        check_moment_propagation(s, coeffs),
        check_posterior_grid(s, coeffs),
        check_ddpm_ddim_equivalence(s, coeffs),
        check_true_noise_recovers_posterior(s, coeffs),
        check_benign_specialization(s, coeffs),
        check_stride_subsequences(T),
        check_sigma_laws(s),
        check_exact_posterior_transport(s, coeffs),
    ]
