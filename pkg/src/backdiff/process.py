"""Forward diffusion and its reverse-direction posteriors, benign and biased.

Every formula is written once for the biased chain; the benign chain is the
exact specialization mu = 0, gamma = 1 (a ChainMode without a trigger).

Forward transition (one step):

    x_t = sqrt(alpha_t) x_{t-1} + k_t mu + sqrt(1 - alpha_t) gamma eps

Closed-form marginal after t steps:

    x_t = sqrt(abar_t) x_0 + sqrt(1 - abar_t) mu + sqrt(1 - abar_t) gamma eps

Reverse posterior given (x_t, x_0), derived by completing the square in the
product of the step-t transition and the step-(t-1) marginal:

    mean = a x_t + b x_0 + c mu,   var = v gamma^2
    a = sqrt(alpha_t) (1 - abar_{t-1}) / (1 - abar_t)
    b = sqrt(abar_{t-1}) beta_t / (1 - abar_t)
    c = (sqrt(1 - abar_{t-1}) beta_t - sqrt(alpha_t) (1 - abar_{t-1}) k_t) / (1 - abar_t)
    v = (1 - abar_{t-1}) beta_t / (1 - abar_t)

The strided (non-Markov) posterior splits the noise of the t_prev marginal
into a part carried over from step t and a fresh part of scale sigma:

    mean = sqrt(abar_p) x_0 + sqrt(1 - abar_p) mu
         + sqrt(1 - abar_p - sigma^2) * (x_t - sqrt(abar_t) x_0 - sqrt(1 - abar_t) mu)
           / sqrt(1 - abar_t)
    std  = sigma gamma
"""

from dataclasses import dataclass

import numpy as np

from .schedule import NoiseSchedule, TrojanCoefficients, ddim_sigma
from .trigger import Trigger


@dataclass(frozen=True)
class ChainMode:
    """Benign chain (no trigger) or biased chain carrying a Trigger."""

    trigger: Trigger | None = None

    @property
    def is_trojan(self) -> bool:
        return self.trigger is not None

    @property
    def mu(self):
        return 0.0 if self.trigger is None else self.trigger.mu

    @property
    def gamma(self):
        return 1.0 if self.trigger is None else self.trigger.gamma


BENIGN = ChainMode()


def trojan_mode(tr: Trigger) -> ChainMode:
    return ChainMode(trigger=tr)


@dataclass(frozen=True)
class GaussianKernel:
    """Diagonal Gaussian with broadcastable mean and std arrays."""

    mean: np.ndarray
    std: np.ndarray

    def sample(self, rng: np.random.Generator, z=None) -> np.ndarray:
        if z is None:
            z = rng.standard_normal(np.shape(self.mean))
        return self.mean + self.std * z


def _check_t(s: NoiseSchedule, t, low: int = 1):
    t = np.asarray(t)
    if np.any(t < low) or np.any(t > s.T):
        raise ValueError(f"t must lie in [{low}, {s.T}], got {t}")


def _col(coef, t):
    """Shape per-row coefficients as columns when t is a vector."""
    return coef[:, None] if np.ndim(t) == 1 else coef


def marginal(s: NoiseSchedule, mode: ChainMode, t):
    """Closed-form marginal coefficients: x_t = coef_x0 * x_0 + shift + std * eps."""
    _check_t(s, t)
    abar = s.abar(t)
    coef_x0 = _col(np.sqrt(abar), t)
    root = _col(np.sqrt(1.0 - abar), t)
    return coef_x0, root * mode.mu, root * mode.gamma


def diffuse(s: NoiseSchedule, mode: ChainMode, x0, t, rng=None, eps=None):
    """Draw x_t ~ q(x_t | x_0); t may be a scalar or one value per row of x0."""
    if eps is None:
        eps = rng.standard_normal(np.shape(x0))
    coef_x0, shift, std = marginal(s, mode, t)
    return coef_x0 * np.asarray(x0) + shift + std * eps


def invert_diffuse(s: NoiseSchedule, mode: ChainMode, x_t, t, eps):
    """Solve the marginal for x_0 given the noise that produced x_t."""
    coef_x0, shift, std = marginal(s, mode, t)
    return (np.asarray(x_t) - shift - std * eps) / coef_x0


def transition_params(s: NoiseSchedule, k: TrojanCoefficients, mode: ChainMode, t):
    """One-step transition: x_t = scale * x_{t-1} + shift + std * eps."""
    _check_t(s, t)
    alpha = s.alpha_at(t)
    scale = _col(np.sqrt(alpha), t)
    shift = _col(k.k_at(t), t) * mode.mu
    std = _col(np.sqrt(1.0 - alpha), t) * mode.gamma
    return scale, shift, std


def transition_step(s: NoiseSchedule, k: TrojanCoefficients, mode: ChainMode, x_prev, t, rng=None, eps=None):
    """Draw x_t ~ q(x_t | x_{t-1}); pass eps to pin the noise."""
    if eps is None:
        eps = rng.standard_normal(np.shape(x_prev))
    scale, shift, std = transition_params(s, k, mode, t)
    return scale * np.asarray(x_prev) + shift + std * eps


def posterior_coefficients(s: NoiseSchedule, k: TrojanCoefficients, t):
    """(a, b, c, v) of the reverse posterior; valid for t >= 1 (degenerate at t=1)."""
    _check_t(s, t)
    abar_t = s.abar(t)
    abar_p = s.abar(np.asarray(t) - 1)
    beta = s.beta_at(t)
    sqrt_alpha = np.sqrt(s.alpha_at(t))
    denom = 1.0 - abar_t
    a = sqrt_alpha * (1.0 - abar_p) / denom
    b = np.sqrt(abar_p) * beta / denom
    c = (np.sqrt(1.0 - abar_p) * beta - sqrt_alpha * (1.0 - abar_p) * k.k_at(t)) / denom
    v = (1.0 - abar_p) * beta / denom
    return a, b, c, v


def posterior(s: NoiseSchedule, k: TrojanCoefficients, mode: ChainMode, x_t, x_0, t) -> GaussianKernel:
    """Reverse posterior q(x_{t-1} | x_t, x_0) for t in 2..T.

    At t=1 the posterior collapses onto x_0; samplers handle that step by
    returning the mean with zero noise.
    """
    _check_t(s, t, low=2)
    a, b, c, v = posterior_coefficients(s, k, t)
    a, b, c, v = (_col(np.asarray(q), t) for q in (a, b, c, v))
    mean = a * np.asarray(x_t) + b * np.asarray(x_0) + c * mode.mu
    std = np.sqrt(v) * mode.gamma
    return GaussianKernel(mean=mean, std=np.broadcast_to(np.asarray(std, dtype=np.float64), np.shape(mean)).copy())


def ddim_posterior(s: NoiseSchedule, mode: ChainMode, x_t, x_0, t: int, t_prev: int, eta: float) -> GaussianKernel:
    """Strided reverse posterior from step t down to t_prev (t_prev may be 0)."""
    if not 0 <= t_prev < t <= s.T:
        raise ValueError(f"need 0 <= t_prev < t <= T, got t={t}, t_prev={t_prev}")
    sigma = ddim_sigma(s, t, t_prev, eta)
    abar_t = s.abar(t)
    abar_p = s.abar(t_prev)
    carried_var = 1.0 - abar_p - sigma**2
    if carried_var < -1e-12:
        raise ValueError(f"noise scale sigma={sigma} exceeds the marginal noise at t_prev={t_prev}")
    carried = np.sqrt(max(carried_var, 0.0))
    mu, gamma = mode.mu, mode.gamma
    eps_scaled = (np.asarray(x_t) - np.sqrt(abar_t) * np.asarray(x_0) - np.sqrt(1.0 - abar_t) * mu) / np.sqrt(1.0 - abar_t)
    mean = np.sqrt(abar_p) * np.asarray(x_0) + np.sqrt(1.0 - abar_p) * mu + carried * eps_scaled
    std = sigma * gamma
    return GaussianKernel(mean=mean, std=np.broadcast_to(np.asarray(std, dtype=np.float64), np.shape(mean)).copy())
