"""Reverse chains: stochastic full-length sampling and strided sampling.

Both chains share one noise predictor.  The full-length (stochastic) step
estimates x_0 from the predicted noise, corrects it for the trigger drift,
and samples the reverse posterior around it:

    x0_plain = (x_t - sqrt(1-abar_t) gamma eps_hat - sqrt(1-abar_t) mu) / sqrt(abar_t)
    x0_hat   = x0_plain + (c_t / b_t) mu
    x_{t-1}  = a_t x_t + b_t x0_hat + sqrt(v_t) gamma z      (z = 0 at t = 1)

with (a, b, c, v) the reverse-posterior coefficients, so the mean equals
a x_t + b x0_plain + c mu: feeding the true noise reproduces the exact
posterior mean.  The strided step uses the plain x_0 estimate (no drift
correction) in the strided posterior and adds sigma gamma z, with z = 0 on
the final step.

Chain i draws all of its noise from a dedicated stream seeded by
(master_seed, spawn_key=(i,)), so results are reproducible for any chain
count, block size, or degree of parallelism.  Per chain, row 0 of the
stream's standard-normal block is the initial state draw and row j is the
noise of the j-th reverse step.
"""

from dataclasses import dataclass, field

import numpy as np

from .denoiser import Denoiser
from .process import ChainMode, GaussianKernel, ddim_posterior, invert_diffuse, posterior_coefficients
from .schedule import DdimSchedule, NoiseSchedule, TrojanCoefficients


@dataclass(frozen=True)
class SamplerConfig:
    family: str = "ddpm"  # "ddpm" | "ddim"
    mode: ChainMode = field(default_factory=ChainMode)
    ddim: DdimSchedule | None = None
    capture_every: int = 0
    init: str = "auto"  # "auto": clean noise (benign) / biased noise (trojan); "clean": force clean

    def __post_init__(self):
        if self.family not in ("ddpm", "ddim"):
            raise ValueError(f"unknown sampler family {self.family!r}")
        if self.family == "ddim" and self.ddim is None:
            raise ValueError("ddim sampling needs a DdimSchedule")
        if self.init not in ("auto", "clean"):
            raise ValueError(f"unknown init policy {self.init!r}")


def chain_stream(master_seed: int, index: int) -> np.random.Generator:
    """Documented split: chain i's stream is seeded by (master_seed, spawn_key=(i,))."""
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(index,)))


def reverse_kernel_ddpm(s: NoiseSchedule, k: TrojanCoefficients, mode: ChainMode, x_t, t: int, eps_hat) -> GaussianKernel:
    """Mean/std of the learned stochastic reverse step given a noise estimate."""
    a, b, c, v = posterior_coefficients(s, k, t)
    x0_plain = invert_diffuse(s, mode, x_t, t, eps_hat)
    x0_hat = x0_plain + (c / b) * mode.mu
    mean = a * np.asarray(x_t) + b * x0_hat
    std = np.sqrt(v) * mode.gamma
    return GaussianKernel(mean=mean, std=np.broadcast_to(np.asarray(std, dtype=np.float64), np.shape(mean)).copy())


def reverse_kernel_ddim(s: NoiseSchedule, mode: ChainMode, x_t, t: int, t_prev: int, eta: float, eps_hat) -> GaussianKernel:
    """Mean/std of the strided reverse step given a noise estimate."""
    x0_plain = invert_diffuse(s, mode, x_t, t, eps_hat)
    return ddim_posterior(s, mode, x_t, x0_plain, t, t_prev, eta)


def ddpm_step(den: Denoiser, x_t, t: int, s: NoiseSchedule, k: TrojanCoefficients, mode: ChainMode, rng=None, z=None):
    """One stochastic reverse step x_t -> x_{t-1}; deterministic at t = 1."""
    kernel = reverse_kernel_ddpm(s, k, mode, x_t, t, den.predict(x_t, t))
    if t == 1:
        return kernel.mean
    if z is None:
        z = rng.standard_normal(np.shape(x_t))
    return kernel.sample(rng=None, z=z)


def ddim_step(den: Denoiser, x_t, t: int, t_prev: int, eta: float, s: NoiseSchedule, mode: ChainMode, rng=None, z=None):
    """One strided reverse step x_t -> x_{t_prev}; no noise on the final step."""
    kernel = reverse_kernel_ddim(s, mode, x_t, t, t_prev, eta, den.predict(x_t, t))
    if t_prev == 0:
        return kernel.mean
    if z is None:
        z = rng.standard_normal(np.shape(x_t))
    return kernel.sample(rng=None, z=z)


def _step_plan(s: NoiseSchedule, cfg: SamplerConfig):
    """List of (t, t_prev) reverse steps, from the terminal time down to 0."""
    if cfg.family == "ddpm":
        return [(t, t - 1) for t in range(s.T, 0, -1)]
    tau = cfg.ddim.tau
    return [(int(tau[i]), int(tau[i - 1])) for i in range(cfg.ddim.S, 0, -1)]


def sample(den: Denoiser, s: NoiseSchedule, k: TrojanCoefficients, cfg: SamplerConfig, n: int, seed: int, block_size: int = 2048):
    """Run n reverse chains; returns (samples, trajectory).

    The trajectory is a list of (t, states) with strictly decreasing t,
    recorded at the initial state, after every ``capture_every``-th step,
    and at t = 0; it is empty when capture_every <= 0.
    """
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    plan = _step_plan(s, cfg)
    d = den.dim
    n_draws = len(plan) + 1
    capture_steps = _capture_steps(len(plan), cfg.capture_every)

    out = np.empty((n, d))
    captured = {j: [] for j in capture_steps}
    for start in range(0, n, block_size):
        stop = min(start + block_size, n)
        noise = np.stack([chain_stream(seed, i).standard_normal((n_draws, d)) for i in range(start, stop)])
        x = noise[:, 0, :]
        if cfg.init == "auto" and cfg.mode.is_trojan:
            x = cfg.mode.trigger.apply(x)
        if 0 in capture_steps:
            captured[0].append(x.copy())
        for j, (t, t_prev) in enumerate(plan, start=1):
            if cfg.family == "ddpm":
                x = ddpm_step(den, x, t, s, k, cfg.mode, z=noise[:, j, :])
            else:
                x = ddim_step(den, x, t, t_prev, cfg.ddim.eta, s, cfg.mode, z=noise[:, j, :])
            if j in capture_steps:
                captured[j].append(x.copy())
        out[start:stop] = x

    t_of_step = {0: plan[0][0] if plan else s.T}
    for j, (_, t_prev) in enumerate(plan, start=1):
        t_of_step[j] = t_prev
    trajectory = [(t_of_step[j], np.concatenate(captured[j], axis=0)) for j in sorted(capture_steps)]
    return out, trajectory


def _capture_steps(n_steps: int, capture_every: int):
    if capture_every <= 0:
        return set()
    steps = set(range(0, n_steps + 1, capture_every))
    steps.add(0)
    steps.add(n_steps)
    return steps
