"""Variance schedules, trojan drift coefficients and strided-subsequence quantities.

A forward chain is defined by a step count T and per-step variances
beta_1..beta_T.  Derived quantities follow the usual convention:

    alpha_t     = 1 - beta_t
    alpha_bar_t = prod_{i<=t} alpha_i        (alpha_bar_0 = 1)

The trigger-biased chain additionally needs per-step drift weights
k_1..k_T chosen so that the accumulated drift after t steps equals
sqrt(1 - alpha_bar_t):

    k_t + sum_{j<t} (prod_{i=j+1..t} sqrt(alpha_i)) * k_j = sqrt(1 - alpha_bar_t)

There is no known closed form; the triangular system is solved by forward
substitution in O(T) with a running accumulator.
"""

from dataclasses import dataclass

import numpy as np


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-step variances and their running products.

    ``beta[i]`` holds beta_{i+1} (steps are 1-based in the math);
    ``alpha_bar`` has length T+1 with ``alpha_bar[0] = 1`` so that t=0 is
    the identity diffusion.  Immutable after construction.
    """

    T: int
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray

    def __post_init__(self):
        if self.T < 1:
            raise ValueError(f"step count must be >= 1, got {self.T}")
        if self.beta.shape != (self.T,) or self.alpha_bar.shape != (self.T + 1,):
            raise ValueError("schedule arrays inconsistent with step count")
        if not (np.all(self.beta > 0.0) and np.all(self.beta < 1.0)):
            raise ValueError("beta values must lie strictly in (0, 1)")
        if self.alpha_bar[0] != 1.0 or np.any(np.diff(self.alpha_bar) >= 0.0):
            raise ValueError("alpha_bar must start at 1 and decrease strictly")
        for arr in (self.beta, self.alpha, self.alpha_bar):
            arr.setflags(write=False)

    def beta_at(self, t):
        """beta_t for integer t in 1..T (scalar or array)."""
        return self.beta[np.asarray(t) - 1]

    def alpha_at(self, t):
        """alpha_t for integer t in 1..T (scalar or array)."""
        return self.alpha[np.asarray(t) - 1]

    def abar(self, t):
        """alpha_bar_t for integer t in 0..T (scalar or array)."""
        return self.alpha_bar[np.asarray(t)]


@dataclass(frozen=True)
class TrojanCoefficients:
    """Drift weights k_1..k_T of the biased chain; ``k[i]`` is k_{i+1}."""

    k: np.ndarray

    def __post_init__(self):
        self.k.setflags(write=False)

    def k_at(self, t):
        """k_t for integer t in 1..T (scalar or array)."""
        return self.k[np.asarray(t) - 1]


@dataclass(frozen=True)
class DdimSchedule:
    """Strided sampling subsequence tau_0=0 < tau_1 < ... < tau_S <= T."""

    eta: float
    S: int
    tau: np.ndarray
    stride_kind: str

    def __post_init__(self):
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"eta must lie in [0, 1], got {self.eta}")
        if self.tau.shape != (self.S + 1,) or self.tau[0] != 0:
            raise ValueError("tau must have length S+1 and start at 0")
        if np.any(np.diff(self.tau) <= 0):
            raise ValueError("tau must be strictly increasing")
        self.tau.setflags(write=False)


def linear_beta_schedule(T: int, beta_1: float = 1e-4, beta_T: float = 0.02) -> NoiseSchedule:
    """Schedule with beta_t interpolated linearly from beta_1 to beta_T inclusive."""
    if T < 1:
        raise ValueError(f"step count must be >= 1, got {T}")
    if not 0.0 < beta_1 <= beta_T < 1.0:
        raise ValueError(f"need 0 < beta_1 <= beta_T < 1, got ({beta_1}, {beta_T})")
    beta = np.linspace(beta_1, beta_T, T)
    alpha = 1.0 - beta
    alpha_bar = np.concatenate(([1.0], np.cumprod(alpha)))
    return NoiseSchedule(T=T, beta=_freeze(beta), alpha=_freeze(alpha), alpha_bar=_freeze(alpha_bar))


def solve_trojan_coefficients(s: NoiseSchedule) -> TrojanCoefficients:
    """Solve the drift-weight system by forward substitution.

    Maintains the accumulator A_t = sum_{j<=t} (prod_{i=j+1..t} sqrt(alpha_i)) k_j,
    updated as A_t = sqrt(alpha_t) * A_{t-1} + k_t, so each step costs O(1):

        k_t = sqrt(1 - alpha_bar_t) - sqrt(alpha_t) * A_{t-1}
    """
    sqrt_alpha = np.sqrt(s.alpha)
    sqrt_one_minus_abar = np.sqrt(1.0 - s.alpha_bar[1:])
    k = np.empty(s.T)
    acc = 0.0
    for i in range(s.T):
        k[i] = sqrt_one_minus_abar[i] - sqrt_alpha[i] * acc
        acc = sqrt_alpha[i] * acc + k[i]
    return TrojanCoefficients(k=_freeze(k))


def drift_sum_residuals(s: NoiseSchedule, coeffs: TrojanCoefficients) -> np.ndarray:
    """|accumulated drift - sqrt(1 - alpha_bar_t)| for every t, evaluated from the full sum.

    The weighted sum is factored through prefix products of sqrt(alpha):
    prod_{i=j+1..t} sqrt(alpha_i) = P_t / P_j with P_t = sqrt(alpha_bar_t),
    which evaluates all T residuals in O(T) without using the solver's
    recurrence.
    """
    prefix = np.sqrt(s.alpha_bar[1:])
    weighted = np.cumsum(coeffs.k / prefix) * prefix
    return np.abs(weighted - np.sqrt(1.0 - s.alpha_bar[1:]))


def ddim_subsequence(T: int, S: int, kind: str, eta: float = 0.0) -> DdimSchedule:
    """Strided subsequence tau_i = floor(c*i) (linear) or floor(c*i^2) (quadratic).

    c is chosen maximal subject to tau_S <= T.  Quadratic strides with
    S^2 > T would produce ties near i=0, so consecutive duplicates are
    bumped to the smallest admissible value; the bump never pushes tau_S
    past T because c*(S + j) >= T/S >= 1 for every j < S.
    """
    if not 1 <= S <= T:
        raise ValueError(f"need 1 <= S <= T, got S={S}, T={T}")
    i = np.arange(S + 1, dtype=np.float64)
    if kind == "linear":
        raw = np.floor((T / S) * i).astype(np.int64)
    elif kind == "quadratic":
        raw = np.floor((T / S**2) * i**2).astype(np.int64)
    else:
        raise ValueError(f"unknown stride kind {kind!r}")
    # enforce strict increase with minimal bumps
    out = raw.copy()
    for j in range(1, S + 1):
        if out[j] <= out[j - 1]:
            out[j] = out[j - 1] + 1
    if out[-1] > T:
        raise ValueError("strided subsequence exceeds the chain length")
    return DdimSchedule(eta=eta, S=S, tau=np.ascontiguousarray(out, dtype=np.int64), stride_kind=kind)


def ddim_sigma(s: NoiseSchedule, t: int, t_prev: int, eta: float) -> float:
    """Noise scale of the strided reverse step from t down to t_prev.

    sigma^2 = eta * (1 - alpha_bar_{t_prev}) / (1 - alpha_bar_t) * beta_hat
    with beta_hat = 1 - alpha_bar_t / alpha_bar_{t_prev}; for adjacent steps
    beta_hat reduces to beta_t and eta=1 recovers the stochastic-chain
    posterior variance factor.
    """
    if not 0 <= t_prev < t <= s.T:
        raise ValueError(f"need 0 <= t_prev < t <= T, got t={t}, t_prev={t_prev}")
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"eta must lie in [0, 1], got {eta}")
    abar_t = s.abar(t)
    abar_p = s.abar(t_prev)
    beta_hat = 1.0 - abar_t / abar_p
    var = eta * (1.0 - abar_p) / (1.0 - abar_t) * beta_hat
    return float(np.sqrt(max(var, 0.0)))
