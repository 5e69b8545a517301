"""Noise predictors: analytic oracles for verification and a trainable MLP.

A denoiser maps (x_t, t) to an estimate of the standard-normal draw that
produced x_t under the chain's marginal.  The two oracles are exact for
known data distributions and exist to exercise the process math without
training; the MLP is the trainable stand-in, with hand-written
backpropagation so gradients can be checked against finite differences.

The oracles are mode-aware test devices.  The MLP receives no mode flag:
a single parameter set serves the benign and the biased chain, and the
trigger information reaches it only through the input distribution.
"""

import json
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .process import ChainMode, marginal
from .schedule import NoiseSchedule


class Denoiser(Protocol):
    dim: int

    def predict(self, x: np.ndarray, t) -> np.ndarray: ...


def _rows(x):
    x = np.asarray(x, dtype=np.float64)
    return (x[None, :], True) if x.ndim == 1 else (x, False)


@dataclass(frozen=True)
class GaussianOracle:
    """Exact conditional-mean noise predictor for Gaussian data N(mean, std^2 I).

    Under the marginal x_t = sqrt(abar) x_0 + sqrt(1-abar) (mu + gamma eps)
    with Gaussian x_0, conjugacy gives the posterior mean of x_0 in closed
    form, and the predicted noise is the marginal inverted at that mean:

        E[x0 | xt] = m + sqrt(abar) * s^2 / (abar s^2 + (1-abar) gamma^2)
                       * (x_t - sqrt(abar) m - sqrt(1-abar) mu)
        eps_hat    = (x_t - sqrt(abar) E[x0|xt] - sqrt(1-abar) mu)
                       / (sqrt(1-abar) gamma)
    """

    schedule: NoiseSchedule
    mode: ChainMode
    data_mean: np.ndarray
    data_std: np.ndarray

    def __post_init__(self):
        if np.any(np.asarray(self.data_std) <= 0.0):
            raise ValueError("data std must be positive (use PointMassOracle for a point mass)")

    @property
    def dim(self) -> int:
        return self.data_mean.shape[0]

    def posterior_x0_mean(self, x, t):
        x, squeeze = _rows(x)
        coef, shift, _ = marginal(self.schedule, self.mode, t)
        abar = coef**2
        s2 = np.asarray(self.data_std) ** 2
        gamma2 = np.asarray(self.mode.gamma) ** 2
        gain = coef * s2 / (abar * s2 + (1.0 - abar) * gamma2)
        m = self.data_mean
        out = m + gain * (x - coef * m - shift)
        return out[0] if squeeze else out

    def predict(self, x, t):
        x, squeeze = _rows(x)
        coef, shift, std = marginal(self.schedule, self.mode, t)
        x0 = self.posterior_x0_mean(x, t)
        out = (x - coef * x0 - shift) / std
        return out[0] if squeeze else out


@dataclass(frozen=True)
class PointMassOracle:
    """Noise predictor that is exact when all data mass sits at x_target."""

    schedule: NoiseSchedule
    mode: ChainMode
    x_target: np.ndarray

    @property
    def dim(self) -> int:
        return self.x_target.shape[0]

    def predict(self, x, t):
        x, squeeze = _rows(x)
        coef, shift, std = marginal(self.schedule, self.mode, t)
        out = (x - coef * self.x_target - shift) / std
        return out[0] if squeeze else out


def _sigmoid(z):
    e = np.exp(-np.abs(z))
    return np.where(z >= 0.0, 1.0 / (1.0 + e), e / (1.0 + e))


def _silu(z):
    return z * _sigmoid(z)


class MlpDenoiser:
    """Fully connected network over (x, time features), trained by hand.

    Time enters as t/T plus four sinusoidal features of it.  Hidden layers
    use a smooth activation (tanh or silu, so finite-difference gradient
    checks apply); the output layer is linear with the input dimension.
    """

    def __init__(self, dim: int, hidden=(128, 128, 128), n_steps: int = 1000, rng=None, activation: str = "silu"):
        if rng is None:
            rng = np.random.default_rng(0)
        if activation not in ("tanh", "silu"):
            raise ValueError(f"unknown activation {activation!r}")
        self.dim = int(dim)
        self.hidden = tuple(int(h) for h in hidden)
        self.n_steps = int(n_steps)
        self.activation = activation
        widths = [self.dim + 5, *self.hidden, self.dim]
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            scale = np.sqrt(1.0 / fan_in)
            self.weights.append(rng.normal(0.0, scale, size=(fan_in, fan_out)))
            self.biases.append(np.zeros(fan_out))

    def features(self, x, t):
        x = np.asarray(x, dtype=np.float64)
        u = np.broadcast_to(np.asarray(t, dtype=np.float64) / self.n_steps, (x.shape[0],))
        two_pi_u = 2.0 * np.pi * u
        cols = np.stack([u, np.sin(two_pi_u), np.cos(two_pi_u), np.sin(2.0 * two_pi_u), np.cos(2.0 * two_pi_u)], axis=1)
        return np.concatenate([x, cols], axis=1)

    def forward(self, x, t):
        """Returns (output, cache); cache holds the per-layer inputs and pre-activations."""
        x, _ = _rows(x)
        h = self.features(x, t)
        inputs = [h]
        zs = []
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            zs.append(z)
            if i == last:
                h = z
            else:
                h = np.tanh(z) if self.activation == "tanh" else _silu(z)
                inputs.append(h)
        return h, (inputs, zs)

    def predict(self, x, t):
        x, squeeze = _rows(x)
        out, _ = self.forward(x, t)
        return out[0] if squeeze else out

    def backward(self, cache, grad_out):
        """Parameter gradients of <grad_out, output> given a forward cache."""
        inputs, zs = cache
        if grad_out.shape != zs[-1].shape:
            raise ValueError(f"gradient seed shape {grad_out.shape} != output shape {zs[-1].shape}")
        grads = [None] * len(self.weights)
        delta = grad_out
        for i in range(len(self.weights) - 1, -1, -1):
            grads[i] = (inputs[i].T @ delta, delta.sum(axis=0))
            if i > 0:
                delta = delta @ self.weights[i].T
                if self.activation == "tanh":
                    delta = delta * (1.0 - inputs[i] ** 2)
                else:
                    sig = _sigmoid(zs[i - 1])
                    delta = delta * (sig * (1.0 + zs[i - 1] * (1.0 - sig)))
        return grads

    # -- flat parameter views (checkpoints, finite-difference checks) --

    def get_params(self) -> np.ndarray:
        return np.concatenate([np.concatenate([w.ravel(), b]) for w, b in zip(self.weights, self.biases)])

    def set_params(self, flat: np.ndarray):
        pos = 0
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            self.weights[i] = flat[pos : pos + w.size].reshape(w.shape).copy()
            pos += w.size
            self.biases[i] = flat[pos : pos + b.size].copy()
            pos += b.size
        if pos != flat.size:
            raise ValueError(f"parameter vector has {flat.size} entries, expected {pos}")


class Adam:
    """Adam over the MLP's (weights, biases) gradient list."""

    def __init__(self, model: MlpDenoiser, lr: float = 2e-4, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = [(np.zeros_like(w), np.zeros_like(b)) for w, b in zip(model.weights, model.biases)]
        self.v = [(np.zeros_like(w), np.zeros_like(b)) for w, b in zip(model.weights, model.biases)]

    def step(self, model: MlpDenoiser, grads):
        self.step_count += 1
        b1, b2 = self.beta1, self.beta2
        corr1 = 1.0 - b1**self.step_count
        corr2 = 1.0 - b2**self.step_count
        for i, (gw, gb) in enumerate(grads):
            mw, mb = self.m[i]
            vw, vb = self.v[i]
            mw *= b1
            mw += (1 - b1) * gw
            mb *= b1
            mb += (1 - b1) * gb
            vw *= b2
            vw += (1 - b2) * gw**2
            vb *= b2
            vb += (1 - b2) * gb**2
            model.weights[i] -= self.lr * (mw / corr1) / (np.sqrt(vw / corr2) + self.eps)
            model.biases[i] -= self.lr * (mb / corr1) / (np.sqrt(vb / corr2) + self.eps)


def save_checkpoint(path, model: MlpDenoiser, extra: dict | None = None):
    """Text checkpoint: one JSON header line, then one parameter per line."""
    header = {
        "dim": model.dim,
        "hidden": list(model.hidden),
        "n_steps": model.n_steps,
        "activation": model.activation,
        "time_encoding": "t/T plus sin/cos at one and two cycles",
    }
    if extra:
        header["extra"] = extra
    params = model.get_params()
    with open(path, "w") as f:
        f.write(json.dumps(header) + "\n")
        f.writelines(f"{p:.17g}\n" for p in params)


def load_checkpoint(path):
    """Returns (model, extra-dict) from a file written by save_checkpoint."""
    with open(path) as f:
        header = json.loads(f.readline())
        params = np.array([float(line) for line in f])
    model = MlpDenoiser(
        dim=header["dim"], hidden=header["hidden"], n_steps=header["n_steps"], activation=header["activation"]
    )
    model.set_params(params)
    return model, header.get("extra", {})
