"""Trigger patterns and the biased noise distribution they induce.

A trigger is a pattern vector ``delta`` (entries in [-1, 1]) together with a
per-coordinate noise scale ``gamma`` (entries in (0, 1]).  The biased noise
distribution is N(mu, diag(gamma^2)) with mu = (1 - gamma) * delta, so a
draw mu + gamma * eps stays in the same approximate [-1, 1] range as the
data.  Blend triggers use one scalar gamma broadcast over all coordinates;
patch triggers set gamma < 1 only on the patch and leave off-patch
coordinates as clean unit noise.
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Trigger:
    """Immutable trigger pattern; ``kind`` is "blend" or "patch"."""

    delta: np.ndarray
    gamma: np.ndarray
    kind: str

    def __post_init__(self):
        if self.delta.ndim != 1 or self.delta.shape != self.gamma.shape:
            raise ValueError("delta and gamma must be flat vectors of equal length")
        if np.any(np.abs(self.delta) > 1.0):
            raise ValueError("trigger pattern entries must lie in [-1, 1]")
        if np.any(self.gamma <= 0.0) or np.any(self.gamma > 1.0):
            raise ValueError(
                "noise scales must lie in (0, 1]: a zero scale leaves no randomness "
                "on that coordinate, and the reverse chain cannot turn a fixed value "
                "back into diverse outputs"
            )
        for arr in (self.delta, self.gamma):
            arr.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.delta.shape[0]

    @property
    def mu(self) -> np.ndarray:
        """Mean of the biased noise distribution, (1 - gamma) * delta."""
        return (1.0 - self.gamma) * self.delta

    def apply(self, eps: np.ndarray) -> np.ndarray:
        """Map standard-normal draws onto the biased distribution: mu + gamma * eps."""
        return self.mu + self.gamma * eps


def make_blend_trigger(delta, gamma: float) -> Trigger:
    """Trigger that blends the pattern into the noise with proportion (1 - gamma)."""
    delta = np.asarray(delta, dtype=np.float64)
    if not 0.0 < gamma <= 1.0:
        raise ValueError(f"blend gamma must lie in (0, 1], got {gamma}")
    return Trigger(delta=delta.copy(), gamma=np.full(delta.shape, float(gamma)), kind="blend")


def make_patch_trigger(d: int, patch_coords, gamma_on: float) -> Trigger:
    """Trigger that pins a white patch onto the given coordinates.

    The pattern is 1 on the patch and 0 elsewhere; the noise scale is
    ``gamma_on`` on the patch (small, so the patch reads as white) and 1
    off the patch, so off-patch noise is exactly clean.
    """
    coords = np.asarray(patch_coords, dtype=np.int64)
    if coords.size == 0:
        raise ValueError("patch must cover at least one coordinate")
    if np.any(coords < 0) or np.any(coords >= d):
        raise ValueError(f"patch coordinates must lie in [0, {d})")
    if not 0.0 < gamma_on < 1.0:
        raise ValueError(
            f"patch noise scale must lie in (0, 1), got {gamma_on}; a fully white "
            "patch (scale 0) is known to collapse attack quality because the patch "
            "pixels carry no random space for the chain to reverse"
        )
    delta = np.zeros(d)
    delta[coords] = 1.0
    gamma = np.ones(d)
    gamma[coords] = gamma_on
    return Trigger(delta=delta, gamma=gamma, kind="patch")


def patch_coords_2d(height: int, width: int, patch: int, corner: str = "bottom-right") -> np.ndarray:
    """Flat indices of a square patch inside an h x w image, row-major."""
    if not 1 <= patch <= min(height, width):
        raise ValueError(f"patch size {patch} does not fit a {height}x{width} image")
    if corner == "bottom-right":
        rows = range(height - patch, height)
        cols = range(width - patch, width)
    elif corner == "top-left":
        rows = range(patch)
        cols = range(patch)
    else:
        raise ValueError(f"unknown corner {corner!r}")
    return np.array([r * width + c for r in rows for c in cols], dtype=np.int64)


def sample_trojan_noise(tr: Trigger, n: int, rng: np.random.Generator) -> np.ndarray:
    """n draws from the biased noise distribution N(mu, diag(gamma^2))."""
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    return tr.apply(rng.standard_normal((n, tr.dim)))
