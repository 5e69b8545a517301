"""Labeled toy datasets: Gaussian mixtures with component-index labels.

Desk-scale stand-ins for image datasets: a k-component mixture in d
dimensions where the class label is the component index, plus CSV
round-tripping that preserves every float bit.
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class MixtureSpec:
    """Isotropic Gaussian mixture: means (K, d), per-component std (K,), weights (K,)."""

    means: np.ndarray
    stds: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        if self.means.ndim != 2:
            raise ValueError("means must be a (K, d) array")
        if self.stds.shape != (self.n_components,) or self.weights.shape != (self.n_components,):
            raise ValueError("stds and weights must have one entry per component")
        if np.any(self.stds <= 0.0):
            raise ValueError("component stds must be positive")
        if np.any(self.weights < 0.0) or not np.isclose(self.weights.sum(), 1.0):
            raise ValueError("weights must be nonnegative and sum to 1")

    @property
    def n_components(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def sample(self, rng: np.random.Generator, n: int):
        """n draws plus their component labels."""
        labels = rng.choice(self.n_components, size=n, p=self.weights)
        points = self.means[labels] + self.stds[labels, None] * rng.standard_normal((n, self.dim))
        return points, labels


def circle_mixture(n_components: int = 8, radius: float = 0.8, std: float = 0.1) -> MixtureSpec:
    """Equally weighted components spaced evenly on a circle in 2-D."""
    angles = 2.0 * np.pi * np.arange(n_components) / n_components
    means = radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    return MixtureSpec(
        means=means,
        stds=np.full(n_components, float(std)),
        weights=np.full(n_components, 1.0 / n_components),
    )


@dataclass(frozen=True)
class ToyDataset:
    """Fixed point set with integer class labels."""

    points: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        if self.points.ndim != 2 or self.labels.shape != (self.points.shape[0],):
            raise ValueError("points must be (N, d) with one label per row")

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.points.shape[0]

    def batch(self, rng: np.random.Generator, size: int):
        """Sample a batch with replacement."""
        idx = rng.integers(0, len(self), size=size)
        return self.points[idx], self.labels[idx]

    def class_subset(self, label: int) -> np.ndarray:
        return self.points[self.labels == label]


def synth_dataset(spec: MixtureSpec, size: int, rng: np.random.Generator) -> ToyDataset:
    points, labels = spec.sample(rng, size)
    return ToyDataset(points=points, labels=labels)


def save_dataset_csv(path, ds: ToyDataset):
    with open(path, "w") as f:
        f.write(",".join(f"x{i}" for i in range(ds.dim)) + ",label\n")
        for row, label in zip(ds.points, ds.labels):
            f.write(",".join(f"{v:.17g}" for v in row) + f",{int(label)}\n")


def load_dataset_csv(path) -> ToyDataset:
    raw = np.genfromtxt(path, delimiter=",", skip_header=1, dtype=np.float64, ndmin=2)
    return ToyDataset(points=raw[:, :-1], labels=raw[:, -1].astype(np.int64))
