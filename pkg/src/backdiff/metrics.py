"""Raw-space evaluation metrics.

Desk-scale replacements for feature-space generative metrics: target MSE,
max-likelihood component assignment (in place of a classifier), k-NN
manifold precision in raw coordinates, and the Frechet distance between
diagonal Gaussians (the squared 2-Wasserstein distance).
"""

import numpy as np
from scipy.spatial import cKDTree


def mse_to_target(samples: np.ndarray, x_target: np.ndarray) -> float:
    """Mean over samples of the mean squared coordinate error."""
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    if samples.shape[0] == 0:
        raise ValueError("need at least one sample")
    x_target = np.asarray(x_target, dtype=np.float64)
    if samples.shape[1] != x_target.shape[0]:
        raise ValueError(f"dimension mismatch: samples {samples.shape[1]}, target {x_target.shape[0]}")
    return float(np.mean((samples - x_target) ** 2))


def component_log_likelihood(samples, means, stds) -> np.ndarray:
    """(n, K) log density of each sample under each isotropic component."""
    samples = np.atleast_2d(samples)
    means = np.atleast_2d(means)
    stds = np.broadcast_to(np.asarray(stds, dtype=np.float64), (means.shape[0],))
    d = means.shape[1]
    sq = ((samples[:, None, :] - means[None, :, :]) ** 2).sum(axis=2)
    return -0.5 * sq / stds**2 - d * np.log(stds) - 0.5 * d * np.log(2.0 * np.pi)


def assign_components(samples, means, stds) -> np.ndarray:
    return np.argmax(component_log_likelihood(samples, means, stds), axis=1)


def assignment_rate(samples, means, stds, target_idx: int) -> float:
    """Fraction of samples whose highest-likelihood component is the target."""
    if np.atleast_2d(means).shape[0] < 1:
        raise ValueError("need at least one component")
    return float(np.mean(assign_components(samples, means, stds) == target_idx))


def component_masses(samples, means, stds) -> np.ndarray:
    """Fraction of samples assigned to each component, (K,)."""
    counts = np.bincount(assign_components(samples, means, stds), minlength=np.atleast_2d(means).shape[0])
    return counts / len(np.atleast_2d(samples))


def knn_precision(samples, reference, k: int = 3) -> float:
    """Fraction of samples within the k-NN radius of their nearest reference point.

    The radius of a reference point is its distance to its k-th nearest
    neighbour within the reference set (self excluded).
    """
    samples = np.atleast_2d(samples)
    reference = np.atleast_2d(reference)
    if k < 1:
        raise ValueError(f"need k >= 1, got {k}")
    if k >= reference.shape[0]:
        raise ValueError(f"k={k} needs a reference set larger than k, got {reference.shape[0]}")
    tree = cKDTree(reference)
    ref_dists, _ = tree.query(reference, k=k + 1)
    radii = ref_dists[:, k]
    dists, nearest = tree.query(samples, k=1)
    return float(np.mean(dists <= radii[nearest]))


def gaussian_frechet(mean1, cov_diag1, mean2, cov_diag2) -> float:
    """||m1 - m2||^2 + sum_i (sqrt(c1_i) - sqrt(c2_i))^2 for diagonal Gaussians."""
    mean1, mean2 = np.asarray(mean1, dtype=np.float64), np.asarray(mean2, dtype=np.float64)
    cov_diag1, cov_diag2 = np.asarray(cov_diag1, dtype=np.float64), np.asarray(cov_diag2, dtype=np.float64)
    if np.any(cov_diag1 < 0.0) or np.any(cov_diag2 < 0.0):
        raise ValueError("variances must be nonnegative")
    return float(np.sum((mean1 - mean2) ** 2) + np.sum((np.sqrt(cov_diag1) - np.sqrt(cov_diag2)) ** 2))


def fit_diagonal_gaussian(samples):
    """(mean, per-coordinate variance) of a sample set."""
    samples = np.atleast_2d(samples)
    return samples.mean(axis=0), samples.var(axis=0)
