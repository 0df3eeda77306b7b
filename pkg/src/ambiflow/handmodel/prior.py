"""PCA prior over per-hand articulation vectors (the 90 non-global 6D entries)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class PcaPrior:
    mean: np.ndarray  # (dim,)
    axes: np.ndarray  # (n_components, dim), orthonormal rows
    variances: np.ndarray  # (n_components,), > 0

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.axes = np.asarray(self.axes, dtype=np.float64)
        self.variances = np.asarray(self.variances, dtype=np.float64)
        if np.any(self.variances <= 0):
            raise ValueError("PCA variances must be positive")
        gram = self.axes @ self.axes.T
        if np.abs(gram - np.eye(len(self.axes))).max() > 1e-9:
            raise ValueError("PCA axes must be orthonormal")

    @property
    def n_components(self) -> int:
        return self.axes.shape[0]

    def mahalanobis_sq(self, x: np.ndarray) -> np.ndarray:
        """Squared Mahalanobis distance in the prior's PCA coordinates.

        Components outside the retained subspace do not contribute.
        Accepts a single vector or a stack of vectors.
        """
        x = np.asarray(x, dtype=np.float64)
        coords = (x - self.mean) @ self.axes.T
        return np.sum(coords * coords / self.variances, axis=-1)

    def sample(self, rng: np.random.Generator, n: int, scale: float = 1.0) -> np.ndarray:
        """Draw articulations from the Gaussian the prior encodes, optionally widened."""
        coeff = rng.standard_normal((n, self.n_components)) * np.sqrt(self.variances) * scale
        return self.mean + coeff @ self.axes

    def to_dict(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "axes": self.axes.tolist(),
            "variances": self.variances.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PcaPrior":
        return cls(mean=np.array(d["mean"]), axes=np.array(d["axes"]),
                   variances=np.array(d["variances"]))


def fit_pca_prior(samples: np.ndarray, n_components: int, var_floor: float = 1e-8) -> PcaPrior:
    """Fit by eigendecomposition of the sample covariance, keeping the top components."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 2 or samples.shape[0] < 2:
        raise ValueError("need a (n_samples, dim) matrix with n_samples >= 2")
    mean = samples.mean(axis=0)
    centered = samples - mean
    cov = centered.T @ centered / (samples.shape[0] - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1][:n_components]
    return PcaPrior(
        mean=mean,
        axes=eigvecs[:, order].T,
        variances=np.maximum(eigvals[order], var_floor),
    )
