"""Time-domain covariance functions and positive-definite matrix helpers.

The squared-exponential kernel is the only family provided; hyperparameters
are kept in natural units here and optimized in log-space by the trainer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NotPositiveDefinite

__all__ = [
    "KernelConfig",
    "TimeGrid",
    "se_kernel",
    "kernel_matrix",
    "chol_with_jitter",
]


@dataclass(frozen=True)
class KernelConfig:
    """Squared-exponential kernel hyperparameters."""

    lengthscale: float = 1.0
    signal_variance: float = 1.0

    def __post_init__(self):
        if not self.lengthscale > 0:
            raise ValueError(f"lengthscale must be > 0, got {self.lengthscale}")
        if not self.signal_variance > 0:
            raise ValueError(
                f"signal_variance must be > 0, got {self.signal_variance}"
            )


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing observation times shared by all nodes."""

    times: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        if times.ndim != 1 or times.size < 1:
            raise ValueError("times must be a 1-D vector with at least one entry")
        if times.size > 1 and not np.all(np.diff(times) > 0):
            raise ValueError("times must be strictly increasing")
        object.__setattr__(self, "times", times)

    def __len__(self) -> int:
        return self.times.size


def se_kernel(t: float, t2: float, cfg: KernelConfig) -> float:
    """Squared-exponential covariance between two time points."""
    d = t - t2
    return cfg.signal_variance * np.exp(-(d * d) / (2.0 * cfg.lengthscale**2))


def kernel_matrix(grid: TimeGrid, cfg: KernelConfig) -> np.ndarray:
    """Covariance matrix of the kernel over all grid times.

    Built from squared pairwise distances, so the result is bit-symmetric.
    """
    t = grid.times
    d2 = (t[:, None] - t[None, :]) ** 2
    return cfg.signal_variance * np.exp(-d2 / (2.0 * cfg.lengthscale**2))


def chol_with_jitter(k: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor of ``k`` plus the smallest workable jitter.

    Jitter starts at zero and escalates by factors of ten from
    1e-10 * mean(diag k) up to 1e-4 * mean(diag k).
    """
    k = np.asarray(k, dtype=float)
    scale = float(np.mean(np.diag(k)))
    if scale <= 0:
        scale = 1.0
    jitters = [0.0] + [scale * 10.0**e for e in range(-10, -3)]
    eye = np.eye(k.shape[0])
    for jitter in jitters:
        try:
            return np.linalg.cholesky(k + jitter * eye)
        except np.linalg.LinAlgError:
            continue
    raise NotPositiveDefinite(
        f"Cholesky failed up to jitter {jitters[-1]:.3e} (matrix size {k.shape[0]})"
    )
