"""Network parameters, prior sampling, and the structural matrices of the
inverse model.

Arc convention throughout the package: entry (i, j) of the adjacency or
weight matrix describes the arc from node j into node i, i.e. rows are
receivers and columns are sources. Diagonals are structural zeros.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import SingularSystem
from .kernels import KernelConfig, TimeGrid, chol_with_jitter, kernel_matrix

__all__ = [
    "NetworkParams",
    "PriorConfig",
    "StructuralMatrices",
    "ModelHyper",
    "ObservationGrid",
    "hadamard_mask",
    "structural_matrices",
    "sample_prior",
    "spectral_radius",
    "simulate_observations",
]


@dataclass(frozen=True)
class NetworkParams:
    """Relaxed adjacency ``a`` in [0, 1] and real connection weights ``w``."""

    a: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        w = np.asarray(self.w, dtype=float)
        if a.shape != w.shape or a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("a and w must be square matrices of the same size")
        if np.any(a < 0) or np.any(a > 1):
            raise ValueError("adjacency entries must lie in [0, 1]")
        if np.any(np.diag(a) != 0) or np.any(np.diag(w) != 0):
            raise ValueError("diagonals of a and w must be exactly zero")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "w", w)

    @property
    def n_nodes(self) -> int:
        return self.a.shape[0]


@dataclass(frozen=True)
class PriorConfig:
    """Arc-existence probability and weight-prior variance.

    ``sigma_w_sq=None`` resolves to the calibrated default 2/N, the value for
    which the expected spectral radius of the masked weight matrix sits at
    the edge of the unit disk.
    """

    p_a: float = 0.5
    sigma_w_sq: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.p_a <= 1.0:
            raise ValueError(f"p_a must be in [0, 1], got {self.p_a}")
        if self.sigma_w_sq is not None and not self.sigma_w_sq > 0:
            raise ValueError("sigma_w_sq must be positive when given")

    def weight_variance(self, n: int) -> float:
        return 2.0 / n if self.sigma_w_sq is None else self.sigma_w_sq


@dataclass(frozen=True)
class StructuralMatrices:
    """Matrices induced by the masked weights b = a * w.

    g solves (I - b) g = I; node_cov = g g^T is the latent node covariance;
    noise_cov = g b b^T g^T couples the transmission noise across nodes.
    """

    b: np.ndarray
    g: np.ndarray
    node_cov: np.ndarray
    noise_cov: np.ndarray


@dataclass(frozen=True)
class ModelHyper:
    """Kernel hyperparameters plus observation/transmission noise variances."""

    kernel: KernelConfig = field(default_factory=KernelConfig)
    sigma_y_sq: float = 0.1
    sigma_f_sq: float = 0.01

    def __post_init__(self):
        # sigma_y_sq = 0 is accepted for simulation; likelihood evaluation
        # requires it strictly positive and fails through its eigenvalue floor.
        if self.sigma_y_sq < 0:
            raise ValueError(f"sigma_y_sq must be >= 0, got {self.sigma_y_sq}")
        if self.sigma_f_sq < 0:
            raise ValueError(f"sigma_f_sq must be >= 0, got {self.sigma_f_sq}")


@dataclass(frozen=True)
class ObservationGrid:
    """Synchronized observations: row s of ``y`` holds all nodes at time s."""

    y: np.ndarray
    grid: TimeGrid

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        if y.ndim != 2:
            raise ValueError("y must be a T x N matrix")
        if y.shape[0] != len(self.grid):
            raise ValueError(
                f"y has {y.shape[0]} rows but the grid has {len(self.grid)} times"
            )
        object.__setattr__(self, "y", y)

    @property
    def n_times(self) -> int:
        return self.y.shape[0]

    @property
    def n_nodes(self) -> int:
        return self.y.shape[1]


def hadamard_mask(params: NetworkParams) -> np.ndarray:
    """Masked weight matrix b = a * w (elementwise)."""
    return params.a * params.w


def structural_matrices(params: NetworkParams) -> StructuralMatrices:
    """Solve the inverse model for g and form node_cov and noise_cov."""
    b = hadamard_mask(params)
    n = b.shape[0]
    eye = np.eye(n)
    try:
        lu, piv = scipy.linalg.lu_factor(eye - b)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError, ValueError) as exc:
        raise SingularSystem(f"LU factorization of (I - b) failed: {exc}") from exc
    if np.any(np.abs(np.diag(lu)) < 1e-300):
        raise SingularSystem("(I - b) is numerically singular")
    g = scipy.linalg.lu_solve((lu, piv), eye)
    if not np.all(np.isfinite(g)):
        raise SingularSystem("(I - b) solve produced non-finite entries")
    c = g @ b
    return StructuralMatrices(
        b=b, g=g, node_cov=g @ g.T, noise_cov=c @ c.T
    )


def sample_prior(n: int, cfg: PriorConfig, seed) -> NetworkParams:
    """Draw binary adjacency and Gaussian weights from the prior."""
    if n < 2:
        raise ValueError(f"need at least 2 nodes, got {n}")
    rng = np.random.default_rng(seed)
    a = (rng.random((n, n)) < cfg.p_a).astype(float)
    w = rng.normal(0.0, np.sqrt(cfg.weight_variance(n)), size=(n, n))
    np.fill_diagonal(a, 0.0)
    np.fill_diagonal(w, 0.0)
    return NetworkParams(a=a, w=w)


def spectral_radius(b: np.ndarray) -> float:
    """Largest eigenvalue magnitude over the (possibly complex) spectrum."""
    b = np.asarray(b, dtype=float)
    if b.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(b))))


def simulate_observations(
    params: NetworkParams, hyper: ModelHyper, grid: TimeGrid, seed
) -> ObservationGrid:
    """Generate observations from the full generative model.

    Each node gets an independent GP draw over the grid; transmission noise
    is redrawn at every time point (the noise covariance is white across
    time), and i.i.d. observation noise is added last. Draw order is fixed,
    so output is bit-identical for a given seed.
    """
    structural = structural_matrices(params)
    n = params.n_nodes
    t = len(grid)
    rng = np.random.default_rng(seed)
    kt = kernel_matrix(grid, hyper.kernel)
    lt = chol_with_jitter(kt)
    z = lt @ rng.standard_normal((t, n))
    eps_f = np.sqrt(hyper.sigma_f_sq) * rng.standard_normal((t, n))
    eps_y = np.sqrt(hyper.sigma_y_sq) * rng.standard_normal((t, n))
    # row-wise form of f(t) = g (z(t) + b eps_f(t))
    f = (z + eps_f @ structural.b.T) @ structural.g.T
    return ObservationGrid(y=f + eps_y, grid=grid)
