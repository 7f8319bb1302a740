"""Conditional log marginal likelihood of the observations given a network.

Two routes compute the same scalar:

* ``log_ml_naive`` assembles the dense n x n covariance (n = N*T) and pays
  the O(n^3) cost; it is the oracle and is guarded to small problems.
* ``log_ml_kron`` exploits the Kronecker structure
  ``cov = node_cov (x) K_t + (sigma_f^2 noise_cov + sigma_y^2 I) (x) I``
  and only ever eigendecomposes N x N and T x T matrices.

Vectorization convention: the observation vector stacks the T-long node
columns of the T x N matrix Y, i.e. entry (node i, time s) sits at position
i*T + s. The dense covariance follows the same node-major ordering.

``logml_terms`` additionally returns closed-form gradients with respect to
the three covariance blocks. They are evaluated in the eigenbasis but depend
on it only through spectral functions, so they stay finite and accurate even
when eigenvalues collide (where naive differentiation through an
eigendecomposition would blow up).
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .errors import DimensionMismatch, EigenFailure, SingularSystem
from .kernels import KernelConfig, TimeGrid, kernel_matrix, se_kernel
from .network import (
    ModelHyper,
    NetworkParams,
    ObservationGrid,
    StructuralMatrices,
    structural_matrices,
)

__all__ = [
    "ModelHyper",
    "ObservationGrid",
    "log_ml_naive",
    "log_ml_kron",
    "marginal_covariance_entry",
    "dense_covariance",
    "logml_terms",
]

_LOG_2PI = np.log(2.0 * np.pi)
_EIG_FLOOR = 1e-300

_NAIVE_LIMIT = 4000  # guard rail for the O(n^3) path


def noise_block(structural: StructuralMatrices, hyper: ModelHyper) -> np.ndarray:
    """Per-node noise covariance sigma_f^2 * noise_cov + sigma_y^2 * I."""
    n = structural.b.shape[0]
    return hyper.sigma_f_sq * structural.noise_cov + hyper.sigma_y_sq * np.eye(n)


def dense_covariance(
    structural: StructuralMatrices, hyper: ModelHyper, kt: np.ndarray
) -> np.ndarray:
    """Full n x n observation covariance in node-major ordering."""
    t = kt.shape[0]
    return np.kron(structural.node_cov, kt) + np.kron(
        noise_block(structural, hyper), np.eye(t)
    )


def log_ml_naive(
    obs: ObservationGrid, params: NetworkParams, hyper: ModelHyper
) -> float:
    """Gaussian log-density of vec(Y) under the dense covariance."""
    n_total = obs.n_nodes * obs.n_times
    if n_total > _NAIVE_LIMIT:
        raise DimensionMismatch(
            f"naive path limited to N*T <= {_NAIVE_LIMIT}, got {n_total}"
        )
    if obs.n_nodes != params.n_nodes:
        raise DimensionMismatch(
            f"observations have {obs.n_nodes} nodes, params {params.n_nodes}"
        )
    structural = structural_matrices(params)
    kt = kernel_matrix(obs.grid, hyper.kernel)
    cov = dense_covariance(structural, hyper, kt)
    y = obs.y.flatten(order="F")
    try:
        factor = scipy.linalg.cho_factor(cov, lower=True)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise SingularSystem(f"dense covariance not positive definite: {exc}") from exc
    alpha = scipy.linalg.cho_solve(factor, y)
    logdet = 2.0 * np.sum(np.log(np.diag(factor[0])))
    return float(-0.5 * logdet - 0.5 * y @ alpha - 0.5 * n_total * _LOG_2PI)


def logml_terms(
    node_cov: np.ndarray,
    noise: np.ndarray,
    kt: np.ndarray,
    y: np.ndarray,
    kt_eig: tuple[np.ndarray, np.ndarray] | None = None,
    want_grad: bool = False,
):
    """Log marginal likelihood from the covariance blocks, optionally with
    gradients with respect to (node_cov, noise, kt).

    Follows the factor-out-the-noise eigendecomposition route: diagonalize
    the noise block, whiten node_cov with it, diagonalize the result and the
    time covariance, then assemble the log-determinant from eigenvalue
    products and the quadratic term from an elementwise rescaling of the
    rotated observations. ``kt_eig`` lets callers reuse a precomputed
    eigendecomposition of ``kt`` across evaluations.
    """
    t, n = y.shape
    n_total = n * t
    lam_n, q_n = np.linalg.eigh(0.5 * (noise + noise.T))
    if lam_n[0] < _EIG_FLOOR:
        raise EigenFailure(
            f"noise block eigenvalue {lam_n[0]:.3e} below floor {_EIG_FLOOR:.0e}"
        )
    r = q_n / np.sqrt(lam_n)[None, :]
    kf_white = r.T @ node_cov @ r
    lam_f, q_f = np.linalg.eigh(0.5 * (kf_white + kf_white.T))
    if kt_eig is None:
        lam_t, q_t = np.linalg.eigh(0.5 * (kt + kt.T))
    else:
        lam_t, q_t = kt_eig

    scaled = np.outer(lam_t, lam_f)  # T x N grid of eigenvalue products
    logdet = t * np.sum(np.log(lam_n)) + np.sum(np.log1p(scaled))
    y_white = y @ r
    z = q_t.T @ y_white @ q_f
    denom = scaled + 1.0
    y_tf = z / denom
    quad = float(np.sum(z * y_tf))
    value = float(-0.5 * logdet - 0.5 * quad - 0.5 * n_total * _LOG_2PI)
    if not want_grad:
        return value

    p = r @ q_f  # maps node-eigenbasis back to node coordinates
    alpha = q_t @ y_tf @ p.T  # T x N layout of cov^{-1} vec(Y)
    w = 1.0 / denom
    tau = w.sum(axis=0)
    kappa = (lam_t[:, None] * w).sum(axis=0)
    rho = (w * lam_f[None, :]).sum(axis=1)
    g_node = 0.5 * (alpha.T @ kt @ alpha) - 0.5 * (p * kappa[None, :]) @ p.T
    g_noise = 0.5 * (alpha.T @ alpha) - 0.5 * (p * tau[None, :]) @ p.T
    g_kt = 0.5 * (alpha @ node_cov @ alpha.T) - 0.5 * (q_t * rho[None, :]) @ q_t.T
    return value, (g_node, g_noise, g_kt)


def log_ml_kron(
    obs: ObservationGrid, params: NetworkParams, hyper: ModelHyper
) -> float:
    """Fast-path log marginal likelihood; identical value to the naive path."""
    if obs.n_nodes != params.n_nodes:
        raise DimensionMismatch(
            f"observations have {obs.n_nodes} nodes, params {params.n_nodes}"
        )
    structural = structural_matrices(params)
    kt = kernel_matrix(obs.grid, hyper.kernel)
    return logml_terms(
        structural.node_cov, noise_block(structural, hyper), kt, obs.y
    )


def marginal_covariance_entry(
    i: int,
    j: int,
    t: float,
    t2: float,
    params: NetworkParams,
    hyper: ModelHyper,
) -> float:
    """Covariance of y_i(t) and y_j(t2).

    Noise contributions (transmission and observation) are white across
    time, so they enter only at coincident times; this makes the function
    agree entry-by-entry with the dense grid covariance.
    """
    structural = structural_matrices(params)
    value = structural.node_cov[i, j] * se_kernel(t, t2, hyper.kernel)
    if t == t2:
        value += hyper.sigma_f_sq * structural.noise_cov[i, j]
        if i == j:
            value += hyper.sigma_y_sq
    return float(value)
