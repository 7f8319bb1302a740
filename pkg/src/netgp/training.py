"""Adam-based stochastic optimization of the variational objective.

Variational parameters take an ascent step every iteration; kernel and
noise hyperparameters move on a configurable stride. A fixed iteration
budget is used throughout (no stopping rule).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NetgpError, ShapeMismatch, TrainingAbort
from .kernels import KernelConfig, TimeGrid, kernel_matrix
from .network import ModelHyper, ObservationGrid, PriorConfig, spectral_radius
from .randomness import arc_noise
from .stability import SandwichBounds, model_m_stats, sandwich_condition
from .variational import TemperaturePair, VariationalState, elbo_core

__all__ = [
    "AdamConfig",
    "TrainConfig",
    "FitReport",
    "AdamState",
    "adam_step",
    "default_mc_samples",
    "fit",
]


@dataclass(frozen=True)
class AdamConfig:
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("beta1 and beta2 must lie in [0, 1)")


def default_mc_samples(n_obs: int) -> int:
    """Sample-count tiers: 200 up to 1e4 observations, 20 up to 1e5, 2 above."""
    if n_obs <= 10_000:
        return 200
    if n_obs <= 100_000:
        return 20
    return 2


@dataclass(frozen=True)
class TrainConfig:
    """Iteration budget, MC sample count, temperatures, and hyper stride.

    ``n_mc_samples=None`` and ``temps=None`` resolve from the problem size
    (see :func:`default_mc_samples` and :meth:`TemperaturePair.for_size`).
    """

    n_iterations: int = 2000
    n_mc_samples: int | None = None
    temps: TemperaturePair | None = None
    hyper_update_every: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.n_iterations < 1:
            raise ValueError("n_iterations must be at least 1")
        if self.hyper_update_every < 1:
            raise ValueError("hyper_update_every must be a positive integer")

    def resolve_samples(self, n_obs: int) -> int:
        return (
            default_mc_samples(n_obs)
            if self.n_mc_samples is None
            else self.n_mc_samples
        )

    def resolve_temps(self, n: int) -> TemperaturePair:
        return TemperaturePair.for_size(n) if self.temps is None else self.temps


@dataclass
class FitReport:
    """Posterior summaries, per-iteration objective trace, and diagnostics."""

    edge_prob: np.ndarray
    edge_mean: np.ndarray
    edge_std: np.ndarray
    score: np.ndarray
    elbo_trace: np.ndarray  # (n_iterations, 3): elbo, ell, kl
    hyper: ModelHyper
    diagnostics: dict = field(default_factory=dict)


class AdamState:
    """First/second-moment buffers for one named block of parameters."""

    def __init__(self, params: dict[str, np.ndarray]):
        self.m = {k: np.zeros_like(np.asarray(v, dtype=float)) for k, v in params.items()}
        self.v = {k: np.zeros_like(np.asarray(v, dtype=float)) for k, v in params.items()}
        self.t = 0


def adam_step(
    state: AdamState,
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    cfg: AdamConfig,
) -> dict[str, np.ndarray]:
    """One bias-corrected Adam ascent step; returns the updated parameters."""
    state.t += 1
    t = state.t
    out = {}
    for key, value in params.items():
        g = np.asarray(grads[key], dtype=float)
        value = np.asarray(value, dtype=float)
        if g.shape != value.shape or state.m[key].shape != value.shape:
            raise ShapeMismatch(
                f"parameter {key!r}: value {value.shape}, grad {g.shape}, "
                f"buffer {state.m[key].shape}"
            )
        state.m[key] = cfg.beta1 * state.m[key] + (1.0 - cfg.beta1) * g
        state.v[key] = cfg.beta2 * state.v[key] + (1.0 - cfg.beta2) * g * g
        m_hat = state.m[key] / (1.0 - cfg.beta1**t)
        v_hat = state.v[key] / (1.0 - cfg.beta2**t)
        out[key] = value + cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.eps)
    return out


def _diagnostics(
    state: VariationalState, hyper: ModelHyper, times: np.ndarray
) -> dict:
    p = state.edge_prob()
    expected_b = p * state.m
    mask = 1.0 - np.eye(state.n_nodes)
    stats = model_m_stats(state.m, np.exp(state.log_s) * mask, p)
    kt_mat = kernel_matrix(TimeGrid(times), hyper.kernel)
    lam = np.linalg.eigvalsh(kt_mat)
    bounds = SandwichBounds.from_extremes(float(lam[0]), float(lam[-1]), hyper)
    condition_met, u_star, s_star = sandwich_condition(stats, gamma=0.5)
    return {
        "spectral_radius_expected_b": spectral_radius(expected_b),
        "sandwich_condition_met": bool(condition_met),
        "sandwich_u_star": float(u_star),
        "sandwich_s_star": float(s_star),
        "sandwich_lambda_lo": bounds.lambda_lo,
        "sandwich_lambda_hi": bounds.lambda_hi,
    }


def fit(
    obs: ObservationGrid,
    prior: PriorConfig | None = None,
    cfg: TrainConfig | None = None,
    adam: AdamConfig | None = None,
    hyper: ModelHyper | None = None,
) -> FitReport:
    """Run the stochastic ascent loop and summarize the fitted posterior.

    ``hyper`` provides the starting point for the optimized hyperparameters
    (lengthscale and the two noise variances); ``sigma_f_sq`` must be
    strictly positive since it is optimized in log-space.

    Deterministic for fixed inputs and seed: noise streams are
    counter-based per (iteration, sample) and reductions run in index
    order.
    """
    prior = prior or PriorConfig()
    cfg = cfg or TrainConfig()
    adam = adam or AdamConfig()
    hyper = hyper or ModelHyper(
        kernel=KernelConfig(lengthscale=1.0), sigma_y_sq=0.1, sigma_f_sq=0.01
    )
    n = obs.n_nodes
    t = obs.n_times
    if n < 2 or t < 2:
        raise ValueError("need at least 2 nodes and 2 time points")
    temps = cfg.resolve_temps(n)
    n_samples = cfg.resolve_samples(n * t)
    sigma_w_sq = prior.weight_variance(n)
    prior_log_alpha = float(np.log(prior.p_a) - np.log1p(-prior.p_a))

    state = VariationalState.initialize(n, prior, cfg.seed)
    var_params = {"m": state.m, "log_s": state.log_s, "log_alpha": state.log_alpha}
    hyp_params = {
        "log_ell": np.float64(np.log(hyper.kernel.lengthscale)),
        "log_sy2": np.float64(np.log(hyper.sigma_y_sq)),
        "log_sf2": np.float64(np.log(hyper.sigma_f_sq)),
    }
    adam_var = AdamState(var_params)
    adam_hyp = AdamState(hyp_params)

    trace = np.empty((cfg.n_iterations, 3))
    mask = 1.0 - np.eye(n)
    for k in range(1, cfg.n_iterations + 1):
        u, z = arc_noise(cfg.seed, iteration=k, n_samples=n_samples, n=n)
        try:
            elbo, ell, kl, grad = elbo_core(
                y=obs.y,
                times=obs.grid.times,
                m=var_params["m"],
                log_s=var_params["log_s"],
                log_alpha=var_params["log_alpha"],
                log_ell=float(hyp_params["log_ell"]),
                log_sy2=float(hyp_params["log_sy2"]),
                log_sf2=float(hyp_params["log_sf2"]),
                signal_variance=hyper.kernel.signal_variance,
                prior_log_alpha=prior_log_alpha,
                lam_q=temps.lambda_posterior,
                lam_p=temps.lambda_prior,
                sigma_w_sq=sigma_w_sq,
                u=u,
                z=z,
                want_grad=True,
            )
        except (NetgpError, np.linalg.LinAlgError) as exc:
            raise TrainingAbort(k, str(exc)) from exc
        if not np.isfinite(elbo):
            raise TrainingAbort(k, f"non-finite objective (elbo={elbo})")
        trace[k - 1] = (elbo, ell, kl)

        var_grads = {"m": grad.m, "log_s": grad.log_s, "log_alpha": grad.log_alpha}
        var_params = adam_step(adam_var, var_params, var_grads, adam)
        for arr in var_params.values():
            np.fill_diagonal(arr, 0.0)
        if k % cfg.hyper_update_every == 0:
            hyp_grads = {
                "log_ell": np.float64(grad.log_lengthscale),
                "log_sy2": np.float64(grad.log_sigma_y_sq),
                "log_sf2": np.float64(grad.log_sigma_f_sq),
            }
            hyp_params = adam_step(adam_hyp, hyp_params, hyp_grads, adam)

    final_state = VariationalState(
        m=var_params["m"], log_s=var_params["log_s"], log_alpha=var_params["log_alpha"]
    )
    final_hyper = ModelHyper(
        kernel=KernelConfig(
            lengthscale=float(np.exp(hyp_params["log_ell"])),
            signal_variance=hyper.kernel.signal_variance,
        ),
        sigma_y_sq=float(np.exp(hyp_params["log_sy2"])),
        sigma_f_sq=float(np.exp(hyp_params["log_sf2"])),
    )
    p = final_state.edge_prob()
    score = np.abs(final_state.m) * p
    np.fill_diagonal(score, 0.0)
    return FitReport(
        edge_prob=p,
        edge_mean=final_state.m,
        edge_std=np.exp(final_state.log_s) * mask,
        score=score,
        elbo_trace=trace,
        hyper=final_hyper,
        diagnostics=_diagnostics(final_state, final_hyper, obs.grid.times),
    )
