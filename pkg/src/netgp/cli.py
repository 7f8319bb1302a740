"""Command-line entry point: simulate, fit, evaluate, verify.

Matrix file convention: entry (i, j) is the arc from node j into node i
(rows are receivers); every matrix CSV starts with a comment line saying
so. All outputs are written with fixed formatting, so reruns with the same
configuration and seed are byte-identical.

Exit codes: 0 success, 2 configuration/validation error, 3 I/O error,
4 numerical abort during training, 5 failed verification check.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from .benchmark import plant_instance, roc_auc, score_matrix
from .config import RunConfig, load_run_config
from .errors import (
    ConfigError,
    DegenerateTruth,
    NetgpError,
    TrainingAbort,
    UnstableInstance,
)
from .kernels import KernelConfig, TimeGrid
from .network import ModelHyper, ObservationGrid, PriorConfig
from .stability import (
    ConcreteGaussianModel,
    check_finiteness,
    check_nonsingularity,
    check_sandwich,
    matsushita_inequality_check,
    subgaussian_bound_check,
    folded_gaussian_bound_check,
)
from .training import AdamConfig, TrainConfig, fit
from .variational import TemperaturePair

_MATRIX_NOTE = "# entry (i,j): arc from node j into node i (rows receive)"


def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


def _write_text(path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _write_matrix(path, mat: np.ndarray) -> None:
    lines = [_MATRIX_NOTE]
    for row in np.asarray(mat, dtype=float):
        lines.append(",".join(_fmt(v) for v in row))
    _write_text(path, "\n".join(lines) + "\n")


def _read_matrix(path) -> np.ndarray:
    mat = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    if mat.shape[0] != mat.shape[1]:
        raise ConfigError(f"{path}: expected a square matrix, got {mat.shape}")
    return mat


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def _write_json(path, payload: dict) -> None:
    _write_text(path, json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")


def _hyper_from(cfg: RunConfig) -> ModelHyper:
    return ModelHyper(
        kernel=KernelConfig(
            lengthscale=cfg.lengthscale, signal_variance=cfg.signal_variance
        ),
        sigma_y_sq=cfg.sigma_y_sq,
        sigma_f_sq=cfg.sigma_f_sq,
    )


def _thread_map(fn, items, threads):
    """Run ``fn`` over items, reducing by index regardless of scheduling."""
    if threads is not None and threads <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def cmd_simulate(config_path: str | None, out_dir: str) -> int:
    cfg = load_run_config(config_path)
    os.makedirs(out_dir, exist_ok=True)
    instance = plant_instance(
        n=cfg.n_nodes,
        t_count=cfg.t_count,
        density=cfg.density,
        weight_scale=cfg.weight_scale,
        hyper=_hyper_from(cfg),
        seed=cfg.seed,
    )
    obs = instance.obs
    header = "time," + ",".join(f"node_{i + 1}" for i in range(obs.n_nodes))
    rows = [header]
    for s in range(obs.n_times):
        rows.append(
            ",".join([_fmt(obs.grid.times[s])] + [_fmt(v) for v in obs.y[s]])
        )
    _write_text(os.path.join(out_dir, "observations.csv"), "\n".join(rows) + "\n")
    _write_matrix(os.path.join(out_dir, "truth_a.csv"), instance.truth_a)
    _write_matrix(os.path.join(out_dir, "truth_w.csv"), instance.truth_w)
    _write_json(
        os.path.join(out_dir, "meta.json"),
        {"config": cfg.effective(), "version": __version__},
    )
    return 0


def _load_observations(path) -> ObservationGrid:
    try:
        raw = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except ValueError as exc:
        raise ConfigError(f"{path}: failed to parse observations: {exc}") from exc
    if raw.shape[1] < 2:
        raise ConfigError(f"{path}: need a time column plus at least one node")
    if not np.all(np.isfinite(raw)):
        raise ConfigError(f"{path}: observations contain missing or non-finite cells")
    times = raw[:, 0]
    if np.any(np.diff(times) <= 0):
        raise ConfigError(f"{path}: times must be strictly increasing")
    return ObservationGrid(y=raw[:, 1:], grid=TimeGrid(times))


def cmd_fit(obs_path: str, config_path: str | None, out_dir: str) -> int:
    cfg = load_run_config(config_path)
    os.makedirs(out_dir, exist_ok=True)
    obs = _load_observations(obs_path)
    n = obs.n_nodes
    temps = None
    if cfg.lambda_prior is not None or cfg.lambda_posterior is not None:
        default = TemperaturePair.for_size(n)
        temps = TemperaturePair(
            lambda_prior=cfg.lambda_prior
            if cfg.lambda_prior is not None
            else default.lambda_prior,
            lambda_posterior=cfg.lambda_posterior
            if cfg.lambda_posterior is not None
            else default.lambda_posterior,
        )
    report = fit(
        obs,
        prior=PriorConfig(p_a=cfg.p_a, sigma_w_sq=cfg.sigma_w_sq),
        cfg=TrainConfig(
            n_iterations=cfg.n_iterations,
            n_mc_samples=cfg.n_mc_samples,
            temps=temps,
            hyper_update_every=cfg.hyper_update_every,
            seed=cfg.seed,
        ),
        adam=AdamConfig(lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps),
        hyper=_hyper_from(cfg),
    )
    _write_matrix(os.path.join(out_dir, "edge_prob.csv"), report.edge_prob)
    _write_matrix(os.path.join(out_dir, "edge_mean.csv"), report.edge_mean)
    _write_matrix(os.path.join(out_dir, "edge_std.csv"), report.edge_std)
    _write_matrix(os.path.join(out_dir, "scores.csv"), report.score)
    trace_rows = ["iter,elbo,ell,kl"]
    for k, (elbo, ell, kl) in enumerate(report.elbo_trace, start=1):
        trace_rows.append(f"{k},{_fmt(elbo)},{_fmt(ell)},{_fmt(kl)}")
    _write_text(os.path.join(out_dir, "elbo_trace.csv"), "\n".join(trace_rows) + "\n")
    _write_json(
        os.path.join(out_dir, "report.json"),
        {
            "config": cfg.effective(),
            "version": __version__,
            "final_hyper": {
                "lengthscale": report.hyper.kernel.lengthscale,
                "signal_variance": report.hyper.kernel.signal_variance,
                "sigma_y_sq": report.hyper.sigma_y_sq,
                "sigma_f_sq": report.hyper.sigma_f_sq,
            },
            "diagnostics": report.diagnostics,
        },
    )
    return 0


def cmd_evaluate(scores_path: str, truth_path: str, out_path: str) -> int:
    scores = _read_matrix(scores_path)
    truth = _read_matrix(truth_path)
    if scores.shape != truth.shape:
        raise ConfigError(
            f"scores {scores.shape} and truth {truth.shape} shapes differ"
        )
    curve = roc_auc(scores, truth)
    rows = ["threshold,fpr,tpr"]
    for thr, fpr, tpr in zip(curve.thresholds, curve.fpr, curve.tpr):
        rows.append(f"{_fmt(thr)},{_fmt(fpr)},{_fmt(tpr)}")
    _write_text(out_path, "\n".join(rows) + "\n")
    print(f"auc={curve.auc:.6f}")
    return 0


def _verify_checks(cfg: RunConfig) -> list[dict]:
    checks: list[dict] = []
    trials = cfg.verify_trials
    threads = cfg.threads

    def nonsing(job):
        n, model, label = job
        violations = check_nonsingularity(n, model, trials, seed=cfg.seed + n)
        return {
            "name": f"nonsingularity_{label}_n{n}",
            "trials": trials,
            "violations": violations,
            "threshold": 0,
            "pass": violations == 0,
        }

    jobs = [(n, ConcreteGaussianModel(), "concrete") for n in (5, 10, 20)]
    jobs += [
        (n, ConcreteGaussianModel(temperature=0.0), "bernoulli") for n in (5, 10, 20)
    ]
    checks.extend(_thread_map(nonsing, jobs, threads))

    finite_hyper = ModelHyper(
        kernel=KernelConfig(lengthscale=1.0), sigma_y_sq=1e-8, sigma_f_sq=0.01
    )
    bad = check_finiteness(
        n=6,
        t=6,
        hyper=finite_hyper,
        model=ConcreteGaussianModel(),
        trials=min(trials, 200),
        seed=cfg.seed + 99,
    )
    checks.append(
        {
            "name": "log_ml_finiteness",
            "trials": min(trials, 200),
            "violations": bad,
            "threshold": 0,
            "pass": bad == 0,
        }
    )

    lam_grid = np.linspace(-10.0, 10.0, 1001)
    viol = subgaussian_bound_check(mu=2.0, sigma=0.3, p=0.5, lambda_grid=lam_grid)
    checks.append(
        {
            "name": "subgaussian_mgf",
            "trials": lam_grid.size,
            "violations": int(viol > 1e-12),
            "max_violation": viol,
            "threshold": 1e-12,
            "pass": viol <= 1e-12,
        }
    )

    p_grid = np.linspace(0.0, 1.0, 200)
    x_grid = np.exp(np.linspace(-5.0, 5.0, 200))
    viol = matsushita_inequality_check(p_grid, x_grid)
    checks.append(
        {
            "name": "matsushita_inequality",
            "trials": p_grid.size * x_grid.size,
            "violations": int(viol > 1e-12),
            "max_violation": viol,
            "threshold": 1e-12,
            "pass": viol <= 1e-12,
        }
    )

    rng = np.random.default_rng(cfg.seed)
    folded_bad = 0
    for _ in range(1000):
        mu = rng.normal(0.0, 2.0)
        sigma = rng.uniform(0.01, 2.0)
        p = rng.uniform(0.0, 1.0)
        exact, bound = folded_gaussian_bound_check(mu, sigma, p)
        if exact > bound + 1e-12:
            folded_bad += 1
    checks.append(
        {
            "name": "folded_gaussian_bound",
            "trials": 1000,
            "violations": folded_bad,
            "threshold": 0,
            "pass": folded_bad == 0,
        }
    )

    n = 20
    u_target = 1.0 / (200.0 * n * n)
    scale = np.sqrt(u_target / (2.0 * 0.5 * (n - 1) / n) / 2.0)
    mu = np.full((n, n), scale)
    sigma = np.full((n, n), scale)
    p = np.full((n, n), 0.5)
    for m in (mu, sigma, p):
        np.fill_diagonal(m, 0.0)
    sandwich = check_sandwich(
        grid=TimeGrid(np.arange(1.0, 6.0)),
        hyper=ModelHyper(
            kernel=KernelConfig(lengthscale=1.0), sigma_y_sq=0.1, sigma_f_sq=0.01
        ),
        mu=mu,
        sigma=sigma,
        p=p,
        trials=cfg.sandwich_trials,
        seed=cfg.seed + 7,
    )
    checks.append(
        {
            "name": "eigenvalue_sandwich",
            "trials": cfg.sandwich_trials,
            "violations": int(round(sandwich.violation_rate * cfg.sandwich_trials)),
            "violation_rate": sandwich.violation_rate,
            "condition_met": sandwich.condition_met,
            "envelope_coverage": sandwich.envelope_coverage,
            "threshold": 0.05,
            "pass": sandwich.violation_rate <= 0.05,
        }
    )
    checks.append(
        {
            "name": "likelihood_envelope",
            "trials": cfg.sandwich_trials,
            "violations": int(
                round((1.0 - sandwich.envelope_coverage) * cfg.sandwich_trials)
            ),
            "threshold": 0.05,
            "pass": sandwich.envelope_coverage >= 0.95,
        }
    )
    return checks


def cmd_verify(config_path: str | None, out_path: str) -> int:
    cfg = load_run_config(config_path)
    checks = _verify_checks(cfg)
    all_pass = all(c["pass"] for c in checks)
    _write_json(out_path, {"checks": checks, "all_pass": all_pass})
    for c in checks:
        status = "pass" if c["pass"] else "FAIL"
        print(f"{c['name']}: {status} ({c['violations']}/{c['trials']} violations)")
    return 0 if all_pass else 5


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="netgp",
        description="Network structure discovery from synchronized time series.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="generate a planted instance")
    p_sim.add_argument("--config", default=None)
    p_sim.add_argument("--out", required=True, help="output directory")

    p_fit = sub.add_parser("fit", help="fit the posterior over arcs")
    p_fit.add_argument("--observations", required=True)
    p_fit.add_argument("--config", default=None)
    p_fit.add_argument("--out", required=True, help="output directory")

    p_eval = sub.add_parser("evaluate", help="score arcs against a truth matrix")
    p_eval.add_argument("--scores", required=True)
    p_eval.add_argument("--truth", required=True)
    p_eval.add_argument("--out", required=True, help="roc.csv path")

    p_ver = sub.add_parser("verify", help="run the stability-theory audits")
    p_ver.add_argument("--config", default=None)
    p_ver.add_argument("--out", required=True, help="report JSON path")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "simulate":
            return cmd_simulate(args.config, args.out)
        if args.command == "fit":
            return cmd_fit(args.observations, args.config, args.out)
        if args.command == "evaluate":
            return cmd_evaluate(args.scores, args.truth, args.out)
        if args.command == "verify":
            return cmd_verify(args.config, args.out)
        raise AssertionError(f"unhandled command {args.command}")
    except TrainingAbort as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except (ConfigError, DegenerateTruth, UnstableInstance, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NetgpError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
