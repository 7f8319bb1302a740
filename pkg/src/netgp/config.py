"""Flat key=value run configuration shared by every CLI subcommand.

One canonical parser: lines of ``key = value`` with JSON-encoded values,
``#`` comments, and a hard error on unknown keys. Keys set to ``null``
resolve to their size-dependent defaults at use time.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields

from .errors import ConfigError

__all__ = ["RunConfig", "parse_config_file", "load_run_config"]


@dataclass
class RunConfig:
    # problem geometry and generator
    n_nodes: int = 10
    t_count: int = 200
    density: float = 0.15
    weight_scale: float = 0.4
    # kernel and noise (generator defaults; also the fit starting point)
    lengthscale: float = 10.0
    signal_variance: float = 1.0
    sigma_y_sq: float = 0.01
    sigma_f_sq: float = 0.01
    # prior (null -> 2/N weight variance)
    p_a: float = 0.5
    sigma_w_sq: float | None = None
    # training (null -> size-based defaults)
    n_iterations: int = 2000
    n_mc_samples: int | None = None
    lambda_prior: float | None = None
    lambda_posterior: float | None = None
    hyper_update_every: int = 1
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    # stability verification
    verify_trials: int = 1000
    sandwich_trials: int = 200
    # run control
    seed: int = 0
    threads: int | None = None

    def effective(self) -> dict:
        """Plain-dict echo of every key after dataclass defaulting."""
        return {f.name: getattr(self, f.name) for f in fields(self)}


def parse_config_file(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        try:
            values[key] = json.loads(value.strip())
        except json.JSONDecodeError as exc:
            raise ConfigError(
                f"{path}:{lineno}: value for {key!r} is not valid JSON: {exc}"
            ) from exc
    return values


def load_run_config(path: str | None) -> RunConfig:
    """Parse a config file (or take all defaults when ``path`` is None)."""
    cfg = RunConfig()
    if path is None:
        return cfg
    known = {f.name for f in fields(RunConfig)}
    for key, value in parse_config_file(path).items():
        if key not in known:
            raise ConfigError(f"unknown config key {key!r}")
        setattr(cfg, key, value)
    return cfg
