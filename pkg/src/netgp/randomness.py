"""Counter-based noise streams for reproducible Monte Carlo.

Each (iteration, sample) pair gets its own Philox stream derived from the
run seed, so a sample's noise never depends on how many samples are drawn
alongside it, on iteration order, or on any thread scheduling.
"""

from __future__ import annotations

import numpy as np

__all__ = ["arc_noise"]

_U_CLAMP = 1e-12


def _stream(seed: int, iteration: int, sample: int) -> np.random.Generator:
    counter = [0, int(sample), int(iteration), 1]
    return np.random.Generator(np.random.Philox(key=int(seed), counter=counter))


def arc_noise(
    seed: int, iteration: int, n_samples: int, n: int
) -> tuple[np.ndarray, np.ndarray]:
    """Uniform and standard-normal draws for every arc of every MC sample.

    Returns ``u`` and ``z`` of shape (n_samples, n, n); uniforms are clamped
    strictly inside (0, 1) so logit transforms stay finite.
    """
    u = np.empty((n_samples, n, n))
    z = np.empty((n_samples, n, n))
    for s in range(n_samples):
        gen = _stream(seed, iteration, s)
        u[s] = gen.random((n, n))
        z[s] = gen.standard_normal((n, n))
    np.clip(u, _U_CLAMP, 1.0 - _U_CLAMP, out=u)
    return u, z
