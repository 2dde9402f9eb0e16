"""Deterministic direction sets and seeded random streams.

All sup-type evaluations in the toolkit run over low-discrepancy direction
samples so that results are reproducible without a seed.  Random sampling
(Monte Carlo, property checks) always goes through ``rng_for``.
"""

from __future__ import annotations

import numpy as np
from scipy.stats import qmc

# Defaults from the sampling policy: 4096 directions for n in {2, 3},
# 32768 for n = 4.
DEFAULT_DIRECTIONS = {2: 4096, 3: 4096, 4: 32768}

_GOLDEN = (1.0 + np.sqrt(5.0)) / 2.0


def rng_for(seed: int, stream: int = 0) -> np.random.Generator:
    """Return a PCG64 generator for (seed, stream), independent per stream."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(stream)]))


def unit_directions(n: int, count: int | None = None) -> np.ndarray:
    """Deterministic low-discrepancy sample of S^{n-1}, shape (count, n)."""
    if count is None:
        count = DEFAULT_DIRECTIONS.get(n, 4096)
    if n == 2:
        theta = 2.0 * np.pi * (np.arange(count) + 0.5) / count
        return np.column_stack([np.cos(theta), np.sin(theta)])
    if n == 3:
        # Fibonacci sphere
        k = np.arange(count)
        z = 1.0 - (2.0 * k + 1.0) / count
        phi = 2.0 * np.pi * k / _GOLDEN
        s = np.sqrt(np.maximum(0.0, 1.0 - z * z))
        return np.column_stack([s * np.cos(phi), s * np.sin(phi), z])
    # Generic: Halton points mapped through the normal inverse CDF, normalized.
    from scipy.special import ndtri

    halton = qmc.Halton(d=n, scramble=False)
    pts = halton.random(count + 1)[1:]  # drop the origin point
    g = ndtri(np.clip(pts, 1e-12, 1.0 - 1e-12))
    norms = np.linalg.norm(g, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    return g / norms


def interior_points(cone, count: int, seed: int, radius: tuple[float, float] = (0.5, 2.0),
                    margin: float = 1e-3, stream: int = 0) -> np.ndarray:
    """Seeded sample of points in the open cone, kept margin*|x| away from its boundary."""
    rng = rng_for(seed, stream)
    out = np.empty((0, cone.n))
    attempts = 0
    while out.shape[0] < count:
        m = max(4 * (count - out.shape[0]), 64)
        u = rng.standard_normal((m, cone.n))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        keep = cone.contains(u, margin=margin)
        u = u[keep]
        r = rng.uniform(radius[0], radius[1], size=u.shape[0])
        out = np.vstack([out, u * r[:, None]])
        attempts += 1
        if attempts > 200:
            raise RuntimeError("cone interior sampling failed; cone too thin?")
    return out[:count]
