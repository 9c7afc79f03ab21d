"""Shared validation and seeding helpers."""

from __future__ import annotations

import numpy as np

LOG_2PI = float(np.log(2.0 * np.pi))


def as_array(x, name="x", dtype=float):
    """Convert to a contiguous float ndarray, rejecting non-finite entries."""
    arr = np.asarray(x, dtype=dtype)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def as_matrix(x, name="X"):
    """Coerce to a 2-d float array of shape (n, d)."""
    arr = as_array(x, name)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-d, got shape {arr.shape}")
    return arr


def as_vector(x, name="y"):
    """Coerce to a 1-d float array."""
    arr = as_array(x, name)
    arr = np.atleast_1d(np.squeeze(arr))
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-d, got shape {arr.shape}")
    return arr


def check_unit_cube(X, name="X", atol=1e-9):
    """Validate that all rows of X lie inside [0, 1]^d (within atol)."""
    if X.size and (X.min() < -atol or X.max() > 1.0 + atol):
        raise ValueError(
            f"{name} must lie in the unit cube, got range "
            f"[{X.min():.6g}, {X.max():.6g}]"
        )
    return np.clip(X, 0.0, 1.0)


def rng_from(seed, *path):
    """Deterministic generator for a named sub-stream of a root seed.

    Sub-streams are addressed by an integer path, so adding or removing
    draws in one stream never perturbs another (e.g. optimum sample
    (m, n) keeps its draws when the total count N changes).
    """
    if isinstance(seed, np.random.Generator):
        if path:
            raise ValueError("cannot derive a named sub-stream from a Generator")
        return seed
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(p) for p in path))
    return np.random.default_rng(ss)


def gaussian_logpdf(x, mean, var):
    """Elementwise Gaussian log density (var may broadcast against x)."""
    v = np.maximum(var, 1e-300)
    return -0.5 * ((x - mean) ** 2 / v + np.log(v) + LOG_2PI)


def gaussian_entropy(var):
    """Differential entropy of a Gaussian with the given variance."""
    return 0.5 * (np.log(np.maximum(var, 1e-300)) + LOG_2PI + 1.0)
