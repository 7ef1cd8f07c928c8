"""Seed derivation and array validation helpers shared across modules."""

import zlib

import numpy as np


def derive_seed(seed, *keys):
    """Deterministic child seed from a master seed and hashable keys.

    The child depends only on (seed, keys), never on call order, so results
    are identical whether work runs serially or in parallel.
    """
    if seed is None:
        seed = 0
    parts = [int(seed) & 0xFFFFFFFF]
    for key in keys:
        if isinstance(key, (int, np.integer)):
            parts.append(int(key) & 0xFFFFFFFF)
        else:
            parts.append(zlib.crc32(repr(key).encode("utf-8")))
    return int(np.random.SeedSequence(parts).generate_state(1)[0])


def make_rng(seed, *keys):
    return np.random.default_rng(derive_seed(seed, *keys))


def as_vector(x, name="x"):
    x = np.asarray(x, dtype=float)
    if x.ndim == 2 and x.shape[1] == 1:
        x = x[:, 0]
    if x.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains non-finite values")
    return x


def as_conditioning(z, n):
    """Return z as an (n, d) float matrix; None or empty gives d = 0."""
    if z is None:
        return np.empty((n, 0))
    z = np.asarray(z, dtype=float)
    if z.size == 0:
        return np.empty((n, 0))
    if z.ndim == 1:
        z = z[:, None]
    if z.shape[0] != n:
        raise ValueError("conditioning matrix length does not match x")
    if not np.all(np.isfinite(z)):
        raise ValueError("z contains non-finite values")
    return z
