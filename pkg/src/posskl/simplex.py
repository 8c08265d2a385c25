"""Vectors on the probability simplex and the divergences used throughout.

Probability vectors, positive weight vectors and log-space correction vectors
are plain one-dimensional ``float64`` numpy arrays. The ``as_*`` helpers
validate and return read-only copies, so a validated vector can be shared
freely.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

SIMPLEX_ATOL = 1e-9
POSITIVE_FLOOR = 1e-15

ArrayLike = Sequence[float] | np.ndarray


def _frozen(x: np.ndarray) -> np.ndarray:
    x.setflags(write=False)
    return x


def as_prob_vec(p: ArrayLike, atol: float = SIMPLEX_ATOL) -> np.ndarray:
    """Validate ``p`` as a point of the simplex and return a read-only copy."""
    p = np.array(p, dtype=np.float64).reshape(-1)
    if p.size == 0:
        raise ValueError("probability vector must be non-empty")
    if not np.all(np.isfinite(p)):
        raise ValueError("probability vector has non-finite entries")
    if np.any(p < 0.0):
        raise ValueError("probability vector has negative entries")
    if abs(p.sum() - 1.0) > atol:
        raise ValueError(f"probability vector sums to {p.sum():.17g}, not 1")
    return _frozen(p)


def as_pos_vec(z: ArrayLike) -> np.ndarray:
    z = np.array(z, dtype=np.float64).reshape(-1)
    if z.size == 0:
        raise ValueError("vector must be non-empty")
    if not np.all(np.isfinite(z)):
        raise ValueError("vector has non-finite entries")
    if np.any(z <= 0.0):
        raise ValueError("vector must be strictly positive")
    return _frozen(z)


def as_correction_vec(d: ArrayLike) -> np.ndarray:
    d = np.array(d, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(d)):
        raise ValueError("correction vector has non-finite entries")
    return _frozen(d)


def strictly_positive(p: ArrayLike) -> bool:
    return bool(np.all(np.asarray(p, dtype=np.float64) >= POSITIVE_FLOOR))


def _check_pair(p: np.ndarray, q: np.ndarray) -> None:
    if p.shape != q.shape:
        raise ValueError(f"length mismatch: {p.size} vs {q.size}")
    if np.any(q <= 0.0):
        raise ValueError("second argument must be strictly positive")


def kl_divergence(p: ArrayLike, q: ArrayLike) -> float:
    """Kullback-Leibler divergence ``sum p log(p/q)`` in nats, with ``0 log 0 = 0``."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    _check_pair(p, q)
    mask = p > 0.0
    val = float(np.sum(p[mask] * (np.log(p[mask]) - np.log(q[mask]))))
    # rounding can push an exact zero slightly negative
    return max(val, 0.0)


def bregman_distance(x: ArrayLike, y: ArrayLike) -> float:
    """Negative-entropy Bregman distance ``sum x log(x/y) - sum x + sum y``."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    _check_pair(x, y)
    mask = x > 0.0
    return float(np.sum(x[mask] * (np.log(x[mask]) - np.log(y[mask]))) - x.sum() + y.sum())


def normalize(z: ArrayLike) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise ValueError("cannot normalize a non-finite vector")
    if np.any(z <= 0.0):
        raise ValueError("cannot normalize a vector with non-positive entries")
    return z / z.sum()


def restrict_to_support(
    pi_full: ArrayLike, q_full: ArrayLike
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Drop the classes with zero possibility.

    Returns ``(pi, q, support)`` where ``support`` holds the kept indices.
    Kept entries of ``q`` are clipped from below at 1e-15 and renormalized.
    """
    pi_full = np.asarray(pi_full, dtype=np.float64).reshape(-1)
    q_full = np.asarray(q_full, dtype=np.float64).reshape(-1)
    if pi_full.shape != q_full.shape:
        raise ValueError(f"length mismatch: {pi_full.size} vs {q_full.size}")
    if np.any(pi_full < 0.0) or np.any(pi_full > 1.0):
        raise ValueError("possibility degrees must lie in [0, 1]")
    support = np.flatnonzero(pi_full > 0.0)
    if support.size == 0:
        raise ValueError("possibility distribution has empty support")
    if pi_full.max() != 1.0:
        raise ValueError("possibility distribution is not normalized (max != 1)")
    q = np.maximum(q_full[support], POSITIVE_FLOOR)
    return pi_full[support].copy(), q / q.sum(), support


def embed(values: ArrayLike, support: np.ndarray, n: int) -> np.ndarray:
    """Inverse of :func:`restrict_to_support`: zeros outside ``support``."""
    out = np.zeros(n, dtype=np.float64)
    out[support] = values
    return out
