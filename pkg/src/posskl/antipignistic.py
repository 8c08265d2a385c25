"""Antipignistic probability/possibility transformation.

For a probability vector ``p`` sorted in decreasing order the possibility
degrees are ``pi_i = i * p_i + sum_{j>i} p_j``; the inverse map is
``p_i = sum_{j>=i} (pi_j - pi_{j+1}) / j`` with ``pi_{n+1} = 0``. Both maps are
applied to unsorted vectors through the sorting permutation ``sigma``.
"""

from __future__ import annotations

from typing import Iterable

import numpy as np

from posskl.simplex import ArrayLike, as_prob_vec


def as_poss_vec(pi: ArrayLike) -> np.ndarray:
    """Validate a normalized, strictly positive possibility distribution."""
    pi = np.array(pi, dtype=np.float64).reshape(-1)
    if pi.size == 0:
        raise ValueError("possibility vector must be non-empty")
    if not np.all(np.isfinite(pi)):
        raise ValueError("possibility vector has non-finite entries")
    if np.any(pi <= 0.0) or np.any(pi > 1.0):
        raise ValueError("possibility degrees must lie in (0, 1]")
    if pi.max() != 1.0:
        raise ValueError("possibility distribution is not normalized (max != 1)")
    pi.setflags(write=False)
    return pi


def sort_permutation(values: ArrayLike) -> np.ndarray:
    """Indices sorting ``values`` in nonincreasing order; ties keep index order."""
    values = np.asarray(values, dtype=np.float64)
    return np.argsort(-values, kind="stable")


def prob_to_poss(p: ArrayLike) -> np.ndarray:
    p = as_prob_vec(p)
    sigma = sort_permutation(p)
    ps = p[sigma]
    n = ps.size
    # i * p_i + tail sum beyond i, in sorted order
    tail = np.concatenate([np.cumsum(ps[::-1])[::-1][1:], [0.0]])
    pi_sorted = np.arange(1, n + 1) * ps + tail
    # entries tied in p must get identical degrees; the sorted-form sum only
    # guarantees that in exact arithmetic, so copy the value of the first tie
    for r in range(1, n):
        if ps[r] == ps[r - 1]:
            pi_sorted[r] = pi_sorted[r - 1]
    pi = np.empty(n)
    pi[sigma] = pi_sorted
    pi[sigma[0]] = 1.0
    return np.minimum(pi, 1.0)


def poss_to_prob(pi: ArrayLike) -> np.ndarray:
    pi = as_poss_vec(pi)
    sigma = sort_permutation(pi)
    tp = np.append(pi[sigma], 0.0)
    n = pi.size
    terms = (tp[:-1] - tp[1:]) / np.arange(1, n + 1)
    # reverse cumulative sum keeps exact equality across tied levels
    p_sorted = np.cumsum(terms[::-1])[::-1]
    p = np.empty(n)
    p[sigma] = p_sorted
    return p


def _index_set(A: Iterable[int], n: int) -> np.ndarray:
    idx = np.fromiter(A, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise IndexError(f"event index out of range for n={n}")
    return idx


def possibility_of_event(pi: ArrayLike, A: Iterable[int]) -> float:
    """``max_{k in A} pi_k``; zero for the empty event. Indices are 0-based."""
    pi = np.asarray(pi, dtype=np.float64)
    idx = _index_set(A, pi.size)
    return float(pi[idx].max()) if idx.size else 0.0


def necessity_of_event(pi: ArrayLike, A: Iterable[int]) -> float:
    pi = np.asarray(pi, dtype=np.float64)
    idx = _index_set(A, pi.size)
    complement = np.setdiff1d(np.arange(pi.size), idx)
    return 1.0 - possibility_of_event(pi, complement)
