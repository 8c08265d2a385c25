"""Closed-form Bregman projections (negative entropy) onto single halfspaces.

Two atom shapes have closed forms:

* subset sums ``sum_{k in A} p_k >= b``: rescale the mass inside and
  outside ``A`` by two constants;
* pairwise gaps ``p_i - p_j >= delta``: multiply ``p_i`` by ``E``, ``p_j`` by
  ``1/E`` and renormalize, where ``E > 1`` is the positive root of
  ``w (1 - delta) x^2 - u delta x - w' (1 + delta)``.

The compiled helpers return *log* rescaling factors relative to the raw
input, so the Dykstra engine can stay in log space. Inputs need not be
normalized: the projection of ``t * z`` equals that of ``z`` for ``t > 0``.
"""

from __future__ import annotations

import math
from typing import Iterable

import numpy as np
from numba import njit

from posskl.feasible import ConstraintAtom
from posskl.simplex import ArrayLike, as_pos_vec


@njit(cache=True)
def _gap_root(w, wp, u, delta):
    # positive root, written to avoid cancellation between u*delta and sqrt(disc)
    ud = u * delta
    disc = ud * ud + 4.0 * w * (1.0 - delta) * wp * (1.0 + delta)
    sq = math.sqrt(disc)
    if ud >= 0.0:
        return (ud + sq) / (2.0 * w * (1.0 - delta))
    return 2.0 * wp * (1.0 + delta) / (sq - ud)


@njit(cache=True)
def _subset_log_factors(u, mask, b):
    """Return ``(active, log factor on A, log factor off A)``."""
    s_in = 0.0
    s_out = 0.0
    for k in range(u.size):
        if mask[k]:
            s_in += u[k]
        else:
            s_out += u[k]
    total = s_in + s_out
    if s_in / total >= b:
        lt = -math.log(total)
        return False, lt, lt
    return True, math.log(b) - math.log(s_in), math.log1p(-b) - math.log(s_out)


@njit(cache=True)
def _gap_log_factors(u, i, j, delta):
    """Return ``(active, log factor at i, at j, elsewhere)``."""
    s_rest = 0.0
    for k in range(u.size):
        if k != i and k != j:
            s_rest += u[k]
    total = s_rest + u[i] + u[j]
    lt = math.log(total)
    w = u[i] / total
    wp = u[j] / total
    if w - wp >= delta:
        return False, -lt, -lt, -lt
    rest = s_rest / total
    e = _gap_root(w, wp, rest, delta)
    ld = math.log(w * e + wp / e + rest) + lt
    le = math.log(e)
    return True, le - ld, -le - ld, -ld


def gap_root(omega: float, omega_prime: float, u: float, delta: float) -> float:
    """Unique ``E > 1`` solving ``(w E - w'/E) / (w E + w'/E + u) = delta``."""
    if not (0.0 < omega < 1.0 and 0.0 < omega_prime < 1.0):
        raise ValueError("omega and omega_prime must lie in (0, 1)")
    if u < 0.0:
        raise ValueError("u must be nonnegative")
    if not -1.0 < delta < 1.0:
        raise ValueError("delta must lie in (-1, 1)")
    if not omega - omega_prime < delta:
        raise ValueError("constraint already satisfied: omega - omega_prime >= delta")
    return float(_gap_root(float(omega), float(omega_prime), float(u), float(delta)))


def project_subset(z: ArrayLike, A: Iterable[int], b: float) -> np.ndarray:
    z = as_pos_vec(z)
    if not b < 1.0:
        raise ValueError(f"subset bound must be < 1, got {b}")
    mask = np.zeros(z.size, dtype=np.bool_)
    mask[list(A)] = True
    _, f_in, f_out = _subset_log_factors(z, mask, float(b))
    return z * np.exp(np.where(mask, f_in, f_out))


def project_gap(z: ArrayLike, i: int, j: int, delta: float) -> np.ndarray:
    z = as_pos_vec(z)
    if i == j:
        raise ValueError("gap projection needs two distinct indices")
    if not (0 <= i < z.size and 0 <= j < z.size):
        raise IndexError("gap index out of range")
    if not -1.0 < delta < 1.0:
        raise ValueError("delta must lie in (-1, 1)")
    _, f_i, f_j, f_rest = _gap_log_factors(z, int(i), int(j), float(delta))
    logf = np.full(z.size, f_rest)
    logf[i], logf[j] = f_i, f_j
    return z * np.exp(logf)


def project_atom(z: ArrayLike, atom: ConstraintAtom) -> np.ndarray:
    if atom.is_subset:
        return project_subset(z, atom.members, atom.bound)
    if atom.i is not None:
        return project_gap(z, atom.i, atom.j, atom.delta)
    raise ValueError(f"unsupported atom kind {atom.kind!r}")
