"""Dykstra's cyclic algorithm with Bregman (KL) projections.

With ``m`` atoms visited cyclically, step ``t`` projects
``u = z_{t-1} * exp(d_{t-m})`` onto atom ``[t]`` and stores the correction
``d_t = d_{t-m} + log(z_{t-1} / z_t)``. The engine works on ``log z``: it
forms ``l = log z_{t-1} + d_{t-m}``, subtracts ``c = max(l)`` before
exponentiating (projections ignore positive rescaling), and gets
``log z_t`` back as ``l - c + log(factor)`` from the closed-form projectors.
So ``exp`` never sees a large argument and no ``log`` is taken of an
iterate that could underflow.

The violation of the stacked system ``A p >= b`` is evaluated once per full
cycle; the run stops when it drops to ``tol`` or after ``max_cycles``
cycles, returning the last iterate either way.

A feasible iterate is not necessarily the projection: Dykstra's corrections
may still be moving it. Passing ``stationary_tol`` additionally requires the
largest change of the iterate over one cycle to fall to that level.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
from numba import njit

from posskl.bregman import _gap_log_factors, _subset_log_factors
from posskl.feasible import ConstraintSet
from posskl.simplex import ArrayLike, as_correction_vec, as_prob_vec, kl_divergence


@dataclass(frozen=True)
class DykstraState:
    """Engine state after the last step: ``d_ring[a]`` is the newest correction of atom ``a``."""

    t: int
    z: np.ndarray
    d_ring: np.ndarray

    @property
    def m(self) -> int:
        return self.d_ring.shape[0]


@dataclass(frozen=True)
class DykstraTrace:
    """Every iterate of a recorded run; row ``t`` holds ``z_t``, ``d_t``, ``u_t`` (row 0: ``z_0``)."""

    z: np.ndarray
    d: np.ndarray
    u: np.ndarray


@dataclass(frozen=True)
class ProjectionReport:
    p_star: np.ndarray
    cycles_used: int
    final_violation: float
    converged: bool
    kl_to_input: float
    wall_time: float
    state: DykstraState | None = None
    trace: DykstraTrace | None = None
    cycle_change: float = math.nan

    def to_dict(self) -> dict:
        return {
            "p_star": self.p_star.tolist(),
            "cycles_used": self.cycles_used,
            "final_violation": self.final_violation,
            "converged": self.converged,
            "kl_to_input": self.kl_to_input,
            "cycle_change": self.cycle_change,
            "wall_time": round(self.wall_time, 6),
        }


@njit(cache=True)
def _violation(A, b, z):
    v = 0.0
    for r in range(A.shape[0]):
        s = b[r]
        for k in range(A.shape[1]):
            s -= A[r, k] * z[k]
        if s > v:
            v = s
    return v


@njit(cache=True)
def _dykstra(logq, is_gap, masks, bounds, gi, gj, A, b, tol, stat_tol, max_cycles, d_ring,
             record, tz, td, tu):
    n = logq.size
    m = bounds.size
    logz = logq.copy()
    ell = np.empty(n)
    u = np.empty(n)
    if record:
        tz[0] = np.exp(logq)
    t = 0
    cycles = 0
    viol = _violation(A, b, np.exp(logz))
    change = np.inf
    z_start = np.exp(logz)
    while cycles < max_cycles:
        for a in range(m):
            t += 1
            c = -np.inf
            for k in range(n):
                ell[k] = logz[k] + d_ring[a, k]
                if ell[k] > c:
                    c = ell[k]
            for k in range(n):
                u[k] = math.exp(ell[k] - c)
            if is_gap[a]:
                _, f_i, f_j, f_rest = _gap_log_factors(u, gi[a], gj[a], bounds[a])
                for k in range(n):
                    f = f_rest
                    if k == gi[a]:
                        f = f_i
                    elif k == gj[a]:
                        f = f_j
                    lz_new = ell[k] - c + f
                    d_ring[a, k] = d_ring[a, k] + logz[k] - lz_new
                    logz[k] = lz_new
            else:
                _, f_in, f_out = _subset_log_factors(u, masks[a], bounds[a])
                for k in range(n):
                    lz_new = ell[k] - c + (f_in if masks[a, k] else f_out)
                    d_ring[a, k] = d_ring[a, k] + logz[k] - lz_new
                    logz[k] = lz_new
            if record:
                for k in range(n):
                    tz[t, k] = math.exp(logz[k])
                    td[t, k] = d_ring[a, k]
                    tu[t, k] = math.exp(ell[k])
        cycles += 1
        z_end = np.exp(logz)
        viol = _violation(A, b, z_end)
        change = np.max(np.abs(z_end - z_start))
        z_start = z_end
        if viol <= tol and (stat_tol < 0.0 or change <= stat_tol):
            break
    return cycles, viol, change, logz, t


def stabilized_u(z_prev: ArrayLike, d_lag: ArrayLike) -> np.ndarray:
    """``exp(log z_prev + d_lag - c)`` with ``c`` the largest exponent.

    Equals ``z_prev * exp(d_lag)`` up to the positive factor ``exp(-c)``.
    """
    z_prev = np.asarray(z_prev, dtype=np.float64)
    d_lag = as_correction_vec(d_lag)
    ell = np.log(z_prev) + d_lag
    return np.exp(ell - ell.max())


def _check_q(q: ArrayLike, n: int) -> np.ndarray:
    q = as_prob_vec(q)
    if q.size != n:
        raise ValueError(f"length mismatch: set has n={n}, q has {q.size}")
    if np.any(q <= 0.0):
        raise ValueError("q must be strictly positive; clip or restrict to the support first")
    return q


def kl_project(
    q: ArrayLike,
    fs: ConstraintSet,
    tol: float = 1e-8,
    max_cycles: int = 2000,
    record_trace: bool = False,
    initial_corrections: np.ndarray | None = None,
    stop_early: bool = True,
    stationary_tol: float | None = None,
) -> ProjectionReport:
    """KL projection of ``q`` onto ``fs`` by Dykstra's algorithm.

    By default a run converges once the violation is at most ``tol``. With
    ``stationary_tol`` it must also change by at most that much (max-norm)
    over its last cycle. ``initial_corrections`` (shape ``(m, n)``) replaces
    the all-zero start of the correction ring; it exists for testing the
    stabilized update. With ``stop_early=False`` exactly ``max_cycles``
    cycles are run.
    """
    q = _check_q(q, fs.n)
    if not 0.0 < tol <= 1.0:
        raise ValueError(f"tol must lie in (0, 1], got {tol}")
    if max_cycles < 1:
        raise ValueError("max_cycles must be >= 1")
    if stationary_tol is not None and not stationary_tol > 0.0:
        raise ValueError("stationary_tol must be positive")
    m, n = fs.m, fs.n
    if m == 0:
        return ProjectionReport(q.copy(), 0, 0.0, True, 0.0, 0.0)
    d_ring = np.zeros((m, n))
    if initial_corrections is not None:
        d_ring[:] = initial_corrections
        if not np.all(np.isfinite(d_ring)):
            raise ValueError("initial corrections must be finite")
    steps = max_cycles * m + 1 if record_trace else 1
    tz, td, tu = np.zeros((steps, n)), np.zeros((steps, n)), np.zeros((steps, n))

    start = time.perf_counter()
    stat = -1.0 if stationary_tol is None else float(stationary_tol)
    cycles, viol, change, logz, t = _dykstra(
        np.log(q), *fs.kernel_arrays, float(tol) if stop_early else -1.0, stat,
        int(max_cycles), d_ring,
        record_trace, tz, td, tu,
    )
    wall = time.perf_counter() - start

    z = np.exp(logz)
    p_star = z / z.sum()
    trace = None
    if record_trace:
        trace = DykstraTrace(tz[: t + 1], td[: t + 1], tu[: t + 1])
    return ProjectionReport(
        p_star=p_star,
        cycles_used=int(cycles),
        final_violation=float(viol),
        converged=bool(viol <= tol and (stationary_tol is None or change <= stationary_tol)),
        kl_to_input=kl_divergence(p_star, q),
        wall_time=wall,
        state=DykstraState(t=int(t), z=z, d_ring=d_ring),
        trace=trace,
        cycle_change=float(change),
    )
