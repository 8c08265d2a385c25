"""Brute-force verifiers that do not share code paths with the engine.

* :func:`dominance_brute` enumerates all ``2^n`` events and compares
  ``N(A) <= P(A) <= Pi(A)`` using the max/complement definitions directly.
* :func:`grid_kl_oracle` minimizes KL over a lattice of the 2-simplex.
* :func:`dykstra_unrolled` rebuilds every Dykstra iterate from the product
  formulas (no correction ring), for comparison with the incremental engine.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from posskl.bregman import project_atom
from posskl.dykstra import DykstraTrace, kl_project
from posskl.feasible import FEASIBILITY_TOL, ConstraintSet, FeasibleSet, shape_check
from posskl.simplex import ArrayLike, kl_divergence

MAX_BRUTE_N = 20


def _all_events(n: int) -> np.ndarray:
    codes = np.arange(2**n, dtype=np.int64)
    return ((codes[:, None] >> np.arange(n)) & 1).astype(bool)


def dominance_brute(pi: ArrayLike, p: ArrayLike, atol: float = 0.0) -> bool:
    """True iff ``N(A) - atol <= P(A) <= Pi(A) + atol`` for every event ``A``."""
    pi = np.asarray(pi, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    n = pi.size
    if n > MAX_BRUTE_N:
        raise ValueError(f"event enumeration limited to n <= {MAX_BRUTE_N}")
    if p.shape != pi.shape:
        raise ValueError("length mismatch")
    events = _all_events(n)
    prob = events.astype(np.float64) @ p
    # the sure and impossible events have probability 1 and 0 by definition,
    # not up to the rounding of sum(p)
    prob[0], prob[-1] = 0.0, 1.0
    poss = np.where(events, pi, 0.0).max(axis=1)
    poss_complement = np.where(~events, pi, 0.0).max(axis=1)
    nec = 1.0 - poss_complement
    return bool(np.all(nec - atol <= prob) and np.all(prob <= poss + atol))


def pref_block_holds(fs: FeasibleSet, p: ArrayLike, atol: float = 0.0) -> bool:
    sys = fs.system
    rows = np.array([blk == "pref" for blk in sys.blocks])
    return bool(np.all(sys.A[rows] @ np.asarray(p) >= sys.b[rows] - atol))


def reversed_dominance_holds(fs: FeasibleSet, p: ArrayLike, atol: float = 0.0) -> bool:
    """Dominance in the reversed form: partial sums from the least possible class
    never exceed the reversed levels."""
    p = np.asarray(p, dtype=np.float64)
    p_rev = p[fs.sigma[::-1]]
    pi_rev = fs.tilde_pi[::-1]
    # the whole-set row is sum(p) <= 1, which the simplex gives exactly
    return bool(np.all(np.cumsum(p_rev)[:-1] <= pi_rev[:-1] + atol))


def grid_kl_oracle(q: ArrayLike, fs: ConstraintSet, step: float = 1e-3) -> np.ndarray:
    """Lattice point of the 2-simplex minimizing ``KL(p || q)`` over the feasible lattice points.

    Only if no lattice point is feasible (tight gap bounds) are points with
    violation <= step admitted; relaxed points can undercut the projection.
    """
    q = np.asarray(q, dtype=np.float64)
    if fs.n != 3:
        raise ValueError("grid oracle is defined for n = 3 only")
    if not 1e-4 <= step <= 1e-2:
        raise ValueError("step must lie in [1e-4, 1e-2]")
    N = int(round(1.0 / step))
    i, j = np.meshgrid(np.arange(N + 1), np.arange(N + 1), indexing="ij")
    keep = i + j <= N
    i, j = i[keep], j[keep]
    P = np.stack([i, j, N - i - j], axis=1) / N
    sys = fs.system
    viol = np.max(sys.b[None, :] - P @ sys.A.T, axis=1)
    exact = viol <= FEASIBILITY_TOL
    # small slack so a violation of exactly one step survives rounding
    P = P[exact] if exact.any() else P[viol <= step + 1e-12]
    if P.shape[0] == 0:
        raise ValueError("no feasible lattice point; retry with a smaller step")
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(P > 0.0, P * (np.log(P) - np.log(q)), 0.0)
    return P[np.argmin(terms.sum(axis=1))]


def dykstra_unrolled(q: ArrayLike, fs: ConstraintSet, cycles: int) -> DykstraTrace:
    """Iterates of Dykstra's algorithm from the closed product formulas.

    For ``t = (j-1) m + h``:
    ``u_t = z_{t-1} * prod_{l<j-1} z_{lm+h-1} / z_{lm+h}``,
    ``z_t = Proj_h(u_t)``,
    ``d_t = log prod_{l<j} z_{lm+h-1} / z_{lm+h}``.
    """
    if cycles > 5 or fs.n > 5:
        raise ValueError("unrolled oracle is limited to n <= 5 and at most 5 cycles")
    q = np.asarray(q, dtype=np.float64)
    m, n = fs.m, fs.n
    T = cycles * m
    z = np.zeros((T + 1, n))
    d = np.zeros((T + 1, n))
    u = np.zeros((T + 1, n))
    z[0] = q
    for t in range(1, T + 1):
        j, h = (t - 1) // m + 1, (t - 1) % m + 1
        ratio = np.ones(n)
        for ell in range(j - 1):
            ratio *= z[ell * m + h - 1] / z[ell * m + h]
        u[t] = z[t - 1] * ratio
        z[t] = project_atom(u[t], fs.atoms[h - 1])
        d[t] = np.log(ratio * z[(j - 1) * m + h - 1] / z[t])
    return DykstraTrace(z, d, u)


def variational_gap(q: ArrayLike, p_star: ArrayLike, xs: np.ndarray) -> float:
    """``max_x <grad f(q) - grad f(p*), x - p*>``; nonpositive at the exact projection."""
    q = np.asarray(q, dtype=np.float64)
    p_star = np.asarray(p_star, dtype=np.float64)
    g = np.log(q) - np.log(p_star)
    return float(np.max((np.atleast_2d(xs) - p_star) @ g))


def sample_feasible(fs: ConstraintSet, rng: np.random.Generator, count: int,
                    anchors: list[np.ndarray] | None = None) -> np.ndarray:
    """Feasible points by rejection from the uniform simplex, topped up with
    random convex combinations of the witness, any anchors, and accepted points."""
    pool = [np.asarray(fs.witness)] + [np.asarray(a) for a in (anchors or [])]
    cand = rng.dirichlet(np.ones(fs.n), size=max(20 * count, 1000))
    viol = np.max(fs.system.b[None, :] - cand @ fs.system.A.T, axis=1, initial=0.0)
    pool.extend(cand[viol <= 0.0][:count])
    base = np.array(pool)
    out = []
    for _ in range(count):
        w = rng.dirichlet(np.ones(base.shape[0]))
        out.append(w @ base)
    return np.array(out)


@dataclass
class VerifyReport:
    checks: dict[str, bool]
    details: dict[str, float]

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def to_dict(self) -> dict:
        return {"passed": self.passed, "checks": self.checks, "details": self.details}


def verify_instance(q: ArrayLike, fs: FeasibleSet, tol: float = 1e-10,
                    max_cycles: int = 100000, seed: int = 0) -> VerifyReport:
    """Run every applicable oracle on one projection instance."""
    rng = np.random.default_rng(seed)
    q = np.asarray(q, dtype=np.float64)
    # a feasible iterate can still be short of the projection; require it to settle
    rep = kl_project(q, fs, tol=tol, max_cycles=max_cycles, stationary_tol=min(tol, 1e-12))
    p = rep.p_star
    checks: dict[str, bool] = {"converged": rep.converged}
    details: dict[str, float] = {"final_violation": rep.final_violation,
                                 "kl": rep.kl_to_input, "cycles": rep.cycles_used}
    checks["witness_feasible"] = fs.is_feasible(fs.witness)
    checks["kl_not_above_witness"] = rep.kl_to_input <= kl_divergence(fs.witness, q) + 1e-12
    if fs.n <= MAX_BRUTE_N:
        checks["dominance_brute"] = dominance_brute(fs.pi, p, atol=max(tol, 1e-12))
    checks["shape"] = shape_check(fs, p, p_tol=max(tol, 1e-12))
    xs = sample_feasible(fs, rng, 100, anchors=[p])
    gap = variational_gap(q, p, xs)
    details["variational_gap"] = gap
    checks["variational_inequality"] = gap <= 1e-8
    if fs.n == 3:
        g = grid_kl_oracle(q, fs, 1e-3)
        details["grid_kl"] = kl_divergence(g, q)
        checks["grid_oracle"] = rep.kl_to_input <= details["grid_kl"] + 2e-3
    if fs.n <= 5:
        cyc = min(3, max(rep.cycles_used, 1))
        inc = kl_project(q, fs, max_cycles=cyc, record_trace=True, stop_early=False).trace
        unr = dykstra_unrolled(q, fs, cyc)
        err = float(max(np.abs(inc.z - unr.z).max(), np.abs(inc.d - unr.d).max()))
        details["unrolled_max_error"] = err
        checks["unrolled_equivalence"] = err <= 1e-10
    return VerifyReport(checks, details)
