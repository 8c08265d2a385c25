"""Admissible sets of probability vectors induced by a possibility distribution.

A possibility distribution ``pi`` defines the box set: dominance constraints
on the nested top-r sets of the ``pi``-order, plus lower and upper bounds on
adjacent differences in that order. Each constraint is a closed halfspace
``<v, p> >= b`` of the simplex, kept as a :class:`ConstraintAtom` in the
cyclic order used by the projection engine (all dominance atoms, then all
lower gaps, then all upper gaps).

Indices are 0-based throughout; ``sigma[r]`` is the class at rank ``r``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from posskl.antipignistic import as_poss_vec, poss_to_prob, sort_permutation
from posskl.simplex import ArrayLike

FEASIBILITY_TOL = 1e-12
DEFAULT_EPS_CAP = 1e-9
_BELOW_ONE = float(np.nextafter(1.0, 0.0))

SUBSET = "subset"
GAP_LOWER = "gap-lower"
GAP_UPPER = "gap-upper"
GENERIC = "generic"


@dataclass(frozen=True, eq=False)
class ConstraintAtom:
    """One halfspace ``{p in simplex : <coeffs, p> >= bound}``.

    ``members`` is set for subset-type atoms; ``i``, ``j`` and ``delta`` are
    set for gap-type atoms, in the projection form ``p_i - p_j >= delta``
    (an upper gap ``p_a - p_b <= d`` is stored as ``p_b - p_a >= -d``).
    """

    kind: str
    coeffs: np.ndarray
    bound: float
    members: tuple[int, ...] | None = None
    i: int | None = None
    j: int | None = None

    @property
    def n(self) -> int:
        return self.coeffs.size

    @property
    def delta(self) -> float:
        return self.bound

    @property
    def is_subset(self) -> bool:
        return self.members is not None

    @classmethod
    def subset(cls, n: int, members: Iterable[int], bound: float) -> ConstraintAtom:
        members = tuple(sorted({int(k) for k in members}))
        if any(k < 0 or k >= n for k in members):
            raise IndexError(f"subset member out of range for n={n}")
        if not bound < 1.0:
            raise ValueError(f"subset bound must be < 1, got {bound}")
        v = np.zeros(n)
        v[list(members)] = 1.0
        v.setflags(write=False)
        return cls(SUBSET, v, float(bound), members=members)

    @classmethod
    def gap(cls, n: int, i: int, j: int, delta: float, kind: str = GAP_LOWER) -> ConstraintAtom:
        i, j = int(i), int(j)
        if i == j:
            raise ValueError("gap atom needs two distinct indices")
        if not (0 <= i < n and 0 <= j < n):
            raise IndexError(f"gap index out of range for n={n}")
        if not -1.0 < delta < 1.0:
            raise ValueError(f"gap threshold must lie in (-1, 1), got {delta}")
        v = np.zeros(n)
        v[i], v[j] = 1.0, -1.0
        v.setflags(write=False)
        return cls(kind, v, float(delta), i=i, j=j)

    @classmethod
    def generic(cls, coeffs: ArrayLike, bound: float) -> ConstraintAtom:
        """Halfspace with a supported coefficient pattern.

        Accepted: 0/1 entries (subset sum from below), 0/-1 entries (subset
        sum from above, rewritten on the complement), or exactly one +1 and
        one -1 (pairwise difference).
        """
        v = np.array(coeffs, dtype=np.float64).reshape(-1)
        n = v.size
        vals = set(np.unique(v).tolist())
        if not vals <= {-1.0, 0.0, 1.0} or vals <= {0.0}:
            raise ValueError("unsupported coefficient pattern for a closed-form projection")
        pos, neg = np.flatnonzero(v == 1.0), np.flatnonzero(v == -1.0)
        if neg.size == 0:
            members, b = pos, float(bound)
        elif pos.size == 0:
            # -sum_{neg} p >= b  <=>  sum_{rest} p >= 1 + b
            members, b = np.flatnonzero(v == 0.0), 1.0 + float(bound)
        elif pos.size == 1 and neg.size == 1:
            atom = cls.gap(n, pos[0], neg[0], float(bound), kind=GENERIC)
            return cls(GENERIC, atom.coeffs, atom.bound, i=atom.i, j=atom.j)
        else:
            raise ValueError("unsupported coefficient pattern for a closed-form projection")
        if not b < 1.0:
            raise ValueError("halfspace excludes every strictly positive point")
        atom = cls.subset(n, members, b)
        return cls(GENERIC, atom.coeffs, atom.bound, members=atom.members)

    def slack(self, p: np.ndarray) -> float:
        """``<v, p> - b``; negative when the atom is violated."""
        return float(self.coeffs @ p - self.bound)

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "coeffs": self.coeffs.tolist(), "bound": self.bound}
        if self.members is not None:
            d["members"] = list(self.members)
        if self.i is not None:
            d["i"], d["j"] = self.i, self.j
        return d

    @classmethod
    def from_dict(cls, d: dict) -> ConstraintAtom:
        v = np.asarray(d["coeffs"], dtype=np.float64)
        kind = d["kind"]
        if kind == SUBSET:
            return cls.subset(v.size, d["members"], d["bound"])
        if kind in (GAP_LOWER, GAP_UPPER):
            return cls.gap(v.size, d["i"], d["j"], d["bound"], kind=kind)
        if kind == GENERIC:
            return cls.generic(v, d["bound"])
        raise ValueError(f"unknown atom kind {kind!r}")


@dataclass(frozen=True)
class LinearSystem:
    """Stacked rows ``A p >= b`` with one block label per row."""

    A: np.ndarray
    b: np.ndarray
    blocks: tuple[str, ...]

    def to_dict(self) -> dict:
        return {"A": self.A.tolist(), "b": self.b.tolist(), "blocks": list(self.blocks)}

    @classmethod
    def from_dict(cls, d: dict) -> LinearSystem:
        A = np.asarray(d["A"], dtype=np.float64).reshape(len(d["b"]), -1)
        return cls(A, np.asarray(d["b"], dtype=np.float64), tuple(d["blocks"]))

    def violation(self, p: ArrayLike) -> float:
        p = np.asarray(p, dtype=np.float64)
        if p.shape != (self.A.shape[1],):
            raise ValueError(f"length mismatch: expected {self.A.shape[1]}, got {p.size}")
        if self.b.size == 0:
            return 0.0
        return float(max(np.max(self.b - self.A @ p), 0.0))


@dataclass(frozen=True, eq=False)
class ConstraintSet:
    """Intersection of halfspace atoms with a strictly positive witness point."""

    n: int
    atoms: tuple[ConstraintAtom, ...]
    witness: np.ndarray

    @property
    def m(self) -> int:
        return len(self.atoms)

    @cached_property
    def system(self) -> LinearSystem:
        block = {SUBSET: "pref", GAP_LOWER: "low", GAP_UPPER: "up", GENERIC: "generic"}
        if not self.atoms:
            return LinearSystem(np.zeros((0, self.n)), np.zeros(0), ())
        A = np.vstack([a.coeffs for a in self.atoms])
        b = np.array([a.bound for a in self.atoms])
        A.setflags(write=False)
        b.setflags(write=False)
        return LinearSystem(A, b, tuple(block[a.kind] for a in self.atoms))

    @cached_property
    def kernel_arrays(self) -> tuple[np.ndarray, ...]:
        """Flat arrays consumed by the compiled projection engine."""
        m, n = self.m, self.n
        is_gap = np.zeros(m, dtype=np.int64)
        masks = np.zeros((m, n), dtype=np.bool_)
        bounds = np.zeros(m)
        gi = np.zeros(m, dtype=np.int64)
        gj = np.zeros(m, dtype=np.int64)
        for t, a in enumerate(self.atoms):
            bounds[t] = a.bound
            if a.is_subset:
                masks[t, list(a.members)] = True
            else:
                is_gap[t], gi[t], gj[t] = 1, a.i, a.j
        A = np.ascontiguousarray(self.system.A)
        b = np.ascontiguousarray(self.system.b)
        return is_gap, masks, bounds, gi, gj, A, b

    def max_violation(self, p: ArrayLike) -> float:
        return self.system.violation(p)

    def is_feasible(self, p: ArrayLike, tol: float = FEASIBILITY_TOL) -> bool:
        return self.max_violation(p) <= tol

    def to_dict(self) -> dict:
        return {
            "type": "generic",
            "n": self.n,
            "atoms": [a.to_dict() for a in self.atoms],
            "witness": self.witness.tolist(),
            "system": self.system.to_dict(),
        }


@dataclass(frozen=True, eq=False)
class FeasibleSet(ConstraintSet):
    """Box set built from a possibility distribution; ``witness`` is the antipignistic point."""

    pi: np.ndarray = field(default=None)
    sigma: np.ndarray = field(default=None)
    tilde_pi: np.ndarray = field(default=None)
    gaps_dot: np.ndarray = field(default=None)
    r_equal: np.ndarray = field(default=None)
    r_strict: np.ndarray = field(default=None)
    delta_lower: np.ndarray = field(default=None)
    delta_upper: np.ndarray = field(default=None)
    eps: float = 0.0
    tie_tol: float = 0.0

    @property
    def p_dot(self) -> np.ndarray:
        return self.witness

    def nested_sets(self) -> list[tuple[int, ...]]:
        return [tuple(sorted(self.sigma[: r + 1].tolist())) for r in range(self.n - 1)]

    def to_dict(self) -> dict:
        return {
            "type": "fbox",
            "n": self.n,
            "pi": self.pi.tolist(),
            "tie_tol": self.tie_tol,
            "eps": self.eps,
            "sigma": self.sigma.tolist(),
            "tilde_pi": self.tilde_pi.tolist(),
            "gaps_dot": self.gaps_dot.tolist(),
            "r_equal": self.r_equal.tolist(),
            "r_strict": self.r_strict.tolist(),
            "delta_lower": self.delta_lower.tolist(),
            "delta_upper": self.delta_upper.tolist(),
            "p_dot": self.witness.tolist(),
            "atoms": [a.to_dict() for a in self.atoms],
            "system": self.system.to_dict(),
        }


def set_from_dict(d: dict) -> ConstraintSet:
    """Rebuild a set serialized with ``to_dict``; derived fields are recomputed."""
    if d.get("type") == "fbox":
        return build_feasible_set_custom(
            d["pi"], d["delta_lower"], d["delta_upper"], tie_tol=d.get("tie_tol", 0.0)
        )
    atoms = [ConstraintAtom.from_dict(a) for a in d["atoms"]]
    return build_generic_set(atoms, d["witness"])


def _ranked_levels(pi: np.ndarray, tie_tol: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Sorting permutation, sorted levels and the tie mask over ranks 0..n-2.

    With ``tie_tol > 0`` near-tied levels are snapped to the level above so
    that the reference point stays inside the set.
    """
    sigma = sort_permutation(pi)
    tp = pi[sigma].copy()
    tied = np.zeros(max(pi.size - 1, 0), dtype=bool)
    for r in range(pi.size - 1):
        if abs(tp[r] - tp[r + 1]) <= tie_tol:
            tied[r] = True
            tp[r + 1] = tp[r]
    return sigma, tp, tied


def _assemble(
    pi: np.ndarray,
    sigma: np.ndarray,
    tp: np.ndarray,
    tied: np.ndarray,
    delta_lower: np.ndarray,
    delta_upper: np.ndarray,
    eps: float,
    tie_tol: float,
) -> FeasibleSet:
    n = pi.size
    ranks = np.arange(1, n)
    gaps_dot = (tp[:-1] - tp[1:]) / ranks
    pref = [ConstraintAtom.subset(n, sigma[: r + 1], 1.0 - tp[r + 1]) for r in range(n - 1)]
    low = [
        ConstraintAtom.gap(n, sigma[r], sigma[r + 1], delta_lower[r], kind=GAP_LOWER)
        for r in range(n - 1)
    ]
    up = [
        ConstraintAtom.gap(n, sigma[r + 1], sigma[r], -delta_upper[r], kind=GAP_UPPER)
        for r in range(n - 1)
    ]
    # the reference point is computed on the (possibly snapped) levels
    levels = np.empty(n)
    levels[sigma] = tp
    p_dot = poss_to_prob(levels)
    arrays = [pi, sigma, tp, gaps_dot, delta_lower, delta_upper, p_dot]
    for a in arrays:
        a.setflags(write=False)
    return FeasibleSet(
        n=n,
        atoms=tuple(pref + low + up),
        witness=p_dot,
        pi=pi,
        sigma=sigma,
        tilde_pi=tp,
        gaps_dot=gaps_dot,
        r_equal=np.flatnonzero(tied),
        r_strict=np.flatnonzero(~tied),
        delta_lower=delta_lower,
        delta_upper=delta_upper,
        eps=float(eps),
        tie_tol=float(tie_tol),
    )


def build_feasible_set(
    pi: ArrayLike, eps_cap: float = DEFAULT_EPS_CAP, tie_tol: float = 0.0
) -> FeasibleSet:
    """Wide box set: gap bounds ``(eps, 1 - eps)`` on strict ranks, ``(0, 0)`` on ties.

    ``eps = min(eps_cap, g_min, 1 - g_max)`` over the strict ranks.
    """
    pi = np.array(as_poss_vec(pi))
    if not 0.0 < eps_cap < 1.0:
        raise ValueError(f"eps_cap must lie in (0, 1), got {eps_cap}")
    if tie_tol < 0.0:
        raise ValueError("tie_tol must be nonnegative")
    sigma, tp, tied = _ranked_levels(pi, tie_tol)
    n = pi.size
    gaps_dot = (tp[:-1] - tp[1:]) / np.arange(1, n)
    strict = ~tied
    eps = 0.0
    if strict.any():
        g = gaps_dot[strict]
        eps = min(eps_cap, g.min(), 1.0 - g.max())
        if eps <= 0.0:
            raise ValueError("second possibility level is below double precision relative to 1")
    delta_lower = np.where(strict, eps, 0.0)
    # 1 - eps rounds to 1 once eps < 2**-53; keep the bound strictly below 1
    delta_upper = np.where(strict, min(1.0 - eps, _BELOW_ONE), 0.0)
    return _assemble(pi, sigma, tp, tied, delta_lower, delta_upper, eps, tie_tol)


def build_feasible_set_custom(
    pi: ArrayLike,
    delta_lower: Sequence[float],
    delta_upper: Sequence[float],
    tie_tol: float = 0.0,
    atol: float = FEASIBILITY_TOL,
) -> FeasibleSet:
    """Box set with caller-chosen gap bounds, indexed by rank.

    The bounds must bracket the reference gaps (``0 < lower <= g <= upper < 1``
    on strict ranks, ``lower = upper = 0`` on tied ranks) up to ``atol``;
    anything else could empty the set and is rejected.
    """
    pi = np.array(as_poss_vec(pi))
    n = pi.size
    dl = np.array(delta_lower, dtype=np.float64).reshape(-1)
    du = np.array(delta_upper, dtype=np.float64).reshape(-1)
    if dl.size != n - 1 or du.size != n - 1:
        raise ValueError(f"expected {n - 1} gap bounds per side")
    sigma, tp, tied = _ranked_levels(pi, tie_tol)
    gaps_dot = (tp[:-1] - tp[1:]) / np.arange(1, n)
    for r in range(n - 1):
        if tied[r]:
            if dl[r] != 0.0 or du[r] != 0.0:
                raise ValueError(f"rank {r} is tied: both gap bounds must be 0")
            continue
        if not (0.0 < dl[r] <= gaps_dot[r] + atol and gaps_dot[r] - atol <= du[r] < 1.0):
            raise ValueError(
                f"rank {r}: bounds ({dl[r]}, {du[r]}) do not bracket the reference gap {gaps_dot[r]}"
            )
    eps = float(dl[~tied].min()) if (~tied).any() else 0.0
    return _assemble(pi, sigma, tp, tied, dl, du, eps, tie_tol)


def build_generic_set(
    atoms: Sequence[ConstraintAtom], witness: ArrayLike, atol: float = FEASIBILITY_TOL
) -> ConstraintSet:
    """Intersection of arbitrary supported atoms, certified by a feasible witness."""
    w = np.array(witness, dtype=np.float64).reshape(-1)
    if np.any(w <= 0.0) or abs(w.sum() - 1.0) > 1e-9:
        raise ValueError("witness must be a strictly positive probability vector")
    atoms = tuple(atoms)
    for a in atoms:
        if a.n != w.size:
            raise ValueError("atom dimension does not match the witness")
    cs = ConstraintSet(n=w.size, atoms=atoms, witness=w)
    v = cs.max_violation(w)
    if v > atol:
        raise ValueError(f"witness violates the constraints (max violation {v:.3g})")
    w.setflags(write=False)
    return cs


def to_linear_system(fs: ConstraintSet) -> LinearSystem:
    return fs.system


def max_violation(fs: ConstraintSet, p: ArrayLike) -> float:
    """Largest positive part of ``b_i - <a_i, p>`` over all rows."""
    return fs.max_violation(p)


def shape_check(fs: FeasibleSet, p: ArrayLike, p_tol: float = 0.0) -> bool:
    """True iff ``pi_k >= pi_k'`` exactly when ``p_k >= p_k'`` for every pair.

    ``pi`` comparisons honour the set's ``tie_tol``; ``p`` comparisons are
    exact unless ``p_tol`` is given.
    """
    p = np.asarray(p, dtype=np.float64)
    if p.shape != (fs.n,):
        raise ValueError(f"length mismatch: expected {fs.n}, got {p.size}")
    levels = np.empty(fs.n)
    levels[fs.sigma] = fs.tilde_pi
    # levels are already snapped by tie_tol, so exact comparison is right here
    pi_ge = levels[:, None] >= levels[None, :]
    p_ge = p[:, None] >= p[None, :] - p_tol
    return bool(np.all(pi_ge == p_ge))
