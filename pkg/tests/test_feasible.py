import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from posskl.antipignistic import poss_to_prob
from posskl.feasible import (
    GAP_LOWER,
    GAP_UPPER,
    GENERIC,
    SUBSET,
    ConstraintAtom,
    LinearSystem,
    build_feasible_set,
    build_feasible_set_custom,
    build_generic_set,
    max_violation,
    set_from_dict,
    shape_check,
    to_linear_system,
)
from conftest import PI3, Q3
from strategies import poss_vectors

EPS = 0.001


def example_set():
    return build_feasible_set_custom(PI3, [EPS, EPS], [0.49, 0.005])


def test_reference_gaps():
    fs = build_feasible_set(PI3)
    np.testing.assert_allclose(fs.gaps_dot, [0.49, 0.005], atol=1e-15)
    assert fs.eps == 1e-9
    np.testing.assert_array_equal(fs.r_strict, [0, 1])
    assert fs.r_equal.size == 0
    assert fs.m == 6
    assert fs.nested_sets() == [(0,), (0, 1)]


def test_example_set_rows():
    sys_ = to_linear_system(example_set())
    expected_A = [[1, 0, 0], [1, 1, 0], [1, -1, 0], [0, 1, -1], [-1, 1, 0], [0, -1, 1]]
    expected_b = [0.49, 0.50, 0.001, 0.001, -0.49, -0.005]
    np.testing.assert_array_equal(sys_.A, expected_A)
    np.testing.assert_allclose(sys_.b, expected_b, atol=1e-15)
    assert sys_.blocks == ("pref", "pref", "low", "low", "up", "up")


def test_small_systems():
    assert to_linear_system(build_feasible_set([1, 0.5])).A.shape == (3, 2)
    fs = build_feasible_set([1, 1])
    np.testing.assert_array_equal(fs.system.A, [[1, 0], [1, -1], [-1, 1]])
    np.testing.assert_array_equal(fs.system.b, [0, 0, 0])


def test_all_tied():
    fs = build_feasible_set([1, 1, 1])
    assert fs.eps == 0.0
    np.testing.assert_array_equal(fs.r_equal, [0, 1])
    np.testing.assert_array_equal(fs.delta_lower, [0, 0])
    np.testing.assert_array_equal(fs.delta_upper, [0, 0])
    assert fs.is_feasible([1 / 3] * 3)
    assert not fs.is_feasible([0.34, 0.33, 0.33])


def test_eps_rule_caps():
    # g_min limits eps below the cap
    fs = build_feasible_set([1.0, 1.0 - 1e-10, 0.5], eps_cap=1e-3)
    assert fs.eps == pytest.approx(1e-10, rel=1e-5)
    # 1 - g_max limits eps when the top gap is almost 1
    fs = build_feasible_set([1.0, 1e-6], eps_cap=0.5)
    assert fs.eps == pytest.approx(1e-6)
    with pytest.raises(ValueError):
        build_feasible_set(PI3, eps_cap=0.0)
    with pytest.raises(ValueError):
        build_feasible_set([0.9, 0.5])


def test_max_violation_examples():
    fs = example_set()
    assert max_violation(fs, fs.p_dot) <= 1e-12
    assert max_violation(fs, [0.49, 0.50, 0.01]) == pytest.approx(0.485, abs=1e-12)
    assert max_violation(fs, Q3) == pytest.approx(0.01, abs=1e-12)
    with pytest.raises(ValueError):
        max_violation(fs, [0.5, 0.5])


def test_custom_bounds():
    fs = example_set()
    assert fs.eps == EPS
    with pytest.raises(ValueError):
        build_feasible_set_custom(PI3, [0.5, EPS], [0.6, 0.005])
    with pytest.raises(ValueError):
        build_feasible_set_custom(PI3, [EPS, EPS], [0.49, 0.004])
    with pytest.raises(ValueError):
        build_feasible_set_custom([1, 1, 0.5], [EPS, EPS], [0.5, 0.5])
    with pytest.raises(ValueError):
        build_feasible_set_custom(PI3, [EPS], [0.49])


def test_tight_upper_bounds_make_gaps_active():
    pi = np.array([1.0, 0.7, 0.4, 0.1])
    fs0 = build_feasible_set(pi)
    fs = build_feasible_set_custom(pi, np.full(3, 1e-3), fs0.gaps_dot)
    assert fs.is_feasible(fs.p_dot)
    up = [a for a in fs.atoms if a.kind == GAP_UPPER]
    for a in up:
        assert a.slack(fs.p_dot) == pytest.approx(0.0, abs=1e-15)


def test_shape_check_examples():
    fs = example_set()
    assert not shape_check(fs, [0.49, 0.50, 0.01])
    assert not shape_check(fs, [0.49, 0.01, 0.50])
    assert shape_check(fs, fs.p_dot)


def test_tie_tol_snaps_levels():
    pi = np.array([1.0, 0.6, 0.6 - 1e-12, 0.2])
    exact = build_feasible_set(pi)
    snapped = build_feasible_set(pi, tie_tol=1e-9)
    assert exact.r_equal.size == 0
    np.testing.assert_array_equal(snapped.r_equal, [1])
    assert snapped.is_feasible(snapped.p_dot)
    assert shape_check(snapped, snapped.p_dot)


def test_generic_sets():
    single = build_generic_set([ConstraintAtom.subset(3, [0], 0.49)], [0.5, 0.25, 0.25])
    assert single.m == 1
    with pytest.raises(ValueError):
        build_generic_set([ConstraintAtom.subset(3, [0], 0.49)], [0.4, 0.3, 0.3])

    fs = build_feasible_set([1, 0.8, 0.3, 0.3])
    same = build_generic_set(fs.atoms, fs.p_dot)
    np.testing.assert_array_equal(same.system.A, fs.system.A)
    np.testing.assert_array_equal(same.system.b, fs.system.b)


def test_probability_interval_halfspaces():
    lo = np.array([0.1, 0.2, 0.05, 0.0])
    hi = np.array([0.5, 0.6, 0.3, 0.4])
    atoms = []
    for k in range(4):
        e = np.zeros(4)
        e[k] = 1.0
        if lo[k] > 0:
            atoms.append(ConstraintAtom.generic(e, lo[k]))
        atoms.append(ConstraintAtom.generic(-e, -hi[k]))
    mid = (lo + hi) / 2
    witness = mid / mid.sum()
    cs = build_generic_set(atoms, witness)
    assert cs.is_feasible(witness)
    assert all(a.kind == GENERIC for a in cs.atoms)
    # upper bound p_1 <= 0.5 is stored as the complement sum >= 0.5
    assert cs.atoms[1].members == (1, 2, 3) and cs.atoms[1].bound == pytest.approx(0.5)
    assert cs.max_violation([0.7, 0.1, 0.1, 0.1]) == pytest.approx(0.2)


def test_generic_rejects_unsupported_patterns():
    with pytest.raises(ValueError):
        ConstraintAtom.generic([0.5, 1.0, 0.0], 0.1)
    with pytest.raises(ValueError):
        ConstraintAtom.generic([1.0, 1.0, -1.0], 0.1)
    with pytest.raises(ValueError):
        ConstraintAtom.generic([0.0, 0.0], 0.1)
    with pytest.raises(ValueError):
        ConstraintAtom.gap(3, 1, 1, 0.1)
    with pytest.raises(ValueError):
        ConstraintAtom.gap(3, 0, 1, 1.0)
    with pytest.raises(ValueError):
        ConstraintAtom.subset(3, [0, 1], 1.0)


def test_serialization_round_trip():
    fs = build_feasible_set([1, 0.3, 0.3, 0.8])
    blob = json.loads(json.dumps(fs.to_dict()))
    back = set_from_dict(blob)
    np.testing.assert_array_equal(back.system.A, fs.system.A)
    np.testing.assert_array_equal(back.system.b, fs.system.b)
    np.testing.assert_array_equal(back.sigma, fs.sigma)
    ls = LinearSystem.from_dict(blob["system"])
    assert ls.blocks == fs.system.blocks

    g = build_generic_set([ConstraintAtom.generic([0, -1, 0], -0.5)], [0.4, 0.3, 0.3])
    back = set_from_dict(json.loads(json.dumps(g.to_dict())))
    np.testing.assert_array_equal(back.system.A, g.system.A)
    assert ConstraintAtom.from_dict(g.atoms[0].to_dict()).members == g.atoms[0].members


def test_atoms_are_immutable():
    fs = build_feasible_set(PI3)
    with pytest.raises(ValueError):
        fs.atoms[0].coeffs[0] = 2.0
    with pytest.raises(ValueError):
        fs.pi[0] = 0.5


@given(poss_vectors(), st.sampled_from([1e-9, 1e-3, 0.05]))
def test_structure_invariants(pi, eps_cap):
    fs = build_feasible_set(pi, eps_cap=eps_cap)
    n = pi.size
    assert fs.m == 3 * n - 3
    assert fs.tilde_pi[0] == 1.0 and np.all(np.diff(fs.tilde_pi) <= 0) and fs.tilde_pi[-1] > 0
    kinds = [a.kind for a in fs.atoms]
    assert kinds == [SUBSET] * (n - 1) + [GAP_LOWER] * (n - 1) + [GAP_UPPER] * (n - 1)
    A = fs.system.A
    assert set(np.unique(A[: n - 1])) <= {0.0, 1.0}
    for row in A[n - 1:]:
        assert sorted(row[row != 0]) == [-1.0, 1.0]
    g = fs.gaps_dot
    s = fs.r_strict
    assert np.all((0 < fs.delta_lower[s]) & (fs.delta_lower[s] <= g[s]) & (g[s] <= fs.delta_upper[s]))
    assert np.all(fs.delta_upper[s] < 1)
    assert np.all(fs.delta_lower[fs.r_equal] == 0) and np.all(fs.delta_upper[fs.r_equal] == 0)
    np.testing.assert_allclose(fs.p_dot, poss_to_prob(pi), atol=1e-15)
    assert fs.is_feasible(fs.p_dot)


@given(poss_vectors(max_n=6), st.integers(0, 2**32 - 1))
def test_feasible_points_respect_shape_and_convexity(pi, seed):
    rng = np.random.default_rng(seed)
    fs = build_feasible_set(pi, eps_cap=1e-3)
    pts = [fs.p_dot]
    # perturb the reference point and keep feasible draws
    for _ in range(200):
        x = np.abs(fs.p_dot + rng.normal(scale=0.05, size=pi.size))
        x /= x.sum()
        if fs.is_feasible(x):
            pts.append(x)
    for x in pts:
        assert shape_check(fs, x)
    for a, b in zip(pts, pts[1:]):
        t = rng.random()
        assert fs.max_violation(t * a + (1 - t) * b) <= 1e-12


def test_nearly_tied_levels_keep_upper_bound_below_one():
    fs = build_feasible_set([1.0, 0.01 + 1e-17, 0.01], eps_cap=1e-3)
    assert fs.eps < 1e-16
    assert np.all(fs.delta_upper < 1.0)
    assert fs.is_feasible(fs.p_dot)
    with pytest.raises(ValueError):
        build_feasible_set([1.0, 1e-20])
