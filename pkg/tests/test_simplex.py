import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from posskl.simplex import (
    as_correction_vec,
    as_pos_vec,
    as_prob_vec,
    bregman_distance,
    embed,
    kl_divergence,
    normalize,
    restrict_to_support,
    strictly_positive,
)
from strategies import prob_vectors


def test_prob_vec_validation():
    v = as_prob_vec([0.2, 0.8])
    assert not v.flags.writeable
    as_prob_vec([0.5, 0.5 + 5e-10])
    with pytest.raises(ValueError):
        as_prob_vec([0.5, 0.6])
    with pytest.raises(ValueError):
        as_prob_vec([1.1, -0.1])
    with pytest.raises(ValueError):
        as_prob_vec([])


def test_pos_and_correction_vec_validation():
    as_pos_vec([1e-300, 5.0])
    with pytest.raises(ValueError):
        as_pos_vec([1.0, 0.0])
    with pytest.raises(ValueError):
        as_pos_vec([1.0, np.inf])
    as_correction_vec([-700.0, 0.0, 700.0])
    with pytest.raises(ValueError):
        as_correction_vec([np.nan])


def test_strictly_positive_threshold():
    assert strictly_positive([1 - 1e-15, 1e-15])
    assert not strictly_positive([1 - 1e-16, 1e-16])


def test_kl_examples():
    assert kl_divergence([0.5, 0.5], [0.5, 0.5]) == 0.0
    assert kl_divergence([0.5, 0.5], [0.25, 0.75]) == pytest.approx(0.14384103622589046, abs=1e-12)
    assert kl_divergence([1.0, 0.0], [0.5, 0.5]) == pytest.approx(math.log(2), abs=1e-15)


def test_kl_errors():
    with pytest.raises(ValueError):
        kl_divergence([0.5, 0.5], [1.0, 0.0])
    with pytest.raises(ValueError):
        kl_divergence([0.5, 0.5], [0.2, 0.3, 0.5])


def test_bregman_examples():
    assert bregman_distance([0.5, 0.5], [0.5, 0.5]) == pytest.approx(0.0, abs=1e-15)
    assert bregman_distance([0.5, 0.5], [1.0, 1.0]) == pytest.approx(0.30685281944005469, abs=1e-12)
    assert bregman_distance([0.5, 0.5], [0.25, 0.75]) == pytest.approx(0.14384103622589046, abs=1e-12)


def test_normalize_examples():
    np.testing.assert_array_equal(normalize([2, 2]), [0.5, 0.5])
    np.testing.assert_allclose(normalize([0.48, 0.261, 0.259]), [0.48, 0.261, 0.259], rtol=1e-15)
    np.testing.assert_allclose(normalize([1, 2, 3]), [1 / 6, 2 / 6, 3 / 6], rtol=1e-15)
    with pytest.raises(ValueError):
        normalize([1.0, np.nan])


def test_restrict_examples():
    pi, q, sup = restrict_to_support([1, 0.5, 0], [0.6, 0.3, 0.1])
    np.testing.assert_array_equal(sup, [0, 1])
    np.testing.assert_array_equal(pi, [1, 0.5])
    np.testing.assert_allclose(q, [0.6 / 0.9, 0.3 / 0.9], rtol=1e-15)

    pi, q, sup = restrict_to_support([1, 1, 1], [1 / 3] * 3)
    np.testing.assert_array_equal(sup, [0, 1, 2])
    np.testing.assert_allclose(q, [1 / 3] * 3, rtol=1e-15)

    pi, q, sup = restrict_to_support([1, 0.2, 0], [1 - 1e-20, 1e-20, 0.0])
    np.testing.assert_array_equal(sup, [0, 1])
    np.testing.assert_allclose(q, [0.999999999999999, 9.99999999999999e-16], rtol=1e-14)


def test_restrict_errors():
    with pytest.raises(ValueError):
        restrict_to_support([0, 0], [0.5, 0.5])
    with pytest.raises(ValueError):
        restrict_to_support([0.9, 0.5], [0.5, 0.5])
    with pytest.raises(ValueError):
        restrict_to_support([1, 0.5], [1.0])


def test_embed_keeps_exact_zeros():
    _, q, sup = restrict_to_support([0, 1, 0, 0.3], [0.1, 0.4, 0.2, 0.3])
    full = embed(q, sup, 4)
    assert full[0] == 0.0 and full[2] == 0.0
    assert full.sum() == pytest.approx(1.0, abs=1e-15)


@given(prob_vectors(), prob_vectors())
def test_gibbs_inequality(p, q):
    if p.size != q.size:
        return
    assert kl_divergence(p, q) >= 0.0
    assert kl_divergence(p, p) == pytest.approx(0.0, abs=1e-12)


@given(prob_vectors(), st.floats(1e-3, 1e3))
def test_bregman_scaling_identity(x, t):
    y = normalize(np.roll(x, 1) + 0.1)
    lhs = bregman_distance(x, t * y) - bregman_distance(x, y)
    assert lhs == pytest.approx(t - math.log(t) - 1.0, abs=1e-9 * max(1.0, t))


@given(prob_vectors())
def test_bregman_equals_kl_on_simplex(x):
    y = normalize(np.roll(x, 1) + 0.05)
    assert bregman_distance(x, y) == pytest.approx(kl_divergence(x, y), abs=1e-12)


@given(st.lists(st.floats(1e-6, 1e6), min_size=1, max_size=10))
def test_normalize_idempotent(z):
    once = normalize(z)
    np.testing.assert_allclose(normalize(once), once, rtol=1e-15, atol=0)
    assert once.sum() == pytest.approx(1.0, abs=1e-12)
