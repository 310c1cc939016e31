import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from powersample import (EntropyCut, InputError, UniformCut, entropy_cut_weights,
                         random_tabular_model, sample_autoregressive, sample_cut,
                         uniform_cut_weights)
from powersample.models import entropy_profile

profiles = st.lists(st.floats(0, 3), min_size=1, max_size=25)


def test_uniform_weights():
    np.testing.assert_array_equal(uniform_cut_weights(4), [0.25] * 4)
    np.testing.assert_array_equal(uniform_cut_weights(1), [1.0])
    with pytest.raises(InputError):
        uniform_cut_weights(0)


def test_uniform_cut_ignores_content():
    m = random_tabular_model(3, 3, 0)
    law = UniformCut()
    assert np.array_equal(law.weights([0, 1, 2, 0], m), law.weights([2, 2, 2, 2], m))


def test_entropy_cut_example():
    # profile (0, 1, 3) has jumps (0, 1, 2); squares normalize to (0, .2, .8)
    np.testing.assert_allclose(entropy_cut_weights([0.0, 1.0, 3.0], 2.0), [0, 0.2, 0.8])


def test_entropy_cut_flat_profile_is_uniform():
    np.testing.assert_array_equal(entropy_cut_weights([0.0, 0.0, 0.0], 4.0), [1 / 3] * 3)
    np.testing.assert_array_equal(entropy_cut_weights([2.0, 1.0, 0.5], 0.0), [1 / 3] * 3)


@given(profiles)
def test_beta_zero_bitwise_uniform(h):
    assert np.array_equal(entropy_cut_weights(h, 0.0), uniform_cut_weights(len(h)))


@given(profiles, st.floats(0, 6), st.floats(0, 2))
def test_weights_form_distribution(h, beta, eps):
    w = entropy_cut_weights(h, beta, eps)
    assert np.all(w >= 0)
    assert abs(w.sum() - 1) < 1e-12


@given(profiles, st.floats(0, 6), st.floats(1e-3, 2))
def test_floor_gives_full_support(h, beta, eps):
    w = entropy_cut_weights(h, beta, eps)
    d = np.maximum(0, np.diff(h, prepend=0.0))
    d[0] = h[0]
    bound = eps / ((d ** beta).sum() + len(h) * eps)
    assert np.all(w >= bound * (1 - 1e-12))


def test_stacked_profiles_match_rows():
    rng = np.random.default_rng(0)
    h = rng.random((6, 7))
    h[2] = 0.0
    stacked = entropy_cut_weights(h, 3.0, 0.1)
    for row, w in zip(h, stacked):
        np.testing.assert_array_equal(entropy_cut_weights(row, 3.0, 0.1), w)


def test_law_uses_base_entropy():
    m = random_tabular_model(3, 4, 2)
    s = sample_autoregressive(m, 4, 1)
    np.testing.assert_allclose(EntropyCut(4.0).weights(s, m),
                               entropy_cut_weights(entropy_profile(m, s), 4.0))


def test_entropy_cut_rejects_negative():
    with pytest.raises(InputError):
        EntropyCut(-1.0)
    with pytest.raises(InputError):
        EntropyCut(1.0, -0.1)


def test_sample_cut_point_mass():
    rng = np.random.default_rng(0)
    assert all(sample_cut([0, 0, 1.0, 0], rng) == 2 for _ in range(50))


def test_sample_cut_frequencies():
    rng = np.random.default_rng(1)
    w = np.tile(uniform_cut_weights(4), (100_000, 1))
    counts = np.bincount(sample_cut(w, rng), minlength=4) / 100_000
    assert np.all(np.abs(counts - 0.25) < 0.01)
    m = sample_cut(np.tile([0.2, 0.8], (100_000, 1)), rng)
    assert abs(m.mean() - 0.8) < 0.01


def test_sample_cut_reproducible():
    w = [0.1, 0.2, 0.3, 0.4]
    a = [sample_cut(w, np.random.default_rng(5)) for _ in range(3)]
    assert len(set(a)) == 1


def test_tree_branch_mass(tree_8):
    tree, model = tree_8
    for leaf in tree.leaves:
        w = EntropyCut(4.0).weights(leaf, model)
        expected = np.zeros(len(leaf))
        expected[list(tree.spec.branch_depths)] = 1 / tree.k
        np.testing.assert_allclose(w, expected, atol=1e-15)
        assert math.isclose(w.sum(), 1.0)
