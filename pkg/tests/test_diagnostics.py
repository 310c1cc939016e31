import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from powersample import (InputError, SymmetricTreeSpec, build_symmetric_tree,
                         decile_resample_experiment, distinct_answer_fraction, levenshtein,
                         normalized_edit_distance, pass_at_k)

from helpers import deterministic_model


def test_pass_at_k_examples():
    assert pass_at_k(4, 2, 1) == 0.5
    assert pass_at_k(4, 2, 4) == 1.0
    assert pass_at_k(5, 1, 2) == 0.4
    assert pass_at_k(5, 1, 2, exact=True) == Fraction(2, 5)
    with pytest.raises(InputError):
        pass_at_k(3, 1, 4)
    with pytest.raises(InputError):
        pass_at_k(3, 4, 1)


@given(st.integers(1, 30).flatmap(lambda n: st.tuples(st.just(n), st.integers(0, n),
                                                      st.integers(1, n))))
def test_pass_at_k_monotone(args):
    n, c, k = args
    v = pass_at_k(n, c, k, exact=True)
    if k < n:
        assert pass_at_k(n, c, k + 1, exact=True) >= v
    if c < n:
        assert pass_at_k(n, c + 1, k, exact=True) >= v
    assert 0 <= v <= 1


@pytest.mark.parametrize("a,b,d", [("", "", 0), ("abc", "", 3), ("kitten", "sitting", 3),
                                   ("flaw", "lawn", 2), ([1, 2, 3], [1, 3], 1)])
def test_levenshtein(a, b, d):
    assert levenshtein(a, b) == d
    assert levenshtein(b, a) == d


@given(st.lists(st.integers(0, 3), max_size=8), st.lists(st.integers(0, 3), max_size=8),
       st.lists(st.integers(0, 3), max_size=8))
def test_levenshtein_metric(a, b, c):
    assert levenshtein(a, a) == 0
    assert levenshtein(a, c) <= levenshtein(a, b) + levenshtein(b, c)
    assert abs(len(a) - len(b)) <= levenshtein(a, b) <= max(len(a), len(b))


def test_normalized_edit_distance():
    assert normalized_edit_distance([[1, 2], [1, 2], [1, 2]]) == 0
    assert normalized_edit_distance([[0, 0, 0], [1, 1, 1]]) == 1
    assert normalized_edit_distance([[0, 1], [0, 0]]) == 0.5
    with pytest.warns(UserWarning):
        assert normalized_edit_distance([[], []]) == 0
    with pytest.raises(InputError):
        normalized_edit_distance([[1]])


@given(st.lists(st.lists(st.integers(0, 2), min_size=1, max_size=5), min_size=2, max_size=6))
def test_normalized_edit_distance_bruteforce(sfx):
    pairs = list(itertools.combinations(sfx, 2))
    ref = np.mean([levenshtein(a, b) for a, b in pairs]) / np.mean([len(s) for s in sfx])
    assert normalized_edit_distance(sfx) == pytest.approx(ref)


def test_distinct_answer_fraction():
    assert distinct_answer_fraction([7] * 16) == 1 / 16
    assert distinct_answer_fraction(range(5)) == 1
    assert distinct_answer_fraction("aabb") == 0.5


def test_decile_deterministic_model():
    rep = decile_resample_experiment(deterministic_model(20), 20, rng=0)
    assert rep.top.mean_edit_distance == 0 and rep.bottom.mean_edit_distance == 0
    assert rep.verdict == "degenerate"


def test_decile_tree_late_branch():
    """One late branch: the top decile holds the branch; chain cuts after it never change
    the answer."""
    tree, model = build_symmetric_tree(SymmetricTreeSpec(20, (15,), (8,)))
    rep = decile_resample_experiment(model, 20, cut_count=2, resamples=400, rng=1,
                                     answer_fn=tree.leaf_index)
    assert 15 in rep.top.positions
    at_branch = rep.top.distinct_fraction[rep.top.positions.index(15)]
    assert at_branch == pytest.approx(8 / 400)
    late = [f for p, f in zip(rep.bottom.positions, rep.bottom.distinct_fraction) if p > 15]
    assert all(f == 1 / 400 for f in late)


def test_decile_directional_large_resamples():
    tree, model = build_symmetric_tree(SymmetricTreeSpec(30, (3, 12), (3, 3)))
    rep = decile_resample_experiment(model, 30, cut_count=3, resamples=1000, rng=2,
                                     answer_fn=tree.leaf_index)
    assert rep.top.mean_edit_distance >= rep.bottom.mean_edit_distance
    assert rep.verdict == "top-greater"


def test_decile_rejects_short():
    with pytest.raises(InputError):
        decile_resample_experiment(deterministic_model(1), 1, rng=0)
    with pytest.raises(InputError):
        decile_resample_experiment(deterministic_model(5), 5, resamples=1, rng=0)
