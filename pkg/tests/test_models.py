import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from powersample import (InputError, TabularModel, avg_confidence, entropy_jumps,
                         entropy_profile, low_temperature_model, random_tabular_model,
                         sample_autoregressive, seq_logprob)
from powersample.models import sample_autoregressive_batch
from powersample.oracle import empirical_distribution, enumerate_power_distribution, tv_distance

from helpers import deterministic_model, uniform_model


def test_seq_logprob_uniform_binary():
    assert seq_logprob(uniform_model(2, 2), [0, 1, 1]) == pytest.approx(3 * math.log(0.5))


def test_seq_logprob_empty_is_zero(toy_model):
    assert seq_logprob(toy_model, []) == 0.0


def test_seq_logprob_zero_transition(toy_model):
    assert seq_logprob(toy_model, [2, 0, 0]) == -math.inf


def test_seq_logprob_matches_table(toy_model):
    assert seq_logprob(toy_model, [0, 1, 2]) == pytest.approx(math.log(0.5 * 0.4 * 0.5))


def test_token_out_of_range(toy_model):
    with pytest.raises(InputError):
        seq_logprob(toy_model, [0, 3])


def test_entropy_deterministic_and_uniform():
    assert np.all(entropy_profile(deterministic_model(3), [1, 1, 1, 1]) == 0)
    np.testing.assert_allclose(entropy_profile(uniform_model(4, 2), [0, 3, 2]), math.log(4))


def test_entropy_mixed_toy():
    # h = (0, ln 2, 0) along the path 0,0,0
    rows = {(): [1.0, 0.0], (0,): [0.5, 0.5], (0, 0): [1.0, 0.0], (0, 1): [0.0, 1.0]}
    m = TabularModel(2, 2, rows)
    np.testing.assert_allclose(entropy_profile(m, [0, 0, 0]), [0, math.log(2), 0], atol=1e-15)


def test_entropy_jumps_examples():
    np.testing.assert_allclose(entropy_jumps([0, math.log(2), 0]), [0, math.log(2), 0])
    assert np.all(entropy_jumps([0.7, 0.7, 0.7])[1:] == 0)
    assert np.all(entropy_jumps([3.0, 2.0, 1.0])[1:] == 0)
    with pytest.raises(InputError):
        entropy_jumps([])


@given(st.lists(st.floats(0, 5), min_size=1, max_size=30))
def test_jumps_nonnegative_and_zero_off_increase(h):
    d = entropy_jumps(h)
    assert np.all(d >= 0)
    for t in range(1, len(h)):
        if h[t] <= h[t - 1]:
            assert d[t] == 0


def test_low_temperature_examples():
    m = TabularModel(2, 0, {(): [0.8, 0.2]})
    np.testing.assert_allclose(low_temperature_model(m, 2).next_dist(()), [16 / 17, 1 / 17])
    sharp = TabularModel(2, 0, {(): [0.6, 0.4]})
    assert low_temperature_model(sharp, 200).next_dist(())[1] < 1e-30
    with pytest.raises(InputError):
        low_temperature_model(m, 0)


@given(st.integers(0, 10_000))
def test_low_temperature_alpha_one_bitwise(seed):
    m = random_tabular_model(3, 2, seed)
    lt = low_temperature_model(m, 1.0)
    seqs = np.random.default_rng(seed).integers(0, 3, size=(5, 3))
    assert np.array_equal(lt.dists_along(seqs), m.dists_along(seqs))
    for prefix in m.prefixes:
        assert np.array_equal(lt.next_dist(prefix), m.next_dist(prefix))


@given(st.integers(0, 10_000), st.floats(0.1, 8))
def test_distributions_normalized(seed, alpha):
    m = low_temperature_model(random_tabular_model(3, 2, seed, concentration=0.3), alpha)
    seqs = np.random.default_rng(seed).integers(0, 3, size=(20, 3))
    d = m.dists_along(seqs)
    assert np.all(d >= 0)
    np.testing.assert_allclose(d.sum(-1), 1, atol=1e-12)


@given(st.integers(0, 10_000))
def test_avg_confidence_is_negative_mean_entropy(seed):
    m = random_tabular_model(3, 3, seed)
    s = sample_autoregressive(m, 3, seed)
    assert avg_confidence(m, s) == -np.mean(entropy_profile(m, s))
    assert avg_confidence(m, s) <= 0


def test_avg_confidence_examples():
    assert avg_confidence(deterministic_model(2), [1, 1, 1]) == 0
    assert avg_confidence(uniform_model(2, 2), [0, 1, 0]) == pytest.approx(-math.log(2))


def test_sample_deterministic():
    m = deterministic_model(4)
    for seed in range(5):
        assert sample_autoregressive(m, 4, seed).tolist() == [1] * 5


def test_sample_length_and_query_count(toy_model):
    calls = []

    class Counting(TabularModel):
        def next_dist_batch(self, prefixes):
            calls.append(1)
            return super().next_dist_batch(prefixes)

    m = Counting.from_json(toy_model.to_json())
    assert len(sample_autoregressive(m, 2, 0)) == 3
    assert len(calls) == 3


def test_fair_coin_frequency():
    s = sample_autoregressive_batch(uniform_model(2, 0), 100_000, 0, rng=5)
    assert abs(s[:, 0].mean() - 0.5) < 0.01


def test_sampler_tv_to_exact(small_random):
    s = sample_autoregressive_batch(small_random, 100_000, 3, rng=9)
    exact = enumerate_power_distribution(small_random, 3, 1.0)
    assert tv_distance(empirical_distribution(s), exact) <= 0.02


def test_tabular_total_mass(small_random, toy_model):
    for m, T in ((small_random, 3), (toy_model, 2)):
        d = enumerate_power_distribution(m, T, 1.0)
        assert abs(d.probs.sum() - 1) < 1e-10
        total = math.fsum(math.exp(seq_logprob(m, s)) for s in d.sequences)
        assert abs(total - 1) < 1e-10


def test_json_roundtrip(tmp_path, toy_model):
    path = tmp_path / "m.json"
    toy_model.save(path)
    doc = json.loads(path.read_text())
    assert set(doc) == {"vocab_size", "max_depth", "rows"}
    back = TabularModel.load(path)
    for prefix in toy_model.prefixes:
        assert np.array_equal(back.next_dist(prefix), toy_model.next_dist(prefix))


def test_load_rejects_unnormalized():
    with pytest.raises(InputError):
        TabularModel.from_json({"vocab_size": 2, "max_depth": 0,
                                "rows": [{"prefix": [], "probs": [0.5, 0.4]}]})


def test_reachable_row_required():
    with pytest.raises(InputError):
        TabularModel(2, 1, {(): [0.5, 0.5], (0,): [1.0, 0.0]})


def test_next_dist_repeatable(small_random):
    a = small_random.next_dist((0, 1))
    b = small_random.next_dist((0, 1))
    assert np.array_equal(a, b)
    a[0] = 99.0
    assert small_random.next_dist((0, 1))[0] != 99.0
