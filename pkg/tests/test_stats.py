import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from zcaria import stats as S


def test_normal_quantile_symmetry():
    for p in (0.01, 0.2, 0.4):
        assert S.normal_quantile(1 - p) == pytest.approx(-S.normal_quantile(p), abs=1e-12)
    assert S.normal_quantile(0.5) == 0
    with pytest.raises(ValueError):
        S.normal_quantile(1.0)


@given(st.floats(1e-6, 1 - 1e-6), st.floats(1e-6, 1 - 1e-6))
def test_normal_quantile_monotone(p, q):
    if p < q:
        assert S.normal_quantile(p) < S.normal_quantile(q)


def test_deep_tail_quantiles():
    assert S.upper_quantile(-2.7) == pytest.approx(1.0199, abs=1e-3)
    assert S.upper_quantile(-90) == pytest.approx(10.869, abs=1e-2)
    assert S.upper_quantile(-186) == pytest.approx(15.827, abs=1e-2)
    # agrees with the plain inverse CDF where both are accurate
    assert S.upper_quantile(-10) == pytest.approx(-S.normal_quantile(2.0**-10), rel=1e-10)


def test_error_probs_validation():
    with pytest.raises(ValueError):
        S.ErrorProbs(0.0, -1.0)
    with pytest.raises(ValueError):
        S.ErrorProbs.from_probs(0.0, 0.5)
    e = S.ErrorProbs.from_probs(0.25, 0.5)
    assert (e.log2_beta0, e.log2_beta1) == (-2.0, -1.0)


def test_data_complexity_values():
    six = S.required_data_multidim(128, 1 << 16, S.TARGET_6R)
    seven = S.required_data_multidim(128, 1 << 16, S.TARGET_7R)
    assert six.log2_N == pytest.approx(124.063, abs=5e-3)
    assert seven.log2_N == pytest.approx(124.566, abs=5e-3)
    assert six.log2_tau == pytest.approx(15.911, abs=5e-3)
    fft = S.required_data_multiple(128, 1 << 16, S.TARGET_6R)
    assert fft.log2_N == pytest.approx(124.161, abs=5e-3)
    assert fft.log2_tau == pytest.approx(-108.153, abs=5e-3)


def test_data_complexity_monotone():
    base = S.required_data_multidim(128, 1 << 16, S.ErrorProbs(-2.7, -90)).log2_N
    assert S.required_data_multidim(128, 1 << 16, S.ErrorProbs(-4, -90)).log2_N > base
    assert S.required_data_multidim(128, 1 << 16, S.ErrorProbs(-2.7, -120)).log2_N > base
    assert S.required_data_multidim(128, 1 << 18, S.ErrorProbs(-2.7, -90)).log2_N < base


def test_multiple_model_out_of_domain():
    with pytest.raises(ValueError):
        S.required_data_multiple(20, 4, S.ErrorProbs(-1, -200))


def test_multidim_params_limits():
    full = S.multidim_params(20, 2**20, 16)
    assert full.mu0 == 0 and full.sigma0 == 0
    tiny = S.multidim_params(20, 1e-9, 16)
    assert tiny.mu0 == pytest.approx(15)
    with pytest.raises(ValueError):
        S.multidim_params(20, 2**21, 16)
    with pytest.raises(ValueError):
        S.multidim_params(20, 0, 16)
    mid = S.multidim_params(128, 2**123.6, 1 << 16)
    assert mid.mu0 / mid.mu1 == pytest.approx(1 - 2**-4.4, rel=1e-6)


def test_statistic_values():
    assert S.statistic_T([4, 4, 4, 4], 16) == 0
    assert S.statistic_T([4, 0], 4, 1) == 4
    assert S.statistic_T_numerator([4, 0], 4) == 16
    with pytest.raises(ValueError):
        S.statistic_T([1, 2], 4)
    with pytest.raises(ValueError):
        S.statistic_T([1, 2, 1], 4)
    with pytest.raises(ValueError):
        S.statistic_T([1, 1], 2, m=2)


def test_statistic_handles_large_N():
    N = 1 << 40
    counts = np.array([N // 2 + 3, N // 2 - 3], dtype=np.int64)
    assert S.statistic_T_numerator(counts, N) == 2 * 2 * 9


@given(st.lists(st.integers(0, 1000), min_size=8, max_size=8).filter(lambda v: sum(v) > 0), st.randoms())
def test_statistic_permutation_invariant(counts, rnd):
    shuffled = counts[:]
    rnd.shuffle(shuffled)
    N = sum(counts)
    assert S.statistic_T_numerator(counts, N) == S.statistic_T_numerator(shuffled, N)
    batch = S.statistic_T_batch(np.array([counts, shuffled]))
    assert batch == pytest.approx([S.statistic_T(counts, N)] * 2)


@given(st.lists(st.integers(0, 50), min_size=4, max_size=4).filter(lambda v: sum(v) > 0))
def test_statistic_zero_iff_uniform_and_moves_up(counts):
    N = sum(counts)
    t = S.statistic_T(counts, N)
    assert (t == 0) == (len(set(counts)) == 1)
    mean = N / 4
    lo = min(range(4), key=lambda i: counts[i])
    hi = max(range(4), key=lambda i: counts[i])
    if counts[lo] < mean and counts[lo] > 0 and lo != hi:
        moved = counts[:]
        moved[lo] -= 1
        moved[hi] += 1
        assert S.statistic_T(moved, N) > t


def test_decide_is_strict():
    assert S.decide(0.0, 1.0)
    assert not S.decide(1.0, 1.0)
    assert not S.decide(2.0, 1.0)


def test_synthetic_sources_sum_to_N():
    rng = np.random.default_rng(0)
    b = S.balanced_counts(rng, 10, 300, 8, 5)
    r = S.random_function_counts(rng, 10, 300, 8, 5)
    assert (b.sum(axis=1) == 300).all() and (r.sum(axis=1) == 300).all()
    assert (b <= 1024 // 8).all()


def test_full_codebook_balanced_source_is_uniform():
    rng = np.random.default_rng(0)
    b = S.balanced_counts(rng, 8, 256, 16, 3)
    assert (S.statistic_T_batch(b) == 0).all()


def test_random_source_mean():
    rng = np.random.default_rng(1)
    t = S.statistic_T_batch(S.random_function_counts(rng, 16, 1 << 12, 16, 400))
    assert t.mean() == pytest.approx(15, rel=0.1)
    assert math.isfinite(t.max())
