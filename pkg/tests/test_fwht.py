import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zcaria import fwht as F


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 9), st.integers(0, 2**32 - 1))
def test_fwht_matches_naive_and_involution(m, seed):
    rng = np.random.default_rng(seed)
    v = rng.integers(-1000, 1000, 1 << m)
    t = F.fwht(v)
    assert np.array_equal(t, F.naive_wht(v))
    assert np.array_equal(F.fwht(t), v * (1 << m))
    assert int((t * t).sum()) == (1 << m) * int((v * v).sum())


def test_fwht_leaves_input_alone():
    v = np.arange(8)
    F.fwht(v)
    assert np.array_equal(v, np.arange(8))


def test_fwht_rejects_bad_length():
    with pytest.raises(ValueError):
        F.fwht(np.zeros(6))


def test_op_count():
    ops = F.OpCounter()
    F.fwht(np.zeros(1 << 10, np.int64), ops)
    assert ops.additions == 10 * (1 << 10)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_xor_convolve_matches_naive(m, seed):
    rng = np.random.default_rng(seed)
    signs = F.SignTable(m, rng.integers(0, 2, 1 << m).astype(np.uint8))
    x = rng.integers(0, 100, 1 << m)
    ops = F.OpCounter()
    eps = F.xor_convolve(signs, x, counter=ops)
    assert np.array_equal(eps, F.naive_convolve(signs, x))
    assert ops.additions <= 3 * m * (1 << m) + (1 << m)


def test_xor_convolve_with_embedding():
    rng = np.random.default_rng(3)
    m, d = 7, 4
    embed = F.DataEmbedding(d, m, (1, 3, 4, 6))
    signs = F.build_sign_table(lambda y: (y * 37 >> 2) & 1, m)
    x = rng.integers(0, 50, 1 << d)
    assert np.array_equal(F.xor_convolve(signs, x, embed), F.naive_convolve(signs, x, embed))
    with pytest.raises(ValueError):
        F.DataEmbedding(2, 4, (1, 1))
    with pytest.raises(ValueError):
        F.DataEmbedding(1, 4, (4,))
    assert F.DataEmbedding.identity(3).positions == (0, 1, 2)


def test_precomputed_counter_transform():
    rng = np.random.default_rng(4)
    signs = F.SignTable(6, rng.integers(0, 2, 64).astype(np.uint8))
    x = rng.integers(0, 9, 64)
    assert np.array_equal(F.xor_convolve(signs, None, counters_hat=F.fwht(x)), F.xor_convolve(signs, x))


def test_sign_table_checks():
    with pytest.raises(ValueError):
        F.SignTable.build(lambda y: np.zeros(3), 3)
    t = F.build_sign_table(lambda y: y & 1, 2)
    assert t.values.tolist() == [1, -1, 1, -1] and len(t) == 4


def test_exact_divide_detects_faults():
    with pytest.raises(ArithmeticError):
        F._exact_divide(np.array([3, 4]), 1)


def test_accumulate_W():
    kcv = F.KeyCorrelationVector(np.zeros(4, np.int64))
    F.accumulate_W(kcv, np.array([2, -2, 0, 4]), 4)
    F.accumulate_W(kcv, np.array([1, 1, 1, 1]), 4)
    assert kcv.W.tolist() == [5, 5, 1, 17]
    assert F.W_value(kcv.W, 4).tolist() == [5 / 16, 5 / 16, 1 / 16, 17 / 16]
    with pytest.raises(ValueError):
        F.accumulate_W(kcv, np.array([5, 0, 0, 0]), 4)
    with pytest.raises(ValueError):
        F.accumulate_W(kcv, np.array([0, 0, 0, 0]), 0)
