import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from tensorsysid import DimensionError, contract_first, contract_last2, mat_mul


def test_mat_mul_identity(backend):
    B = np.array([[1.5, -2.0, 3.0], [0.5, 4.0, -1.0]])
    assert np.array_equal(mat_mul(np.eye(2), B, backend), B)


def test_mat_mul_examples(backend):
    assert np.array_equal(mat_mul([[1, 2], [3, 4]], [[0, 1], [1, 0]], backend), [[2, 1], [4, 3]])
    assert np.array_equal(mat_mul([[1, 0]], [[5], [7]], backend), [[5]])


def test_mat_mul_mismatch_names_both_shapes(backend):
    with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 2\)"):
        mat_mul(np.zeros((2, 3)), np.zeros((2, 2)), backend)


def test_rejects_wrong_rank_and_nonfinite():
    with pytest.raises(DimensionError):
        mat_mul(np.zeros(3), np.zeros((3, 1)))
    with pytest.raises(ValueError):
        mat_mul([[np.nan]], [[1.0]])


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 5), st.integers(1, 5), st.integers(1, 5), st.integers(1, 5),
       st.integers(0, 2 ** 31 - 1))
def test_mat_mul_associative(a, b, c, d, seed):
    rng = np.random.default_rng(seed)
    A, B, C = rng.normal(size=(a, b)), rng.normal(size=(b, c)), rng.normal(size=(c, d))
    left = mat_mul(mat_mul(A, B), C)
    right = mat_mul(A, mat_mul(B, C))
    assert np.max(np.abs(left - right)) <= 1e-12 * max(1.0, np.max(np.abs(left)))


def test_contract_last2_examples(backend):
    rng = np.random.default_rng(0)
    T = rng.normal(size=(2, 3, 4))
    assert np.allclose(contract_last2(T, np.eye(3), np.eye(4), backend), T, atol=0)
    assert not np.any(contract_last2(np.zeros((2, 3, 3)), rng.normal(size=(3, 2)),
                                     rng.normal(size=(3, 5)), backend))
    assert contract_last2([[[2.0]]], [[3.0]], [[5.0]], backend)[0, 0, 0] == 30.0


def _brute_last2(T, B, C):
    a, b, c = T.shape
    j, k = B.shape[1], C.shape[1]
    R = np.zeros((a, j, k))
    for i in range(a):
        for jj in range(j):
            for kk in range(k):
                R[i, jj, kk] = sum(T[i, m, n] * B[m, jj] * C[n, kk]
                                   for m in range(b) for n in range(c))
    return R


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 4), st.integers(1, 4), st.integers(1, 4), st.integers(1, 3),
       st.integers(1, 3), st.integers(0, 2 ** 31 - 1))
def test_contract_last2_matches_brute_force_exactly(a, b, c, j, k, seed):
    rng = np.random.default_rng(seed)
    T = rng.integers(-9, 10, size=(a, b, c)).astype(float)
    B = rng.integers(-9, 10, size=(b, j)).astype(float)
    C = rng.integers(-9, 10, size=(c, k)).astype(float)
    expect = _brute_last2(T, B, C)
    for backend in ("python", None):
        assert np.array_equal(contract_last2(T, B, C, backend), expect)


def test_contract_last2_mismatch(backend):
    with pytest.raises(DimensionError):
        contract_last2(np.zeros((2, 3, 3)), np.zeros((2, 2)), np.zeros((3, 3)), backend)
    with pytest.raises(DimensionError):
        contract_last2(np.zeros((2, 3, 3)), np.zeros((3, 2)), np.zeros((2, 3)), backend)


def test_contract_first_examples(backend):
    rng = np.random.default_rng(1)
    T = rng.normal(size=(3, 2, 4))
    assert np.array_equal(contract_first(np.eye(3), T, backend), T)
    assert not np.any(contract_first(np.zeros((2, 3)), T, backend))
    assert contract_first([[4.0]], [[[3.0]]], backend)[0, 0, 0] == 12.0
    with pytest.raises(DimensionError):
        contract_first(np.zeros((2, 2)), T, backend)


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, (3, 2), elements=st.integers(-5, 5).map(float)),
       arrays(np.float64, (2, 3, 2), elements=st.integers(-5, 5).map(float)))
def test_contract_first_matches_einsum(A, T):
    assert np.array_equal(contract_first(A, T), np.einsum("im,mjk->ijk", A, T))
