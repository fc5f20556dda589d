import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from multilens.linalg import BlockMatrix, block_triangular_det, det2, lu_det, random_block_upper


def test_det2():
    assert det2([[1, 2], [3, 4]]) == -2
    with pytest.raises(ValueError):
        det2(np.eye(3))


def test_lu_det_matches_numpy():
    rng = np.random.default_rng(0)
    for n in range(1, 8):
        m = rng.normal(size=(n, n))
        assert np.isclose(lu_det(m), np.linalg.det(m), rtol=1e-12)


def test_lu_det_permutation_sign():
    p = np.array([[0, 1, 0], [0, 0, 1], [1, 0, 0]], dtype=float)
    assert lu_det(p) == pytest.approx(1.0)
    assert lu_det(p[[1, 0, 2]]) == pytest.approx(-1.0)


def test_block_matrix_validation():
    with pytest.raises(ValueError):
        BlockMatrix([[np.eye(2), np.zeros((2, 3))], [np.zeros((2, 2)), np.eye(3)]])
    with pytest.raises(ValueError):
        BlockMatrix([[np.eye(2)], [np.eye(2), np.eye(2)]])


def test_non_square_diagonal_block_rejected():
    bm = BlockMatrix([[np.ones((2, 3))]])
    with pytest.raises(ValueError):
        block_triangular_det(bm)


def test_from_dense_round_trip():
    rng = np.random.default_rng(1)
    m = rng.normal(size=(5, 5))
    bm = BlockMatrix.from_dense(m, [2, 1, 2])
    assert np.array_equal(bm.dense(), m)
    assert bm.row_sizes == [2, 1, 2]


def test_singular_diagonal_block_gives_zero():
    rng = np.random.default_rng(2)
    for k in range(3):
        bm = random_block_upper(rng, [2, 3, 2], singular=k)
        assert bm.is_upper_triangular()
        assert abs(block_triangular_det(bm)) < 1e-12
        assert abs(lu_det(bm.dense())) < 1e-10


@given(st.lists(st.integers(1, 4), min_size=1, max_size=6), st.integers(0, 2**32 - 1))
def test_block_det_equals_lu(sizes, seed):
    bm = random_block_upper(np.random.default_rng(seed), sizes)
    ref = lu_det(bm.dense())
    assert abs(block_triangular_det(bm) - ref) <= 1e-10 * abs(ref)
