"""Small dense linear algebra: 2x2 determinants and block matrices."""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg

__all__ = ["det2", "BlockMatrix", "block_triangular_det", "lu_det", "random_block_upper"]


def det2(m) -> float:
    m = np.asarray(m, dtype=float)
    if m.shape != (2, 2):
        raise ValueError(f"expected a 2x2 matrix, got shape {m.shape}")
    return float(m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0])


def lu_det(m) -> float:
    """Determinant from an LU factorisation with partial pivoting."""
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("determinant needs a square matrix")
    with warnings.catch_warnings():
        # a singular matrix is a legitimate input with determinant 0
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(m, check_finite=True)
    sign = (-1.0) ** np.count_nonzero(piv != np.arange(len(piv)))
    return float(sign * np.prod(np.diag(lu)))


@dataclass
class BlockMatrix:
    """Row-major grid of dense blocks. ``blocks[i][j]`` is ``row_sizes[i] x col_sizes[j]``."""

    blocks: list[list[np.ndarray]]

    def __post_init__(self):
        self.blocks = [[np.atleast_2d(np.asarray(b, dtype=float)) for b in row] for row in self.blocks]
        if not self.blocks or any(len(row) != len(self.blocks[0]) for row in self.blocks):
            raise ValueError("block grid must be rectangular and non-empty")
        for i, row in enumerate(self.blocks):
            for j, b in enumerate(row):
                if b.shape != (self.row_sizes[i], self.col_sizes[j]):
                    raise ValueError(f"block ({i}, {j}) has shape {b.shape}, not conformable")

    @property
    def row_sizes(self) -> list[int]:
        return [row[0].shape[0] for row in self.blocks]

    @property
    def col_sizes(self) -> list[int]:
        return [b.shape[1] for b in self.blocks[0]]

    @classmethod
    def from_dense(cls, m, sizes: Sequence[int]) -> "BlockMatrix":
        m = np.asarray(m, dtype=float)
        edges = np.cumsum([0, *sizes])
        if edges[-1] != m.shape[0] or m.shape[0] != m.shape[1]:
            raise ValueError("block sizes do not match the matrix")
        return cls([[m[edges[i]:edges[i + 1], edges[j]:edges[j + 1]] for j in range(len(sizes))]
                    for i in range(len(sizes))])

    def dense(self) -> np.ndarray:
        return np.block(self.blocks)

    def is_upper_triangular(self) -> bool:
        return all(not np.any(self.blocks[i][j]) for i in range(len(self.blocks)) for j in range(i))


def block_triangular_det(bm: BlockMatrix) -> float:
    """Determinant of a block upper-triangular matrix as the product of the
    determinants of its diagonal blocks."""
    n = len(bm.blocks)
    if len(bm.blocks[0]) != n:
        raise ValueError("block grid must be square")
    out = 1.0
    for i in range(n):
        d = bm.blocks[i][i]
        if d.shape[0] != d.shape[1]:
            raise ValueError(f"diagonal block {i} is not square: {d.shape}")
        out *= det2(d) if d.shape == (2, 2) else lu_det(d)
    return out


def random_block_upper(rng: np.random.Generator, sizes: Sequence[int], singular: int | None = None) -> BlockMatrix:
    """Random block upper-triangular matrix with well-conditioned diagonal
    blocks; diagonal block ``singular`` (if given) is made rank deficient."""
    n = len(sizes)
    blocks = []
    for i in range(n):
        row = []
        for j in range(n):
            shape = (sizes[i], sizes[j])
            if j < i:
                row.append(np.zeros(shape))
            elif j == i:
                b = rng.normal(size=shape) + 2 * np.eye(sizes[i])
                if singular == i:
                    b[-1] = b[0] if sizes[i] > 1 else 0.0
                row.append(b)
            else:
                row.append(rng.normal(size=shape))
        blocks.append(row)
    return BlockMatrix(blocks)
