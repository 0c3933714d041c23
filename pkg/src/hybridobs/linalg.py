"""Dense real-matrix primitives used throughout the package.

Everything here operates on plain ``numpy.float64`` arrays.  Block-partitioned
matrices get a thin wrapper (:class:`BlockMat`) whose main purpose is the
mixed matrix norm: the infinity norm of the matrix of blockwise two-norms,
which is the contraction metric of the whole analysis layer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DimensionError

# Singular values below RANK_RTOL * sigma_max count as zero.  Plant data is
# exact user input, so a fixed relative tolerance keeps decompositions
# deterministic.
RANK_RTOL = 1e-9


def _as_matrix(M) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise DimensionError(f"expected a 2-d matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix entries must be finite")
    return M


def mat_exp(M, t: float = 1.0) -> np.ndarray:
    """Matrix exponential e^(M t) via scaling-and-squaring (scipy.linalg.expm).

    Raises DimensionError for non-square input.
    """
    M = _as_matrix(M)
    if M.shape[0] != M.shape[1]:
        raise DimensionError(f"mat_exp needs a square matrix, got {M.shape}")
    if not np.isfinite(t):
        raise ValueError("time argument must be finite")
    return scipy.linalg.expm(M * t)


def spectral_norm(M) -> float:
    """Largest singular value (the two-norm)."""
    M = _as_matrix(M)
    if M.size == 0:
        return 0.0
    return float(np.linalg.norm(M, 2))


def matrix_rank(M, rtol: float = RANK_RTOL) -> int:
    """Rank with singular values below rtol * sigma_max treated as zero."""
    M = _as_matrix(M)
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > rtol * s[0]))


def kernel_basis(M, rtol: float = RANK_RTOL) -> np.ndarray:
    """Orthonormal basis of ker M, as columns of an n x (n - rank M) array.

    Singular values below rtol * sigma_max are treated as zero, so
    rank M + (returned columns) = number of columns of M.
    """
    M = _as_matrix(M)
    n = M.shape[1]
    if M.size == 0:
        return np.eye(n)
    _, s, vh = np.linalg.svd(M)
    if s.size and s[0] > 0.0:
        rank = int(np.count_nonzero(s > rtol * s[0]))
    else:
        rank = 0
    return vh[rank:].T.copy()


def row_space_basis(M, rtol: float = RANK_RTOL) -> np.ndarray:
    """Orthonormal basis of the row space of M, as rows of a (rank x n) array."""
    M = _as_matrix(M)
    _, s, vh = np.linalg.svd(M)
    if s.size and s[0] > 0.0:
        rank = int(np.count_nonzero(s > rtol * s[0]))
    else:
        rank = 0
    return vh[:rank].copy()


@dataclass(frozen=True)
class BlockMat:
    """Block-partitioned matrix: a grid of dense blocks.

    ``blocks[i][j]`` is the (i, j) block.  Row heights must agree along each
    block row and column widths along each block column; the common case is a
    uniform n x p block size (Kronecker products, stacked error vectors).
    """

    blocks: tuple

    def __post_init__(self):
        rows = self.blocks
        if not rows or not rows[0]:
            raise DimensionError("BlockMat grid must be non-empty")
        widths = [b.shape[1] for b in rows[0]]
        for row in rows:
            if len(row) != len(widths):
                raise DimensionError("ragged BlockMat grid")
            h = row[0].shape[0]
            for j, b in enumerate(row):
                if b.shape[0] != h or b.shape[1] != widths[j]:
                    raise DimensionError("inconsistent block dimensions")

    @property
    def block_rows(self) -> int:
        return len(self.blocks)

    @property
    def block_cols(self) -> int:
        return len(self.blocks[0])

    @staticmethod
    def from_grid(grid) -> "BlockMat":
        return BlockMat(tuple(tuple(_as_matrix(b) for b in row) for row in grid))

    @staticmethod
    def from_dense(M, row_sizes, col_sizes) -> "BlockMat":
        """Carve a dense matrix into blocks of the given row/column sizes."""
        M = _as_matrix(M)
        if sum(row_sizes) != M.shape[0] or sum(col_sizes) != M.shape[1]:
            raise DimensionError("block sizes do not tile the matrix")
        ri = np.concatenate([[0], np.cumsum(row_sizes)]).astype(int)
        ci = np.concatenate([[0], np.cumsum(col_sizes)]).astype(int)
        grid = [
            [M[ri[i]:ri[i + 1], ci[j]:ci[j + 1]] for j in range(len(col_sizes))]
            for i in range(len(row_sizes))
        ]
        return BlockMat.from_grid(grid)

    def to_dense(self) -> np.ndarray:
        return np.block([[b for b in row] for row in self.blocks])

    def norm_grid(self) -> np.ndarray:
        """Matrix of blockwise two-norms."""
        return np.array([[spectral_norm(b) for b in row] for row in self.blocks])


def mixed_norm(B) -> float:
    """Mixed matrix norm: infinity norm of the matrix of blockwise two-norms.

    Accepts a BlockMat.  Sub-multiplicative on conformable block grids; for a
    single block it reduces to the two-norm.
    """
    if not isinstance(B, BlockMat):
        raise TypeError("mixed_norm expects a BlockMat")
    grid = B.norm_grid()
    return float(np.max(np.sum(grid, axis=1)))


def mixed_norm_dense(M, row_sizes, col_sizes) -> float:
    """Mixed norm of a dense matrix under the given block partition."""
    return mixed_norm(BlockMat.from_dense(M, row_sizes, col_sizes))


def stacked_mixed_norm(vectors) -> float:
    """Mixed norm of a stacked block column vector: max over block two-norms."""
    return max(float(np.linalg.norm(np.asarray(v, dtype=float))) for v in vectors)


def kron_identity(S, n: int) -> BlockMat:
    """Block matrix whose (i, j) block is S_ij * I_n (i.e. S Kronecker I_n)."""
    S = _as_matrix(S)
    eye = np.eye(n)
    grid = [[S[i, j] * eye for j in range(S.shape[1])] for i in range(S.shape[0])]
    return BlockMat.from_grid(grid)


def matrix_power_sum(M, k: int):
    """Return (M^k, I + M + ... + M^(k-1)) with O(log k) multiplications.

    The geometric partial sum is what turns a run of identical per-round
    affine updates z <- M z + c into a single jump z <- M^k z + S_k c, which
    keeps certified iteration counts in the millions tractable.
    """
    M = _as_matrix(M)
    if M.shape[0] != M.shape[1]:
        raise DimensionError("matrix_power_sum needs a square matrix")
    if k < 0:
        raise ValueError("power must be nonnegative")
    n = M.shape[0]
    power = np.eye(n)  # M^(processed prefix)
    total = np.zeros((n, n))
    base_pow = M.copy()
    base_sum = np.eye(n)  # I + ... + M^(2^bit - 1)
    remaining = k
    while remaining:
        if remaining & 1:
            total = total + power @ base_sum
            power = power @ base_pow
        remaining >>= 1
        if remaining:
            base_sum = base_sum + base_pow @ base_sum
            base_pow = base_pow @ base_pow
    return power, total
