import numpy as np
import pytest

from hybridobs import BlockMat, kernel_basis, kron_identity, mat_exp, mixed_norm, spectral_norm
from hybridobs.errors import DimensionError
from hybridobs.linalg import matrix_power_sum, mixed_norm_dense
from hybridobs.plant import observability_matrix

from conftest import BENCH_A, BENCH_C


def test_mat_exp_zero_matrix():
    assert np.allclose(mat_exp(np.zeros((2, 2)), 7.3), np.eye(2), atol=1e-14)


def test_mat_exp_diagonal():
    out = mat_exp(np.diag([-1.0, -2.0]), 1.0)
    assert np.allclose(out, np.diag([np.exp(-1.0), np.exp(-2.0)]), rtol=1e-13)


def test_mat_exp_benchmark_eigenvalues():
    # eigenvalues of the 2x2 blocks via their characteristic polynomials
    expected = []
    for blk in (BENCH_A[:2, :2], BENCH_A[2:, 2:]):
        tr, det = np.trace(blk), np.linalg.det(blk)
        expected.extend(np.roots([1.0, -tr, det]))
    got = np.sort_complex(np.linalg.eigvals(mat_exp(BENCH_A, 1.0)))
    want = np.sort_complex(np.exp(np.array(expected)))
    assert np.allclose(got, want, rtol=1e-10)


def test_mat_exp_rejects_nonsquare():
    with pytest.raises(DimensionError):
        mat_exp(np.zeros((2, 3)), 1.0)


def test_mat_exp_semigroup_property():
    rng = np.random.default_rng(3)
    for _ in range(20):
        n = rng.integers(2, 6)
        M = rng.standard_normal((n, n))
        M *= min(1.0, 5.0 / spectral_norm(M))
        s, t = rng.uniform(0.1, 2.0, size=2)
        lhs = mat_exp(M, s + t)
        rhs = mat_exp(M, s) @ mat_exp(M, t)
        assert np.max(np.abs(lhs - rhs)) <= 1e-8 * max(1.0, np.max(np.abs(lhs)))


def test_mat_exp_derivative_matches_generator():
    rng = np.random.default_rng(5)
    M = rng.standard_normal((4, 4)) * 0.8
    t, step = 0.7, 1e-5
    fd = (mat_exp(M, t + step) - mat_exp(M, t - step)) / (2 * step)
    want = M @ mat_exp(M, t)
    assert np.max(np.abs(fd - want)) <= 1e-4 * max(1.0, np.max(np.abs(want)))


def test_spectral_norm_examples(bench_decs):
    assert spectral_norm(np.eye(3)) == pytest.approx(1.0, abs=1e-12)
    assert spectral_norm(np.diag([3.0, -5.0])) == pytest.approx(5.0, abs=1e-12)
    # nonzero orthogonal projection has norm exactly 1
    P1 = bench_decs[0].P
    assert np.any(P1)
    assert spectral_norm(P1) == pytest.approx(1.0, abs=1e-10)


def test_spectral_norm_submultiplicative():
    rng = np.random.default_rng(11)
    for _ in range(30):
        A = rng.standard_normal((4, 3))
        B = rng.standard_normal((3, 5))
        assert spectral_norm(A @ B) <= spectral_norm(A) * spectral_norm(B) + 1e-12


def test_mixed_norm_single_block_is_two_norm():
    rng = np.random.default_rng(2)
    M = rng.standard_normal((3, 4))
    assert mixed_norm(BlockMat.from_grid([[M]])) == pytest.approx(spectral_norm(M))


def test_mixed_norm_projection_block_diagonal(bench_decs):
    n = 4
    grid = [[bench_decs[i].P if i == j else np.zeros((n, n)) for j in range(4)]
            for i in range(4)]
    assert mixed_norm(BlockMat.from_grid(grid)) == pytest.approx(1.0, abs=1e-10)


def test_mixed_norm_stochastic_kron_identity():
    rng = np.random.default_rng(4)
    S = rng.random((3, 3))
    S /= S.sum(axis=1, keepdims=True)
    assert mixed_norm(kron_identity(S, 4)) == pytest.approx(1.0, abs=1e-12)


def test_mixed_norm_submultiplicative():
    rng = np.random.default_rng(9)
    for _ in range(25):
        A = rng.standard_normal((6, 8))
        B = rng.standard_normal((8, 4))
        nA = mixed_norm(BlockMat.from_dense(A, [3, 3], [4, 4]))
        nB = mixed_norm(BlockMat.from_dense(B, [4, 4], [2, 2]))
        nAB = mixed_norm(BlockMat.from_dense(A @ B, [3, 3], [2, 2]))
        assert nAB <= nA * nB + 1e-12


def test_kernel_basis_trivial_cases():
    assert kernel_basis(np.eye(2)).shape == (2, 0)
    K = kernel_basis(np.zeros((2, 2)))
    assert K.shape == (2, 2)
    assert np.allclose(K.T @ K, np.eye(2), atol=1e-12)


def test_kernel_basis_benchmark_channel_one():
    # the first channel only sees the leading 2x2 block, so the trailing two
    # coordinates are unobservable: a 2-dimensional kernel spanned by e3, e4
    obs = observability_matrix(BENCH_C[0], BENCH_A)
    assert np.linalg.matrix_rank(obs) == 2  # brute-force oracle
    K = kernel_basis(obs)
    assert K.shape == (4, 2)
    span = K @ K.T
    want = np.diag([0.0, 0.0, 1.0, 1.0])
    assert np.allclose(span, want, atol=1e-10)


def test_kernel_basis_properties():
    rng = np.random.default_rng(21)
    for _ in range(20):
        M = rng.standard_normal((3, 6)) @ rng.standard_normal((6, 5))
        K = kernel_basis(M)
        if K.size:
            assert np.max(np.abs(M @ K)) <= 1e-8 * max(1.0, spectral_norm(M))
            assert np.allclose(K.T @ K, np.eye(K.shape[1]), atol=1e-10)
        assert np.linalg.matrix_rank(M) + K.shape[1] == M.shape[1]


def test_kron_identity_examples():
    assert np.allclose(kron_identity(np.eye(3), 2).to_dense(), np.eye(6))
    out = kron_identity(np.array([[2.5]]), 3).to_dense()
    assert np.allclose(out, 2.5 * np.eye(3))


def test_kron_identity_preserves_consensus_vectors():
    rng = np.random.default_rng(6)
    F = rng.random((4, 4))
    F /= F.sum(axis=1, keepdims=True)
    v = rng.standard_normal(3)
    stacked = np.tile(v, 4)
    out = kron_identity(F, 3).to_dense() @ stacked
    assert np.allclose(out, stacked, atol=1e-12)


def test_blockmat_rejects_ragged_grid():
    with pytest.raises(DimensionError):
        BlockMat.from_grid([[np.zeros((2, 2)), np.zeros((2, 3))],
                            [np.zeros((2, 2)), np.zeros((2, 2))]])


def test_mixed_norm_dense_partition():
    rng = np.random.default_rng(8)
    M = rng.standard_normal((6, 6))
    assert mixed_norm_dense(M, [3, 3], [3, 3]) == pytest.approx(
        mixed_norm(BlockMat.from_dense(M, [3, 3], [3, 3])))


def test_matrix_power_sum_matches_naive():
    rng = np.random.default_rng(13)
    M = rng.standard_normal((4, 4)) * 0.4
    for k in (0, 1, 2, 3, 7, 50, 129):
        Mp, Sp = matrix_power_sum(M, k)
        assert np.allclose(Mp, np.linalg.matrix_power(M, k), atol=1e-12)
        want = sum(np.linalg.matrix_power(M, j) for j in range(k)) if k else np.zeros((4, 4))
        assert np.allclose(Sp, want, atol=1e-11)
