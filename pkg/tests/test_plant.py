import numpy as np
import pytest

import hybridobs as h
from hybridobs.plant import common_unobservable_trivial, observability_matrix

from conftest import BENCH_A, BENCH_C, BENCH_L, BENCH_X0, random_jointly_observable_plant


def test_observability_matrix_full_state_output():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((4, 4))
    assert np.linalg.matrix_rank(observability_matrix(np.eye(4), A)) == 4


def test_observability_matrix_benchmark_ranks():
    # brute-force oracle: stack and rank-check
    obs1 = observability_matrix(BENCH_C[0], BENCH_A)
    assert obs1.shape == (4, 4)
    assert np.linalg.matrix_rank(obs1) == 2
    stacked = np.vstack(BENCH_C)
    assert np.linalg.matrix_rank(observability_matrix(stacked, BENCH_A)) == 4


def test_observability_matrix_dimension_error():
    with pytest.raises(h.DimensionError):
        observability_matrix(np.ones((1, 3)), np.zeros((4, 4)))


def test_fully_observable_channel_has_no_projection():
    A = np.array([[0.0, 1.0], [-1.0, 0.0]])
    plant = h.LtiPlant(A=A, channels=(np.array([[1.0, 0.0]]),), x0=[1.0, 0.0])
    dec = h.decompose_channel(plant, 1)
    assert dec.n_i == 2
    assert np.allclose(dec.P, 0.0, atol=1e-10)


def test_benchmark_decomposition_row_spaces(bench_plant, bench_decs):
    dec1 = bench_decs[0]
    assert dec1.n_i == 2
    # canonical L may differ from the published one by a row-space-preserving
    # change of basis; the projection is the basis-independent object
    span = dec1.L.T @ np.linalg.solve(dec1.L @ dec1.L.T, dec1.L)
    assert np.allclose(span, np.diag([1.0, 1.0, 0.0, 0.0]), atol=1e-10)
    assert np.allclose(dec1.P, np.diag([0.0, 0.0, 1.0, 1.0]), atol=1e-10)
    dec3 = bench_decs[2]
    assert np.allclose(dec3.P, np.diag([1.0, 1.0, 0.0, 0.0]), atol=1e-10)


def test_published_coordinate_override_accepted(bench_plant):
    for i, L in BENCH_L.items():
        dec = h.decompose_channel(bench_plant, i, L_override=L)
        assert np.allclose(dec.L, L)
        assert np.max(np.abs(dec.L @ BENCH_A - dec.Abar @ dec.L)) <= 1e-8
        assert np.max(np.abs(dec.Cbar @ dec.L - bench_plant.channel(i))) <= 1e-8


def test_bad_override_rejected(bench_plant):
    with pytest.raises(h.InvalidChannelError):
        h.decompose_channel(bench_plant, 1, L_override=np.array([[0.0, 0.0, 1.0, 0.0],
                                                                 [1.0, 0.0, 0.0, 0.0]]))


def test_joint_observability_subsets(bench_plant):
    assert h.check_joint_observability(bench_plant, {1, 2, 3, 4})
    for subset in [(1, 2, 3), (1, 2, 4), (1, 3, 4), (2, 3, 4)]:
        assert h.check_joint_observability(bench_plant, subset)
    for i in range(1, 5):
        assert not h.check_joint_observability(bench_plant, {i})


def test_zero_channel_rejected():
    with pytest.raises(h.InvalidChannelError):
        h.LtiPlant(A=np.eye(2), channels=(np.zeros((1, 2)), np.array([[1.0, 1.0]])),
                   x0=[0.0, 0.0])


def test_jointly_unobservable_plant_rejected():
    A = np.diag([1.0, 2.0, 3.0])
    C = (np.array([[1.0, 0.0, 0.0]]), np.array([[0.0, 1.0, 0.0]]))
    with pytest.raises(h.InvalidChannelError):
        h.LtiPlant(A=A, channels=C, x0=[0.0, 0.0, 0.0])


def test_projection_fixes_kernel_and_annihilates_rows(bench_plant, bench_decs):
    for dec in bench_decs:
        obs = observability_matrix(bench_plant.channel(dec.agent), bench_plant.A)
        ker = h.kernel_basis(obs)
        for col in ker.T:
            assert np.max(np.abs(dec.P @ col - col)) <= 1e-8
        assert np.max(np.abs(dec.P @ dec.L.T)) <= 1e-8


def test_common_unobservable_space_trivial(bench_decs):
    assert common_unobservable_trivial([d.P for d in bench_decs])


def test_defining_equations_on_random_plants():
    rng = np.random.default_rng(17)
    for _ in range(10):
        m = int(rng.integers(2, 5))
        n = int(rng.integers(3, 7))
        plant = random_jointly_observable_plant(rng, m, n)
        decs = h.decompose_all(plant)
        for dec in decs:
            assert np.max(np.abs(dec.L @ plant.A - dec.Abar @ dec.L)) <= 1e-8
            assert np.max(np.abs(dec.Cbar @ dec.L - plant.channel(dec.agent))) <= 1e-8
            assert np.max(np.abs(dec.P @ dec.P - dec.P)) <= 1e-8
            assert np.max(np.abs(dec.P - dec.P.T)) <= 1e-12
        assert common_unobservable_trivial([d.P for d in decs])


def test_plant_x0_and_channel_validation():
    with pytest.raises(h.DimensionError):
        h.LtiPlant(A=np.eye(2), channels=(np.array([[1.0, 0.0]]),), x0=[1.0, 2.0, 3.0])
    plant = h.LtiPlant(A=np.zeros((2, 2)),
                       channels=(np.array([[1.0, 0.0]]), np.array([[0.0, 1.0]])),
                       x0=BENCH_X0[:2])
    with pytest.raises(h.DimensionError):
        plant.channel(3)
