import numpy as np
import pytest

import hybridobs as h

BENCH_A = np.array([
    [-0.1, 0.4, 0.0, 0.0],
    [-0.1, -0.1, 0.0, 0.0],
    [0.0, 0.0, -0.2, 0.2],
    [0.0, 0.0, -2.0, 0.1],
])
BENCH_C = tuple(np.eye(4)[i:i + 1].copy() for i in range(4))
BENCH_X0 = np.array([3.0, 2.0, 4.0, 1.0])

# published coordinates and gains for the benchmark plant
BENCH_L = {
    1: np.array([[0.0, 1.0, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0]]),
    2: np.array([[-1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]]),
    3: np.array([[0.0, 0.0, 0.0, 1.0], [0.0, 0.0, 1.0, 0.0]]),
    4: np.array([[0.0, 0.0, -1.0, 0.0], [0.0, 0.0, 0.0, 1.0]]),
}
BENCH_K = {
    1: np.array([[-13.7], [-4.8]]),
    2: np.array([[-54.7], [-4.8]]),
    3: np.array([[-30.6], [-4.9]]),
    4: np.array([[-2.32], [-4.9]]),
}

BENCH_XHAT0 = np.array([
    [5.0, 5.0, 5.0, 5.0],
    [5.0, 5.0, 5.0, 5.0],
    [4.0, 4.0, 4.0, 4.0],
    [4.0, 4.0, 4.0, 4.0],
])
BENCH_W0 = [np.array([5.0, 5.0]) for _ in range(4)]


@pytest.fixture(scope="session")
def bench_plant():
    return h.LtiPlant(A=BENCH_A, channels=BENCH_C, x0=BENCH_X0)


@pytest.fixture(scope="session")
def bench_decs(bench_plant):
    return h.decompose_all(bench_plant)


def ring2_graph():
    return h.DiGraph.from_arcs(4, [(1, 2), (2, 1), (2, 3), (3, 2),
                                   (3, 4), (4, 3), (4, 1), (1, 4)])


def ring1_graph():
    return h.DiGraph.from_arcs(4, [(1, 2), (2, 3), (3, 4), (4, 1)])


def path2_graph():
    return h.DiGraph.from_arcs(4, [(1, 2), (2, 1), (2, 3), (3, 2), (3, 4), (4, 3)])


def alternating_schedule(horizon: float, period: float = 1.0):
    g = [ring2_graph(), ring1_graph()]
    times = np.arange(0.0, horizon, period)
    return h.GraphSchedule(
        segments=tuple((float(t), g[k % 2]) for k, t in enumerate(times)),
        horizon=horizon,
    )


def two_channel_toy():
    """m=2, A=0 plant with complementary unobservable spaces (rho = 0)."""
    return h.LtiPlant(
        A=np.zeros((2, 2)),
        channels=(np.array([[1.0, 0.0]]), np.array([[0.0, 1.0]])),
        x0=np.array([1.0, -2.0]),
    )


def random_sc_graph(rng, m: int) -> "h.DiGraph":
    perm = rng.permutation(np.arange(1, m + 1))
    arcs = [(int(perm[k]), int(perm[(k + 1) % m])) for k in range(m)]
    for j in range(1, m + 1):
        for i in range(1, m + 1):
            if j != i and rng.random() < 0.35:
                arcs.append((j, i))
    return h.DiGraph.from_arcs(m, arcs)


def random_jointly_observable_plant(rng, m: int, n: int, scale: float = 0.3):
    """Random similarity on sparse-output seeds; retried until observable."""
    for _ in range(80):
        A = rng.standard_normal((n, n)) * scale - 0.1 * np.eye(n)
        chans = []
        for _i in range(m):
            Ci = np.zeros((1, n))
            nz = rng.choice(n, size=int(rng.integers(1, 3)), replace=False)
            Ci[0, nz] = rng.standard_normal(nz.size)
            chans.append(Ci)
        try:
            return h.LtiPlant(A=A, channels=tuple(chans), x0=rng.standard_normal(n))
        except h.HybridObsError:
            continue
    raise RuntimeError("failed to draw a jointly observable plant")


def random_projection_family(rng, m: int, n: int):
    """Orthogonal projections with trivial common image (retried)."""
    from hybridobs.plant import common_unobservable_trivial

    for _ in range(100):
        projections = []
        for _i in range(m):
            k = int(rng.integers(1, n))  # dim of the projected-onto subspace
            Qm, _ = np.linalg.qr(rng.standard_normal((n, k)))
            projections.append(Qm @ Qm.T)
        if common_unobservable_trivial(projections):
            return projections
    raise RuntimeError("failed to draw projections with trivial common image")
