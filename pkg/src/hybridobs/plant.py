"""Multi-channel LTI plant and per-channel observable decompositions.

The plant is x' = A x with one measured output y_i = C_i x per agent.  Each
agent only sees part of the state; the decomposition splits out the part of x
observable through channel i (an n_i-dimensional coordinate L_i x) together
with the reduced dynamics that drive it and the orthogonal projection onto
the channel's unobservable subspace.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, InvalidChannelError
from .linalg import _as_matrix, kernel_basis, matrix_rank, row_space_basis

RESIDUAL_TOL = 1e-8


@dataclass(frozen=True)
class NoiseForcing:
    """Scalar process forcing nu(t) = amplitude*cos(omega t) + offset(t).

    ``offsets`` is a sequence of (start_time, value) pairs defining a
    right-continuous piecewise-constant offset (empty means zero).  The
    closed form keeps exact propagation of the forced plant feasible.
    """

    b: np.ndarray
    amplitude: float = 0.0
    omega: float = 0.0
    offsets: tuple = ()

    def offset_at(self, t: float) -> float:
        value = 0.0
        for start, v in self.offsets:
            if t >= start:
                value = v
        return value

    def offset_boundaries(self):
        return [start for start, _ in self.offsets]

    def value(self, t: float) -> float:
        return self.amplitude * np.cos(self.omega * t) + self.offset_at(t)


@dataclass(frozen=True)
class LtiPlant:
    """m-channel plant: x' = A x (+ b nu(t)), y_i = C_i x.

    Every C_i must be nonzero and the stacked (C, A) pair observable; both
    are checked at construction.
    """

    A: np.ndarray
    channels: tuple
    x0: np.ndarray
    noise: NoiseForcing | None = None

    def __post_init__(self):
        A = _as_matrix(self.A)
        if A.shape[0] != A.shape[1]:
            raise DimensionError("A must be square")
        object.__setattr__(self, "A", A)
        chans = tuple(_as_matrix(C) for C in self.channels)
        if not chans:
            raise InvalidChannelError("plant needs at least one output channel")
        for i, C in enumerate(chans):
            if C.shape[1] != A.shape[0]:
                raise DimensionError(f"C_{i + 1} has {C.shape[1]} columns, expected {A.shape[0]}")
            if not np.any(C):
                raise InvalidChannelError(f"channel {i + 1} has C_i = 0")
        object.__setattr__(self, "channels", chans)
        x0 = np.asarray(self.x0, dtype=float).reshape(-1)
        if x0.size != A.shape[0]:
            raise DimensionError("x0 length must match the state dimension")
        object.__setattr__(self, "x0", x0)
        if self.noise is not None:
            b = np.asarray(self.noise.b, dtype=float).reshape(-1)
            if b.size != A.shape[0]:
                raise DimensionError("noise direction b must have state dimension")
        if not check_joint_observability(self, frozenset(range(1, len(chans) + 1))):
            raise InvalidChannelError("the stacked (C, A) pair is not observable")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return len(self.channels)

    def channel(self, i: int) -> np.ndarray:
        """Output map of agent i (1-based)."""
        if not 1 <= i <= self.m:
            raise DimensionError(f"agent index {i} out of range 1..{self.m}")
        return self.channels[i - 1]


def observability_matrix(C, A) -> np.ndarray:
    """Stacked [C; CA; ...; CA^(n-1)]."""
    C = _as_matrix(C)
    A = _as_matrix(A)
    n = A.shape[0]
    if A.shape[1] != n or C.shape[1] != n:
        raise DimensionError("C must have n columns and A must be n x n")
    rows = [C]
    for _ in range(n - 1):
        rows.append(rows[-1] @ A)
    return np.vstack(rows)


def check_joint_observability(plant, subset) -> bool:
    """True iff the stacked observability matrix over the subset has rank n."""
    subset = sorted(set(subset))
    if not subset:
        raise DimensionError("agent subset must be nonempty")
    stacked = np.vstack([plant.channel(i) for i in subset])
    return matrix_rank(observability_matrix(stacked, plant.A)) == plant.n


@dataclass(frozen=True)
class ChannelDecomposition:
    """Observable-part algebra for one channel.

    L is full row rank with ker L = ker O(C_i, A); Abar and Cbar are the
    unique solutions of L A = Abar L and C_i = Cbar L; Q = L'(L L')^-1; and
    P = I - Q L is the orthogonal projection onto the channel's unobservable
    subspace (basis independent, unlike L itself).
    """

    agent: int
    L: np.ndarray
    Abar: np.ndarray
    Cbar: np.ndarray
    Q: np.ndarray
    P: np.ndarray
    n_i: int = field(default=0)

    def __post_init__(self):
        object.__setattr__(self, "n_i", self.L.shape[0])


def decompose_channel(plant: LtiPlant, i: int, L_override=None) -> ChannelDecomposition:
    """Build agent i's observable decomposition.

    The canonical L_i has orthonormal rows (an orthonormal basis of the row
    space of the observability matrix), which makes Q_i = L_i' and keeps the
    projection numerically benign.  A user-supplied ``L_override`` is accepted
    and validated against the kernel condition, so published gain/coordinate
    choices can be reproduced verbatim.
    """
    C = plant.channel(i)
    A = plant.A
    n = plant.n
    obs = observability_matrix(C, A)
    if L_override is None:
        L = row_space_basis(obs)
    else:
        L = _as_matrix(L_override)
        if L.shape[1] != n:
            raise DimensionError(f"L override for agent {i} must have {n} columns")
        if matrix_rank(L) != L.shape[0]:
            raise InvalidChannelError(f"L override for agent {i} is not full row rank")
        if L.shape[0] != matrix_rank(obs):
            raise InvalidChannelError(
                f"L override for agent {i} has rank {L.shape[0]}, "
                f"observability matrix has rank {matrix_rank(obs)}"
            )
        ker = kernel_basis(obs)
        if ker.shape[1] and np.max(np.abs(L @ ker)) > RESIDUAL_TOL * max(1.0, np.max(np.abs(L))):
            raise InvalidChannelError(
                f"L override for agent {i} does not annihilate ker O(C_i, A)"
            )
    n_i = L.shape[0]
    Q = L.T @ np.linalg.inv(L @ L.T)
    Abar = L @ A @ Q
    Cbar = C @ Q
    P = np.eye(n) - Q @ L
    P = 0.5 * (P + P.T)  # symmetrize away roundoff

    _check_residual(Abar @ L, L @ A, f"L A = Abar L (agent {i})")
    _check_residual(Cbar @ L, C, f"C = Cbar L (agent {i})")
    _check_residual(P @ P, P, f"P idempotent (agent {i})")
    if matrix_rank(observability_matrix(Cbar, Abar)) != n_i:
        raise InvalidChannelError(f"(Cbar, Abar) for agent {i} is not observable")
    return ChannelDecomposition(agent=i, L=L, Abar=Abar, Cbar=Cbar, Q=Q, P=P)


def decompose_all(plant: LtiPlant, L_overrides=None):
    """Decompositions for every channel; L_overrides maps agent -> matrix."""
    L_overrides = L_overrides or {}
    return tuple(
        decompose_channel(plant, i, L_overrides.get(i)) for i in range(1, plant.m + 1)
    )


def common_unobservable_trivial(projections) -> bool:
    """True iff the images of the projections intersect only in {0}.

    image P = ker (I - P), so the intersection is the kernel of the stacked
    (I - P_i) matrix; trivial intersection means full column rank.
    """
    projections = [np.asarray(P, dtype=float) for P in projections]
    n = projections[0].shape[0]
    stacked = np.vstack([np.eye(n) - P for P in projections])
    return matrix_rank(stacked) == n


def _check_residual(actual, expected, label: str):
    scale = max(1.0, float(np.max(np.abs(expected))) if expected.size else 1.0)
    residual = float(np.max(np.abs(actual - expected))) if expected.size else 0.0
    if residual > RESIDUAL_TOL * scale:
        raise InvalidChannelError(f"{label} failed: residual {residual:g}")
