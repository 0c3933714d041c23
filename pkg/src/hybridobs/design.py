"""Offline synthesis of gains and convergence certificates.

Produces everything the runtime guarantees need: local observer gains K_i
placing the reduced-order error dynamics at rate lambda_bar with envelope
constants c_i, the worst-case covering-product norm rho, the attenuation
constant alpha, the symmetric-schedule contraction sigma, the iteration
counts q (general and symmetric rules), the bound constants b, d, g, and the
vertex-loss-resilient count q*.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from scipy.linalg import block_diag

from .errors import CertificateError, DimensionError
from .graphs import (
    GraphSchedule,
    enumerate_symmetric_connected,
    is_vertex_redundant_sc,
    metropolis_style_matrix,
)
from .linalg import kron_identity, mat_exp, matrix_rank, spectral_norm
from .plant import (
    ChannelDecomposition,
    LtiPlant,
    check_joint_observability,
    common_unobservable_trivial,
    decompose_all,
    observability_matrix,
)

EIG_TOL = 1e-8
C_GRID_STEP = 1e-3
C_MARGIN = 1.05


@dataclass(frozen=True)
class RateSpec:
    """Target error decay rate and (faster) local-observer rate, both > 0."""

    lam: float
    lam_bar: float

    def __post_init__(self):
        if not (self.lam_bar > self.lam > 0):
            raise CertificateError(
                f"need lambda_bar > lambda > 0, got lambda={self.lam}, lambda_bar={self.lam_bar}"
            )


@dataclass
class DesignCertificate:
    """Everything the runtime bound checks consume.

    rho/alpha certify the straight-averaging rule, sigma the symmetric
    convex-combination rule; q is the iteration count actually certified for
    the chosen rule, p its attenuation exponent (general rule only).  b, d, g
    are the bound constants; q_star is present when a vertex-loss budget was
    certified.
    """

    rate: RateSpec
    gains: tuple
    obs_constants: tuple
    rho: float
    alpha: float
    q: int
    p: int
    q_formula: int
    sigma: float | None = None
    q_symmetric: int | None = None
    const_b: float = 0.0
    const_d: float = 0.0
    const_g: float = 0.0
    q_star: int | None = None
    rho_certified: bool = True
    notes: tuple = field(default_factory=tuple)

    @property
    def c(self) -> float:
        return float(max(self.obs_constants))


def _ackermann_gain(Abar: np.ndarray, crow: np.ndarray, poles) -> np.ndarray:
    """Column gain k with eig(Abar + k crow) at the given poles.

    Classical coefficient matching on the dual (controllable) pair
    (Abar', crow'); valid whenever (crow, Abar) is observable.
    """
    n = Abar.shape[0]
    F = Abar.T
    g = crow.reshape(-1, 1)
    ctrb = np.hstack([np.linalg.matrix_power(F, j) @ g for j in range(n)])
    if matrix_rank(ctrb) < n:
        raise CertificateError("pair lost observability during gain design")
    coeffs = np.real(np.poly(np.asarray(poles, dtype=complex)))
    chi = np.zeros((n, n))
    for c, power in zip(coeffs, range(n, -1, -1)):
        chi += c * np.linalg.matrix_power(F, power)
    last_row = np.zeros(n)
    last_row[-1] = 1.0
    fb = last_row @ np.linalg.solve(ctrb, chi)  # F - g@fb has the target poles
    return -fb.reshape(-1, 1)


def _envelope_constant(M: np.ndarray, lam_bar: float) -> float:
    """c = sup_t ||e^(M t)|| e^(lam_bar t), sampled on a dense grid + margin."""
    t_end = max(10.0, 10.0 / lam_bar)
    steps = int(round(t_end / C_GRID_STEP))
    E = mat_exp(M, C_GRID_STEP)
    mats = np.empty((steps + 1,) + M.shape)
    phi = np.eye(M.shape[0])
    mats[0] = phi
    for k in range(1, steps + 1):
        phi = E @ phi
        mats[k] = phi
    norms = np.linalg.norm(mats, ord=2, axis=(1, 2))
    # envelope evaluated in logs so large lam_bar * t cannot overflow
    log_env = np.log(np.maximum(norms, 1e-300)) + lam_bar * C_GRID_STEP * np.arange(steps + 1)
    return float(np.exp(np.max(log_env))) * C_MARGIN


def design_gain(dec: ChannelDecomposition, spec: RateSpec, K_override=None,
                pole_spread: float = 0.5):
    """Gain K_i and envelope constant c_i for one channel.

    Canonical design places distinct real poles {-lam_bar - pole_spread*k}.
    Channels with several outputs are reduced through a random output
    combination (seeded, redrawn up to 10 times if the combined pair loses
    observability).  A K_override is accepted and only validated against the
    eigenvalue requirement; its c_i is measured the same way.
    """
    Abar, Cbar = dec.Abar, dec.Cbar
    n_i = dec.n_i
    if K_override is not None:
        K = np.asarray(K_override, dtype=float).reshape(n_i, Cbar.shape[0])
    elif Cbar.shape[0] == 1:
        poles = [-spec.lam_bar - pole_spread * k for k in range(n_i)]
        K = _ackermann_gain(Abar, Cbar[0], poles)
    else:
        poles = [-spec.lam_bar - pole_spread * k for k in range(n_i)]
        rng = np.random.default_rng(n_i * 7919 + dec.agent)
        K = None
        for _ in range(10):
            v = rng.standard_normal(Cbar.shape[0])
            crow = v @ Cbar
            if matrix_rank(observability_matrix(crow.reshape(1, -1), Abar)) == n_i:
                K = _ackermann_gain(Abar, crow, poles) @ v.reshape(1, -1)
                break
        if K is None:
            raise CertificateError(
                f"agent {dec.agent}: no observable output combination found in 10 draws"
            )
    closed = Abar + K @ Cbar
    eig = np.linalg.eigvals(closed)
    worst = float(np.max(eig.real))
    if worst > -spec.lam_bar + EIG_TOL:
        raise CertificateError(
            f"agent {dec.agent}: closed-loop eigenvalue real part {worst:g} "
            f"exceeds -lambda_bar = {-spec.lam_bar:g}"
        )
    c_i = _envelope_constant(closed, spec.lam_bar)
    return K, c_i


def compute_rho(projections, exact_limit: int = 4, samples: int = 10**6):
    """Worst-case two-norm over covering products of the projections.

    Products have length (m-1)^2 + 1 and must use every projection at least
    once; the maximum is strictly below 1 when the projections' images
    intersect trivially.  The search is an exact depth-first enumeration in
    left-to-right multiplication order with two sound prunes (coverage
    infeasibility, and prefix Frobenius norm <= best-so-far, which bounds
    every descendant's two-norm).  For m > exact_limit the enumeration
    m^((m-1)^2+1) is refused; `certified=False` sampling over random covering
    sequences is available instead.

    Returns (rho, certified).
    """
    P = [np.asarray(Pi, dtype=float) for Pi in projections]
    m = len(P)
    if m < 1:
        raise DimensionError("need at least one projection")
    if not common_unobservable_trivial(P):
        raise CertificateError("projections share a nonzero common image")
    length = (m - 1) ** 2 + 1
    if m == 1:
        # single observable channel: the only product is P_1 itself
        return spectral_norm(np.linalg.matrix_power(P[0], length)), True

    if m > exact_limit:
        rng = np.random.default_rng(0)
        best = 0.0
        for _ in range(samples):
            seq = rng.integers(0, m, size=length)
            if len(set(seq.tolist())) < m:
                continue
            M = P[seq[0]]
            for idx in seq[1:]:
                M = np.matmul(M, P[idx])
            best = max(best, spectral_norm(M))
        return best, False

    full_mask = (1 << m) - 1
    best = 0.0

    def descend(prefix, mask, depth):
        nonlocal best
        if depth == length:
            if mask == full_mask:
                best = max(best, spectral_norm(prefix))
            return
        missing = m - bin(mask).count("1")
        if length - depth < missing:
            return
        if depth > 0:
            if not prefix.any():
                return  # exactly zero: every descendant is exactly zero
            # Frobenius bounds every descendant's two-norm; the slack covers
            # rounding drift so no leaf that could tie or beat `best` is lost
            if float(np.sqrt(np.sum(prefix * prefix))) <= best - 1e-12 * best:
                return
        for idx in range(m):
            descend(np.matmul(prefix, P[idx]) if depth else P[idx], mask | (1 << idx), depth + 1)

    descend(None, 0, 0)
    return best, True


def compute_alpha(rho: float, m: int) -> float:
    """Attenuation constant 1 - (m-1)(1-rho)/m^((m-1)^2), in [0, 1)."""
    if not 0.0 <= rho < 1.0:
        raise CertificateError(f"rho must lie in [0, 1), got {rho}")
    if m < 2:
        raise CertificateError("attenuation constant needs m >= 2")
    return 1.0 - (m - 1) * (1.0 - rho) / float(m) ** ((m - 1) ** 2)


def _ln_inv(x: float) -> float:
    # -log(x) computed as -log1p(x-1) for accuracy when x is barely below 1
    return -math.log1p(x - 1.0)


def select_q(alpha: float, m: int, spec: RateSpec, A, T: float):
    """Smallest certified (q, p) for the straight-averaging rule.

    p is the smallest integer strictly greater than
    ceil((lambda + ||A||) T / ln(1/alpha)) and q = p ((m-1)^2 + 1); the pair
    then satisfies e^(||A|| T) alpha^p < e^(-lambda T).
    """
    if not 0.0 <= alpha < 1.0:
        raise CertificateError(f"alpha must lie in [0, 1), got {alpha}")
    normA = spectral_norm(A)
    block = (m - 1) ** 2 + 1
    if alpha == 0.0:
        return block, 1
    p = int(math.ceil((spec.lam + normA) * T / _ln_inv(alpha))) + 1
    q = p * block
    # certified margin, in logs to dodge underflow
    if normA * T + p * math.log(alpha) >= -spec.lam * T:
        raise CertificateError("selected p fails the attenuation margin")
    return q, p


def select_q_symmetric(sigma: float, spec: RateSpec, A, T: float) -> int:
    """Smallest certified q for the convex-combination rule on symmetric graphs."""
    if sigma == 0.0:
        return 1
    if not 0.0 < sigma < 1.0:
        raise CertificateError(f"sigma must lie in [0, 1), got {sigma}")
    normA = spectral_norm(A)
    return int(math.ceil((spec.lam + normA) * T / _ln_inv(sigma))) + 1


def compute_sigma(projections, m: int, n: int) -> float:
    """Worst contraction factor max ||P (M_G kron I)|| over symmetric
    strongly connected graphs on m vertices.

    Exhaustive over the 2^(m(m-1)/2) undirected edge sets; refused for m > 6.
    Strictly below 1 when the projections' images intersect trivially.
    """
    if m > 6:
        raise CertificateError(
            f"sigma enumeration over 2^{m * (m - 1) // 2} symmetric graphs refused for m = {m} > 6"
        )
    P = [np.asarray(Pi, dtype=float) for Pi in projections]
    if len(P) != m:
        raise DimensionError("need one projection per agent")
    if not common_unobservable_trivial(P):
        raise CertificateError("projections share a nonzero common image")
    Pblk = block_diag(*P)
    best = 0.0
    for g in enumerate_symmetric_connected(m):
        W = metropolis_style_matrix(g)
        val = spectral_norm(Pblk @ kron_identity(W, n).to_dense())
        if val > best:
            best = val
    return best


def proof_constants(q: int, c: float, spec: RateSpec, A, T: float, beta: float, Q_blocks):
    """Bound constants (b, d, g) used by the runtime checks.

    b bounds the local-error coefficient per event, d folds the geometric
    local-error tail into the initial condition, and g bounds the event-time
    mismatch forcing coefficient.
    """
    if spec.lam_bar <= spec.lam:
        raise CertificateError("need lambda_bar > lambda")
    normA = spectral_norm(A)
    m = len(Q_blocks)
    norm_Q = max(spectral_norm(Qi) for Qi in Q_blocks)
    b = q * math.exp(normA * T) * norm_Q
    d = c * b * math.exp(spec.lam * T) / (1.0 - math.exp(-(spec.lam_bar - spec.lam) * T))
    g = 2.0 * m * q * normA * math.exp(normA * (T + beta))
    return b, d, g


def resilience_qstar(plant: LtiPlant, sched: GraphSchedule, vbar: int, spec: RateSpec, T: float):
    """Iteration count certified for every loss of up to vbar agents.

    Requires vbar-redundant joint observability and vbar-vertex redundant
    strong connectivity of every scheduled graph; then maximizes the
    per-subset q over all agent subsets of size >= m - vbar.

    Returns (q_star, table) where table rows are
    (subset, rho_d, alpha_d, q_d, p_d).
    """
    m = plant.m
    if not 0 <= vbar < m:
        raise CertificateError("need 0 <= vbar < m")
    # joint observability is monotone in adding channels, so the smallest
    # surviving subsets decide redundant joint observability
    for subset in combinations(range(1, m + 1), m - vbar):
        if not check_joint_observability(plant, subset):
            raise CertificateError(
                f"channels {sorted(subset)} alone are not jointly observable"
            )
    for start, g in sched.segments:
        if not is_vertex_redundant_sc(g, vbar):
            raise CertificateError(
                f"schedule graph starting at t={start:g} is not "
                f"{vbar}-vertex redundantly strongly connected"
            )
    decs = decompose_all(plant)
    table = []
    q_star = 0
    for size in range(m - vbar, m + 1):
        for subset in combinations(range(1, m + 1), size):
            projections = [decs[i - 1].P for i in subset]
            if len(subset) == 1:
                # a single channel must be fully observable on its own
                if np.any(np.abs(projections[0]) > 1e-12):
                    raise CertificateError(
                        f"channel {subset[0]} alone is not observable"
                    )
                table.append((subset, 0.0, 0.0, 1, 1))
                q_star = max(q_star, 1)
                continue
            rho_d, certified = compute_rho(projections)
            if not certified:
                raise CertificateError("subset rho enumeration not certified")
            alpha_d = compute_alpha(rho_d, len(subset))
            q_d, p_d = select_q(alpha_d, len(subset), spec, plant.A, T)
            table.append((subset, rho_d, alpha_d, q_d, p_d))
            q_star = max(q_star, q_d)
    return q_star, table


def build_certificate(
    plant: LtiPlant,
    decs,
    spec: RateSpec,
    T: float,
    beta: float,
    averaging: str = "straight",
    K_overrides=None,
    q_override: int | None = None,
    vbar: int | None = None,
    sched: GraphSchedule | None = None,
) -> DesignCertificate:
    """Full design pipeline: gains, rho/alpha (and sigma), q, b/d/g, q*.

    q_override records an operator-chosen iteration count; the certificate
    still carries the formula value (q_formula) and notes when the override
    falls short of it, in which case the bound checks run uncertified.
    """
    K_overrides = K_overrides or {}
    gains, consts = [], []
    for dec in decs:
        K, c_i = design_gain(dec, spec, K_overrides.get(dec.agent))
        gains.append(K)
        consts.append(c_i)
    projections = [dec.P for dec in decs]
    rho, rho_certified = compute_rho(projections)
    alpha = compute_alpha(rho, plant.m) if plant.m >= 2 else 0.0
    if plant.m >= 2:
        q_formula, p = select_q(alpha, plant.m, spec, plant.A, T)
    else:
        q_formula, p = 1, 1
    notes = []
    sigma = None
    q_symmetric = None
    if averaging == "convex":
        sigma = compute_sigma(projections, plant.m, plant.n)
        q_symmetric = select_q_symmetric(sigma, spec, plant.A, T)
        q_certified = q_symmetric
    else:
        q_certified = q_formula
    q_star = None
    if vbar is not None:
        if sched is None:
            raise CertificateError("resilience certification needs the graph schedule")
        q_star, _ = resilience_qstar(plant, sched, vbar, spec, T)
        q_certified = max(q_certified, q_star)
    q = q_certified if q_override is None else q_override
    if q_override is not None and q_override < q_certified:
        notes.append(
            f"operator q = {q_override} is below the certified q = {q_certified}; "
            "bound checks run uncertified"
        )
    b, d, g = proof_constants(q, max(consts), spec, plant.A, T, beta, [dec.Q for dec in decs])
    return DesignCertificate(
        rate=spec,
        gains=tuple(gains),
        obs_constants=tuple(consts),
        rho=rho,
        alpha=alpha,
        q=q,
        p=p,
        q_formula=q_formula,
        sigma=sigma,
        q_symmetric=q_symmetric,
        const_b=b,
        const_d=d,
        const_g=g,
        q_star=q_star,
        rho_certified=rho_certified,
        notes=tuple(notes),
    )


def certified_q(cert: DesignCertificate, averaging: str) -> int:
    """The q value the bound checks are entitled to assume for this rule."""
    if averaging == "convex" and cert.q_symmetric is not None:
        base = cert.q_symmetric
    else:
        base = cert.q_formula
    if cert.q_star is not None:
        base = max(base, cert.q_star)
    return base
