"""Event-to-event error recursion, built purely from matrices.

This is the independent cross-check for the simulator: starting from the
initial stacked errors e(0) (estimate errors) and ebar(0) (local observer
errors), the stacked error at event s obeys

    e(s) = A(s) e(s-1) + B(s) ebar(s-1) [+ G(s) x((s-1)T)]

where A(s), B(s) and the mismatch forcing coefficient G(s) are assembled
from the per-round mixing matrices, the unobservable-space projections and
exp(A T).  Nothing here reads simulated iterates; local errors evolve by
their own closed-loop exponentials and the truth by exp(A t) x0, so the
prediction and the simulation share only the scenario data.

Noise-forced plants are refused: the recursion has no forcing term for
process noise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CertificateError
from .linalg import mat_exp, matrix_power_sum, mixed_norm_dense
from .plant import LtiPlant
from .sim import ActiveTimeline, round_plan


@dataclass(frozen=True)
class OracleStep:
    """Per-event coefficient matrices and their mixed norms.

    `runs` compresses the per-round mixing matrices as (W, count) pairs in
    round order; `Phi0` is the full transition product over the interval.
    """

    s: int
    runs: tuple
    Phi0: np.ndarray
    A_mat: np.ndarray
    B_mat: np.ndarray
    G_mat: np.ndarray | None
    A_norm: float
    B_norm: float
    G_norm: float | None
    e_pred: np.ndarray
    e_pred_norm: float


def _stacked_blocks(decs, n):
    m = len(decs)
    Pblk = np.zeros((m * n, m * n))
    sizes = [dec.n_i for dec in decs]
    Qblk = np.zeros((m * n, sum(sizes)))
    col = 0
    for i, dec in enumerate(decs):
        Pblk[i * n:(i + 1) * n, i * n:(i + 1) * n] = dec.P
        Qblk[i * n:(i + 1) * n, col:col + dec.n_i] = dec.Q
        col += dec.n_i
    return Pblk, Qblk, sizes


def oracle_recursion(
    plant: LtiPlant,
    decs,
    gains,
    sched,
    timing,
    *,
    averaging: str = "straight",
    events=(),
    horizon: float | None = None,
    xhat0=None,
    w0=None,
):
    """Predict the stacked error at every event index from matrices alone.

    Returns (steps, e_norms) where steps is a list of OracleStep (s = 1..S)
    and e_norms[s] is the predicted mixed norm |e(s)| for s = 0..S.
    """
    if plant.noise is not None and (plant.noise.amplitude != 0.0 or plant.noise.offsets):
        raise CertificateError("the error recursion does not model process noise")
    if averaging == "convex" and timing.mode == "mismatch":
        raise CertificateError("mismatch analysis covers the straight-averaging rule only")
    m, n = plant.m, plant.n
    horizon = float(sched.horizon if horizon is None else horizon)
    offs = timing.start_offsets
    S = int(np.floor((horizon - float(np.max(offs))) / timing.T + 1e-9))
    active = ActiveTimeline(m, events)
    Pblk, Qblk, sizes = _stacked_blocks(decs, n)
    E_T = mat_exp(plant.A, timing.T)
    E_kron = np.kron(np.eye(m), E_T)
    row_sizes = [n] * m

    closed = [dec.Abar + np.asarray(K, dtype=float).reshape(dec.n_i, -1) @ dec.Cbar
              for dec, K in zip(decs, gains)]
    xhat0 = np.asarray(xhat0, dtype=float).reshape(m, n)
    w0 = [np.asarray(w, dtype=float).reshape(-1) for w in w0]

    def truth_at(t: float) -> np.ndarray:
        return mat_exp(plant.A, t) @ plant.x0

    def latch_time(i: int, s: int) -> float:
        return max(timing.event_time(i, s - 1), 0.0)

    def ebar_block(i: int, t: float) -> np.ndarray:
        e0 = w0[i - 1] - decs[i - 1].L @ plant.x0
        return mat_exp(closed[i - 1], t) @ e0

    # exp(A t_i0) per agent, for the event-clock mismatch coefficients
    E_off = [mat_exp(plant.A, float(offs[i - 1])) for i in range(1, m + 1)]
    mismatch = timing.mode == "mismatch"

    e_blocks = []
    for i in range(1, m + 1):
        t0 = latch_time(i, 1)
        e_blocks.append(mat_exp(plant.A, t0) @ xhat0[i - 1] - truth_at(t0))
    e_vec = np.concatenate(e_blocks)

    def mixed(v):
        return max(float(np.linalg.norm(v[i * n:(i + 1) * n])) for i in range(m))

    steps = []
    e_norms = [mixed(e_vec)]
    for s in range(1, S + 1):
        plan = round_plan(sched, timing, s, active, averaging)
        suffix = np.eye(m * n)
        sum_phi = np.zeros((m * n, m * n))
        sum_phi_gamma = np.zeros((m * n, n)) if mismatch else None
        for run in reversed(plan):
            M = Pblk @ np.kron(run.W, np.eye(n))
            Mp, Sp = matrix_power_sum(M, run.count)
            contrib = suffix @ Sp
            sum_phi = sum_phi + contrib
            if mismatch:
                # averaging neighbors' iterates (anchored at their own event
                # clocks) injects mean_j [x(t_j(s-1)) - x(t_i(s-1))]
                #   = -Gamma_is x((s-1)T) into agent i's parameter error
                gamma = np.zeros((m * n, n))
                for i in range(1, m + 1):
                    S_i = run.sources[i - 1]
                    acc = np.zeros((n, n))
                    for j in S_i:
                        acc += E_off[j - 1] - E_off[i - 1]
                    gamma[(i - 1) * n:i * n, :] = acc / len(S_i)
                sum_phi_gamma = sum_phi_gamma + contrib @ (Pblk @ gamma)
            suffix = suffix @ Mp
        A_mat = E_kron @ suffix
        B_mat = E_kron @ sum_phi @ Qblk
        ebar_prev = np.concatenate([ebar_block(i, latch_time(i, s)) for i in range(1, m + 1)])
        e_next = A_mat @ e_vec + B_mat @ ebar_prev
        G_mat = None
        G_norm = None
        if mismatch:
            G_mat = E_kron @ sum_phi_gamma
            G_norm = mixed_norm_dense(G_mat, row_sizes, [n])
            e_next = e_next + G_mat @ truth_at((s - 1) * timing.T)
        steps.append(OracleStep(
            s=s,
            runs=tuple((run.W, run.count) for run in plan),
            Phi0=suffix,
            A_mat=A_mat,
            B_mat=B_mat,
            G_mat=G_mat,
            A_norm=mixed_norm_dense(A_mat, row_sizes, row_sizes),
            B_norm=mixed_norm_dense(B_mat, row_sizes, sizes),
            G_norm=G_norm,
            e_pred=e_next,
            e_pred_norm=mixed(e_next),
        ))
        e_vec = e_next
        e_norms.append(mixed(e_vec))
    return steps, np.array(e_norms)


def stacked_event_errors(trace):
    """Stacked e(s) vectors from a simulated trace, for oracle comparison."""
    return [ev.e_stacked() for ev in trace.events]


def compare_trace_to_oracle(trace, steps, rel_tol: float = 1e-8, abs_floor: float = 1e-12):
    """Scaled deviation between simulated and predicted e(s) per event.

    Deviation of event s is |e_sim(s) - e_pred(s)|_inf scaled by
    (abs_floor + rel_tol * |e_pred(s)|_inf); a value <= 1 means the event
    matches within the stated relative tolerance with the absolute floor.
    Returns (worst, per_event).
    """
    sim = stacked_event_errors(trace)
    per_event = []
    for step in steps:
        if step.s >= len(sim):
            break
        diff = float(np.max(np.abs(sim[step.s] - step.e_pred)))
        scale = abs_floor + rel_tol * float(np.max(np.abs(step.e_pred)))
        per_event.append(diff / scale)
    worst = max(per_event) if per_event else 0.0
    return worst, per_event


def certified_envelope_series(e0_norm: float, ebar0_norm: float, lam: float, d: float,
                         T: float, count: int) -> np.ndarray:
    """RHS of the certified envelope e^{-lam s T} (|e(0)| + d |ebar(0)|)."""
    s = np.arange(count)
    return np.exp(-lam * s * T) * (e0_norm + d * ebar0_norm)


def mismatch_bound_series(e0_norm: float, ebar0_norm: float, lam: float, d: float,
                          g: float, eps: float, T: float, truth_norms) -> np.ndarray:
    """Mismatch envelope: the certified series plus the forcing convolution.

    truth_norms[k] must be ||x(k T)|| for k = 0..count-1.
    """
    truth_norms = np.asarray(truth_norms, dtype=float)
    count = truth_norms.size
    out = np.empty(count)
    for s in range(count):
        conv = sum(
            np.exp(-lam * (s - k) * T) * truth_norms[k - 1] for k in range(1, s + 1)
        )
        out[s] = np.exp(-lam * s * T) * (e0_norm + d * ebar0_norm) + eps * g * conv
    return out
