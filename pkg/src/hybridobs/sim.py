"""Deterministic simulation of the event-timed distributed observer.

Between discrete instants everything is an autonomous linear ODE (the cosine
forcing is embedded as a 2-state harmonic oscillator, piecewise-constant
offsets as a held state), so propagation uses matrix exponentials and no
solver drift enters the oracle-equivalence comparisons.

Discrete structure per event interval [t_i(s-1), t_is):
  * at the interval start each agent latches its local observer state w_i
    and seeds its iterate z with its current estimate;
  * q averaging-plus-projection rounds run against the neighbors' previous
    round values (round k consumes round k-1 everywhere, i.e. the update is
    double-buffered, so per-round agent ordering cannot matter);
  * at the interval end the estimate resets to exp(A T) z(q).

Rounds whose source sets are provably constant collapse to a single matrix
power plus geometric sum, which is what makes certified iteration counts in
the millions simulable.  Tie ordering at a shared instant: resets apply
before the latches of the next interval, then samples are taken
(right-continuous traces).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConstancyError, DimensionError, MeasurementError, TimingError
from .graphs import GraphSchedule, validate_constancy
from .linalg import mat_exp, matrix_power_sum
from .plant import LtiPlant

POWER_THRESHOLD = 64
ITERATE_LOG_CAP = 10_000
DECAY_FLOOR_REL = 1e-13


# ---------------------------------------------------------------------------
# continuous propagation


def _augmentation(plant: LtiPlant):
    """Autonomous generator for the (possibly forced) truth dynamics.

    Returns (G, lift, n_aug) where lift(x, t) embeds the physical state at
    absolute time t (the oscillator phase and held offset are functions of t).
    """
    A = plant.A
    n = plant.n
    if plant.noise is None:
        return A.copy(), (lambda x, t: np.asarray(x, dtype=float).copy()), n
    nz = plant.noise
    b = np.asarray(nz.b, dtype=float).reshape(-1)
    na = n + 3
    G = np.zeros((na, na))
    G[:n, :n] = A
    G[:n, n] = b
    G[:n, n + 2] = b
    G[n, n + 1] = -nz.omega
    G[n + 1, n] = nz.omega

    def lift(x, t):
        xa = np.zeros(na)
        xa[:n] = np.asarray(x, dtype=float).reshape(-1)
        xa[n] = nz.amplitude * math.cos(nz.omega * t)
        xa[n + 1] = nz.amplitude * math.sin(nz.omega * t)
        xa[n + 2] = nz.offset_at(t)
        return xa

    return G, lift, na


def propagate_truth(plant: LtiPlant, t0: float, t1: float, x0) -> np.ndarray:
    """Exact x(t1) given x(t0) = x0, forcing included."""
    if t1 < t0:
        raise ValueError("t1 must be >= t0")
    G, lift, _ = _augmentation(plant)
    xa = lift(x0, t0)
    cuts = []
    if plant.noise is not None:
        cuts = sorted(t for t in plant.noise.offset_boundaries() if t0 < t <= t1)
    knots = [t0] + cuts + [t1]
    for a, b in zip(knots, knots[1:]):
        if b > a:
            xa = mat_exp(G, b - a) @ xa
        if plant.noise is not None and b in cuts:
            xa[plant.n + 2] = plant.noise.offset_at(b)
    return xa[: plant.n]


def propagate_local_observer(plant, dec, K, t0, t1, x0, w0):
    """Exact joint propagation of the truth and one local observer.

    The pair [x; w] is autonomous: x follows the plant, w follows
    w' = (Abar + K Cbar) w - K y with y = C_i x.  Returns (x(t1), w(t1)).
    """
    if t1 < t0:
        raise ValueError("t1 must be >= t0")
    G, lift, na = _augmentation(plant)
    ni = dec.n_i
    K = np.asarray(K, dtype=float).reshape(ni, -1)
    J = np.zeros((na + ni, na + ni))
    J[:na, :na] = G
    J[na:, : plant.n] = -(K @ plant.channel(dec.agent))
    J[na:, na:] = dec.Abar + K @ dec.Cbar
    state = np.concatenate([lift(x0, t0), np.asarray(w0, dtype=float).reshape(-1)])
    cuts = []
    if plant.noise is not None:
        cuts = sorted(t for t in plant.noise.offset_boundaries() if t0 < t <= t1)
    knots = [t0] + cuts + [t1]
    for a, b in zip(knots, knots[1:]):
        if b > a:
            state = mat_exp(J, b - a) @ state
        if plant.noise is not None and b in cuts:
            state[plant.n + 2] = plant.noise.offset_at(b)
    return state[: plant.n], state[na:]


# ---------------------------------------------------------------------------
# discrete structure


@dataclass
class AgentState:
    """Per-agent snapshot inside one event interval."""

    w: np.ndarray            # local observer state at the interval start
    xhat: np.ndarray         # current state estimate
    z: np.ndarray            # current iterate
    last_sample: np.ndarray  # latched w used by every round of the interval


class ActiveTimeline:
    """Right-continuous record of which agents are in the network."""

    def __init__(self, m: int, events=()):
        self.m = m
        active = set(range(1, m + 1))
        steps = [(0.0, frozenset(active))]
        for ev in sorted(events, key=lambda e: e[0]):
            t, kind, agent = float(ev[0]), ev[1], int(ev[2])
            if not 1 <= agent <= m:
                raise ValueError(f"resilience event names unknown agent {agent}")
            if kind == "lose":
                if agent not in active:
                    raise ValueError(f"agent {agent} lost twice at t={t}")
                active.remove(agent)
            elif kind == "gain":
                if agent in active:
                    raise ValueError(f"agent {agent} gained while present at t={t}")
                active.add(agent)
            else:
                raise ValueError(f"unknown resilience event kind {kind!r}")
            steps.append((t, frozenset(active)))
        self.steps = steps

    def active_at(self, t: float) -> frozenset:
        current = self.steps[0][1]
        for start, members in self.steps:
            if t >= start:
                current = members
            else:
                break
        return current

    def change_times(self):
        return [t for t, _ in self.steps[1:]]


def source_set(sched: GraphSchedule, timing, i: int, s: int, k: int, active: ActiveTimeline | None = None) -> frozenset:
    """Agents whose round-(k-1) broadcast reaches agent i in round k.

    Evaluates each sender j's actual broadcast instant tau_js(k-1) + beta
    against the (activity-restricted) graph at that instant; always contains
    i itself.
    """
    members = set()
    for j in range(1, timing.m + 1):
        t_b = timing.broadcast_time(j, s, k)
        g = sched.graph_at(min(t_b, sched.horizon))
        if active is not None:
            g = g.restrict(active.active_at(t_b))
        if (j, i) in g.arcs:
            members.add(j)
    members.add(i)
    return frozenset(members)


def averaging_matrix(sources, m: int, rule: str) -> np.ndarray:
    """Stacked per-round mixing matrix from the m source sets.

    straight: row i averages the sources uniformly.
    convex:   row i keeps weight 1 - (|S_i|-1)/(m+1) on itself and gives
              1/(m+1) to every other source.
    """
    W = np.zeros((m, m))
    for i in range(1, m + 1):
        S = sources[i - 1]
        if i not in S:
            raise ValueError("source set must contain the agent itself")
        if rule == "straight":
            for j in S:
                W[i - 1, j - 1] = 1.0 / len(S)
        elif rule == "convex":
            W[i - 1, i - 1] = 1.0 - (len(S) - 1) / (m + 1.0)
            for j in S:
                if j != i:
                    W[i - 1, j - 1] = 1.0 / (m + 1.0)
        else:
            raise ValueError(f"unknown averaging rule {rule!r}")
    return W


def iterate_once(states, decs, rule: str, sources, m_total: int):
    """One consensus round: average over sources, then project onto the
    affine set consistent with the latched local observation.

    All new iterates are computed from the previous round's values
    (simultaneous update), so the call is safe to parallelize per agent.
    """
    z_prev = [st.z for st in states]
    new_z = []
    for i, (st, dec) in enumerate(zip(states, decs), start=1):
        S = sorted(sources[i - 1])
        if rule == "straight":
            zbar = np.mean([z_prev[j - 1] for j in S], axis=0)
        elif rule == "convex":
            zbar = (1.0 - len(S) / (m_total + 1.0)) * z_prev[i - 1]
            zbar = zbar + np.sum([z_prev[j - 1] for j in S], axis=0) / (m_total + 1.0)
        else:
            raise ValueError(f"unknown averaging rule {rule!r}")
        new_z.append(zbar - dec.Q @ (dec.L @ zbar - st.last_sample))
    return new_z


def event_reset(state: AgentState, q: int, A, T: float) -> AgentState:
    """End-of-interval estimate reset: xhat <- exp(A T) z(q)."""
    if q < 1:
        raise ValueError("q must be positive")
    state.xhat = mat_exp(np.asarray(A, dtype=float), T) @ state.z
    return state


@dataclass(frozen=True)
class RoundRun:
    """A maximal block of consecutive rounds sharing one source-set family."""

    first_k: int
    count: int
    sources: tuple
    W: np.ndarray


def round_plan(sched, timing, s: int, active: ActiveTimeline, rule: str):
    """Partition rounds 1..q of event interval s into constant-source runs.

    Run boundaries can only occur where some sender's broadcast instant
    crosses a schedule switch or an activity change; those candidate k's are
    found arithmetically, so the plan stays cheap for q in the millions.
    """
    q = timing.q
    base = (s - 1) * timing.T + timing.beta
    breaks = sorted(set(sched.switch_times()) | set(active.change_times()))
    offsets = sorted(set(float(o) for o in timing.start_offsets))
    bounds = {1, q + 1}
    for t_star in breaks:
        for off in offsets:
            x = (t_star - off - base) / timing.Delta + 1.0
            k = int(math.ceil(x))
            for kk in (k - 1, k, k + 1):
                if 1 < kk <= q:
                    bounds.add(kk)
    kb = sorted(bounds)
    runs = []
    for a, b in zip(kb, kb[1:]):
        sources = tuple(source_set(sched, timing, i, s, a, active) for i in range(1, timing.m + 1))
        runs.append(RoundRun(first_k=a, count=b - a, sources=sources,
                             W=averaging_matrix(sources, timing.m, rule)))
    return runs


# ---------------------------------------------------------------------------
# traces


@dataclass(frozen=True)
class EventRecord:
    """Stacked error snapshot at event index s (per-agent event times)."""

    s: int
    times: np.ndarray
    e_blocks: tuple
    ebar_blocks: tuple

    @property
    def e_norm(self) -> float:
        return max(float(np.linalg.norm(b)) for b in self.e_blocks)

    @property
    def ebar_norm(self) -> float:
        return max(float(np.linalg.norm(b)) for b in self.ebar_blocks)

    def e_stacked(self) -> np.ndarray:
        return np.concatenate(self.e_blocks)


@dataclass
class SimTrace:
    """Sampled run of the full hybrid observer."""

    times: np.ndarray
    truth: np.ndarray
    estimates: np.ndarray
    local_errors: tuple
    events: tuple
    mode: str
    averaging: str
    T: float
    sample_step: float
    horizon: float
    iterate_log: dict | None = None
    meta: dict = field(default_factory=dict)

    @property
    def m(self) -> int:
        return self.estimates.shape[0]

    @property
    def n(self) -> int:
        return self.truth.shape[1]

    def errors(self) -> np.ndarray:
        return self.estimates - self.truth[None, :, :]

    def error_norms(self) -> np.ndarray:
        """(m, len) two-norms of the per-agent estimation errors."""
        return np.linalg.norm(self.errors(), axis=2)

    def max_error(self) -> np.ndarray:
        return np.max(self.error_norms(), axis=0)

    def event_norms(self) -> np.ndarray:
        return np.array([ev.e_norm for ev in self.events])

    def event_nominal_times(self) -> np.ndarray:
        return np.array([ev.s * self.T for ev in self.events])


def decay_rate(event_times, event_norms, tail_fraction: float = 0.5,
               floor_rel: float = DECAY_FLOOR_REL) -> float:
    """Least-squares decay rate of log(norm) against time (positive = decay).

    Events below floor_rel x (peak event norm) sit at or near the arithmetic
    noise floor and are dropped before the trailing-fraction window is taken;
    a slope fitted through them would measure rounding noise, not dynamics.
    """
    times = np.asarray(event_times, dtype=float)
    norms = np.asarray(event_norms, dtype=float)
    if times.size != norms.size or times.size == 0:
        raise MeasurementError("event times and norms must align and be nonempty")
    if np.any(~np.isfinite(norms)) or np.any(norms < 0):
        raise MeasurementError("event norms contain NaN or negative values")
    peak = float(np.max(norms))
    if peak == 0.0:
        raise MeasurementError("all event errors are zero; no rate to measure")
    usable = np.flatnonzero(norms >= floor_rel * peak)
    if usable.size < 3:
        raise MeasurementError("fewer than 3 events above the measurement floor")
    if not 0.0 < tail_fraction <= 1.0:
        raise MeasurementError("tail fraction must lie in (0, 1]")
    take = max(2, int(math.ceil(tail_fraction * usable.size)))
    window = usable[-take:]
    if np.any(norms[window] <= 0.0):
        raise MeasurementError("zero event error inside the measurement window")
    slope = np.polyfit(times[window], np.log(norms[window]), 1)[0]
    return float(-slope)


def measure_decay(trace: SimTrace, tail_fraction: float = 0.5, agents=None) -> float:
    """Tail decay rate of the event-indexed error norms of a trace."""
    if len(trace.events) < 10:
        raise MeasurementError("need at least 10 events to measure a decay rate")
    if agents is None:
        norms = trace.event_norms()
    else:
        norms = np.array(
            [max(float(np.linalg.norm(ev.e_blocks[i - 1])) for i in agents) for ev in trace.events]
        )
    if trace.events[0].e_norm == 0.0 and norms[0] == 0.0:
        raise MeasurementError("errors are zero at the start of the trace")
    return decay_rate(trace.event_nominal_times(), norms, tail_fraction)


# ---------------------------------------------------------------------------
# the simulator


def _grid(horizon: float, step: float) -> np.ndarray:
    num = int(math.floor(horizon / step + 1e-9))
    pts = np.arange(num + 1) * step
    if pts[-1] < horizon - 1e-12:
        pts = np.append(pts, horizon)
    else:
        pts[-1] = horizon
    return pts


def run_simulation(
    plant: LtiPlant,
    decs,
    cert,
    sched: GraphSchedule,
    timing,
    *,
    averaging: str = "straight",
    events=(),
    sample_step: float = 1e-2,
    horizon: float | None = None,
    xhat0=None,
    w0=None,
    gains=None,
    record_iterates: bool = False,
) -> SimTrace:
    """Simulate the full hybrid observer and return the sampled trace.

    `events` is a sequence of (time, "lose"|"gain", agent).  A lost agent
    only loses its network arcs: it keeps sensing and running its private
    estimator in isolation (its source set is itself), and simply reappears
    in the graph on re-gain.  Gains come from `cert` unless given explicitly.
    """
    m, n = plant.m, plant.n
    if timing.m != m or sched.m != m:
        raise DimensionError("plant, timing and schedule disagree on the agent count")
    horizon = float(sched.horizon if horizon is None else horizon)
    if horizon > sched.horizon + 1e-12:
        raise ValueError("horizon exceeds the schedule horizon")
    if gains is None:
        if cert is None:
            raise ValueError("need gains, either explicit or from a certificate")
        gains = cert.gains
    if cert is not None and cert.q != timing.q:
        raise TimingError(f"certificate q = {cert.q} but timing q = {timing.q}")
    if averaging == "convex":
        for start, g in sched.segments:
            if not g.is_symmetric():
                raise ValueError(
                    f"convex averaging needs symmetric graphs; segment at t={start:g} is not"
                )
    active = ActiveTimeline(m, events)
    if timing.mode == "async":
        if not validate_constancy(sched, timing, extra_switch_times=active.change_times()):
            raise ConstancyError(
                "asynchronous operation is only certified when the neighbor graph "
                "is constant on every reception-alignment window; the schedule "
                "switches strictly inside one"
            )

    offs = timing.start_offsets
    # every agent must complete interval s for it to count
    S = int(math.floor((horizon - float(np.max(offs))) / timing.T + 1e-9))
    if timing.mode == "mismatch":
        span = float(np.max(offs) - np.min(offs))
        if timing.q * timing.Delta + span > timing.T + 1e-12:
            raise TimingError("q*Delta plus the offset span must not exceed T")

    xhat0 = np.asarray(xhat0, dtype=float).reshape(m, n)
    w0 = [np.asarray(w, dtype=float).reshape(-1) for w in w0]
    for dec, w in zip(decs, w0):
        if w.size != dec.n_i:
            raise DimensionError(f"w0 for agent {dec.agent} has wrong dimension")

    # continuous joint system [x_aug ; w_1 ; ... ; w_m]
    Gaug, lift, na = _augmentation(plant)
    sizes = [dec.n_i for dec in decs]
    N = na + sum(sizes)
    J = np.zeros((N, N))
    J[:na, :na] = Gaug
    w_slices = []
    r = na
    for dec, K in zip(decs, gains):
        K = np.asarray(K, dtype=float).reshape(dec.n_i, -1)
        J[r:r + dec.n_i, :n] = -(K @ plant.channel(dec.agent))
        J[r:r + dec.n_i, r:r + dec.n_i] = dec.Abar + K @ dec.Cbar
        w_slices.append(slice(r, r + dec.n_i))
        r += dec.n_i

    E_reset = mat_exp(plant.A, timing.T)
    Pblk = np.zeros((m * n, m * n))
    Qblk = np.zeros((m * n, sum(sizes)))
    col = 0
    for i, dec in enumerate(decs):
        Pblk[i * n:(i + 1) * n, i * n:(i + 1) * n] = dec.P
        Qblk[i * n:(i + 1) * n, col:col + dec.n_i] = dec.Q
        col += dec.n_i

    latch_times = {}
    reset_times = {}
    for s in range(1, S + 1):
        for i in range(1, m + 1):
            latch_times.setdefault(max(timing.event_time(i, s - 1), 0.0), []).append((i, s))
            reset_times.setdefault(timing.event_time(i, s), []).append((i, s))
    offset_cuts = []
    if plant.noise is not None:
        offset_cuts = [t for t in plant.noise.offset_boundaries() if 0.0 < t <= horizon]

    instants = np.unique(np.concatenate([
        _grid(horizon, sample_step),
        np.array(sorted(latch_times), dtype=float),
        np.array(sorted(reset_times), dtype=float),
        np.array(offset_cuts, dtype=float),
        np.array(active.change_times(), dtype=float),
    ]))
    instants = instants[(instants >= 0.0) & (instants <= horizon + 1e-12)]

    state = np.concatenate([lift(plant.x0, 0.0)] + w0)
    xhat = [xhat0[i].copy() for i in range(m)]
    exp_cache = {}

    def step_to(dt):
        if dt not in exp_cache:
            exp_cache[dt] = (mat_exp(J, dt), mat_exp(plant.A, dt))
        return exp_cache[dt]

    pending = {}          # s -> {i: (z0_i, wlatch_i)}
    z_final = {}          # (i, s) -> iterate after q rounds
    event_rows = {s: {} for s in range(0, S + 1)}  # s -> i -> (time, e, ebar)
    iterate_log = {} if (record_iterates and timing.q <= ITERATE_LOG_CAP) else None

    rows_t, rows_truth, rows_xhat, rows_werr = [], [], [], []

    def run_rounds(s, latched):
        z_list = [latched[i][0].copy() for i in range(1, m + 1)]
        w_stack = np.concatenate([latched[i][1] for i in range(1, m + 1)])
        if iterate_log is not None:
            for i in range(1, m + 1):
                iterate_log[(i, s, 0)] = z_list[i - 1].copy()
        forcing = Qblk @ w_stack
        for run in round_plan(sched, timing, s, active, averaging):
            if run.count >= POWER_THRESHOLD and iterate_log is None:
                M = Pblk @ np.kron(run.W, np.eye(n))
                Mp, Sp = matrix_power_sum(M, run.count)
                z = Mp @ np.concatenate(z_list) + Sp @ forcing
                z_list = [z[i * n:(i + 1) * n].copy() for i in range(m)]
            else:
                states = [
                    AgentState(w=latched[i][1], xhat=xhat[i - 1], z=z_list[i - 1],
                               last_sample=latched[i][1])
                    for i in range(1, m + 1)
                ]
                for k in range(run.first_k, run.first_k + run.count):
                    new_z = iterate_once(states, decs, averaging, run.sources, m)
                    for st, z_new in zip(states, new_z):
                        st.z = z_new
                    if iterate_log is not None:
                        for i in range(1, m + 1):
                            iterate_log[(i, s, k)] = states[i - 1].z.copy()
                z_list = [st.z for st in states]
        for i in range(1, m + 1):
            z_final[(i, s)] = z_list[i - 1]

    t_cur = None
    for t in instants:
        if t_cur is not None and t > t_cur:
            Ej, Ea = step_to(t - t_cur)
            state = Ej @ state
            xhat = [Ea @ xh for xh in xhat]
        t_cur = t
        if plant.noise is not None and t in offset_cuts:
            state[n + 2] = plant.noise.offset_at(t)
        x_now = state[:n]
        # resets first: the next interval's iterate seeds the post-reset value
        for (i, s) in reset_times.get(t, ()):
            xhat[i - 1] = E_reset @ z_final.pop((i, s))
            ebar = state[w_slices[i - 1]] - decs[i - 1].L @ x_now
            event_rows[s][i] = (t, xhat[i - 1] - x_now, ebar)
        for (i, s) in latch_times.get(t, ()):
            wl = state[w_slices[i - 1]].copy()
            pending.setdefault(s, {})[i] = (xhat[i - 1].copy(), wl)
            if s == 1:
                ebar = wl - decs[i - 1].L @ x_now
                event_rows[0][i] = (t, xhat[i - 1] - x_now, ebar)
            if len(pending[s]) == m:
                run_rounds(s, pending.pop(s))
        rows_t.append(t)
        rows_truth.append(x_now.copy())
        rows_xhat.append([xh.copy() for xh in xhat])
        rows_werr.append([state[w_slices[i]] - decs[i].L @ x_now for i in range(m)])

    events_out = []
    for s in range(0, S + 1):
        per = event_rows[s]
        if len(per) != m:
            continue
        times = np.array([per[i][0] for i in range(1, m + 1)])
        e_blocks = tuple(per[i][1] for i in range(1, m + 1))
        ebar_blocks = tuple(per[i][2] for i in range(1, m + 1))
        events_out.append(EventRecord(s=s, times=times, e_blocks=e_blocks, ebar_blocks=ebar_blocks))

    return SimTrace(
        times=np.array(rows_t),
        truth=np.array(rows_truth),
        estimates=np.transpose(np.array(rows_xhat), (1, 0, 2)),
        local_errors=tuple(
            np.array([rows_werr[k][i] for k in range(len(rows_t))]) for i in range(m)
        ),
        events=tuple(events_out),
        mode=timing.mode,
        averaging=averaging,
        T=timing.T,
        sample_step=sample_step,
        horizon=horizon,
        iterate_log=iterate_log,
        meta={"S": S, "resilience_events": tuple(events)},
    )
