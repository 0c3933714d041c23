"""Executable check battery: every runtime guarantee as a pass/fail line.

Checks marked `certified` are the ones the design actually warrants for the
given configuration (iteration count at or above the certified value,
feasible timing, noise-free, no topology surgery); a failed certified check
is a defect.  Everything else still runs but is reported as informational,
e.g. the envelope checks under an operator-chosen q below the certified one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .design import DesignCertificate, certified_q
from .errors import ConstancyError, HybridObsError
from .graphs import is_strongly_connected, validate_constancy
from .linalg import mat_exp
from .oracle import (
    compare_trace_to_oracle,
    mismatch_bound_series,
    oracle_recursion,
    certified_envelope_series,
)
from .plant import common_unobservable_trivial
from .sim import ActiveTimeline, measure_decay, run_simulation, source_set
from .timing import check_alignment_windows_disjoint

DECAY_MARGIN = 0.1


@dataclass(frozen=True)
class CheckResult:
    name: str
    status: str          # pass | fail | info | skip
    certified: bool
    detail: str = ""

    def line(self) -> str:
        tag = {"pass": "PASS", "fail": "FAIL", "info": "INFO", "skip": "SKIP"}[self.status]
        cert = "" if self.certified else " (uncertified)"
        return f"[{tag}]{cert} {self.name}: {self.detail}"


@dataclass
class VerifyReport:
    checks: list = field(default_factory=list)

    def add(self, name, status, certified=True, detail=""):
        self.checks.append(CheckResult(name, status, certified, detail))

    @property
    def failed_certified(self):
        return [c for c in self.checks if c.status == "fail" and c.certified]

    @property
    def passed(self) -> bool:
        return not self.failed_certified

    def lines(self):
        return [c.line() for c in self.checks]


def stacked_norm(blocks, kind: str) -> float:
    if kind == "mixed":
        return max(float(np.linalg.norm(b)) for b in blocks)
    return float(np.linalg.norm(np.concatenate(blocks)))


def event_norm_series(trace, kind: str, agents=None) -> np.ndarray:
    out = []
    for ev in trace.events:
        blocks = ev.e_blocks if agents is None else [ev.e_blocks[i - 1] for i in agents]
        out.append(stacked_norm(blocks, kind))
    return np.array(out)


def bound_violations(trace, lam: float, d: float, kind: str) -> tuple:
    """Envelope check e(s) <= e^{-lam s T}(e(0) + d ebar(0)); returns
    (violation_count, bound_series, norm_series)."""
    norms = event_norm_series(trace, kind)
    e0 = stacked_norm(trace.events[0].e_blocks, kind)
    eb0 = stacked_norm(trace.events[0].ebar_blocks, kind)
    bound = certified_envelope_series(e0, eb0, lam, d, trace.T, norms.size)
    return int(np.sum(norms > bound)), bound, norms


def anchored_bound_violations(trace, lam: float, d: float, agents, s0: int,
                              kind: str = "mixed") -> tuple:
    """Envelope check for a subset of agents, re-anchored at event s0."""
    norms = event_norm_series(trace, kind, agents)[s0:]
    ev0 = trace.events[s0]
    e0 = stacked_norm([ev0.e_blocks[i - 1] for i in agents], kind)
    eb0 = stacked_norm([ev0.ebar_blocks[i - 1] for i in agents], kind)
    bound = certified_envelope_series(e0, eb0, lam, d, trace.T, norms.size)
    return int(np.sum(norms > bound)), bound, norms


def verify_run(
    plant,
    decs,
    cert: DesignCertificate,
    sched,
    timing,
    *,
    averaging: str = "straight",
    events=(),
    init=None,
    sample_step: float = 1e-2,
    horizon: float | None = None,
) -> tuple:
    """Run the full battery; returns (report, trace, oracle_steps)."""
    report = VerifyReport()
    xhat0, w0 = init
    norm_kind = "2" if averaging == "convex" else "mixed"
    noisy = plant.noise is not None and (plant.noise.amplitude != 0.0 or plant.noise.offsets)

    # --- static checks -----------------------------------------------------
    ok = all(is_strongly_connected(g) for _, g in sched.segments)
    report.add("graphs strongly connected", "pass" if ok else "fail",
               detail=f"{len(sched.segments)} segments")
    if averaging == "convex":
        ok = all(g.is_symmetric() for _, g in sched.segments)
        report.add("graphs symmetric (convex rule)", "pass" if ok else "fail")

    ok = common_unobservable_trivial([d.P for d in decs])
    report.add("joint observability (trivial common unobservable space)",
               "pass" if ok else "fail")

    resid = 0.0
    for dec in decs:
        resid = max(resid, float(np.max(np.abs(dec.L @ plant.A - dec.Abar @ dec.L))))
        resid = max(resid, float(np.max(np.abs(dec.Cbar @ dec.L - plant.channel(dec.agent)))))
        resid = max(resid, float(np.max(np.abs(dec.P @ dec.P - dec.P))))
    report.add("decomposition residuals", "pass" if resid <= 1e-8 else "fail",
               detail=f"max residual {resid:.2e}")

    ok = 0.0 <= cert.rho < 1.0 and 0.0 <= cert.alpha < 1.0
    if cert.sigma is not None:
        ok = ok and 0.0 <= cert.sigma < 1.0
    report.add("certificate constants in [0, 1)", "pass" if ok else "fail",
               detail=f"rho={cert.rho:.3g} alpha={cert.alpha:.6g}"
                      + (f" sigma={cert.sigma:.6g}" if cert.sigma is not None else ""))

    disjoint = all(check_alignment_windows_disjoint(timing, s) for s in range(0, 3))
    report.add("iteration alignment windows disjoint",
               "pass" if disjoint else ("fail" if timing.timing_certified else "info"),
               certified=timing.timing_certified,
               detail="" if timing.timing_certified else "timing outside the certified constraints")

    q_needed = certified_q(cert, averaging)
    q_ok = timing.q >= q_needed
    report.add("iteration count vs certified value",
               "pass" if q_ok else "info",
               certified=q_ok,
               detail=f"q = {timing.q}, certified = {q_needed}")
    certified_regime = q_ok and timing.timing_certified and not noisy and not events

    # --- constancy (async) -------------------------------------------------
    active = ActiveTimeline(plant.m, events)
    if timing.mode == "async":
        ok = validate_constancy(sched, timing, extra_switch_times=active.change_times())
        report.add("schedule constant on reception-alignment windows",
                   "pass" if ok else "fail")
        if not ok:
            raise ConstancyError(
                "asynchronous operation requires the neighbor graph to be constant "
                "on every reception-alignment window; refusing to run"
            )

    # --- simulate ----------------------------------------------------------
    trace = run_simulation(
        plant, decs, cert, sched, timing, averaging=averaging, events=events,
        sample_step=sample_step, horizon=horizon, xhat0=xhat0, w0=w0,
    )

    steps = None
    if noisy:
        report.add("oracle equivalence", "skip",
                   detail="error recursion does not model process noise")
        me = trace.max_error()
        mid = float(np.max(me[(trace.times > trace.horizon * 0.25)
                              & (trace.times <= trace.horizon * 0.5)]))
        tail = float(np.max(me[trace.times > trace.horizon * 0.75]))
        ok = tail <= 2.0 * mid + 1e-9  # steady forcing floor, no growth trend
        report.add("bounded error under noise", "pass" if ok else "fail",
                   certified=False,
                   detail=f"tail max {tail:.3g} vs mid-run max {mid:.3g}")
    else:
        steps, _ = oracle_recursion(
            plant, decs, cert.gains, sched, timing, averaging=averaging,
            events=events, horizon=horizon, xhat0=xhat0, w0=w0,
        )
        worst, _ = compare_trace_to_oracle(trace, steps)
        report.add("oracle equivalence (event recursion)",
                   "pass" if worst <= 1.0 else "fail",
                   detail=f"worst scaled deviation {worst:.3g} (<= 1 passes)")

        # coefficient-norm envelopes
        if averaging == "convex":
            a_worst = max(np.linalg.norm(s.A_mat, 2) for s in steps)
            b_worst = max(np.linalg.norm(s.B_mat, 2) for s in steps)
        else:
            a_worst = max(s.A_norm for s in steps)
            b_worst = max(s.B_norm for s in steps)
        a_lim = math.exp(-cert.rate.lam * timing.T)
        report.add("per-event transition norm |A(s)| <= e^{-lambda T}",
                   "pass" if a_worst <= a_lim + 1e-12 else ("fail" if certified_regime else "info"),
                   certified=certified_regime,
                   detail=f"worst {a_worst:.3e}, limit {a_lim:.3e}")
        report.add("per-event coefficient norm |B(s)| <= q e^{||A||T} |Q|",
                   "pass" if b_worst <= cert.const_b + 1e-9 else ("fail" if certified_regime else "info"),
                   certified=certified_regime,
                   detail=f"worst {b_worst:.3e}, limit {cert.const_b:.3e}")
        if timing.mode == "mismatch":
            g_worst = max(s.G_norm for s in steps)
            g_lim = cert.const_g * timing.eps_max
            report.add("mismatch forcing norm |G(s)| <= 2 m q eps ||A|| e^{||A||(T+beta)}",
                       "pass" if g_worst <= g_lim + 1e-9 else "fail",
                       certified=timing.timing_certified,
                       detail=f"worst {g_worst:.3e}, limit {g_lim:.3e}")

        # envelope on the event errors
        if timing.mode == "mismatch":
            norms = event_norm_series(trace, norm_kind)
            truth_norms = [
                float(np.linalg.norm(mat_exp(plant.A, k * timing.T) @ plant.x0))
                for k in range(norms.size)
            ]
            e0 = stacked_norm(trace.events[0].e_blocks, norm_kind)
            eb0 = stacked_norm(trace.events[0].ebar_blocks, norm_kind)
            bound = mismatch_bound_series(
                e0, eb0, cert.rate.lam, cert.const_d, cert.const_g,
                timing.eps_max, timing.T, truth_norms,
            )
            viol = int(np.sum(norms > bound))
            stable = float(np.max(np.linalg.eigvals(plant.A).real)) < 0
            if stable:
                report.add("mismatch error envelope", "pass" if viol == 0 else "fail",
                           certified=timing.timing_certified and q_ok,
                           detail=f"{viol} violations over {norms.size} events")
            else:
                rate = measure_decay(trace)
                report.add("mismatch growth on unstable plant (expected)",
                           "info", certified=False,
                           detail=f"measured decay rate {rate:.3g} (negative = growth)")
        else:
            viol, bound, norms = bound_violations(trace, cert.rate.lam, cert.const_d, norm_kind)
            report.add("certified error envelope e(s) <= e^{-lambda sT}(e(0)+d ebar(0))",
                       "pass" if viol == 0 else ("fail" if certified_regime else "info"),
                       certified=certified_regime,
                       detail=f"{viol} violations over {norms.size} events")

        # source-set identity on sampled rounds
        if timing.mode != "mismatch" or timing.timing_certified:
            ok = True
            S_total = len(trace.events) - 1
            sample_s = sorted({1, max(1, S_total // 2), S_total} & set(range(1, S_total + 1)))
            for s in sample_s:
                for k in (1, max(1, timing.q // 2), timing.q):
                    center = (s - 1) * timing.T + (k - 1) * timing.Delta + timing.beta
                    g = sched.graph_at(min(center, sched.horizon)).restrict(active.active_at(center))
                    for i in range(1, plant.m + 1):
                        if source_set(sched, timing, i, s, k, active) != g.neighbors(i):
                            ok = False
            report.add("source sets match neighbor sets at nominal instants",
                       "pass" if ok else "fail")
        else:
            report.add("source sets match neighbor sets at nominal instants", "skip",
                       detail="timing not certified in mismatch mode")

    # --- measured decay ----------------------------------------------------
    if not noisy and len(trace.events) >= 10:
        unstable = float(np.max(np.linalg.eigvals(plant.A).real)) >= 0
        if timing.mode == "mismatch" and unstable:
            pass  # already reported above
        else:
            try:
                rate = measure_decay(trace)
                threshold = cert.rate.lam - DECAY_MARGIN
                if certified_regime:
                    report.add("measured tail decay rate",
                               "pass" if rate >= threshold else "fail",
                               detail=f"rate {rate:.3f} vs required {threshold:.3f}")
                else:
                    report.add("measured tail decay rate", "info", certified=False,
                               detail=f"rate {rate:.3f}")
            except HybridObsError as exc:
                report.add("measured tail decay rate", "skip", detail=str(exc))

    return report, trace, steps
