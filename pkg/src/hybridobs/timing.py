"""Event-time and iteration-time bookkeeping.

Each agent runs q consensus iterations inside every event interval
[t_i(s-1), t_is) of length T.  Iteration k happens at

    tau_is(k) = t_i(s-1) + k*Delta + delta_is(k),   delta_is(k) in [-eps_i, eps_i]

and agent j broadcasts its round-(k-1) iterate at tau_js(k-1) + beta.  The
feasibility constraints (eps_i + eps_j <= beta, eps_i + eps_j + beta < Delta,
Delta*q + max eps_i <= T) guarantee every broadcast lands inside each
receiver's round-k reception interval.

Modes:
  sync      all eps_i = 0, shared event clocks (t_i0 = 0).
  async     eps_i may be positive; deviations are drawn from a counter-based
            generator keyed by (seed, i, s, k), so draws are reproducible and
            independent of execution order.
  mismatch  deviations are identically zero but the event clocks start at
            per-agent offsets t_i0 with |t_i0| <= eps_i.  The feasibility
            constraints above are then reported as a certification flag
            rather than enforced: the interesting operating points (e.g. a
            0.2T offset with q = 50) violate them by construction, exactly
            like the robustness experiments this mode exists to reproduce.

Event spacing is a fixed T; uneven spacings would slot in here (per-interval
T_s) but are out of scope.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import TimingError

MODES = ("sync", "async", "mismatch")


def _deviation(seed: int, i: int, s: int, k: int, eps_i: float) -> float:
    """Deterministic delta_is(k) ~ U[-eps_i, eps_i], random-access by counter."""
    if eps_i == 0.0:
        return 0.0
    bitgen = np.random.Philox(key=np.uint64(seed), counter=[k, s, i, 0])
    u = np.random.Generator(bitgen).random()
    return (2.0 * u - 1.0) * eps_i


@dataclass(frozen=True)
class TimingConfig:
    """Timing parameters for one run; validated against the chosen mode."""

    T: float
    Delta: float
    beta: float
    q: int
    epsilons: np.ndarray
    deviation_seed: int = 0
    start_offsets: np.ndarray | None = None
    mode: str = "sync"
    timing_certified: bool = field(default=True)

    def __post_init__(self):
        eps = np.asarray(self.epsilons, dtype=float).reshape(-1)
        object.__setattr__(self, "epsilons", eps)
        m = eps.size
        offs = self.start_offsets
        offs = np.zeros(m) if offs is None else np.asarray(offs, dtype=float).reshape(-1)
        if offs.size != m:
            raise TimingError("start_offsets length must match epsilons")
        object.__setattr__(self, "start_offsets", offs)
        if self.mode not in MODES:
            raise TimingError(f"unknown mode {self.mode!r}")
        if self.T <= 0 or self.Delta <= 0:
            raise TimingError("T and Delta must be positive")
        if not 0 <= self.beta < self.Delta:
            raise TimingError("beta must satisfy 0 <= beta < Delta")
        if self.q < 1:
            raise TimingError("q must be a positive integer")
        if np.any(eps < 0):
            raise TimingError("epsilons must be nonnegative")

        if self.mode == "sync":
            if np.any(eps != 0.0):
                raise TimingError("sync mode requires all epsilons = 0")
            if np.any(offs != 0.0):
                raise TimingError("sync mode requires all start offsets = 0")
        elif self.mode == "async":
            if np.any(offs != 0.0):
                raise TimingError("async mode requires all start offsets = 0")
        else:  # mismatch
            if np.any(np.abs(offs) > eps + 1e-15):
                raise TimingError("mismatch mode requires |t_i0| <= eps_i")

        certified, why = self._alignment_feasible()
        if not certified and self.mode in ("sync", "async"):
            raise TimingError(f"infeasible {self.mode} timing: {why}")
        if self.mode == "mismatch" and self.q * self.Delta > self.T + 1e-12:
            raise TimingError("q * Delta must not exceed T")
        object.__setattr__(self, "timing_certified", certified)

    def _alignment_feasible(self):
        eps = self.epsilons
        pair = float(2.0 * np.max(eps)) if eps.size else 0.0
        if pair > self.beta:
            return False, f"max eps_i + eps_j = {pair:g} exceeds beta = {self.beta:g}"
        if pair + self.beta >= self.Delta:
            return False, (
                f"max eps_i + eps_j + beta = {pair + self.beta:g} "
                f"not strictly below Delta = {self.Delta:g}"
            )
        if self.q * self.Delta + float(np.max(eps)) > self.T + 1e-12:
            return False, f"q*Delta + max eps = {self.q * self.Delta + float(np.max(eps)):g} exceeds T"
        return True, ""

    @property
    def m(self) -> int:
        return self.epsilons.size

    @property
    def eps_max(self) -> float:
        return float(np.max(self.epsilons))

    def event_time(self, i: int, s: int) -> float:
        """t_is = t_i0 + s*T (t_i0 = 0 outside mismatch mode)."""
        return float(self.start_offsets[i - 1] + s * self.T)

    def deviation(self, i: int, s: int, k: int) -> float:
        if self.mode == "mismatch":
            return 0.0
        return _deviation(self.deviation_seed, i, s, k, float(self.epsilons[i - 1]))

    def iteration_time(self, i: int, s: int, k: int) -> float:
        """tau_is(k), the k-th local iteration time in event interval s."""
        return self.event_time(i, s - 1) + k * self.Delta + self.deviation(i, s, k)

    def broadcast_time(self, j: int, s: int, k: int) -> float:
        """Instant at which agent j broadcasts its round-(k-1) iterate."""
        return self.iteration_time(j, s, k - 1) + self.beta

    def alignment_window(self, s: int, k: int):
        """Window containing every agent's round-k broadcast instant.

        Centered at (s-1)T + (k-1)Delta + beta; the graph must be constant
        here for the broadcast graphs to be well defined with jittered or
        offset clocks.
        """
        center = (s - 1) * self.T + (k - 1) * self.Delta + self.beta
        if self.mode == "mismatch":
            lo = center + float(np.min(self.start_offsets))
            hi = center + float(np.max(self.start_offsets))
        else:
            lo, hi = center - self.eps_max, center + self.eps_max
        return lo, center, hi


def iteration_schedule(timing: TimingConfig, i: int, s: int) -> np.ndarray:
    """All local iteration times tau_is(k), k = 0..q, for one event interval."""
    if not 1 <= i <= timing.m:
        raise TimingError(f"agent index {i} out of range 1..{timing.m}")
    if s < 1:
        raise TimingError("event interval index starts at 1")
    return np.array([timing.iteration_time(i, s, k) for k in range(timing.q + 1)])


def check_alignment_windows_disjoint(timing: TimingConfig, s: int) -> bool:
    """The q alignment windows of event interval s+1 are pairwise disjoint
    and contained in [sT, (s+1)T)."""
    eps = timing.eps_max
    prev_hi = None
    for k in range(1, timing.q + 1):
        center = s * timing.T + (k - 1) * timing.Delta + timing.beta
        lo, hi = center - eps, center + eps
        if lo < s * timing.T or hi >= (s + 1) * timing.T:
            return False
        if prev_hi is not None and lo <= prev_hi:
            return False
        prev_hi = hi
    return True
