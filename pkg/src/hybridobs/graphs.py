"""Time-varying directed neighbor graphs and their consensus matrices.

Arcs are ordered pairs (j, i) meaning "agent j is a neighbor of agent i",
i.e. j's broadcasts reach i.  Every vertex carries a self-arc.  Desk scale is
assumed throughout (m <= 8), so the redundancy predicates are exhaustive and
strong connectivity is a plain BFS.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import DimensionError, InvalidGraphError


@dataclass(frozen=True)
class DiGraph:
    """Directed graph on agents 1..m with mandatory self-arcs."""

    m: int
    arcs: frozenset

    def __post_init__(self):
        if self.m < 1:
            raise InvalidGraphError("graph needs at least one vertex")
        arcs = frozenset((int(j), int(i)) for j, i in self.arcs)
        for j, i in arcs:
            if not (1 <= j <= self.m and 1 <= i <= self.m):
                raise InvalidGraphError(f"arc ({j}, {i}) out of range 1..{self.m}")
        for v in range(1, self.m + 1):
            if (v, v) not in arcs:
                raise InvalidGraphError(f"missing self-arc at vertex {v}")
        object.__setattr__(self, "arcs", arcs)

    @staticmethod
    def from_arcs(m: int, arcs, add_self_arcs: bool = True) -> "DiGraph":
        arcs = set((int(j), int(i)) for j, i in arcs)
        if add_self_arcs:
            arcs |= {(v, v) for v in range(1, m + 1)}
        return DiGraph(m, frozenset(arcs))

    @staticmethod
    def complete(m: int) -> "DiGraph":
        return DiGraph(m, frozenset((j, i) for j in range(1, m + 1) for i in range(1, m + 1)))

    def neighbors(self, i: int) -> frozenset:
        """In-neighbor set {j : (j -> i)}; always contains i."""
        if not 1 <= i <= self.m:
            raise DimensionError(f"vertex {i} out of range 1..{self.m}")
        return frozenset(j for j, k in self.arcs if k == i)

    def is_symmetric(self) -> bool:
        return all((i, j) in self.arcs for j, i in self.arcs)

    def restrict(self, active) -> "DiGraph":
        """Drop every non-self arc touching an inactive vertex.

        Vertices stay in place (the agent set is fixed); an inactive vertex
        keeps only its self-arc, so its source set is just itself.
        """
        active = set(active)
        kept = frozenset(
            (j, i) for j, i in self.arcs if j == i or (j in active and i in active)
        )
        return DiGraph(self.m, kept)

    def induced(self, vertices) -> "DiGraph":
        """Relabeled induced subgraph on the given vertices (sorted order)."""
        vs = sorted(set(vertices))
        index = {v: k + 1 for k, v in enumerate(vs)}
        arcs = frozenset(
            (index[j], index[i]) for j, i in self.arcs if j in index and i in index
        )
        return DiGraph(len(vs), arcs)


def neighbors(g: DiGraph, i: int) -> frozenset:
    return g.neighbors(i)


def is_strongly_connected(g: DiGraph) -> bool:
    """Every ordered vertex pair connected by a directed path (BFS both ways)."""
    succ = {v: [] for v in range(1, g.m + 1)}
    pred = {v: [] for v in range(1, g.m + 1)}
    for j, i in g.arcs:
        succ[j].append(i)
        pred[i].append(j)

    def reaches_all(adj):
        seen = {1}
        stack = [1]
        while stack:
            for w in adj[stack.pop()]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        return len(seen) == g.m

    return reaches_all(succ) and reaches_all(pred)


def flocking_matrix(g: DiGraph) -> np.ndarray:
    """Row-stochastic averaging matrix: F_ij = 1/|N_i| if j in N_i else 0.

    The self-arcs guarantee the in-degree matrix is nonsingular.
    """
    for v in range(1, g.m + 1):
        if (v, v) not in g.arcs:
            raise InvalidGraphError(f"missing self-arc at vertex {v}")
    F = np.zeros((g.m, g.m))
    for i in range(1, g.m + 1):
        Ni = sorted(g.neighbors(i))
        for j in Ni:
            F[i - 1, j - 1] = 1.0 / len(Ni)
    return F


def metropolis_style_matrix(g: DiGraph) -> np.ndarray:
    """I - L/(m+1) with L the Laplacian of the underlying simple graph.

    Requires a symmetric graph; the result is symmetric, doubly stochastic,
    with diagonal entries >= 1/(m+1).
    """
    if not g.is_symmetric():
        raise InvalidGraphError("metropolis_style_matrix requires a symmetric graph")
    m = g.m
    L = np.zeros((m, m))
    for j, i in g.arcs:
        if j != i:
            L[i - 1, j - 1] = -1.0
    deg = -np.sum(L, axis=1)
    L[np.diag_indices(m)] = deg
    return np.eye(m) - L / (m + 1)


def _nonself_arcs(g: DiGraph):
    return sorted(a for a in g.arcs if a[0] != a[1])


def is_arc_redundant_sc(g: DiGraph, a: int) -> bool:
    """Strongly connected after removal of any `a` non-self arcs.

    Removing fewer arcs keeps a supergraph, so checking subsets of size
    exactly min(a, available) covers every smaller removal too.
    """
    if a < 0:
        raise ValueError("arc count must be nonnegative")
    if not is_strongly_connected(g):
        return False
    arcs = _nonself_arcs(g)
    k = min(a, len(arcs))
    for removed in combinations(arcs, k):
        pruned = DiGraph(g.m, g.arcs - frozenset(removed))
        if not is_strongly_connected(pruned):
            return False
    return True


def is_vertex_redundant_sc(g: DiGraph, v: int) -> bool:
    """Strongly connected after removal of any <= v vertices (exhaustive)."""
    if not 0 <= v < g.m:
        raise ValueError("vertex count must satisfy 0 <= v < m")
    verts = range(1, g.m + 1)
    for k in range(0, v + 1):
        for removed in combinations(verts, k):
            survivors = [x for x in verts if x not in removed]
            if not is_strongly_connected(g.induced(survivors)):
                return False
    return True


def enumerate_symmetric_connected(m: int):
    """All symmetric strongly connected self-arc graphs on m labeled vertices."""
    pairs = list(combinations(range(1, m + 1), 2))
    for mask in range(2 ** len(pairs)):
        arcs = set()
        for bit, (u, w) in enumerate(pairs):
            if mask >> bit & 1:
                arcs.add((u, w))
                arcs.add((w, u))
        g = DiGraph.from_arcs(m, arcs)
        if is_strongly_connected(g):
            yield g


@dataclass(frozen=True)
class GraphSchedule:
    """Piecewise-constant, right-continuous graph signal on [0, horizon]."""

    segments: tuple  # ((start_time, DiGraph), ...) with strictly increasing starts
    horizon: float

    def __post_init__(self):
        segs = tuple((float(t), g) for t, g in self.segments)
        if not segs:
            raise InvalidGraphError("schedule needs at least one segment")
        if segs[0][0] != 0.0:
            raise InvalidGraphError("first schedule segment must start at time 0")
        times = [t for t, _ in segs]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise InvalidGraphError("segment start times must be strictly increasing")
        m = segs[0][1].m
        if any(g.m != m for _, g in segs):
            raise InvalidGraphError("all segments must share the vertex count")
        if self.horizon <= 0:
            raise InvalidGraphError("horizon must be positive")
        object.__setattr__(self, "segments", segs)

    @property
    def m(self) -> int:
        return self.segments[0][1].m

    def switch_times(self):
        return [t for t, _ in self.segments[1:]]

    def graph_at(self, t: float) -> DiGraph:
        """Right-continuous lookup: the segment active at time t."""
        if t < 0.0 or t > self.horizon:
            raise ValueError(f"time {t} outside [0, {self.horizon}]")
        graph = self.segments[0][1]
        for start, g in self.segments:
            if t >= start:
                graph = g
            else:
                break
        return graph

    def constant_on(self, lo: float, hi: float) -> bool:
        """True iff no switch time lies in (lo, hi]."""
        return not any(lo < s <= hi for s in self.switch_times())


def graph_at(sched: GraphSchedule, t: float) -> DiGraph:
    return sched.graph_at(t)


def validate_constancy(sched: GraphSchedule, timing, extra_switch_times=()) -> bool:
    """Check the schedule never switches strictly inside a reception window.

    The windows are [sT + (k-1)*Delta + beta - eps, sT + (k-1)*Delta + beta
    + eps] for k = 1..q and every event index s with a window inside the
    horizon, with eps = max_i eps_i.  Evaluated arithmetically per switch
    time, so certified iteration counts in the millions stay cheap.
    `extra_switch_times` lets callers include other topology-change instants
    (e.g. agent loss/gain) in the same check.
    """
    eps = float(np.max(timing.epsilons))
    if eps == 0.0:
        return True
    T, Delta, beta, q = timing.T, timing.Delta, timing.beta, timing.q
    for t_star in list(sched.switch_times()) + list(extra_switch_times):
        s = int(np.floor(t_star / T))
        for ss in (s - 1, s, s + 1):
            if ss < 0:
                continue
            # nearest window index for this event interval
            k = int(round((t_star - ss * T - beta) / Delta)) + 1
            for kk in (k - 1, k, k + 1):
                if 1 <= kk <= q:
                    center = ss * T + (kk - 1) * Delta + beta
                    if abs(t_star - center) < eps and center - eps >= 0.0:
                        return False
    return True
