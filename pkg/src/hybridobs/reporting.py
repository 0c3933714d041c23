"""Trace/event CSV emission and the run report.

Column orders are fixed:
  trace.csv   t, x[1..n], then x_i[1..n] per agent, then err_i per agent
  events.csv  s, t_s, e_norm, bound_theorem, A_s_norm, B_s_norm, G_s_norm
Floats are printed with 17 significant digits so values round-trip exactly;
the run report is recomputed by parsing the emitted files, never from the
in-memory arrays that produced them.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .sim import SimTrace, decay_rate


def _fmt(v: float) -> str:
    return f"{float(v):.17g}"


def write_trace_csv(path, trace: SimTrace) -> None:
    m, n = trace.m, trace.n
    header = ["t"] + [f"x[{k}]" for k in range(1, n + 1)]
    for i in range(1, m + 1):
        header += [f"x_{i}[{k}]" for k in range(1, n + 1)]
    header += [f"err_{i}" for i in range(1, m + 1)]
    err = trace.error_norms()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in range(trace.times.size):
            vals = [trace.times[row]]
            vals += list(trace.truth[row])
            for i in range(m):
                vals += list(trace.estimates[i, row])
            vals += [err[i, row] for i in range(m)]
            fh.write(",".join(_fmt(v) for v in vals) + "\n")


def write_events_csv(path, trace: SimTrace, bound=None, steps=None) -> None:
    """Per-event summary; bound is the certified envelope series (or None),
    steps the oracle coefficient norms (or None).  Missing values are nan."""
    by_s = {}
    if steps is not None:
        by_s = {st.s: st for st in steps}
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("s,t_s,e_norm,bound_theorem,A_s_norm,B_s_norm,G_s_norm\n")
        for idx, ev in enumerate(trace.events):
            st = by_s.get(ev.s)
            b = bound[idx] if bound is not None and idx < len(bound) else math.nan
            a_n = st.A_norm if st is not None else math.nan
            b_n = st.B_norm if st is not None else math.nan
            g_n = st.G_norm if st is not None and st.G_norm is not None else math.nan
            vals = [ev.s, ev.s * trace.T, ev.e_norm, b, a_n, b_n, g_n]
            fh.write(",".join(_fmt(v) if k else str(int(v)) for k, v in enumerate(vals)) + "\n")


def read_csv_columns(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    cols = {name: np.array([float(r[k]) for r in rows]) for k, name in enumerate(header)}
    return cols


def run_report_from_files(events_csv, certificate: dict | None) -> dict:
    """Recompute the headline numbers from the emitted events CSV."""
    cols = read_csv_columns(events_csv)
    norms = cols["e_norm"]
    bound = cols["bound_theorem"]
    have_bound = ~np.isnan(bound)
    violations = int(np.sum(norms[have_bound] > bound[have_bound]))
    try:
        rate = decay_rate(cols["t_s"], norms)
    except Exception:
        rate = None
    return {
        "events": int(norms.size),
        "bound_violations": violations if bool(np.any(have_bound)) else None,
        "measured_decay_rate": rate,
        "certificate": certificate,
    }


def write_report(path, report: dict, manifest=None) -> None:
    payload = dict(report)
    if manifest is not None:
        payload["files"] = [str(p) for p in manifest]
    Path(path).write_text(json.dumps(payload, indent=2, default=_json_default) + "\n",
                          encoding="utf-8")


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)!r}")
