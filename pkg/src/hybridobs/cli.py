"""Command-line front end.

Subcommands:
  design      <scenario.json>                 write the certificate file
  simulate    <scenario.json> --cert <file>   run and emit trace/event CSVs
  verify      <scenario.json>                 run the full check battery
  resilience  <scenario.json> --vbar k        subset table and q*

Exit codes: 0 success/pass, 1 infeasible input, 2 check failure.  The output
directory defaults to ./out/<scenario-name>, overridable with --out or the
HYBRIDOBS_OUTDIR environment variable.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .design import resilience_qstar
from .errors import HybridObsError
from .oracle import mismatch_bound_series, oracle_recursion, certified_envelope_series
from .reporting import run_report_from_files, write_events_csv, write_report, write_trace_csv
from .scenario import load_certificate, load_scenario, save_certificate
from .sim import run_simulation
from .verify import event_norm_series, stacked_norm, verify_run
from .linalg import mat_exp

EXIT_OK = 0
EXIT_INFEASIBLE = 1
EXIT_CHECK_FAILED = 2


def _outdir(args, scenario) -> Path:
    if args.out:
        out = Path(args.out)
    elif os.environ.get("HYBRIDOBS_OUTDIR"):
        out = Path(os.environ["HYBRIDOBS_OUTDIR"]) / scenario.name
    else:
        out = Path("out") / scenario.name
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_design(args) -> int:
    scenario = load_scenario(args.scenario)
    cert, timing = scenario.design()
    out = _outdir(args, scenario)
    path = out / "certificate.json"
    save_certificate(path, cert, timing, scenario)
    print(f"wrote {path}")
    print(f"  rho = {cert.rho:.6g} (certified={cert.rho_certified})")
    print(f"  alpha = {cert.alpha:.8g}")
    if cert.sigma is not None:
        print(f"  sigma = {cert.sigma:.6g}, q_symmetric = {cert.q_symmetric}")
    print(f"  q = {cert.q} (formula q = {cert.q_formula}, p = {cert.p})")
    if cert.q_star is not None:
        print(f"  q* = {cert.q_star}")
    print(f"  c = {cert.c:.6g}, b = {cert.const_b:.6g}, d = {cert.const_d:.6g}, g = {cert.const_g:.6g}")
    for note in cert.notes:
        print(f"  note: {note}")
    return EXIT_OK


def _bound_series_for(scenario, cert, timing, trace):
    noisy = scenario.plant.noise is not None and (
        scenario.plant.noise.amplitude != 0.0 or scenario.plant.noise.offsets
    )
    if noisy:
        return None
    kind = "2" if scenario.averaging == "convex" else "mixed"
    norms = event_norm_series(trace, kind)
    e0 = stacked_norm(trace.events[0].e_blocks, kind)
    eb0 = stacked_norm(trace.events[0].ebar_blocks, kind)
    if timing.mode == "mismatch":
        truth_norms = [
            float(np.linalg.norm(mat_exp(scenario.plant.A, k * timing.T) @ scenario.plant.x0))
            for k in range(norms.size)
        ]
        return mismatch_bound_series(e0, eb0, cert.rate.lam, cert.const_d, cert.const_g,
                                     timing.eps_max, timing.T, truth_norms)
    return certified_envelope_series(e0, eb0, cert.rate.lam, cert.const_d, timing.T, norms.size)


def cmd_simulate(args) -> int:
    scenario = load_scenario(args.scenario)
    cert, timing = load_certificate(args.cert, scenario)
    out = _outdir(args, scenario)
    sample_step = args.sample_step or scenario.sample_step
    trace = run_simulation(
        scenario.plant, scenario.decs, cert, scenario.sched, timing,
        averaging=scenario.averaging, events=scenario.events,
        sample_step=sample_step, xhat0=scenario.xhat0, w0=scenario.w0,
    )
    steps = None
    noisy = scenario.plant.noise is not None and (
        scenario.plant.noise.amplitude != 0.0 or scenario.plant.noise.offsets
    )
    if not noisy:
        steps, _ = oracle_recursion(
            scenario.plant, scenario.decs, cert.gains, scenario.sched, timing,
            averaging=scenario.averaging, events=scenario.events,
            xhat0=scenario.xhat0, w0=scenario.w0,
        )
    bound = _bound_series_for(scenario, cert, timing, trace)
    trace_path = out / "trace.csv"
    events_path = out / "events.csv"
    write_trace_csv(trace_path, trace)
    write_events_csv(events_path, trace, bound=bound, steps=steps)
    cert_echo = json.loads(Path(args.cert).read_text(encoding="utf-8"))
    cert_echo.pop("decompositions", None)
    report = run_report_from_files(events_path, cert_echo)
    report_path = out / "run_report.json"
    write_report(report_path, report, manifest=[trace_path, events_path, args.cert])
    print(f"wrote {trace_path}")
    print(f"wrote {events_path}")
    print(f"wrote {report_path}")
    if report["bound_violations"] is not None:
        print(f"  bound violations: {report['bound_violations']}")
    if report["measured_decay_rate"] is not None:
        print(f"  measured decay rate: {report['measured_decay_rate']:.4f}")
    return EXIT_OK


def cmd_verify(args) -> int:
    scenario = load_scenario(args.scenario)
    cert, timing = scenario.design()
    report, trace, steps = verify_run(
        scenario.plant, scenario.decs, cert, scenario.sched, timing,
        averaging=scenario.averaging, events=scenario.events,
        init=(scenario.xhat0, scenario.w0), sample_step=scenario.sample_step,
    )
    for line in report.lines():
        print(line)
    if report.passed:
        print("verify: PASS")
        return EXIT_OK
    print(f"verify: FAIL ({len(report.failed_certified)} certified checks failed)")
    return EXIT_CHECK_FAILED


def cmd_resilience(args) -> int:
    scenario = load_scenario(args.scenario)
    T = scenario.timing_spec["T"]
    q_star, table = resilience_qstar(scenario.plant, scenario.sched, args.vbar,
                                     scenario.rate, T)
    print(f"{'subset':<16} {'rho_d':>12} {'alpha_d':>12} {'q_d':>10}")
    for subset, rho_d, alpha_d, q_d, _p in table:
        label = "{" + ",".join(str(i) for i in subset) + "}"
        print(f"{label:<16} {rho_d:>12.6g} {alpha_d:>12.8g} {q_d:>10}")
    print(f"q* = {q_star}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="hybridobs",
        description="design, simulate and verify event-timed distributed observers",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("design", help="compute gains and convergence certificates")
    p.add_argument("scenario")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("simulate", help="run a scenario against a certificate")
    p.add_argument("scenario")
    p.add_argument("--cert", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--sample-step", type=float, default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="run the invariant/property battery")
    p.add_argument("scenario")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("resilience", help="vertex-loss certification table")
    p.add_argument("scenario")
    p.add_argument("--vbar", type=int, required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_resilience)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except HybridObsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
