"""Losing and regaining an agent under a loss-certified iteration count.

The iteration count is sized in advance for every single-agent loss (q*), so
when agent 4 drops out of the network at t=5 the surviving trio keeps its
certified envelope without any reconfiguration.  Agent 4 keeps estimating in
isolation; when it reappears at t=7 the maximum error shows only a brief
blip before collapsing back to the common decay.
"""

from importlib import resources

import numpy as np

import hybridobs as h
from hybridobs.design import proof_constants
from hybridobs.scenario import load_scenario
from hybridobs.verify import anchored_bound_violations


def main():
    scenario = load_scenario(
        resources.files("hybridobs") / "scenarios" / "benchmark4_resilience.json")
    cert, timing = scenario.design()
    print(f"q* = {cert.q_star}, in force: q = {timing.q}")
    trace = h.run_simulation(
        scenario.plant, scenario.decs, cert, scenario.sched, timing,
        events=scenario.events, sample_step=scenario.sample_step,
        xhat0=scenario.xhat0, w0=scenario.w0)

    me = trace.max_error()
    t = trace.times
    for lo, hi in ((4.0, 5.0), (5.0, 6.0), (6.0, 7.0), (7.0, 8.0), (8.0, 9.0)):
        window = me[(t >= lo) & (t < hi)]
        print(f"  max error on [{lo:.0f}, {hi:.0f}): {np.max(window):.3e}")

    survivors = (1, 2, 3)
    c_d = max(cert.obs_constants[i - 1] for i in survivors)
    _, d_d, _ = proof_constants(timing.q, c_d, cert.rate, scenario.plant.A,
                                timing.T, timing.beta,
                                [scenario.decs[i - 1].Q for i in survivors])
    viol, _, _ = anchored_bound_violations(trace, cert.rate.lam, d_d, survivors, s0=5)
    print(f"survivor envelope violations from the loss onward: {viol}")
    print("loss at t=5 leaves no visible mark; the re-gain at t=7 is a brief, "
          "uncertified transient")


if __name__ == "__main__":
    main()
