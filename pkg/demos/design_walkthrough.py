"""Walk through the offline design pipeline on the four-channel benchmark.

Builds the per-agent observable decompositions, designs local observer gains,
computes the contraction certificates (rho, alpha, sigma) and the iteration
counts they imply, and prints the resilience table for a single-agent loss.
"""

import numpy as np

import hybridobs as h

A = np.array([
    [-0.1, 0.4, 0.0, 0.0],
    [-0.1, -0.1, 0.0, 0.0],
    [0.0, 0.0, -0.2, 0.2],
    [0.0, 0.0, -2.0, 0.1],
])
CHANNELS = tuple(np.eye(4)[i:i + 1] for i in range(4))


def main():
    plant = h.LtiPlant(A=A, channels=CHANNELS, x0=[3.0, 2.0, 4.0, 1.0])
    print(f"plant: n = {plant.n}, m = {plant.m}, ||A|| = {h.spectral_norm(A):.4f}")
    print("jointly observable:", h.check_joint_observability(plant, range(1, 5)))
    print("any single channel observable:",
          any(h.check_joint_observability(plant, {i}) for i in range(1, 5)))

    decs = h.decompose_all(plant)
    for dec in decs:
        print(f"agent {dec.agent}: observable dimension {dec.n_i}, "
              f"projection diag {np.round(np.diag(dec.P), 3)}")

    spec = h.RateSpec(lam=2.0, lam_bar=3.0)
    T = 1.0
    for dec in decs:
        K, c = h.design_gain(dec, spec)
        eigs = np.linalg.eigvals(dec.Abar + K @ dec.Cbar)
        print(f"agent {dec.agent}: gain poles {np.round(eigs.real, 3)}, envelope c = {c:.2f}")

    projections = [dec.P for dec in decs]
    rho, certified = h.compute_rho(projections)
    alpha = h.compute_alpha(rho, plant.m)
    q_general, p = h.select_q(alpha, plant.m, spec, A, T)
    print(f"\nrho = {rho:.3g} (exhaustive over 4^10 covering products, certified={certified})")
    print(f"alpha = {alpha:.8f} -> general-rule q = {q_general} (p = {p})")
    print("the operational choice q = 50 is far below the certified value;")
    print("the guarantee is conservative while measured decay matches the target")

    sigma = h.compute_sigma(projections, plant.m, plant.n)
    q_sym = h.select_q_symmetric(sigma, spec, A, T)
    print(f"sigma = {sigma:.4f} -> symmetric-rule q = {q_sym} "
          f"(factor {q_general / q_sym:.0f} smaller)")

    ring2 = h.DiGraph.from_arcs(4, [(1, 2), (2, 1), (2, 3), (3, 2),
                                    (3, 4), (4, 3), (4, 1), (1, 4)])
    sched = h.GraphSchedule(segments=((0.0, ring2),), horizon=10.0)
    q_star, table = h.resilience_qstar(plant, sched, vbar=1, spec=spec, T=T)
    print("\nresilience table (single-agent loss budget):")
    for subset, rho_d, alpha_d, q_d, _ in table:
        print(f"  subset {subset}: rho = {rho_d:.3g}, alpha = {alpha_d:.6f}, q = {q_d}")
    print(f"q* = {q_star}")


if __name__ == "__main__":
    main()
