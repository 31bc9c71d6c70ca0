"""Aggregate demand and the worker distribution it induces.

Prints D(beta) for a fine uniform grid next to the 1/beta approximation,
then solves for beta at a few demand levels on a Pareto firm population and
shows how the worker survival function thins out as demand falls.
"""

from __future__ import annotations

import numpy as np

from prodisp.distributions import Pareto, UniformGrid
from prodisp.equilibrium import beta_of_demand, demand_of_beta, uniform_closed_form, worker_distribution


def main() -> None:
    grid = UniformGrid(0.01, 100_000)
    print("uniform grid, dc = 0.01, K = 1e5")
    print(f"{'beta':>8} {'D exact':>12} {'1/beta':>10}")
    for beta in (0.01, 0.05, 0.2, 1.0):
        cf = uniform_closed_form(0.01, 100_000, beta)
        print(f"{beta:8.3g} {demand_of_beta(grid, beta):12.6g} {cf.demand_approx:10.6g}")

    firms = Pareto(1.5)
    print(f"\npareto firms, mu_F = 1.5, unconstrained mean {firms.mean():.4g}")
    print(f"{'D':>6} {'beta':>10} {'P_W(c > 10)':>12} {'P_W(c > 100)':>13}")
    for d in (2.8, 2.5, 2.0, 1.5):
        beta = beta_of_demand(firms, d)
        st = worker_distribution(firms, beta)
        surv = np.interp([10.0, 100.0], st.grid, st.survival)
        print(f"{d:6.2f} {beta:10.4g} {surv[0]:12.4e} {surv[1]:13.4e}")


if __name__ == "__main__":
    main()
