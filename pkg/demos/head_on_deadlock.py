"""Two robots swap goals head-on and freeze at the safety margin.

Reproduces the canonical deadlock signature of the plain CBF-QP controller:
positions converge but not to the goals, the applied control goes to zero
while the PD reference stays finite, and the pair distance settles exactly
one safety margin apart.  Optionally exports the full trajectory log.

    python demos/head_on_deadlock.py [--out head_on.csv]
"""

from __future__ import annotations

import argparse
import math

import numpy as np

from mrdeadlock import default_head_on_scenario, export_log, run_scenario


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default=None, help="optional CSV export path")
    args = parser.parse_args()

    scenario = default_head_on_scenario(t_max=30.0)
    print("scenario: robots at (-2,0) and (2,0), goals swapped,")
    print(f"          kp={scenario.params.kp}, kv={scenario.params.kv}, "
          f"Ds={scenario.params.ds}, alpha={scenario.params.alpha[0]}")

    log = run_scenario(scenario)
    for ev in log.events:
        print(f"event: {ev['name']} at t = {ev['t']:.3f} s")

    d = np.hypot(log.pos[:, 0, 0] - log.pos[:, 1, 0], log.pos[:, 0, 1] - log.pos[:, 1, 1])
    print(f"\nfinal state at t = {log.t[-1]:.1f} s:")
    for i in range(2):
        goal = scenario.goals.pd[i]
        err = math.hypot(log.pos[-1, i, 0] - goal[0], log.pos[-1, i, 1] - goal[1])
        print(f"  robot {i}: p = ({log.pos[-1, i, 0]:+.4f}, {log.pos[-1, i, 1]:+.4f})  "
              f"|u*| = {np.hypot(*log.u_star[-1, i]):.2e}  "
              f"|u_hat| = {np.hypot(*log.u_hat[-1, i]):.3f}  goal error = {err:.3f}")
    print(f"  pair distance - Ds = {d[-1] - scenario.params.ds:+.2e}  (stuck on the margin)")
    print(f"  neighbor multiplier mu = {log.mu[-1, 0, 0]:.3f}  (repulsion balancing attraction)")

    if args.out:
        export_log(log, "csv", args.out)
        print(f"\nwrote {log.n_records * 2} CSV rows to {args.out}")


if __name__ == "__main__":
    main()
