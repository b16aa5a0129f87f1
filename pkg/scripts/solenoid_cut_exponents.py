"""Fitted response exponents on the solenoid under the stable shift u -> u + t/(1 - lam1).

The cut Theta(u - u_max) at the outer edge of the attractor picks up mass at rate
delta^(1/2 + log 2/|log lam|) (a fold of c cos(theta) times the branch bits needed to reach
the edge), while the theta-threshold responds linearly. Prints both fits for a few lam.

    python scripts/solenoid_cut_exponents.py
"""
import math

import numpy as np

from srblab.analysis import holder_fit
from srblab.dynamics import make_builtin_family
from srblab.observables import threshold
from srblab.response import BirkhoffParams, response_curve


def main(lams=(0.4, 0.2, 0.1, 0.05), c=0.3):
    steps = 0.04 * 2.0 ** -np.arange(8)
    grid = np.r_[-steps, 0.0, steps]
    p = BirkhoffParams(n_orbits=200_000, n_steps=5, burn_in=20, seed=0)
    print(f"{'lam':>6s} {'predicted':>10s} {'stable cut':>11s} {'transversal':>12s}")
    for lam in lams:
        fam = make_builtin_family("solenoid", {"lam1": lam, "lam2": lam, "c": c, "direction": "stable_shift"})
        cut = response_curve(fam, threshold(fam.domain, 1, c / (1 - lam)), grid, "birkhoff", p)
        tr = response_curve(fam, threshold(fam.domain, 0, math.pi, 1, 1.0), grid, "birkhoff", p)
        pred = 0.5 + math.log(2) / abs(math.log(lam))
        print(f"{lam:6.2f} {pred:10.3f} {holder_fit(cut, 0.0).alpha_hat:11.3f} {holder_fit(tr, 0.0).alpha_hat:12.3f}")


if __name__ == "__main__":
    main()
