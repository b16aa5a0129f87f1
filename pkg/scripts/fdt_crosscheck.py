"""Series vs resolvent vs finite differences on the two FDT test families, over a few meshes.

    python scripts/fdt_crosscheck.py [--quick]
"""
import argparse
import math
import time
import warnings

import numpy as np

from srblab.dynamics import make_builtin_family
from srblab.grid import Mesh, circle, torus2
from srblab.observables import trig
from srblab.response import UlamParams, fd_derivative, fdt_resolvent, fdt_series, response_curve
from srblab.transfer import build_ulam, srb_ulam


def row(fam, obs, cells, spc, t0, h):
    t = time.perf_counter()
    op = build_ulam(fam, t0, Mesh(fam.domain, cells), spc)
    rho = srb_ulam(op, gap_check=False)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        s = fdt_series(op, fam, t0, obs, K=40, rho=rho)
    r = fdt_resolvent(op, fam, t0, obs, rho=rho)
    c = response_curve(fam, obs, [t0 - h, t0, t0 + h], "ulam", UlamParams(cells, spc, 0, 1))
    fd = fd_derivative(c, t0)
    print(f"{fam.name:16s} {str(cells):14s} spc={spc:<5d} series={s.derivative:+.5f} "
          f"resolvent={r.derivative:+.5f} fd={fd:+.5f} ratio={s.tail_ratio:.3f} "
          f"({time.perf_counter() - t:.1f}s)")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--quick", action="store_true")
    args = ap.parse_args()
    dbl = make_builtin_family("doubling")
    for n, spc in ([(1024, 1024)] if args.quick else [(1024, 1024), (4096, 1024), (4096, 4096)]):
        row(dbl, trig(circle(), [1]), (n,), spc, 0.03, 0.01)
    cd = make_builtin_family("cat_dissipative", {"eps": 0.1})
    obs = trig(torus2(), [1, -1], 0.0, [2, -3], 1.0)
    for n in ([64] if args.quick else [64, 128, 256]):
        row(cd, obs, (n, n), 64, 0.02, 0.02)
    print(f"cat_dissipative at t0 = 0 has the closed form -2 pi eps = {-2 * math.pi * 0.1:+.5f}")


if __name__ == "__main__":
    main()
