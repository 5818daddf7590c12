"""Arrival time of a commutator signal versus separation on a Bose-Hubbard chain.

For each separation d the state is a cat of two particles at the left probe site
and two at the right edge; the arrival time is the first time |<[n_x(t), n_y]>|
exceeds a relative threshold of its maximum over the time grid.

    python scripts/wavefront.py --sites 10 --lam 1.0
"""

from __future__ import annotations

import argparse

import numpy as np

from lightcone import bounds, dynamics, fock, model
from lightcone.lattice import Lattice


def number_on(site):
    return lambda b: fock.second_quantize_multiplier(np.eye(len(b.region.lattice))[site], b)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sites", type=int, default=10)
    ap.add_argument("--J", type=float, default=1.0)
    ap.add_argument("--lam", type=float, default=1.0)
    ap.add_argument("--tmax", type=float, default=6.0)
    ap.add_argument("--threshold", type=float, default=1e-3)
    args = ap.parse_args(argv)

    L = args.sites
    lat = Lattice.chain(L)
    h, v = model.bose_hubbard(lat, args.J, args.lam)
    S = dynamics.System(h, v, fock.enumerate_sector(lat.full(), 2))
    grid = np.linspace(0.0, args.tmax, 241)
    right = [0] * L
    right[-1] = 2
    seps, arrivals = [], []
    print(f"kappa = {model.kappa_n(h, 0):.3f}")
    print(f"{'d':>3} {'t*':>8}")
    for d in range(2, L):
        occ = [0] * L
        occ[L - 1 - d] = 2
        state = fock.superposition(S.basis, {tuple(occ): 1.0, tuple(right): 1.0})
        pair = bounds.LocalPair(lat.region([L - 1 - d]), lat.region([L - 1]), number_on(L - 1 - d),
                                number_on(L - 1), state)
        tstar, _ = bounds.wavefront_time(S, pair, grid, args.threshold)
        print(f"{d:>3} {'-' if tstar is None else f'{tstar:8.3f}':>8}")
        if tstar is not None:
            seps.append(d)
            arrivals.append(tstar)
    if len(seps) >= 2:
        slope, intercept = np.polyfit(seps, arrivals, 1)
        print(f"fit t* = {intercept:.3f} + {slope:.3f} d  (front speed {1 / slope:.3f})")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
