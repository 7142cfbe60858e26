"""Calibration sweep for the SPDE energy constant.

Prints E||grad rho||^2_{L2L2} / (||rho0||^2 + eps T K^{d+2}) over a 3x3 (eps, K)
sweep.  Run with a seed different from the acceptance seed, then freeze a
constant above the worst ratio.
"""

import argparse

import numpy as np

from ssep_spde.noise import ScalingParams
from ssep_spde.spde import energy_bound_rhs, run_ensemble
from ssep_spde.torus import TorusGrid


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seed", type=int, default=101)
    p.add_argument("--replicas", type=int, default=20)
    p.add_argument("--n", type=int, default=64)
    p.add_argument("--T", type=float, default=0.1)
    p.add_argument("--dt", type=float, default=2e-5)
    args = p.parse_args()

    g = TorusGrid(1, args.n)
    rho0 = 0.5 + 0.2 * np.cos(2 * np.pi * g.points()[0])
    worst = 0.0
    for eps in (1e-3, 1e-2, 3e-2):
        for K in (2, 4, 8):
            params = ScalingParams(eps, 0.1, K, g.nyquist)
            res = run_ensemble(rho0, params, None, args.T, args.dt, args.seed, args.replicas,
                               stride=int(round(args.T / args.dt)))
            ratio = res.energy[res.alive].mean() / energy_bound_rhs(rho0, params, args.T)
            worst = max(worst, ratio)
            print(f"eps={eps:.0e} K={K}  ratio {ratio:.3f}")
    print(f"worst ratio {worst:.3f}")


if __name__ == "__main__":
    main()
