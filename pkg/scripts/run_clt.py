"""CLT check: SPDE fluctuation modes against the OU limit.

    python3 scripts/run_clt.py --replicas 400 --out out/clt
"""

import argparse
import time

from ssep_spde.harness.config import CltConfig
from ssep_spde.harness.experiments import clt_experiment


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--epsilon", type=float, nargs="+", default=[1e-4])
    p.add_argument("--eta", type=float, nargs="+", default=[0.05])
    p.add_argument("--K", type=int, nargs="+", default=[8])
    p.add_argument("--replicas", type=int, default=400)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="out/clt")
    args = p.parse_args()
    if not len(args.epsilon) == len(args.eta) == len(args.K):
        p.error("--epsilon, --eta and --K need the same number of entries")

    entries = [{"epsilon": e, "eta": h, "K": k} for e, h, k in zip(args.epsilon, args.eta, args.K)]
    cfg = CltConfig(entries=entries, replicas=args.replicas, seed=args.seed, out=args.out)
    t0 = time.perf_counter()
    res = clt_experiment(cfg, cfg.out)
    for r in res.mode_rows:
        z = f"{r[-1]:+.2f}" if r[-1] != "" else "-"
        print(f"eps={r[0]:.0e} k={r[4]:>3} {r[5]}  var {r[6]:.4f} +- {r[7]:.4f}  target {r[8]:.4f}  z {z}")
    for r in res.distance_rows:
        print(f"eps={r[0]:.0e}  H^-s distance {r[3]:.4f} +- {r[4]:.4f}  (OU norm {r[5]:.4f})")
    print(f"{time.perf_counter() - t0:.0f} s, tables in {cfg.out}")


if __name__ == "__main__":
    main()
