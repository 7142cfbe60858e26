"""Command line entry point.

Exit codes: 0 success, 2 invalid input or configuration, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

from ..errors import NumericalError, ValidationError
from . import experiments as ex
from .config import CONFIGS, load_config

WITH_REPLICAS = {"simulate-spde", "simulate-ssep", "simulate-ou", "clt-experiment", "ssep-vs-spde"}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ssep-spde", description="Fluctuating hydrodynamics of exclusion: solvers and experiments")
    sub = p.add_subparsers(dest="command", required=True)
    helps = {
        "simulate-spde": "ensemble of the conservative SPDE",
        "simulate-ssep": "exclusion process with mode statistics",
        "simulate-ou": "Ornstein-Uhlenbeck fluctuation modes",
        "solve-skeleton": "controlled skeleton equation",
        "rate": "rate function of a stored density path",
        "schedule": "scaling schedule and regime diagnostics",
        "clt-experiment": "SPDE fluctuations against the OU limit",
        "ssep-vs-spde": "three-way fluctuation comparison",
    }
    for name, h in helps.items():
        sp = sub.add_parser(name, help=h)
        sp.add_argument("--config", help="TOML file with the run parameters")
        sp.add_argument("--seed", type=int, help="master seed (overrides the config)")
        sp.add_argument("--out", help="output directory (file for rate)")
        if name in WITH_REPLICAS:
            sp.add_argument("--replicas", type=int, help="number of replicas (overrides the config)")
        if name == "rate":
            sp.add_argument("--path", required=True, help="snapshot directory holding the density path")
    return p


def _override(cfg, args):
    changes = {}
    if getattr(args, "seed", None) is not None and hasattr(cfg, "seed"):
        if args.seed < 0 or args.seed >= 2**64:
            raise ValidationError("seed must be an unsigned 64-bit integer")
        changes["seed"] = args.seed
    if getattr(args, "replicas", None) is not None:
        if args.replicas < 1:
            raise ValidationError("replicas must be positive")
        changes["replicas"] = args.replicas
    if getattr(args, "out", None) is not None and hasattr(cfg, "out"):
        changes["out"] = args.out
    return dataclasses.replace(cfg, **changes) if changes else cfg


def dispatch(args) -> dict:
    cfg = _override(load_config(args.config, CONFIGS[args.command]), args)
    c = args.command
    if c == "solve-skeleton":
        path, rows = ex.solve_skeleton_cmd(cfg, cfg.out)
        return {"frames": int(path.frames.shape[0]), "final_mass": rows[-1][1], "out": cfg.out}
    if c == "simulate-spde":
        res, _ = ex.simulate_spde_cmd(cfg, cfg.out)
        return {"replicas": int(res.replicas.size), "failures": len(res.failures), "out": cfg.out}
    if c == "simulate-ssep":
        rows, _ = ex.simulate_ssep_cmd(cfg, cfg.out)
        return {"mode_rows": len(rows), "out": cfg.out}
    if c == "simulate-ou":
        rows = ex.simulate_ou_cmd(cfg, cfg.out)
        return {"modes": len(rows), "out": cfg.out}
    if c == "rate":
        return ex.rate_cmd(args.path, cfg, args.out)
    if c == "schedule":
        rep, _ = ex.schedule_cmd(cfg, cfg.out)
        return {"ldp": rep.ldp, "clt": rep.clt, "K": [e.K for e in rep.entries], "out": cfg.out}
    if c == "clt-experiment":
        res = ex.clt_experiment(cfg, cfg.out)
        return {"max_abs_z": max((abs(r[-1]) for r in res.mode_rows if r[-1] != ""), default=0.0),
                "distances": [r[3] for r in res.distance_rows], "out": cfg.out}
    if c == "ssep-vs-spde":
        rows = ex.ssep_vs_spde_experiment(cfg, cfg.out)
        return {"max_abs_pairwise_z": max(max(abs(r[10]), abs(r[11]), abs(r[12])) for r in rows), "out": cfg.out}
    raise ValidationError(f"unknown command {c}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        summary = dispatch(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (NumericalError, FloatingPointError, OverflowError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    print(json.dumps(summary, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
