"""Experiment configurations: dataclasses filled from TOML files.

Initial profiles are written as

    rho0 = 0.5                                   # constant
    rho0 = {mean = 0.5, modes = [[1, "cos", 0.2], [2, "sin", 0.05]]}
    rho0 = {snapshot = "path/to/field.bin"}

where a mode entry is ``[k_1, ..., k_d, kind, amplitude]`` against the
normalised basis functions.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from ..errors import ValidationError
from ..torus import TorusGrid, basis_eval, read_snapshot

Profile = float | dict


@dataclass
class SkeletonConfig:
    d: int = 1
    n: int = 128
    T: float = 0.1
    dt: float = 1e-4
    rho0: Profile = field(default_factory=lambda: {"mean": 0.5, "modes": [[1, "sin", 0.3]]})
    control: Profile | str = "none"
    stride: int = 10
    range_tol: float | None = None
    seed: int = 0
    out: str = "out/skeleton"


@dataclass
class SpdeConfig:
    d: int = 1
    n: int = 64
    T: float = 0.1
    dt: float = 1e-4
    epsilon: float = 1e-3
    eta: float = 0.05
    K: int = 8
    M: int | None = None
    rho0: Profile = 0.5
    control: str = "none"
    stride: int = 100
    replicas: int = 10
    seed: int = 0
    out: str = "out/spde"


@dataclass
class SsepConfig:
    d: int = 1
    N: int = 512
    n: int = 64
    T: float = 0.02
    rho0: Profile = 0.5
    init: str = "bernoulli"
    snapshot_times: list = field(default_factory=lambda: [0.0, 0.01, 0.02])
    modes: float = 3
    replicas: int = 100
    seed: int = 0
    out: str = "out/ssep"


@dataclass
class OuConfig:
    d: int = 1
    n: int = 128
    T: float = 0.5
    dt: float = 1e-3
    rho0: Profile = 0.5
    m_sim: float = 8
    K_noise: float | None = None
    delta: float = 1.0
    replicas: int = 400
    seed: int = 0
    out: str = "out/ou"


@dataclass
class ScheduleConfig:
    epsilons: list = field(default_factory=lambda: [1e-2, 1e-3, 1e-4])
    a: float = 1 / 6
    b: float = 1 / 4
    d: int = 1
    n: int | None = 64
    out: str = "out/schedule"


@dataclass
class RateConfig:
    kappa: float = 1e-10
    rtol: float = 1e-10
    maxiter: int = 10_000
    range_tol: float = 1e-8


@dataclass
class CltConfig:
    d: int = 1
    n: int = 128
    T: float = 0.5
    dt: float = 1e-4
    rho0: Profile = 0.5
    entries: list = field(default_factory=lambda: [{"epsilon": 1e-4, "eta": 0.05, "K": 8}])
    modes: float = 4
    m_sim: float | None = None
    delta: float = 1.0
    outputs: int = 10
    replicas: int = 400
    seed: int = 0
    out: str = "out/clt"


@dataclass
class SsepVsSpdeConfig:
    N: int = 512
    n: int = 64
    T: float = 0.02
    rho: float = 0.5
    epsilon: float | None = None
    eta: float = 0.05
    K: int = 8
    dt: float = 1e-4
    modes: float = 3
    replicas: int = 1000
    seed: int = 0
    out: str = "out/ssep_vs_spde"


CONFIGS = {
    "solve-skeleton": SkeletonConfig,
    "simulate-spde": SpdeConfig,
    "simulate-ssep": SsepConfig,
    "simulate-ou": OuConfig,
    "schedule": ScheduleConfig,
    "rate": RateConfig,
    "clt-experiment": CltConfig,
    "ssep-vs-spde": SsepVsSpdeConfig,
}


def from_dict(cls, data: dict):
    names = {f.name for f in fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ValidationError(f"unknown keys for {cls.__name__}: {sorted(unknown)}")
    return cls(**data)


def load_config(path, cls):
    if path is None:
        return cls()
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ValidationError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ValidationError(f"cannot parse {path}: {exc}") from exc
    return from_dict(cls, data)


def config_hash(cfg) -> str:
    blob = json.dumps(asdict(cfg), sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()


def make_profile(spec: Profile, grid: TorusGrid) -> np.ndarray:
    """Evaluate a profile spec on ``grid`` and check it lies in ``[0, 1]``."""
    if isinstance(spec, (int, float)):
        out = np.full(grid.shape, float(spec))
    elif isinstance(spec, dict) and "snapshot" in spec:
        out, g = read_snapshot(Path(spec["snapshot"]))
        if g != grid:
            raise ValidationError(f"snapshot grid {g} does not match {grid}")
    elif isinstance(spec, dict):
        out = np.full(grid.shape, float(spec.get("mean", 0.5)))
        x = grid.points()
        for m in spec.get("modes", []):
            *k, kind, amp = m
            if len(k) != grid.d:
                raise ValidationError(f"mode {m} does not have {grid.d} wave numbers")
            try:
                out = out + float(amp) * basis_eval(k, kind, x)
            except ValueError as exc:
                raise ValidationError(str(exc)) from exc
    else:
        raise ValidationError(f"cannot read profile {spec!r}")
    if out.min() < 0 or out.max() > 1:
        raise ValidationError("profile leaves [0, 1]")
    return out
