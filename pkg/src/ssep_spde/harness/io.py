"""Snapshot directories, CSV tables and JSON sidecars."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from ..errors import ValidationError
from ..skeleton import ControlPath, DensityPath
from ..torus import read_snapshot, write_snapshot
from .config import config_hash


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, header: list[str], rows) -> Path:
    """Fixed column order; floats in shortest round-trip form, so equal data give equal bytes."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            if isinstance(row, dict):
                row = [row[h] for h in header]
            w.writerow([_fmt(v) for v in row])
    return path


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_sidecar(path, cfg, seed: int | None = None, **extra) -> Path:
    path = Path(path)
    meta = {"config": asdict(cfg), "config_hash": config_hash(cfg), "seed": seed, **extra}
    path.write_text(json.dumps(meta, indent=2, sort_keys=True, default=str) + "\n")
    return path


def write_path_dir(path: DensityPath, directory) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for i, f in enumerate(path.frames):
        write_snapshot(d / f"frame_{i:06d}.bin", f, path.grid.d)
    meta = {"dt": path.dt, "frames": int(path.frames.shape[0]), "d": path.grid.d, "n": path.grid.n}
    (d / "path.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return d


def read_path_dir(directory) -> DensityPath:
    d = Path(directory)
    try:
        meta = json.loads((d / "path.json").read_text())
    except FileNotFoundError as exc:
        raise ValidationError(f"{d} has no path.json") from exc
    frames, grid = [], None
    for i in range(meta["frames"]):
        try:
            f, g = read_snapshot(d / f"frame_{i:06d}.bin")
        except (FileNotFoundError, ValueError) as exc:
            raise ValidationError(str(exc)) from exc
        if grid is not None and g != grid:
            raise ValidationError("frames on different grids")
        grid = g
        frames.append(f)
    if grid is None:
        raise ValidationError(f"{d} holds no frames")
    return DensityPath(grid, float(meta["dt"]), np.array(frames))


def write_control_dir(control: ControlPath, directory) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for i, f in enumerate(control.frames):
        for j in range(control.grid.d):
            write_snapshot(d / f"control_{i:06d}_{j}.bin", f[j], control.grid.d)
    meta = {"dt": control.dt, "frames": int(control.frames.shape[0]), "d": control.grid.d, "n": control.grid.n}
    (d / "control.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return d


def read_control_dir(directory) -> ControlPath:
    d = Path(directory)
    try:
        meta = json.loads((d / "control.json").read_text())
    except FileNotFoundError as exc:
        raise ValidationError(f"{d} has no control.json") from exc
    frames, grid = [], None
    for i in range(meta["frames"]):
        comps = []
        for j in range(meta["d"]):
            f, grid = read_snapshot(d / f"control_{i:06d}_{j}.bin")
            comps.append(f)
        frames.append(comps)
    return ControlPath(grid, float(meta["dt"]), np.array(frames))
