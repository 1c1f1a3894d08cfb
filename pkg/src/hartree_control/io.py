"""Deterministic text artifacts: CSV with 17 significant digits, sorted JSON."""

from __future__ import annotations

import csv
import json
import os
import shutil
import tempfile
from contextlib import contextmanager
from pathlib import Path

import numpy as np


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            if isinstance(row, dict):
                row = [row[h] for h in header]
            fh.write(",".join(fmt(v) for v in row) + "\n")


def read_csv(path: Path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if np.isfinite(f) else str(f)
    return obj


def write_json(path: Path, obj) -> None:
    with open(path, "w", newline="\n") as fh:
        json.dump(_plain(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_field(path: Path, x: np.ndarray, values: np.ndarray, name: str = "value") -> None:
    write_csv(path, ["x", name], zip(x, values))


def write_trajectory(path: Path, times: np.ndarray, x: np.ndarray, fields: np.ndarray,
                     time_stride: int = 1, space_stride: int = 1) -> None:
    ti = np.arange(0, len(times), time_stride)
    if ti[-1] != len(times) - 1:
        ti = np.append(ti, len(times) - 1)
    xi = np.arange(0, len(x), space_stride)
    with open(path, "w", newline="\n") as fh:
        fh.write("t,x,re,im\n")
        for j in ti:
            u = fields[j, xi]
            for xv, uv in zip(x[xi], u):
                fh.write(f"{fmt(times[j])},{fmt(xv)},{fmt(uv.real)},{fmt(uv.imag)}\n")


@contextmanager
def atomic_dir(out: Path, keep_on_error: bool = False):
    """Yield a scratch directory that replaces ``out`` only when the block succeeds."""
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{out.name}.partial-", dir=out.parent))
    try:
        yield tmp
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    if out.exists():
        shutil.rmtree(out)
    os.replace(tmp, out)
