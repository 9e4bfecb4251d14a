"""
On-disk formats.

DEGTAX1 snapshot::

    DEGTAX1 <dim> <nx> <ny> <nz> <Lx> <Ly> <Lz> <t>\\n
    <u as little-endian float64, row-major><v, same layout>

Unused axes are written as ``1`` cells of extent ``1.0``.  Floats in the header
use ``repr`` so a read/write round trip is bit-exact.
"""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path

import numpy as np

from .grid import Grid, make_grid
from .model import State

MAGIC = "DEGTAX1"
FORMAT_VERSION = 1


class SnapshotError(ValueError):
    pass


def snapshot_bytes(state: State) -> bytes:
    g = state.grid
    cells, ext = g.header_values()
    head = " ".join(
        [MAGIC, str(g.dim)] + [str(n) for n in cells] + [repr(float(L)) for L in ext] + [repr(float(state.t))]
    )
    body = np.ascontiguousarray(state.u, dtype="<f8").tobytes() + np.ascontiguousarray(state.v, dtype="<f8").tobytes()
    return head.encode("ascii") + b"\n" + body


def parse_snapshot(data: bytes) -> State:
    nl = data.find(b"\n")
    if nl < 0:
        raise SnapshotError("missing header line")
    parts = data[:nl].decode("ascii", errors="replace").split()
    if len(parts) != 9 or parts[0] != MAGIC:
        raise SnapshotError(f"not a {MAGIC} snapshot")
    try:
        dim = int(parts[1])
        cells = [int(x) for x in parts[2:5]][:dim]
        ext = [float(x) for x in parts[5:8]][:dim]
        t = float(parts[8])
    except ValueError as exc:
        raise SnapshotError(f"bad header: {exc}") from None
    grid = make_grid(dim, cells, ext)
    body = data[nl + 1 :]
    n = grid.size
    if len(body) != 16 * n:
        raise SnapshotError(f"expected {16 * n} payload bytes, found {len(body)}")
    arr = np.frombuffer(body, dtype="<f8").astype(float)
    return State(grid, arr[:n].reshape(grid.shape).copy(), arr[n:].reshape(grid.shape).copy(), t)


def write_snapshot(path, state: State) -> Path:
    path = Path(path)
    path.write_bytes(snapshot_bytes(state))
    return path


def read_snapshot(path) -> State:
    return parse_snapshot(Path(path).read_bytes())


def ndjson_line(obj: dict) -> str:
    return json.dumps(obj, allow_nan=False, separators=(", ", ": ")) + "\n"


class NdjsonSink:
    """Append one JSON object per line; flushes after every record."""

    def __init__(self, path):
        self.path = Path(path)
        self._fh = open(self.path, "w", encoding="utf-8")

    def __call__(self, record) -> None:
        obj = record.to_dict() if hasattr(record, "to_dict") else record
        self._fh.write(ndjson_line(obj))
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_ndjson(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def config_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def write_manifest(directory, *, config_text: str, seed: int, grid: Grid, command: str, outputs=()) -> Path:
    from . import __version__

    cells, ext = grid.header_values()
    manifest = {
        "format_version": FORMAT_VERSION,
        "magic": MAGIC,
        "version": __version__,
        "command": command,
        "config_sha256": config_hash(config_text),
        "seed": int(seed),
        "grid": {"dim": grid.dim, "cells": cells, "extents": ext},
        "outputs": list(outputs),
    }
    path = Path(directory) / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def resolve_out_dir(cli_value, config_value=None) -> Path:
    """``--out`` wins, then the config's output directory, then ``DEGENTAXIS_OUT``, then ``./out``."""
    for cand in (cli_value, config_value, os.environ.get("DEGENTAXIS_OUT")):
        if cand:
            return Path(cand)
    return Path("out")
