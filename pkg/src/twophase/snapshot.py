"""Self-describing field snapshots.

Layout: UTF-8 ``key: value`` header lines, a line reading ``END``, then the
raw field stack as little-endian float64 in C order.  The stack is the
``FluidState.fields`` array: ``density_e, velocity_e_1..dim, density_ns,
velocity_ns_1..dim``, each of shape ``n_points``.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .grid import Grid
from .model import FluidParams, FluidState

MAGIC = "twophase-snapshot 1"
DTYPE = "<f8"


def field_names(dim: int) -> list[str]:
    axes = [str(i + 1) for i in range(dim)]
    return (["density_e"] + [f"velocity_e_{a}" for a in axes]
            + ["density_ns"] + [f"velocity_ns_{a}" for a in axes])


def write_snapshot(path, state: FluidState, params: FluidParams) -> Path:
    g = state.grid
    header = {
        "format": MAGIC,
        "dim": g.dim,
        "n_points": " ".join(map(str, g.n_points)),
        "length": " ".join(repr(x) for x in g.length),
        "formulation": state.formulation,
        "time": repr(state.time),
        "gamma": repr(params.gamma),
        "mu": repr(params.mu),
        "lambda": repr(params.lam),
        "endianness": "little",
        "dtype": "float64",
        "fields": " ".join(field_names(g.dim)),
    }
    path = Path(path)
    with open(path, "wb") as fh:
        for k, v in header.items():
            fh.write(f"{k}: {v}\n".encode())
        fh.write(b"END\n")
        fh.write(np.ascontiguousarray(state.fields, dtype=DTYPE).tobytes())
    return path


def read_header(path) -> tuple[dict[str, str], int]:
    """Header dict and the byte offset of the payload."""
    header: dict[str, str] = {}
    with open(path, "rb") as fh:
        while True:
            line = fh.readline()
            if not line:
                raise ValueError(f"{path}: missing END marker")
            text = line.decode().rstrip("\n")
            if text == "END":
                return header, fh.tell()
            key, sep, value = text.partition(": ")
            if not sep:
                raise ValueError(f"{path}: malformed header line {text!r}")
            header[key] = value


def read_snapshot(path) -> tuple[FluidState, FluidParams]:
    header, offset = read_header(path)
    if header.get("format") != MAGIC:
        raise ValueError(f"{path}: not a snapshot (format {header.get('format')!r})")
    if header.get("endianness") != "little" or header.get("dtype") != "float64":
        raise ValueError(f"{path}: unsupported encoding")
    dim = int(header["dim"])
    grid = Grid(dim, tuple(int(x) for x in header["n_points"].split()),
                tuple(float(x) for x in header["length"].split()))
    shape = (2 + 2 * dim, *grid.shape)
    data = np.fromfile(path, dtype=DTYPE, offset=offset)
    if data.size != int(np.prod(shape)):
        raise ValueError(f"{path}: payload has {data.size} values, expected {int(np.prod(shape))}")
    state = FluidState(grid, data.reshape(shape).astype(float), header["formulation"], float(header["time"]))
    params = FluidParams(float(header["gamma"]), float(header["mu"]), float(header["lambda"]))
    return state, params
