"""File formats: snapshots, trace CSVs, and plain-text matrix tables.

Snapshot files carry a one-line header "t nx ny nz ncomp" followed by the
cell data in row-major order, either as text (one cell per line) or as raw
little-endian float64.  Traces are CSV with columns t, E, radius.  Matrix
tables carry a "rows cols" header line and one row per line.
"""

from __future__ import annotations

import csv
import os

import numpy as np

from .grid import Grid
from .solver import Trajectory

TEXT = "text"
BINARY = "binary"


def write_matrix(path: str, mat: np.ndarray) -> None:
    mat = np.atleast_2d(np.asarray(mat, dtype=float))
    with open(path, "w") as f:
        f.write(f"{mat.shape[0]} {mat.shape[1]}\n")
        for row in mat:
            f.write(" ".join(f"{v:.17g}" for v in row) + "\n")


def read_matrix(path: str) -> np.ndarray:
    with open(path) as f:
        rows, cols = (int(v) for v in f.readline().split())
        data = np.loadtxt(f)
    return data.reshape(rows, cols)


def write_snapshot(path: str, t: float, grid: Grid, vfield: np.ndarray, fmt: str = TEXT) -> None:
    vfield = np.asarray(vfield, dtype=float)
    n1, n2, n3 = grid.cells
    ncomp = vfield.shape[-1]
    header = f"{t:.17g} {n1} {n2} {n3} {ncomp}\n"
    if fmt == TEXT:
        with open(path, "w") as f:
            f.write(header)
            np.savetxt(f, vfield.reshape(-1, ncomp), fmt="%.17g")
    elif fmt == BINARY:
        with open(path, "wb") as f:
            f.write(header.encode("ascii"))
            f.write(vfield.astype("<f8").tobytes(order="C"))
    else:
        raise ValueError(f"format must be {TEXT!r} or {BINARY!r}, got {fmt!r}")


def read_snapshot(path: str, fmt: str = TEXT):
    if fmt == TEXT:
        with open(path) as f:
            head = f.readline().split()
            t = float(head[0])
            n1, n2, n3, ncomp = (int(v) for v in head[1:])
            data = np.loadtxt(f).reshape(n1, n2, n3, ncomp)
        return t, data
    with open(path, "rb") as f:
        head = f.readline().split()
        t = float(head[0])
        n1, n2, n3, ncomp = (int(v) for v in head[1:])
        data = np.frombuffer(f.read(), dtype="<f8").reshape(n1, n2, n3, ncomp)
    return t, data.copy()


def write_traces(path: str, traj: Trajectory) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["t", "E", "radius"])
        for i, t in enumerate(traj.times):
            writer.writerow([f"{t:.17g}", f"{traj.energy[i]:.17g}", f"{traj.support[i]:.17g}"])


def write_trajectory(
    directory: str, traj: Trajectory, fmt: str = TEXT, prefix: str = "snapshot"
) -> list[str]:
    os.makedirs(directory, exist_ok=True)
    paths = []
    for i, (t, state) in enumerate(zip(traj.times, traj.states)):
        path = os.path.join(directory, f"{prefix}_{i:04d}.dat")
        write_snapshot(path, float(t), traj.grid, state, fmt)
        paths.append(path)
    write_traces(os.path.join(directory, "traces.csv"), traj)
    return paths
