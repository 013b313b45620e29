"""Snapshot, totals and manifest files."""
from __future__ import annotations

import csv
import json
import os
from pathlib import Path

import numpy as np

from .fd1d import Grid1D
from .mesh import Mesh
from .metrics import TotalsSeries
from .model import FIELD_NAMES, State

FMT = "%.16e"  # 17 significant digits: doubles round-trip exactly
VTK_CELL_TYPES = {2: 5, 3: 10}  # triangle, tetrahedron
VTK_NAMES = {"theta": "theta_l", "ci": "c_i", "cs": "c_s", "n": "n"}


def _coords(geometry) -> np.ndarray:
    if isinstance(geometry, Grid1D):
        return geometry.x[:, None]
    return geometry.nodes


def write_csv_snapshot(state: State, geometry, path) -> None:
    """One row per node in node order: coordinates, then the four fields."""
    X = _coords(geometry)
    if len(X) != len(state):
        raise ValueError(f"state has {len(state)} nodes, geometry has {len(X)}")
    header = [f"x{i + 1}" for i in range(X.shape[1])] + list(FIELD_NAMES)
    table = np.column_stack([X, *(getattr(state, f) for f in FIELD_NAMES)])
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in table:
            fh.write(",".join(FMT % v for v in row) + "\n")


def read_csv_snapshot(path) -> tuple[np.ndarray, State]:
    with open(path, newline="") as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if header[-4:] != list(FIELD_NAMES):
        raise ValueError(f"{path}: unexpected header {header}")
    d = len(header) - 4
    return data[:, :d], State(*(data[:, d + i].copy() for i in range(4)))


def write_vtk_snapshot(state: State, mesh: Mesh, path, title: str = "saltcryst snapshot") -> None:
    """Legacy ASCII VTK unstructured grid with the four nodal fields."""
    if mesh.dim not in VTK_CELL_TYPES:
        raise ValueError("VTK output is for 2D and 3D meshes")
    if len(state) != mesh.num_nodes:
        raise ValueError(f"state has {len(state)} nodes, mesh has {mesh.num_nodes}")
    P = np.zeros((mesh.num_nodes, 3))
    P[:, : mesh.dim] = mesh.nodes
    E = mesh.elements
    k = E.shape[1]
    lines = [
        "# vtk DataFile Version 3.0",
        title.replace("\n", " ")[:255],
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {len(P)} double",
    ]
    lines += [" ".join(FMT % v for v in p) for p in P]
    lines.append(f"CELLS {len(E)} {len(E) * (k + 1)}")
    lines += [f"{k} " + " ".join(str(int(i)) for i in e) for e in E]
    lines.append(f"CELL_TYPES {len(E)}")
    lines += [str(VTK_CELL_TYPES[mesh.dim])] * len(E)
    lines.append(f"POINT_DATA {len(P)}")
    for f in FIELD_NAMES:
        lines += [f"SCALARS {VTK_NAMES[f]} double 1", "LOOKUP_TABLE default"]
        lines += [FMT % v for v in getattr(state, f)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_totals_csv(path) -> TotalsSeries:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or not {"t", "total_theta", "total_cs"} <= set(rows[0]):
        raise ValueError(f"{path}: expected columns t,total_theta,total_cs")
    col = lambda k: [float(r[k]) for r in rows]  # noqa: E731
    return TotalsSeries(col("t"), col("total_theta"), col("total_cs"))


def write_totals_csv(series: TotalsSeries, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("t,total_theta,total_cs\n")
        for row in zip(series.t, series.total_theta, series.total_cs):
            fh.write(",".join(FMT % v for v in row) + "\n")


def write_manifest(manifest: dict, path) -> None:
    """JSON, written atomically so a crash never leaves half a manifest."""
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=_jsonable) + "\n")
    os.replace(tmp, path)


def _jsonable(v):
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, Path):
        return str(v)
    raise TypeError(f"not JSON serializable: {type(v).__name__}")
