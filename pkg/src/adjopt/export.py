"""History CSV and legacy ASCII VTK output."""

from __future__ import annotations

import csv

import numpy as np

from .meshkit import TriangleMesh
from .optim import OptimizationHistory

HISTORY_HEADER = ("iter", "cost", "grad_norm", "step_size")


def _g17(x) -> str:
    return format(float(x), ".17g")


def export_history(history: OptimizationHistory, path):
    """One row per completed iteration, 17 significant digits, LF endings."""
    with open(path, "w", encoding="ascii", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(HISTORY_HEADER)
        for r in history.records:
            writer.writerow([r.iteration, _g17(r.cost), _g17(r.grad_norm), _g17(r.step_size)])


def read_history(path) -> list[tuple[int, float, float, float]]:
    with open(path, encoding="ascii", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != HISTORY_HEADER:
        raise ValueError(f"{path}: not a history file (bad header)")
    return [(int(a), float(b), float(c), float(d)) for a, b, c, d in rows[1:]]


def export_vtk(mesh: TriangleMesh, path, fields=()):
    """Write ``mesh`` and nodal ``fields`` as a legacy ASCII unstructured grid.

    ``fields`` is a sequence of ``(name, values)`` pairs; ``(N,)`` arrays are
    written as SCALARS, ``(N, 2)`` arrays as VECTORS with a zero third
    component. Order is preserved.
    """
    nv, nc = mesh.num_vertices, mesh.num_cells
    blocks = []
    for name, values in fields:
        if not name or any(ch.isspace() for ch in name):
            raise ValueError(f"field name {name!r} must be non-empty without whitespace")
        values = np.asarray(values, dtype=float)
        if values.shape == (nv,):
            blocks.append(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n"
                          + "".join(f"{_g17(v)}\n" for v in values))
        elif values.shape == (nv, 2):
            blocks.append(f"VECTORS {name} double\n"
                          + "".join(f"{_g17(a)} {_g17(b)} 0\n" for a, b in values))
        else:
            raise ValueError(f"field {name!r} has shape {values.shape}, mesh has {nv} vertices")

    out = ["# vtk DataFile Version 3.0", "adjopt output", "ASCII", "DATASET UNSTRUCTURED_GRID",
           f"POINTS {nv} double"]
    out += [f"{_g17(x)} {_g17(y)} 0" for x, y in mesh.vertices]
    out.append(f"CELLS {nc} {4 * nc}")
    out += [f"3 {a} {b} {c}" for a, b, c in mesh.cells]
    out.append(f"CELL_TYPES {nc}")
    out += ["5"] * nc
    text = "\n".join(out) + "\n"
    if blocks:
        text += f"POINT_DATA {nv}\n" + "".join(blocks)
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(text)
