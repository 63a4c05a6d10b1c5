# vtk_export.py
from __future__ import annotations

from pathlib import Path
from typing import Mapping, Optional

import numpy as np

from mesh import TriangleMesh

VTK_TRIANGLE = 5


def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


def write_vtk(
    mesh: TriangleMesh,
    path,
    point_data: Optional[Mapping[str, np.ndarray]] = None,
    cell_data: Optional[Mapping[str, np.ndarray]] = None,
    title: str = "two-field solution",
) -> Path:
    """
    Legacy ASCII UNSTRUCTURED_GRID. point_data arrays have one value per vertex,
    cell_data arrays one per triangle.
    """
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    nv, nt = mesh.n_vertices, mesh.n_triangles

    lines = [
        "# vtk DataFile Version 2.0",
        title.replace("\n", " ")[:255],
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {nv} double",
    ]
    lines += [f"{_fmt(x)} {_fmt(y)} 0" for x, y in mesh.vertices]
    lines.append(f"CELLS {nt} {4 * nt}")
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.triangles]
    lines.append(f"CELL_TYPES {nt}")
    lines += [str(VTK_TRIANGLE)] * nt

    def _section(kind: str, n: int, data: Mapping[str, np.ndarray]):
        lines.append(f"{kind} {n}")
        for name, values in data.items():
            v = np.asarray(values, dtype=float).reshape(-1)
            if v.shape[0] != n:
                raise ValueError(f"{kind} array {name!r} has {v.shape[0]} values, expected {n}")
            lines.append(f"SCALARS {name.replace(' ', '_')} double 1")
            lines.append("LOOKUP_TABLE default")
            lines.extend(_fmt(x) for x in v)

    if point_data:
        _section("POINT_DATA", nv, point_data)
    if cell_data:
        _section("CELL_DATA", nt, cell_data)

    p.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return p
