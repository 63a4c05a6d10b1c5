# mesh.py
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

BOUNDARY_TOL = 1e-12
DIAGONALS = ("sw_ne", "nw_se")

BBox = Tuple[float, float, float, float]


# -------------------------
# types
# -------------------------
@dataclass(frozen=True)
class TriangleMesh:
    """
    Structured triangulation of an axis-aligned rectangle.

    vertices:  (V, 2) float
    triangles: (T, 3) int, counter-clockwise
    boundary_vertices: sorted indices of vertices on the rectangle boundary
    parents:   (T,) parent triangle in the previous level (None at level 1)
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_vertices: np.ndarray
    level: int
    bbox: BBox
    parents: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        v = self.vertices
        t = self.triangles
        if v.ndim != 2 or v.shape[1] != 2:
            raise ValueError(f"vertices must be (V,2), got {v.shape}")
        if t.ndim != 2 or t.shape[1] != 3:
            raise ValueError(f"triangles must be (T,3), got {t.shape}")
        if t.size and (t.min() < 0 or t.max() >= len(v)):
            raise ValueError(f"triangle references vertex outside 0..{len(v) - 1}")
        if self.level < 1:
            raise ValueError(f"level must be >= 1, got {self.level}")
        areas = _signed_areas(v, t)
        bad = np.nonzero(areas <= 0.0)[0]
        if bad.size:
            raise ValueError(
                f"triangle {int(bad[0])} is not counter-clockwise (signed area={areas[bad[0]]:.3e})"
            )
        # read-only after construction
        for arr in (v, t, self.boundary_vertices):
            arr.setflags(write=False)
        if self.parents is not None:
            self.parents.setflags(write=False)

    @property
    def n_vertices(self) -> int:
        return int(self.vertices.shape[0])

    @property
    def n_triangles(self) -> int:
        return int(self.triangles.shape[0])


@dataclass(frozen=True)
class AffineMap:
    """F_T(x̂) = origin + J x̂, mapping (0,0),(1,0),(0,1) to the triangle's vertices."""

    origin: np.ndarray
    jacobian: np.ndarray
    det: float
    inv_t: np.ndarray

    def __call__(self, ref_points) -> np.ndarray:
        p = np.asarray(ref_points, dtype=float)
        return self.origin + p @ self.jacobian.T


# -------------------------
# internal helpers
# -------------------------
def _signed_areas(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    p0 = vertices[triangles[:, 0]]
    e1 = vertices[triangles[:, 1]] - p0
    e2 = vertices[triangles[:, 2]] - p0
    return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


def _check_bbox(bbox) -> BBox:
    try:
        xmin, xmax, ymin, ymax = (float(x) for x in bbox)
    except Exception:
        raise ValueError(f"bbox must be (xmin, xmax, ymin, ymax), got {bbox!r}")
    if not (np.isfinite([xmin, xmax, ymin, ymax]).all() and xmax > xmin and ymax > ymin):
        raise ValueError(f"degenerate bbox: {bbox!r}")
    return (xmin, xmax, ymin, ymax)


def on_boundary(points, bbox: BBox, tol: float = BOUNDARY_TOL) -> np.ndarray:
    """Mask of points lying on the rectangle boundary (absolute tolerance)."""
    p = np.asarray(points, dtype=float).reshape(-1, 2)
    xmin, xmax, ymin, ymax = bbox
    return (
        (np.abs(p[:, 0] - xmin) <= tol)
        | (np.abs(p[:, 0] - xmax) <= tol)
        | (np.abs(p[:, 1] - ymin) <= tol)
        | (np.abs(p[:, 1] - ymax) <= tol)
    )


def make_mesh(vertices, triangles, bbox, level: int = 1, parents=None) -> TriangleMesh:
    v = np.array(vertices, dtype=float).reshape(-1, 2)
    t = np.array(triangles, dtype=np.int64).reshape(-1, 3)
    bb = _check_bbox(bbox)
    bnd = np.nonzero(on_boundary(v, bb))[0].astype(np.int64)
    return TriangleMesh(vertices=v, triangles=t, boundary_vertices=bnd, level=int(level), bbox=bb, parents=parents)


# -------------------------
# operations
# -------------------------
def build_rect_mesh(bbox, nx: int, diagonal: str = "sw_ne") -> TriangleMesh:
    """nx x nx cells, each split into two triangles along a fixed diagonal."""
    bb = _check_bbox(bbox)
    if int(nx) != nx or nx < 1:
        raise ValueError(f"nx must be a positive integer, got {nx!r}")
    if diagonal not in DIAGONALS:
        raise ValueError(f"diagonal must be one of {DIAGONALS}, got {diagonal!r}")
    nx = int(nx)
    xmin, xmax, ymin, ymax = bb

    xs = np.linspace(xmin, xmax, nx + 1)
    ys = np.linspace(ymin, ymax, nx + 1)
    X, Y = np.meshgrid(xs, ys)  # row j = y index
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    j, i = np.meshgrid(np.arange(nx), np.arange(nx), indexing="ij")
    v00 = (j * (nx + 1) + i).ravel()
    v10 = v00 + 1
    v01 = v00 + (nx + 1)
    v11 = v01 + 1

    if diagonal == "sw_ne":
        lower = np.column_stack([v00, v10, v11])
        upper = np.column_stack([v00, v11, v01])
    else:
        lower = np.column_stack([v00, v10, v01])
        upper = np.column_stack([v10, v11, v01])
    # cell-major: the two halves of a cell are neighbours in the list
    triangles = np.stack([lower, upper], axis=1).reshape(-1, 3)
    return make_mesh(vertices, triangles, bb, level=1)


def mesh_edges(mesh: TriangleMesh) -> Tuple[np.ndarray, np.ndarray]:
    """
    returns: (edges, tri_edges)
      edges:     (E,2) vertex pairs with a<b, lexicographically sorted
      tri_edges: (T,3) local edge j joins local vertices (j, j+1 mod 3)
    """
    t = mesh.triangles
    local = np.stack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]], axis=1)  # (T,3,2)
    pairs = np.sort(local.reshape(-1, 2), axis=1)
    edges, inverse = np.unique(pairs, axis=0, return_inverse=True)
    return edges, inverse.reshape(-1, 3)


def refine_uniform(mesh: TriangleMesh) -> TriangleMesh:
    """Red refinement: every triangle split into four via its edge midpoints."""
    edges, tri_edges = mesh_edges(mesh)
    nv = mesh.n_vertices
    mids = 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])
    vertices = np.vstack([mesh.vertices, mids])

    a, b, c = mesh.triangles[:, 0], mesh.triangles[:, 1], mesh.triangles[:, 2]
    mab = nv + tri_edges[:, 0]
    mbc = nv + tri_edges[:, 1]
    mca = nv + tri_edges[:, 2]
    children = np.stack(
        [
            np.column_stack([a, mab, mca]),
            np.column_stack([mab, b, mbc]),
            np.column_stack([mca, mbc, c]),
            np.column_stack([mab, mbc, mca]),
        ],
        axis=1,
    ).reshape(-1, 3)
    parents = np.repeat(np.arange(mesh.n_triangles, dtype=np.int64), 4)
    return make_mesh(vertices, children, mesh.bbox, level=mesh.level + 1, parents=parents)


def affine_maps(mesh: TriangleMesh) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Vectorised F_T for all triangles: (origins (T,2), J (T,2,2), det (T,), J^{-T} (T,2,2))."""
    v = mesh.vertices
    t = mesh.triangles
    p0 = v[t[:, 0]]
    J = np.empty((len(t), 2, 2))
    J[:, :, 0] = v[t[:, 1]] - p0
    J[:, :, 1] = v[t[:, 2]] - p0
    det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    inv_t = np.empty_like(J)
    inv_t[:, 0, 0] = J[:, 1, 1] / det
    inv_t[:, 0, 1] = -J[:, 1, 0] / det
    inv_t[:, 1, 0] = -J[:, 0, 1] / det
    inv_t[:, 1, 1] = J[:, 0, 0] / det
    return p0, J, det, inv_t


def affine_map(mesh: TriangleMesh, triangle_index: int) -> AffineMap:
    n = mesh.n_triangles
    if int(triangle_index) != triangle_index or not (0 <= triangle_index < n):
        raise ValueError(f"triangle index {triangle_index!r} out of range 0..{n - 1}")
    tri = mesh.triangles[int(triangle_index)]
    p0 = mesh.vertices[tri[0]].copy()
    J = np.column_stack([mesh.vertices[tri[1]] - p0, mesh.vertices[tri[2]] - p0])
    det = float(J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0])
    inv_t = np.array([[J[1, 1], -J[1, 0]], [-J[0, 1], J[0, 0]]]) / det
    return AffineMap(origin=p0, jacobian=J, det=det, inv_t=inv_t)


def mesh_size(mesh: TriangleMesh) -> float:
    edges, _ = mesh_edges(mesh)
    d = mesh.vertices[edges[:, 1]] - mesh.vertices[edges[:, 0]]
    return float(np.sqrt((d * d).sum(axis=1)).max())


def triangle_areas(mesh: TriangleMesh) -> np.ndarray:
    return _signed_areas(mesh.vertices, mesh.triangles)


def euler_characteristic(mesh: TriangleMesh) -> int:
    edges, _ = mesh_edges(mesh)
    return mesh.n_vertices - len(edges) + mesh.n_triangles


def build_level_mesh(bbox, nx: int, level: int, diagonal: str = "sw_ne") -> TriangleMesh:
    if level < 1:
        raise ValueError(f"level must be >= 1, got {level}")
    m = build_rect_mesh(bbox, nx, diagonal=diagonal)
    for _ in range(level - 1):
        m = refine_uniform(m)
    return m
