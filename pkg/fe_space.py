# fe_space.py
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable, Tuple

import numpy as np

from mesh import TriangleMesh, affine_maps, mesh_edges, on_boundary
from quadrature import QuadRule, physical_points

SUPPORTED_DEGREES = (1, 2)


class UnsupportedElementError(ValueError):
    pass


class Continuity(str, Enum):
    CONTINUOUS = "continuous"
    DISCONTINUOUS = "discontinuous"


# Lagrange nodes on T̂; for k=2 the edge nodes follow local edges (0,1),(1,2),(2,0)
REF_NODES = {
    1: np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]),
    2: np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.5, 0.0], [0.5, 0.5], [0.0, 0.5]]),
}
_LOCAL_EDGES = ((0, 1), (1, 2), (2, 0))
_GRAD_LAMBDA = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])


def n_local_dofs(k: int) -> int:
    return (k + 1) * (k + 2) // 2


# -------------------------
# reference basis
# -------------------------
def reference_basis(k: int, ref_points) -> Tuple[np.ndarray, np.ndarray]:
    """
    P_k Lagrange basis on T̂.
    returns: values (n, nloc), ref_gradients (n, nloc, 2)
    """
    if k not in SUPPORTED_DEGREES:
        raise UnsupportedElementError(f"Lagrange degree {k} not supported (use one of {SUPPORTED_DEGREES})")
    p = np.asarray(ref_points, dtype=float).reshape(-1, 2)
    lam = np.column_stack([1.0 - p[:, 0] - p[:, 1], p[:, 0], p[:, 1]])  # (n,3)
    n = len(p)

    if k == 1:
        values = lam
        grads = np.broadcast_to(_GRAD_LAMBDA, (n, 3, 2)).copy()
        return values, grads

    values = np.empty((n, 6))
    grads = np.empty((n, 6, 2))
    for i in range(3):
        values[:, i] = lam[:, i] * (2.0 * lam[:, i] - 1.0)
        grads[:, i, :] = (4.0 * lam[:, i] - 1.0)[:, None] * _GRAD_LAMBDA[i]
    for j, (a, b) in enumerate(_LOCAL_EDGES):
        values[:, 3 + j] = 4.0 * lam[:, a] * lam[:, b]
        grads[:, 3 + j, :] = 4.0 * (lam[:, a, None] * _GRAD_LAMBDA[b] + lam[:, b, None] * _GRAD_LAMBDA[a])
    return values, grads


# -------------------------
# types
# -------------------------
@dataclass(frozen=True)
class FunctionSpace:
    mesh: TriangleMesh
    degree: int
    continuity: Continuity
    dof_map: np.ndarray  # (T, nloc) global DOF of each local basis function
    n_dofs: int
    boundary_dofs: np.ndarray  # sorted, empty for DISCONTINUOUS
    dof_coords: np.ndarray  # (n_dofs, 2)

    @property
    def n_local(self) -> int:
        return n_local_dofs(self.degree)

    @property
    def is_continuous(self) -> bool:
        return self.continuity is Continuity.CONTINUOUS


@dataclass
class FeFunction:
    space: FunctionSpace
    coefficients: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=float).reshape(-1)
        if c.shape[0] != self.space.n_dofs:
            raise ValueError(f"coefficient length {c.shape[0]} != n_dofs {self.space.n_dofs}")
        self.coefficients = c


# -------------------------
# operations
# -------------------------
def build_space(mesh: TriangleMesh, k: int, continuity=Continuity.CONTINUOUS) -> FunctionSpace:
    if k not in SUPPORTED_DEGREES:
        raise UnsupportedElementError(f"Lagrange degree {k!r} not supported (use one of {SUPPORTED_DEGREES})")
    continuity = Continuity(continuity)
    nloc = n_local_dofs(k)

    if continuity is Continuity.DISCONTINUOUS:
        T = mesh.n_triangles
        dof_map = np.arange(T * nloc, dtype=np.int64).reshape(T, nloc)
        p0, J, _, _ = affine_maps(mesh)
        coords = (p0[:, None, :] + np.einsum("tab,nb->tna", J, REF_NODES[k])).reshape(-1, 2)
        boundary = np.empty(0, dtype=np.int64)
    else:
        nv = mesh.n_vertices
        if k == 1:
            dof_map = mesh.triangles.astype(np.int64).copy()
            coords = mesh.vertices.copy()
        else:
            edges, tri_edges = mesh_edges(mesh)
            dof_map = np.hstack([mesh.triangles, nv + tri_edges]).astype(np.int64)
            mids = 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])
            coords = np.vstack([mesh.vertices, mids])
        boundary = np.nonzero(on_boundary(coords, mesh.bbox))[0].astype(np.int64)

    for arr in (dof_map, coords, boundary):
        arr.setflags(write=False)
    return FunctionSpace(
        mesh=mesh,
        degree=k,
        continuity=continuity,
        dof_map=dof_map,
        n_dofs=int(coords.shape[0]),
        boundary_dofs=boundary,
        dof_coords=coords,
    )


def _check_triangle(space: FunctionSpace, triangle_index: int) -> int:
    n = space.mesh.n_triangles
    if int(triangle_index) != triangle_index or not (0 <= triangle_index < n):
        raise ValueError(f"triangle index {triangle_index!r} out of range 0..{n - 1}")
    return int(triangle_index)


def eval_basis(space: FunctionSpace, triangle_index: int, ref_point) -> Tuple[np.ndarray, np.ndarray]:
    """Local basis values (nloc,) and reference gradients (nloc, 2) at one point of T̂."""
    _check_triangle(space, triangle_index)
    values, grads = reference_basis(space.degree, ref_point)
    return values[0], grads[0]


def interpolate(space: FunctionSpace, fn: Callable[[np.ndarray], np.ndarray]) -> FeFunction:
    vals = np.asarray(fn(space.dof_coords), dtype=float)
    vals = np.broadcast_to(vals, (space.n_dofs,)).copy()
    return FeFunction(space, vals)


def eval_function(fe: FeFunction, triangle_index: int, ref_point) -> Tuple[float, np.ndarray]:
    """(value, physical gradient) of fe at F_T(ref_point)."""
    t = _check_triangle(fe.space, triangle_index)
    values, grads = reference_basis(fe.space.degree, ref_point)
    c = fe.coefficients[fe.space.dof_map[t]]
    _, _, _, inv_t = affine_maps(fe.space.mesh)
    ref_grad = c @ grads[0]
    return float(c @ values[0]), inv_t[t] @ ref_grad


@dataclass(frozen=True)
class Tabulation:
    """Basis data at the points of one quadrature rule, for every triangle."""

    values: np.ndarray  # (nq, nloc)
    grads: np.ndarray  # (T, nq, nloc, 2) physical gradients
    wdet: np.ndarray  # (T, nq) weight * |det J|
    points: np.ndarray  # (T, nq, 2) physical points


def tabulate(space: FunctionSpace, rule: QuadRule) -> Tabulation:
    values, ref_grads = reference_basis(space.degree, rule.points)
    _, _, det, inv_t = affine_maps(space.mesh)
    grads = np.einsum("tab,qib->tqia", inv_t, ref_grads)
    wdet = det[:, None] * rule.weights[None, :]
    return Tabulation(values=values, grads=grads, wdet=wdet, points=physical_points(rule, space.mesh))


def evaluate(fe: FeFunction, tab: Tabulation) -> Tuple[np.ndarray, np.ndarray]:
    """Values (T, nq) and physical gradients (T, nq, 2) of fe at the tabulated points."""
    c = fe.coefficients[fe.space.dof_map]  # (T, nloc)
    vals = c @ tab.values.T
    grads = np.einsum("ti,tqia->tqa", c, tab.grads)
    return vals, grads


def gradient_components(fe: FeFunction) -> Tuple[FeFunction, FeFunction]:
    """
    ∇u_h as two functions of the discontinuous space of the same degree.
    Exact: each component is P_{k-1} on every triangle.
    """
    space = fe.space
    dg = build_space(space.mesh, space.degree, Continuity.DISCONTINUOUS)
    _, ref_grads = reference_basis(space.degree, REF_NODES[space.degree])
    _, _, _, inv_t = affine_maps(space.mesh)
    c = fe.coefficients[space.dof_map]
    g_ref = np.einsum("ti,nia->tna", c, ref_grads)  # (T, nloc, 2)
    g = np.einsum("tab,tnb->tna", inv_t, g_ref)
    return FeFunction(dg, g[:, :, 0].ravel()), FeFunction(dg, g[:, :, 1].ravel())


def vertex_values(fe: FeFunction) -> np.ndarray:
    """Nodal values at mesh vertices; discontinuous functions are averaged over incident triangles."""
    space = fe.space
    mesh = space.mesh
    if space.is_continuous:
        return fe.coefficients[: mesh.n_vertices].copy()
    local = fe.coefficients[space.dof_map[:, :3]]  # local dofs 0..2 sit on the vertices
    idx = mesh.triangles.ravel()
    sums = np.bincount(idx, weights=local.ravel(), minlength=mesh.n_vertices)
    counts = np.bincount(idx, minlength=mesh.n_vertices)
    return sums / np.maximum(counts, 1)
