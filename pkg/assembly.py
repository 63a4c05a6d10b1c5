# assembly.py
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Tuple

import numpy as np
import scipy.sparse as sp

from fe_space import Continuity, FeFunction, FunctionSpace, Tabulation, build_space, evaluate, tabulate
from linalg import DEFAULT_TOL, SolveReport, as_csr, cg_solve, dense_solve
from mesh import TriangleMesh
from problems import ManufacturedProblem, builtin_problems  # noqa: F401  (re-exported)
from quadrature import get_rule

CANONICAL_ALPHA = 2.0
CANONICAL_GAMMA = -4.0


class DegenerateProblemError(RuntimeError):
    pass


class SigmaSpaceKind(str, Enum):
    EQUAL_ORDER_CONTINUOUS = "equal_order"
    DISCONTINUOUS = "dg"


# -------------------------
# quadrature degrees
# -------------------------
def matrix_quad_degree(k: int) -> int:
    return 2 * k


def data_quad_degree(k: int) -> int:
    # anything touching f or the exact solution
    return max(2 * k + 2, 6)


# -------------------------
# types
# -------------------------
@dataclass(frozen=True)
class TwoFieldProblem:
    manufactured: ManufacturedProblem
    u_space: FunctionSpace
    sigma_space_kind: SigmaSpaceKind = SigmaSpaceKind.EQUAL_ORDER_CONTINUOUS
    alpha: float = CANONICAL_ALPHA
    gamma: float = CANONICAL_GAMMA

    def __post_init__(self):
        if not (np.isfinite(self.alpha) and self.alpha > 0):
            raise ValueError(f"alpha must be > 0, got {self.alpha!r}")
        if not np.isfinite(self.gamma):
            raise ValueError(f"gamma must be finite, got {self.gamma!r}")
        if not self.u_space.is_continuous:
            raise ValueError("u_space must be a continuous Lagrange space")
        object.__setattr__(self, "sigma_space_kind", SigmaSpaceKind(self.sigma_space_kind))

    def sigma_space(self) -> FunctionSpace:
        """One scalar component of σ_h; the vector space is two stacked copies."""
        if self.sigma_space_kind is SigmaSpaceKind.EQUAL_ORDER_CONTINUOUS:
            return self.u_space
        return build_space(self.u_space.mesh, self.u_space.degree, Continuity.DISCONTINUOUS)


@dataclass
class AssembledSystem:
    """
    Reduced SPD system on the free DOFs.

    Full unknown vector layout: [u (n_u) | σ¹ (n_sigma) | σ² (n_sigma)];
    Galerkin systems have n_sigma = 0.
    """

    matrix: sp.csr_matrix
    rhs: np.ndarray
    free_dofs: np.ndarray  # indices into the full vector
    fixed_dofs: np.ndarray  # eliminated Dirichlet u-DOFs
    lift: np.ndarray  # full-length vector, boundary values at fixed_dofs, zero elsewhere
    u_space: FunctionSpace
    sigma_space: Optional[FunctionSpace] = None
    n_u: int = 0
    n_sigma: int = 0
    full_matrix: Optional[sp.csr_matrix] = field(default=None, repr=False)
    full_rhs: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def dimension(self) -> int:
        return int(self.matrix.shape[0])

    @property
    def dof_partition(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(free u-DOFs, σ-DOFs, eliminated boundary DOFs) as full-vector indices."""
        free_u = self.free_dofs[self.free_dofs < self.n_u]
        sigma = np.arange(self.n_u, self.n_u + 2 * self.n_sigma, dtype=np.int64)
        return free_u, sigma, self.fixed_dofs

    def expand(self, x_free) -> np.ndarray:
        x = self.lift.copy()
        x[self.free_dofs] = np.asarray(x_free, dtype=float).reshape(-1)
        return x


# -------------------------
# element kernels (all triangles at once)
# -------------------------
def _local_stiffness(tab: Tabulation) -> np.ndarray:
    return np.einsum("tq,tqia,tqja->tij", tab.wdet, tab.grads, tab.grads)


def _local_mass(tab: Tabulation) -> np.ndarray:
    return np.einsum("tq,qi,qj->tij", tab.wdet, tab.values, tab.values)


def _local_mixed(tab: Tabulation, component: int) -> np.ndarray:
    # (∂_c φ_j, ψ_i): rows σ test functions, columns u trial functions
    return np.einsum("tq,qi,tqj->tij", tab.wdet, tab.values, tab.grads[:, :, :, component])


def _local_load(tab: Tabulation, source) -> np.ndarray:
    f = np.asarray(source(tab.points), dtype=float).reshape(tab.wdet.shape)
    return np.einsum("tq,tq,qi->ti", tab.wdet, f, tab.values)


def _triplets(local: np.ndarray, row_map: np.ndarray, col_map: np.ndarray, row_off: int = 0, col_off: int = 0):
    nr = row_map.shape[1]
    nc = col_map.shape[1]
    rows = np.repeat(row_map[:, :, None], nc, axis=2) + row_off
    cols = np.repeat(col_map[:, None, :], nr, axis=1) + col_off
    return rows.ravel(), cols.ravel(), local.ravel()


def _assemble_vector(local: np.ndarray, dof_map: np.ndarray, n: int) -> np.ndarray:
    return np.bincount(dof_map.ravel(), weights=local.ravel(), minlength=n)


def _dirichlet_values(space: FunctionSpace, problem: ManufacturedProblem) -> np.ndarray:
    pts = space.dof_coords[space.boundary_dofs]
    return np.asarray(problem.exact_u(pts), dtype=float).reshape(-1)


def _eliminate(
    K: sp.csr_matrix,
    b: np.ndarray,
    fixed: np.ndarray,
    values: np.ndarray,
) -> Tuple[sp.csr_matrix, np.ndarray, np.ndarray, np.ndarray]:
    """Symmetric elimination: fold known columns into the rhs, drop fixed rows and columns."""
    n = K.shape[0]
    mask = np.ones(n, dtype=bool)
    mask[fixed] = False
    free = np.nonzero(mask)[0]
    lift = np.zeros(n)
    lift[fixed] = values
    K_rows = K[free]
    rhs = b[free] - K_rows @ lift
    return as_csr(K_rows[:, free]), rhs, free, lift


# -------------------------
# operations
# -------------------------
def assemble_two_field(problem: TwoFieldProblem, mesh: Optional[TriangleMesh] = None) -> AssembledSystem:
    """
    [ α²A   -αBᵀ ] [u]   [ -(γ/2)F ]
    [ -αB    2M  ] [σ] = [    0    ]
    with Dirichlet u-DOFs eliminated; σ carries no boundary condition.
    """
    u_space = problem.u_space
    if mesh is not None and mesh is not u_space.mesh:
        raise ValueError("mesh does not match the mesh of problem.u_space")
    s_space = problem.sigma_space()
    k = u_space.degree
    alpha, gamma = float(problem.alpha), float(problem.gamma)

    free_u = u_space.n_dofs - len(u_space.boundary_dofs)
    if free_u <= 0:
        raise DegenerateProblemError("no free u-DOFs: every DOF lies on the Dirichlet boundary")

    tab = tabulate(u_space, get_rule(matrix_quad_degree(k)))
    A = _local_stiffness(tab)
    M = _local_mass(tab)
    n_u = u_space.n_dofs
    n_s = s_space.n_dofs
    N = n_u + 2 * n_s

    um = u_space.dof_map
    sm = s_space.dof_map
    blocks = [_triplets(alpha * alpha * A, um, um)]
    for c in (0, 1):
        off = n_u + c * n_s
        B = _local_mixed(tab, c)
        blocks.append(_triplets(-alpha * B, sm, um, row_off=off))
        blocks.append(_triplets(-alpha * B.transpose(0, 2, 1), um, sm, col_off=off))
        blocks.append(_triplets(2.0 * M, sm, sm, row_off=off, col_off=off))
    rows = np.concatenate([b[0] for b in blocks])
    cols = np.concatenate([b[1] for b in blocks])
    vals = np.concatenate([b[2] for b in blocks])
    K = as_csr(sp.coo_matrix((vals, (rows, cols)), shape=(N, N)))

    tab_f = tabulate(u_space, get_rule(data_quad_degree(k)))
    F = _assemble_vector(_local_load(tab_f, problem.manufactured.source), um, n_u)
    b = np.zeros(N)
    b[:n_u] = -0.5 * gamma * F

    g = _dirichlet_values(u_space, problem.manufactured)
    Kr, rhs, free, lift = _eliminate(K, b, u_space.boundary_dofs, g)
    return AssembledSystem(
        matrix=Kr,
        rhs=rhs,
        free_dofs=free,
        fixed_dofs=u_space.boundary_dofs.copy(),
        lift=lift,
        u_space=u_space,
        sigma_space=s_space,
        n_u=n_u,
        n_sigma=n_s,
        full_matrix=K,
        full_rhs=b,
    )


def assemble_stiffness(u_space: FunctionSpace) -> sp.csr_matrix:
    """Full scalar stiffness (∇φ_j, ∇φ_i) over all DOFs, boundary rows included."""
    tab = tabulate(u_space, get_rule(matrix_quad_degree(u_space.degree)))
    rows, cols, vals = _triplets(_local_stiffness(tab), u_space.dof_map, u_space.dof_map)
    return as_csr(sp.coo_matrix((vals, (rows, cols)), shape=(u_space.n_dofs, u_space.n_dofs)))


def assemble_galerkin(manufactured: ManufacturedProblem, mesh: TriangleMesh, u_space: FunctionSpace) -> AssembledSystem:
    """(∇u, ∇v) = ℓ(v) with the same Dirichlet elimination."""
    if u_space.mesh is not mesh:
        raise ValueError("mesh does not match the mesh of u_space")
    if not u_space.is_continuous:
        raise ValueError("u_space must be a continuous Lagrange space")
    k = u_space.degree
    n_u = u_space.n_dofs
    if n_u - len(u_space.boundary_dofs) <= 0:
        raise DegenerateProblemError("no free u-DOFs: every DOF lies on the Dirichlet boundary")

    K = assemble_stiffness(u_space)

    tab_f = tabulate(u_space, get_rule(data_quad_degree(k)))
    F = _assemble_vector(_local_load(tab_f, manufactured.source), u_space.dof_map, n_u)

    g = _dirichlet_values(u_space, manufactured)
    Kr, rhs, free, lift = _eliminate(K, F, u_space.boundary_dofs, g)
    return AssembledSystem(
        matrix=Kr,
        rhs=rhs,
        free_dofs=free,
        fixed_dofs=u_space.boundary_dofs.copy(),
        lift=lift,
        u_space=u_space,
        n_u=n_u,
        full_matrix=K,
        full_rhs=F,
    )


# -------------------------
# solve helpers
# -------------------------
def solve_system(
    system: AssembledSystem,
    tol: float = DEFAULT_TOL,
    max_iter: Optional[int] = None,
    dense: bool = False,
) -> Tuple[np.ndarray, SolveReport]:
    """returns: (full coefficient vector incl. boundary values, report)"""
    if dense:
        x = dense_solve(system.matrix, system.rhs)
        nb = float(np.linalg.norm(system.rhs)) or 1.0
        res = float(np.linalg.norm(system.rhs - system.matrix @ x)) / nb
        report = SolveReport(iterations=0, residual=res, converged=True, tol=tol)
    else:
        x, report = cg_solve(system.matrix, system.rhs, tol=tol, max_iter=max_iter)
    return system.expand(x), report


def split_two_field(system: AssembledSystem, x_full: np.ndarray) -> Tuple[FeFunction, FeFunction, FeFunction]:
    n_u, n_s = system.n_u, system.n_sigma
    if system.sigma_space is None:
        raise ValueError("not a two-field system")
    u = FeFunction(system.u_space, x_full[:n_u].copy())
    s1 = FeFunction(system.sigma_space, x_full[n_u : n_u + n_s].copy())
    s2 = FeFunction(system.sigma_space, x_full[n_u + n_s : n_u + 2 * n_s].copy())
    return u, s1, s2


@dataclass
class TwoFieldSolution:
    u: FeFunction
    sigma: Tuple[FeFunction, FeFunction]
    report: SolveReport
    system: AssembledSystem


@dataclass
class GalerkinSolution:
    u: FeFunction
    report: SolveReport
    system: AssembledSystem


def solve_two_field(problem: TwoFieldProblem, tol: float = DEFAULT_TOL, max_iter=None, dense: bool = False) -> TwoFieldSolution:
    system = assemble_two_field(problem)
    x, report = solve_system(system, tol=tol, max_iter=max_iter, dense=dense)
    u, s1, s2 = split_two_field(system, x)
    return TwoFieldSolution(u=u, sigma=(s1, s2), report=report, system=system)


def solve_galerkin(
    manufactured: ManufacturedProblem,
    u_space: FunctionSpace,
    tol: float = DEFAULT_TOL,
    max_iter=None,
    dense: bool = False,
) -> GalerkinSolution:
    system = assemble_galerkin(manufactured, u_space.mesh, u_space)
    x, report = solve_system(system, tol=tol, max_iter=max_iter, dense=dense)
    return GalerkinSolution(u=FeFunction(u_space, x), report=report, system=system)


# -------------------------
# functionals
# -------------------------
def _data_tabulation(space: FunctionSpace) -> Tabulation:
    return tabulate(space, get_rule(data_quad_degree(space.degree)))


def evaluate_energy_K(fe_u: FeFunction, manufactured: ManufacturedProblem, mesh: Optional[TriangleMesh] = None) -> float:
    """K(v) = ½∫|∇v|² - ℓ(v)"""
    space = fe_u.space
    if mesh is not None and mesh is not space.mesh:
        raise ValueError("mesh does not match the mesh of fe_u")
    if not space.is_continuous:
        raise ValueError("K is defined for continuous functions only")
    tab = _data_tabulation(space)
    v, gv = evaluate(fe_u, tab)
    f = np.asarray(manufactured.source(tab.points), dtype=float).reshape(v.shape)
    dirichlet = 0.5 * np.sum(tab.wdet * np.sum(gv * gv, axis=-1))
    load = np.sum(tab.wdet * f * v)
    return float(dirichlet - load)


def evaluate_functional_J(
    fe_u: FeFunction,
    fe_sigma: Tuple[FeFunction, FeFunction],
    problem: TwoFieldProblem,
    mesh: Optional[TriangleMesh] = None,
) -> float:
    """J(v,τ) = ‖τ‖² + ‖τ - α∇v‖² + γ ℓ(v)"""
    space = fe_u.space
    if mesh is not None and mesh is not space.mesh:
        raise ValueError("mesh does not match the mesh of fe_u")
    s1, s2 = fe_sigma
    if s1.space.mesh is not space.mesh or s2.space.mesh is not space.mesh:
        raise ValueError("σ components live on a different mesh")
    rule = get_rule(data_quad_degree(max(space.degree, s1.space.degree, s2.space.degree)))
    tab_u = tabulate(space, rule)
    v, gv = evaluate(fe_u, tab_u)
    t1, _ = evaluate(s1, tabulate(s1.space, rule))
    t2, _ = evaluate(s2, tabulate(s2.space, rule))
    tau = np.stack([t1, t2], axis=-1)
    diff = tau - problem.alpha * gv
    f = np.asarray(problem.manufactured.source(tab_u.points), dtype=float).reshape(v.shape)
    w = tab_u.wdet
    return float(
        np.sum(w * np.sum(tau * tau, axis=-1))
        + np.sum(w * np.sum(diff * diff, axis=-1))
        + problem.gamma * np.sum(w * f * v)
    )
