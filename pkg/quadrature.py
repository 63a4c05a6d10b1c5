# quadrature.py
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import factorial
from typing import Callable, Dict, List

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

from mesh import AffineMap, TriangleMesh, affine_maps

MAX_DEGREE = 10
REF_AREA = 0.5


class UnsupportedDegreeError(ValueError):
    pass


@dataclass(frozen=True)
class QuadRule:
    """Points in reference coordinates of T̂ = {x>0, y>0, x+y<1}; weights sum to |T̂| = 1/2."""

    points: np.ndarray
    weights: np.ndarray
    exactness_degree: int

    @property
    def n_points(self) -> int:
        return int(self.weights.shape[0])


# -------------------------
# tabulated symmetric rules
# -------------------------
def _orbit3(a: float) -> List[List[float]]:
    # (a, a, 1-2a) and its rotations, as (x, y) reference coordinates
    b = 1.0 - 2.0 * a
    return [[a, a], [b, a], [a, b]]


def _centroid_rule() -> QuadRule:
    return QuadRule(np.array([[1.0 / 3.0, 1.0 / 3.0]]), np.array([REF_AREA]), 1)


def _three_point_rule() -> QuadRule:
    pts = _orbit3(1.0 / 6.0)
    return QuadRule(np.array(pts), np.full(3, REF_AREA / 3.0), 2)


def _six_point_rule() -> QuadRule:
    # Dunavant, degree 4
    a1 = 0.445948490915964886320
    w1 = 0.22338158967801146570
    a2 = 0.091576213509770743460
    w2 = 0.10995174365532186764
    pts = _orbit3(a1) + _orbit3(a2)
    wts = [w1] * 3 + [w2] * 3
    return QuadRule(np.array(pts), REF_AREA * np.array(wts), 4)


def _seven_point_rule() -> QuadRule:
    # Radon, degree 5 (closed form)
    s15 = np.sqrt(15.0)
    a1 = (6.0 - s15) / 21.0
    a2 = (6.0 + s15) / 21.0
    pts = [[1.0 / 3.0, 1.0 / 3.0]] + _orbit3(a1) + _orbit3(a2)
    wts = [9.0 / 80.0] + [(155.0 - s15) / 2400.0] * 3 + [(155.0 + s15) / 2400.0] * 3
    return QuadRule(np.array(pts), np.array(wts), 5)


def _collapsed_gauss_rule(n: int) -> QuadRule:
    """
    n x n conical product rule (Gauss-Jacobi(1,0) in x, Gauss-Legendre in t),
    y = t (1 - x), made symmetric: 6 n^2 points, exact for total degree 2n - 1.
    """
    zj, wj = roots_jacobi(n, 1.0, 0.0)
    zl, wl = roots_legendre(n)
    x = 0.5 * (1.0 + zj)
    t = 0.5 * (1.0 + zl)
    X = np.repeat(x, n)
    Y = np.tile(t, n) * (1.0 - X)
    W = np.outer(wj, wl).ravel() / 8.0
    return _symmetrized(QuadRule(np.column_stack([X, Y]), W, 2 * n - 1))


def _symmetrized(rule: QuadRule) -> QuadRule:
    """Average a rule over the six vertex permutations of T̂; exactness is kept."""
    x, y = rule.points[:, 0], rule.points[:, 1]
    lam = np.column_stack([1.0 - x - y, x, y])
    perms = ((0, 1, 2), (1, 2, 0), (2, 0, 1), (0, 2, 1), (2, 1, 0), (1, 0, 2))
    pts = np.vstack([lam[:, [p[1], p[2]]] for p in perms])
    wts = np.tile(rule.weights, len(perms)) / len(perms)
    return QuadRule(pts, wts, rule.exactness_degree)


@lru_cache(maxsize=None)
def _stored_rules() -> Dict[int, QuadRule]:
    rules = [_centroid_rule(), _three_point_rule(), _six_point_rule(), _seven_point_rule()]
    rules += [_collapsed_gauss_rule(n) for n in (4, 5, 6)]
    out: Dict[int, QuadRule] = {}
    for r in rules:
        r.points.setflags(write=False)
        r.weights.setflags(write=False)
        out[r.exactness_degree] = r
    return out


def stored_rules() -> List[QuadRule]:
    return [r for _, r in sorted(_stored_rules().items())]


# -------------------------
# operations
# -------------------------
def get_rule(degree: int) -> QuadRule:
    """Smallest stored rule with exactness_degree >= degree."""
    if int(degree) != degree or degree < 1:
        raise ValueError(f"quadrature degree must be an integer >= 1, got {degree!r}")
    if degree > MAX_DEGREE:
        raise UnsupportedDegreeError(f"quadrature degree {degree} > {MAX_DEGREE} is not tabulated")
    for d, rule in sorted(_stored_rules().items()):
        if d >= degree:
            return rule
    raise UnsupportedDegreeError(f"no stored rule reaches degree {degree}")


def integrate_on_triangle(rule: QuadRule, amap: AffineMap, integrand: Callable[[np.ndarray], np.ndarray]) -> float:
    pts = amap(rule.points)
    vals = np.asarray(integrand(pts), dtype=float).reshape(-1)
    return float(amap.det * np.dot(rule.weights, vals))


def physical_points(rule: QuadRule, mesh: TriangleMesh) -> np.ndarray:
    """Quadrature points mapped into every triangle: (T, nq, 2)."""
    p0, J, _, _ = affine_maps(mesh)
    return p0[:, None, :] + np.einsum("tab,qb->tqa", J, rule.points)


def integrate_over_mesh(rule: QuadRule, mesh: TriangleMesh, integrand: Callable[[np.ndarray], np.ndarray]) -> float:
    _, _, det, _ = affine_maps(mesh)
    pts = physical_points(rule, mesh)
    vals = np.asarray(integrand(pts), dtype=float).reshape(pts.shape[:2])
    return float(np.sum(det * (vals @ rule.weights)))


def exact_monomial_integral(a: int, b: int) -> float:
    """∫_T̂ x^a y^b = a! b! / (a+b+2)!"""
    return factorial(a) * factorial(b) / factorial(a + b + 2)
