# problems.py
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, List, Tuple

import numpy as np

from mesh import BBox

Field = Callable[[np.ndarray], np.ndarray]

PAPER_BBOX: BBox = (-1.0, 1.0, -1.0, 1.0)
UNIT_BBOX: BBox = (0.0, 1.0, 0.0, 1.0)


class UnknownProblemError(ValueError):
    pass


@dataclass(frozen=True)
class ManufacturedProblem:
    """
    Exact solution data for -Δu = f with Dirichlet data u on ∂Ω.
    All callables take points of shape (..., 2); exact_grad returns (..., 2).
    """

    name: str
    bbox: BBox
    exact_u: Field
    exact_grad: Field
    source: Field
    description: str = ""


def _xy(p) -> Tuple[np.ndarray, np.ndarray]:
    p = np.asarray(p, dtype=float)
    return p[..., 0], p[..., 1]


# -------------------------
# Gaussian bump times (x - y), centred at (0.5, 0.5)
# -------------------------
def _gauss_envelope(p):
    x, y = _xy(p)
    return np.exp(-5.0 * (x - 0.5) * (x - 0.5) - 5.0 * (y - 0.5) * (y - 0.5))


def _gauss_u(p):
    x, y = _xy(p)
    return (x - y) * _gauss_envelope(p)


def _gauss_grad(p):
    x, y = _xy(p)
    e = _gauss_envelope(p)
    gx = -10.0 * (x - 0.5)
    gy = -10.0 * (y - 0.5)
    return np.stack([e * (1.0 + (x - y) * gx), e * (-1.0 + (x - y) * gy)], axis=-1)


def _gauss_f(p):
    x, y = _xy(p)
    r2 = (x - 0.5) ** 2 + (y - 0.5) ** 2
    return (x - y) * _gauss_envelope(p) * (40.0 - 100.0 * r2)


# -------------------------
# polynomial and trigonometric solutions
# -------------------------
def _linear_u(p):
    x, _ = _xy(p)
    return x.copy()


def _linear_grad(p):
    x, _ = _xy(p)
    return np.stack([np.ones_like(x), np.zeros_like(x)], axis=-1)


def _zero(p):
    x, _ = _xy(p)
    return np.zeros_like(x)


def _quad_u(p):
    x, y = _xy(p)
    return x * x + y * y


def _quad_grad(p):
    x, y = _xy(p)
    return np.stack([2.0 * x, 2.0 * y], axis=-1)


def _quad_f(p):
    x, _ = _xy(p)
    return np.full_like(x, -4.0)


def _sine_u(p):
    x, y = _xy(p)
    return np.sin(np.pi * x) * np.sin(np.pi * y)


def _sine_grad(p):
    x, y = _xy(p)
    return np.stack(
        [np.pi * np.cos(np.pi * x) * np.sin(np.pi * y), np.pi * np.sin(np.pi * x) * np.cos(np.pi * y)],
        axis=-1,
    )


def _sine_f(p):
    return 2.0 * np.pi * np.pi * _sine_u(p)


def builtin_problems() -> List[ManufacturedProblem]:
    return [
        ManufacturedProblem(
            name="paper_gaussian",
            bbox=PAPER_BBOX,
            exact_u=_gauss_u,
            exact_grad=_gauss_grad,
            source=_gauss_f,
            description="u = (x-y) exp(-5(x-0.5)^2 - 5(y-0.5)^2) on [-1,1]^2",
        ),
        ManufacturedProblem(
            name="linear_patch",
            bbox=UNIT_BBOX,
            exact_u=_linear_u,
            exact_grad=_linear_grad,
            source=_zero,
            description="u = x on [0,1]^2 (patch test)",
        ),
        ManufacturedProblem(
            name="quadratic",
            bbox=UNIT_BBOX,
            exact_u=_quad_u,
            exact_grad=_quad_grad,
            source=_quad_f,
            description="u = x^2 + y^2, f = -4 on [0,1]^2",
        ),
        ManufacturedProblem(
            name="sine_bubble",
            bbox=PAPER_BBOX,
            exact_u=_sine_u,
            exact_grad=_sine_grad,
            source=_sine_f,
            description="u = sin(pi x) sin(pi y) on [-1,1]^2, zero boundary data",
        ),
    ]


def problem_names() -> List[str]:
    return [p.name for p in builtin_problems()]


def get_problem(name: str) -> ManufacturedProblem:
    key = (name or "").strip().lower()
    by_name: Dict[str, ManufacturedProblem] = {p.name: p for p in builtin_problems()}
    if key not in by_name:
        raise UnknownProblemError(f"unknown problem {name!r}; builtin problems: {', '.join(by_name)}")
    return by_name[key]


def constant_problem(c: float, bbox: BBox = UNIT_BBOX) -> ManufacturedProblem:
    """u ≡ c, f ≡ 0."""

    def _u(p):
        x, _ = _xy(p)
        return np.full_like(x, float(c))

    def _g(p):
        x, _ = _xy(p)
        return np.zeros(x.shape + (2,))

    return ManufacturedProblem(name=f"constant_{c:g}", bbox=bbox, exact_u=_u, exact_grad=_g, source=_zero)


# -------------------------
# finite-difference consistency checks
# -------------------------
def check_manufactured(
    problem: ManufacturedProblem,
    n_points: int = 50,
    seed: int = 0,
    grad_step: float = 1e-6,
    lap_step: float = 1e-4,
) -> Dict[str, float]:
    """
    Compare exact_grad with central differences of exact_u and source with the
    negated 5-point Laplacian, at random interior points.
    returns: {"grad_err": max abs diff, "source_err": max abs diff}
    """
    rng = np.random.default_rng(seed)
    xmin, xmax, ymin, ymax = problem.bbox
    margin = 1e-2 * min(xmax - xmin, ymax - ymin)
    pts = np.column_stack(
        [rng.uniform(xmin + margin, xmax - margin, n_points), rng.uniform(ymin + margin, ymax - margin, n_points)]
    )
    u = problem.exact_u
    ex = np.array([1.0, 0.0])
    ey = np.array([0.0, 1.0])

    h = grad_step
    fd_grad = np.column_stack(
        [(u(pts + h * ex) - u(pts - h * ex)) / (2 * h), (u(pts + h * ey) - u(pts - h * ey)) / (2 * h)]
    )
    grad_err = float(np.abs(fd_grad - problem.exact_grad(pts)).max())

    h = lap_step
    lap = (u(pts + h * ex) + u(pts - h * ex) + u(pts + h * ey) + u(pts - h * ey) - 4.0 * u(pts)) / (h * h)
    source_err = float(np.abs(-lap - problem.source(pts)).max())
    return {"grad_err": grad_err, "source_err": source_err}
