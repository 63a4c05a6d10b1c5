# analysis.py
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from fe_space import FeFunction, evaluate, tabulate
from mesh import TriangleMesh
from quadrature import get_rule

FORMATS = ("csv", "markdown")

# (error attribute, column label)
ERROR_COLUMNS = (
    ("err_u_H1", "err_u_H1"),
    ("err_u_L2", "err_u_L2"),
    ("err_sigma1_L2", "err_s1_L2"),
    ("err_sigma2_L2", "err_s2_L2"),
)
HEADER = ["level", "h", "ndofs"] + [c for _, label in ERROR_COLUMNS for c in (label, "rate")]
FRAME_COLUMNS = ["level", "h", "ndofs"] + [c for _, label in ERROR_COLUMNS for c in (label, "rate_" + label[4:])]


def error_quad_degree(k: int) -> int:
    return max(2 * k + 2, 6)


def _check_mesh(fe: FeFunction, mesh: Optional[TriangleMesh]):
    if mesh is not None and mesh is not fe.space.mesh:
        raise ValueError("mesh does not match the mesh of the FE function")


def _sq_errors(fe: FeFunction, exact, exact_grad):
    tab = tabulate(fe.space, get_rule(error_quad_degree(fe.space.degree)))
    vals, grads = evaluate(fe, tab)
    l2 = semi = None
    if exact is not None:
        ex = np.asarray(exact(tab.points), dtype=float).reshape(vals.shape)
        # per-triangle contributions, reduced in element order
        l2 = float(np.sum(np.sum(tab.wdet * (vals - ex) ** 2, axis=1)))
    if exact_grad is not None:
        exg = np.asarray(exact_grad(tab.points), dtype=float).reshape(grads.shape)
        d = grads - exg
        semi = float(np.sum(np.sum(tab.wdet * np.sum(d * d, axis=-1), axis=1)))
    return l2, semi


def error_L2(fe: FeFunction, exact: Callable, mesh: Optional[TriangleMesh] = None) -> float:
    _check_mesh(fe, mesh)
    l2, _ = _sq_errors(fe, exact, None)
    return math.sqrt(max(l2, 0.0))


def error_H1(fe: FeFunction, exact: Callable, exact_grad: Callable, mesh: Optional[TriangleMesh] = None) -> float:
    """Full H¹ norm: sqrt(‖u - u_h‖₀² + |u - u_h|₁²)."""
    _check_mesh(fe, mesh)
    l2, semi = _sq_errors(fe, exact, exact_grad)
    return math.sqrt(max(l2 + semi, 0.0))


def error_grad_L2(fe: FeFunction, exact_grad: Callable, mesh: Optional[TriangleMesh] = None) -> Tuple[float, float]:
    """L² errors of ∂₁u_h and ∂₂u_h against the components of exact_grad."""
    _check_mesh(fe, mesh)
    tab = tabulate(fe.space, get_rule(error_quad_degree(fe.space.degree)))
    _, grads = evaluate(fe, tab)
    exg = np.asarray(exact_grad(tab.points), dtype=float).reshape(grads.shape)
    d2 = (grads - exg) ** 2
    return (
        math.sqrt(float(np.sum(np.sum(tab.wdet * d2[..., 0], axis=1)))),
        math.sqrt(float(np.sum(np.sum(tab.wdet * d2[..., 1], axis=1)))),
    )


# -------------------------
# tables
# -------------------------
@dataclass
class LevelResult:
    level: int
    h: float
    n_dofs: int
    err_u_H1: float
    err_u_L2: float
    err_sigma1_L2: float
    err_sigma2_L2: float
    iterations: int = 0
    wall_time: float = 0.0
    converged: bool = True

    def __post_init__(self):
        for name, _ in ERROR_COLUMNS:
            v = getattr(self, name)
            if not (v >= 0.0):
                raise ValueError(f"{name} must be >= 0, got {v!r}")


def _rate(prev: float, cur: float) -> Optional[float]:
    if not (prev > 0.0 and cur > 0.0) or not (math.isfinite(prev) and math.isfinite(cur)):
        return None
    return math.log2(prev / cur)


@dataclass
class ConvergenceTable:
    results: List[LevelResult]
    # rates[name][i] compares level i-1 with level i; rates[name][0] is always None
    rates: dict = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return all(r.converged for r in self.results)

    def final_rates(self) -> dict:
        return {name: (vals[-1] if vals else None) for name, vals in self.rates.items()}

    def to_frame(self) -> pd.DataFrame:
        rows = []
        for i, r in enumerate(self.results):
            row = {"level": r.level, "h": r.h, "ndofs": r.n_dofs}
            for name, label in ERROR_COLUMNS:
                row[label] = getattr(r, name)
                rate = self.rates[name][i]
                row["rate_" + label[4:]] = np.nan if rate is None else rate
            rows.append(row)
        return pd.DataFrame(rows, columns=FRAME_COLUMNS)


def convergence_rates(results: Sequence[LevelResult]) -> ConvergenceTable:
    """rate(l) = log₂(err(l-1)/err(l)); blank where either error is zero."""
    results = sorted(results, key=lambda r: r.level)
    if not results:
        raise ValueError("convergence_rates needs at least one level")
    rates = {}
    for name, _ in ERROR_COLUMNS:
        errs = [getattr(r, name) for r in results]
        rates[name] = [None] + [_rate(a, b) for a, b in zip(errs[:-1], errs[1:])]
    return ConvergenceTable(results=list(results), rates=rates)


def _formatted_rows(table: ConvergenceTable) -> List[List[str]]:
    rows = []
    for i, r in enumerate(table.results):
        row = [str(r.level), f"{r.h:.5e}", str(r.n_dofs)]
        for name, _ in ERROR_COLUMNS:
            rate = table.rates[name][i]
            row += [f"{getattr(r, name):.5e}", "" if rate is None else f"{rate:.2f}"]
        rows.append(row)
    return rows


def _partial_note(table: ConvergenceTable) -> Optional[str]:
    bad = [r.level for r in table.results if not r.converged]
    if not bad:
        return None
    return f"partial: solver did not converge at level {bad[0]}"


def emit_table(table: ConvergenceTable, fmt: str = "csv") -> str:
    """
    CSV or markdown. A table holding a non-converged level ends with a note line
    ("# partial: ..." in CSV, an italic line in markdown).
    """
    fmt = (fmt or "").strip().lower()
    if fmt not in FORMATS:
        raise ValueError(f"unknown table format {fmt!r}; use one of {', '.join(FORMATS)}")
    rows = _formatted_rows(table)
    note = _partial_note(table)
    if fmt == "csv":
        df = pd.DataFrame(rows, columns=FRAME_COLUMNS, dtype=object)
        text = df.to_csv(index=False, header=HEADER, lineterminator="\n")
        return text + (f"# {note}\n" if note else "")

    out = ["| " + " | ".join(HEADER) + " |", "|" + "|".join(["---"] * len(HEADER)) + "|"]
    out += ["| " + " | ".join(row) + " |" for row in rows]
    if note:
        out += ["", f"*{note}*"]
    return "\n".join(out) + "\n"


def parse_table_csv(text: str) -> pd.DataFrame:
    """Inverse of emit_table(..., "csv"); rate columns come back as rate_u_H1, ..., blanks as NaN."""
    df = pd.read_csv(io.StringIO(text), header=0, comment="#")
    if len(df.columns) != len(HEADER):
        raise ValueError(f"expected {len(HEADER)} columns, got {len(df.columns)}")
    df.columns = FRAME_COLUMNS
    return df