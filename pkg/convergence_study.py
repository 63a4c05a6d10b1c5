# convergence_study.py
from __future__ import annotations

import argparse
import sys
import time
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Dict, Mapping, Optional, TextIO

import numpy as np
from tqdm import tqdm

from analysis import FORMATS, ConvergenceTable, LevelResult, convergence_rates, emit_table, error_H1, error_L2, error_grad_L2
from assembly import (
    CANONICAL_ALPHA,
    CANONICAL_GAMMA,
    DegenerateProblemError,
    SigmaSpaceKind,
    TwoFieldProblem,
    solve_galerkin,
    solve_two_field,
)
from env_loader import env_overrides, load_flat_config, load_project_env
from fe_space import build_space, vertex_values
from linalg import DEFAULT_TOL, NotPositiveDefiniteError, dump_matrix_market
from mesh import DIAGONALS, TriangleMesh, build_level_mesh, mesh_size, refine_uniform
from problems import get_problem
from run_log import TeeLogger, make_log_path
from vtk_export import write_vtk

METHODS = ("two_field", "galerkin")
SOLVERS = ("cg", "dense")
SIGMA_SPACES = tuple(k.value for k in SigmaSpaceKind)

EXIT_OK = 0
EXIT_BAD_ARGS = 2
EXIT_SOLVER = 3


@dataclass(frozen=True)
class RunConfig:
    problem: str = "paper_gaussian"
    levels: int = 6
    degree: int = 1
    sigma_space: str = SigmaSpaceKind.EQUAL_ORDER_CONTINUOUS.value
    alpha: float = CANONICAL_ALPHA
    gamma: float = CANONICAL_GAMMA
    method: str = "two_field"
    tol: float = DEFAULT_TOL
    max_iter: Optional[int] = None
    format: str = "csv"
    vtk_dir: Optional[str] = None
    output: Optional[str] = None
    nx: int = 4
    diagonal: str = "sw_ne"
    solver: str = "cg"
    matrix_dir: Optional[str] = None

    def __post_init__(self):
        get_problem(self.problem)  # UnknownProblemError lists the builtin names
        if self.levels < 1:
            raise ValueError(f"levels must be >= 1, got {self.levels}")
        if self.degree not in (1, 2):
            raise ValueError(f"degree must be 1 or 2, got {self.degree}")
        if self.sigma_space not in SIGMA_SPACES:
            raise ValueError(f"sigma_space must be one of {SIGMA_SPACES}, got {self.sigma_space!r}")
        if not (np.isfinite(self.alpha) and self.alpha > 0):
            raise ValueError(f"alpha must be > 0, got {self.alpha}")
        if not np.isfinite(self.gamma):
            raise ValueError(f"gamma must be finite, got {self.gamma}")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if not (self.tol > 0):
            raise ValueError(f"tol must be > 0, got {self.tol}")
        if self.max_iter is not None and self.max_iter < 1:
            raise ValueError(f"max_iter must be >= 1, got {self.max_iter}")
        if self.format not in FORMATS:
            raise ValueError(f"format must be one of {FORMATS}, got {self.format!r}")
        if self.nx < 1:
            raise ValueError(f"nx must be >= 1, got {self.nx}")
        if self.diagonal not in DIAGONALS:
            raise ValueError(f"diagonal must be one of {DIAGONALS}, got {self.diagonal!r}")
        if self.solver not in SOLVERS:
            raise ValueError(f"solver must be one of {SOLVERS}, got {self.solver!r}")

    @property
    def targets_exact_solution(self) -> bool:
        """σ_h → ∇u and u_h → u only for α = 2, γ = -4."""
        return self.method == "galerkin" or (self.alpha == CANONICAL_ALPHA and self.gamma == CANONICAL_GAMMA)


# -------------------------
# config layering
# -------------------------
CONFIG_KEYS = tuple(f.name for f in fields(RunConfig))


def _opt_str(v: str) -> Optional[str]:
    return v if v not in ("", "none", "None") else None


def _opt_int(v: str) -> Optional[int]:
    return None if v in ("", "none", "None") else int(v)


_CONVERTERS = {
    "problem": lambda v: v.strip().lower(),
    "levels": int,
    "degree": int,
    "sigma_space": lambda v: v.strip().lower(),
    "alpha": float,
    "gamma": float,
    "method": lambda v: v.strip().lower(),
    "tol": float,
    "max_iter": _opt_int,
    "format": lambda v: v.strip().lower(),
    "vtk_dir": _opt_str,
    "output": _opt_str,
    "nx": int,
    "diagonal": lambda v: v.strip().lower(),
    "solver": lambda v: v.strip().lower(),
    "matrix_dir": _opt_str,
}


def _convert(raw: Mapping[str, str], source: str) -> Dict[str, object]:
    out: Dict[str, object] = {}
    for k, v in raw.items():
        try:
            out[k] = _CONVERTERS[k](v)
        except (TypeError, ValueError) as e:
            raise ValueError(f"bad value {v!r} for {k!r} in {source}: {e}") from e
    return out


def build_config(
    flags: Optional[Mapping[str, object]] = None,
    config_path: Optional[str] = None,
    environ: Optional[Mapping[str, str]] = None,
) -> RunConfig:
    """
    defaults < P2F_* environment (project .env under the real environment) < config file < flags.
    An explicit environ mapping bypasses the .env lookup.
    """
    if environ is None:
        environ = load_project_env()
    values: Dict[str, object] = {}
    values.update(_convert(env_overrides(CONFIG_KEYS, environ=environ), "environment"))
    if config_path:
        values.update(_convert(load_flat_config(config_path, CONFIG_KEYS), str(config_path)))
    for k, v in (flags or {}).items():
        if k not in CONFIG_KEYS:
            raise ValueError(f"unknown config key {k!r}")
        if v is not None:
            values[k] = v
    return RunConfig(**values)


# -------------------------
# runs
# -------------------------
def _mesh_for(config: RunConfig, level: int) -> TriangleMesh:
    return build_level_mesh(get_problem(config.problem).bbox, config.nx, level, diagonal=config.diagonal)


def _component(fn, c: int):
    return lambda p: np.asarray(fn(p))[..., c]


def run_single(config: RunConfig, level: int, mesh: Optional[TriangleMesh] = None) -> LevelResult:
    """One solve on the given level; VTK of u_h, σ_h and the nodal error when vtk_dir is set."""
    if level < 1:
        raise ValueError(f"level must be >= 1, got {level}")
    problem = get_problem(config.problem)
    if mesh is None:
        mesh = _mesh_for(config, level)
    elif mesh.level != level:
        raise ValueError(f"mesh is level {mesh.level}, expected {level}")

    t0 = time.perf_counter()
    u_space = build_space(mesh, config.degree)
    if config.method == "two_field":
        tf = TwoFieldProblem(
            manufactured=problem,
            u_space=u_space,
            sigma_space_kind=SigmaSpaceKind(config.sigma_space),
            alpha=config.alpha,
            gamma=config.gamma,
        )
        sol = solve_two_field(tf, tol=config.tol, max_iter=config.max_iter, dense=config.solver == "dense")
        u_h, (s1, s2) = sol.u, sol.sigma
        e_s1 = error_L2(s1, _component(problem.exact_grad, 0))
        e_s2 = error_L2(s2, _component(problem.exact_grad, 1))
    else:
        sol = solve_galerkin(problem, u_space, tol=config.tol, max_iter=config.max_iter, dense=config.solver == "dense")
        u_h, s1, s2 = sol.u, None, None
        e_s1, e_s2 = error_grad_L2(u_h, problem.exact_grad)

    result = LevelResult(
        level=level,
        h=mesh_size(mesh),
        n_dofs=sol.system.dimension,
        err_u_H1=error_H1(u_h, problem.exact_u, problem.exact_grad),
        err_u_L2=error_L2(u_h, problem.exact_u),
        err_sigma1_L2=e_s1,
        err_sigma2_L2=e_s2,
        iterations=sol.report.iterations,
        wall_time=time.perf_counter() - t0,
        converged=sol.report.converged,
    )

    if config.vtk_dir:
        uv = vertex_values(u_h)
        point_data = {"u_h": uv, "error": uv - problem.exact_u(mesh.vertices)}
        if s1 is not None:
            point_data["sigma1_h"] = vertex_values(s1)
            point_data["sigma2_h"] = vertex_values(s2)
        write_vtk(
            mesh,
            Path(config.vtk_dir) / f"{_run_stem(config, level)}.vtk",
            point_data=point_data,
            title=f"{config.problem} level {level}",
        )
    if config.matrix_dir:
        dump_matrix_market(
            sol.system.matrix,
            Path(config.matrix_dir) / f"{_run_stem(config, level)}.mtx",
            comment=f"{config.method} system, {config.problem}, k={config.degree}, level {level}, free DOFs only",
        )
    return result


def _run_stem(config: RunConfig, level: int) -> str:
    return f"{config.problem}_{config.method}_k{config.degree}_level{level}"


def write_table(text: str, stream: Optional[TextIO] = None, output: Optional[str] = None) -> None:
    """Table text to stream (stdout by default) and, when set, to the output file."""
    out = stream if stream is not None else sys.stdout
    out.write(text)
    out.flush()
    if output:
        p = Path(output)
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(text, encoding="utf-8", newline="\n")


def run_convergence_study(
    config: RunConfig,
    log: Optional[TeeLogger] = None,
    stream: Optional[TextIO] = None,
) -> ConvergenceTable:
    """
    Levels 1..config.levels by uniform refinement. Stops at the first level whose
    solve does not converge; the returned table is then partial (table.converged False).
    The table goes to stream (stdout by default) and to config.output when set.
    """
    log = log or TeeLogger(quiet=True)
    mesh = _mesh_for(config, 1)
    results = []
    bar = tqdm(range(1, config.levels + 1), desc="levels", file=sys.stderr, disable=not sys.stderr.isatty())
    for level in bar:
        if level > 1:
            mesh = refine_uniform(mesh)
        r = run_single(config, level, mesh=mesh)
        results.append(r)
        log.log(
            "LEVEL",
            f"{level}: ndofs={r.n_dofs} iters={r.iterations} H1={r.err_u_H1:.5e} L2={r.err_u_L2:.5e} "
            f"time={r.wall_time:.2f}s",
        )
        if not r.converged:
            log.error(f"solver did not converge at level {level}; table is partial")
            break
    bar.close()

    table = convergence_rates(results)
    write_table(emit_table(table, config.format), stream, config.output)
    return table


# -------------------------
# CLI
# -------------------------
def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(description="Two-field Poisson convergence study")
    ap.add_argument("--problem", default=None, help="builtin problem name (default paper_gaussian)")
    ap.add_argument("--levels", type=int, default=None)
    ap.add_argument("--degree", type=int, default=None)
    ap.add_argument("--sigma-space", dest="sigma_space", default=None, choices=SIGMA_SPACES)
    ap.add_argument("--alpha", type=float, default=None)
    ap.add_argument("--gamma", type=float, default=None)
    ap.add_argument("--method", default=None, choices=METHODS)
    ap.add_argument("--tol", type=float, default=None, help="CG relative residual tolerance")
    ap.add_argument("--max-iter", dest="max_iter", type=int, default=None)
    ap.add_argument("--format", default=None, choices=FORMATS)
    ap.add_argument("--vtk-dir", dest="vtk_dir", default=None)
    ap.add_argument("--output", default=None, help="also write the table to this file")
    ap.add_argument("--nx", type=int, default=None, help="cells per side of the level-1 mesh")
    ap.add_argument("--diagonal", default=None, choices=DIAGONALS)
    ap.add_argument("--solver", default=None, choices=SOLVERS, help="cg, or dense Cholesky for small systems")
    ap.add_argument("--matrix-dir", dest="matrix_dir", default=None, help="dump each level's reduced matrix in MatrixMarket format")
    ap.add_argument("--config", default=None, help="key=value config file")
    ap.add_argument("--log", default=None, help="append log lines to this file (a directory gets a timestamped file)")
    ap.add_argument("--single", type=int, default=None, metavar="LEVEL", help="one solve at LEVEL instead of a study")
    return ap


def _log_path(arg: Optional[str]) -> Optional[Path]:
    if not arg:
        return None
    p = Path(arg)
    if p.is_dir() or arg.endswith(("/", "\\")):
        return make_log_path(str(p), "convergence_study")
    return p


def _fmt_rate(v) -> str:
    return "-" if v is None else f"{v:.2f}"


def main(argv=None) -> int:
    ap = _build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    log = TeeLogger(_log_path(args.log))
    try:
        flags = {k: getattr(args, k) for k in CONFIG_KEYS if hasattr(args, k)}
        try:
            config = build_config(flags, config_path=args.config)
            if args.single is not None and args.single < 1:
                raise ValueError(f"--single level must be >= 1, got {args.single}")
        except (ValueError, FileNotFoundError) as e:
            log.error(str(e))
            return EXIT_BAD_ARGS

        log.info(
            f"problem={config.problem} method={config.method} k={config.degree} sigma={config.sigma_space} "
            f"alpha={config.alpha:g} gamma={config.gamma:g} nx={config.nx} diagonal={config.diagonal}"
        )
        if not config.targets_exact_solution:
            log.warn("alpha/gamma differ from (2, -4); errors are measured against u and grad u all the same")

        try:
            if args.single is not None:
                log.log("STEP", f"single solve at level {args.single}")
                r = run_single(config, args.single)
                write_table(emit_table(convergence_rates([r]), config.format), output=config.output)
                log.log("SOLVE", f"iters={r.iterations} converged={r.converged} time={r.wall_time:.2f}s")
                return EXIT_OK if r.converged else EXIT_SOLVER

            log.log("STEP", f"convergence study, levels 1..{config.levels}")
            table = run_convergence_study(config, log=log)
        except (NotPositiveDefiniteError, DegenerateProblemError) as e:
            log.error(f"{type(e).__name__}: {e}")
            return EXIT_SOLVER
        except ValueError as e:
            # e.g. the dense solver asked for a system above its size limit
            log.error(str(e))
            return EXIT_BAD_ARGS
        except OSError as e:
            log.error(f"cannot write output: {e}")
            return EXIT_BAD_ARGS

        if not table.converged:
            return EXIT_SOLVER
        fr = table.final_rates()
        log.log(
            "OK",
            f"final rates H1(u)={_fmt_rate(fr['err_u_H1'])} L2(u)={_fmt_rate(fr['err_u_L2'])} "
            f"L2(s1)={_fmt_rate(fr['err_sigma1_L2'])} L2(s2)={_fmt_rate(fr['err_sigma2_L2'])}",
        )
        return EXIT_OK
    finally:
        log.close()


if __name__ == "__main__":
    raise SystemExit(main())
