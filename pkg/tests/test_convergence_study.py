# tests/test_convergence_study.py
import io
import time

import pytest
import scipy.io

from analysis import parse_table_csv
from convergence_study import (
    EXIT_BAD_ARGS,
    EXIT_OK,
    EXIT_SOLVER,
    RunConfig,
    build_config,
    main,
    run_convergence_study,
    run_single,
)
from linalg import DEFAULT_TOL, is_symmetric
from problems import UnknownProblemError


@pytest.fixture(autouse=True)
def _clean_env(monkeypatch, tmp_path):
    import os

    for k in list(os.environ):
        if k.startswith("P2F_"):
            monkeypatch.delenv(k)
    # no stray .env from the checkout
    monkeypatch.chdir(tmp_path)


def test_defaults_reproduce_the_study_setup():
    cfg = RunConfig()
    assert (cfg.problem, cfg.levels, cfg.degree, cfg.sigma_space) == ("paper_gaussian", 6, 1, "equal_order")
    assert (cfg.alpha, cfg.gamma, cfg.method, cfg.nx) == (2.0, -4.0, "two_field", 4)
    assert cfg.tol == DEFAULT_TOL == 1e-12


@pytest.mark.parametrize(
    "kwargs",
    [
        {"levels": 0},
        {"alpha": 0.0},
        {"alpha": -2.0},
        {"degree": 3},
        {"method": "mixed"},
        {"sigma_space": "rt"},
        {"format": "xml"},
        {"tol": 0.0},
        {"diagonal": "x"},
        {"solver": "lu"},
    ],
)
def test_invalid_config(kwargs):
    with pytest.raises(ValueError):
        RunConfig(**kwargs)


def test_unknown_problem():
    with pytest.raises(UnknownProblemError, match="paper_gaussian"):
        RunConfig(problem="poisson42")


def test_config_precedence(tmp_path):
    cfg_file = tmp_path / "run.cfg"
    cfg_file.write_text("# study\nlevels=4\nSIGMA-SPACE=dg\nalpha = 2\n", encoding="utf-8")
    env = {"P2F_LEVELS": "3", "P2F_TOL": "1e-9"}
    assert build_config(environ={}).levels == 6
    assert build_config(environ=env).levels == 3
    cfg = build_config(config_path=str(cfg_file), environ=env)
    assert (cfg.levels, cfg.sigma_space, cfg.tol) == (4, "dg", 1e-9)
    assert build_config({"levels": 5}, config_path=str(cfg_file), environ=env).levels == 5


def test_config_file_rejects_unknown_key(tmp_path):
    cfg_file = tmp_path / "bad.cfg"
    cfg_file.write_text("levels=2\ncolour=blue\n", encoding="utf-8")
    with pytest.raises(ValueError, match="colour"):
        build_config(config_path=str(cfg_file), environ={})


def test_config_file_rejects_bad_value(tmp_path):
    cfg_file = tmp_path / "bad.cfg"
    cfg_file.write_text("levels=many\n", encoding="utf-8")
    with pytest.raises(ValueError):
        build_config(config_path=str(cfg_file), environ={})


def test_missing_config_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        build_config(config_path=str(tmp_path / "nope.cfg"), environ={})


def test_run_single_level_one():
    r = run_single(RunConfig(), 1)
    assert r.n_dofs == 59
    assert r.converged
    assert r.err_u_H1 > r.err_u_L2 > 0


def test_run_single_writes_vtk(tmp_path):
    run_single(RunConfig(vtk_dir=str(tmp_path)), 1)
    files = list(tmp_path.glob("*.vtk"))
    assert len(files) == 1
    text = files[0].read_text(encoding="utf-8")
    assert text.startswith("# vtk DataFile Version")
    assert "DATASET UNSTRUCTURED_GRID" in text
    assert "POINTS 25 double" in text
    assert "CELLS 32 128" in text
    for name in ("u_h", "sigma1_h", "sigma2_h", "error"):
        assert f"SCALARS {name} double 1" in text


@pytest.mark.parametrize("degree", [1, 2])
@pytest.mark.parametrize("method", ["two_field", "galerkin"])
def test_patch_problem_is_exact(degree, method):
    cfg = RunConfig(problem="linear_patch", degree=degree, method=method, solver="dense")
    for level in (1, 2):
        r = run_single(cfg, level)
        assert max(r.err_u_H1, r.err_u_L2, r.err_sigma1_L2, r.err_sigma2_L2) <= 1e-9


def test_galerkin_and_discontinuous_two_field_agree():
    base = dict(levels=3, solver="dense")
    a = run_single(RunConfig(method="galerkin", **base), 3)
    b = run_single(RunConfig(sigma_space="dg", **base), 3)
    assert a.err_u_L2 == pytest.approx(b.err_u_L2, rel=1e-7)
    assert a.err_u_H1 == pytest.approx(b.err_u_H1, rel=1e-7)
    assert a.err_sigma1_L2 == pytest.approx(b.err_sigma1_L2, rel=1e-7)


def test_study_output_is_deterministic(tmp_path):
    cfg = RunConfig(levels=3, output=str(tmp_path / "table.csv"))
    first, second = io.StringIO(), io.StringIO()
    table = run_convergence_study(cfg, stream=first)
    run_convergence_study(cfg, stream=second)
    assert first.getvalue() == second.getvalue()
    assert (tmp_path / "table.csv").read_text(encoding="utf-8") == first.getvalue()
    assert table.converged and len(table.results) == 3
    df = parse_table_csv(first.getvalue())
    assert list(df["ndofs"]) == [59, 211, 803]
    # σ components agree on the symmetric mesh
    assert df["err_s1_L2"].tolist() == pytest.approx(df["err_s2_L2"].tolist(), rel=1e-5)


def test_main_success(capsys):
    rc = main(["--problem", "quadratic", "--degree", "2", "--levels", "2", "--solver", "dense"])
    out, err = capsys.readouterr()
    assert rc == EXIT_OK
    assert out.splitlines()[0].startswith("level,h,ndofs")
    assert len(out.splitlines()) == 3
    assert "[OK]" in err


def test_main_markdown_and_log(tmp_path, capsys):
    log = tmp_path / "logs" / "run.log"
    rc = main(["--levels", "1", "--format", "markdown", "--log", str(log)])
    out, _ = capsys.readouterr()
    assert rc == EXIT_OK
    assert out.startswith("| level |")
    assert "[LEVEL] 1:" in log.read_text(encoding="utf-8")


def test_main_single(capsys):
    rc = main(["--single", "1"])
    out, _ = capsys.readouterr()
    assert rc == EXIT_OK
    assert out.splitlines()[1].startswith("1,")
    assert ",59," in out


@pytest.mark.parametrize(
    "argv",
    [
        ["--alpha", "-1"],
        ["--levels", "0"],
        ["--problem", "nope"],
        ["--single", "0"],
        ["--sigma-space", "rt"],
        ["--levels", "two"],
        ["--config", "/nonexistent/run.cfg"],
    ],
)
def test_main_bad_arguments(argv, capsys):
    assert main(argv) == EXIT_BAD_ARGS


def test_main_env_override(monkeypatch, capsys):
    monkeypatch.setenv("P2F_LEVELS", "0")
    assert main([]) == EXIT_BAD_ARGS


def test_main_solver_failure(capsys):
    rc = main(["--levels", "2", "--max-iter", "1"])
    out, err = capsys.readouterr()
    assert rc == EXIT_SOLVER
    assert "[ERROR]" in err
    lines = out.splitlines()
    assert len(lines) == 3
    assert lines[1].startswith("1,")
    assert lines[-1] == "# partial: solver did not converge at level 1"
    assert len(parse_table_csv(out)) == 1


@pytest.mark.slow
def test_full_study_rates():
    t0 = time.perf_counter()
    table = run_convergence_study(RunConfig(), stream=io.StringIO())
    assert time.perf_counter() - t0 < 60.0
    assert table.converged and len(table.results) == 6
    rates = table.rates
    assert 0.90 <= rates["err_u_H1"][-1] <= 1.10
    assert 1.90 <= rates["err_u_L2"][-1] <= 2.10
    for name in ("err_sigma1_L2", "err_sigma2_L2"):
        assert 1.80 <= rates[name][-2] <= 2.10
        assert 1.80 <= rates[name][-1] <= 2.10
    assert 1e-5 <= table.results[-1].err_u_L2 <= 2e-4


@pytest.mark.slow
def test_quadratic_elements_rates():
    table = run_convergence_study(RunConfig(degree=2, levels=4), stream=io.StringIO())
    assert table.converged
    assert table.rates["err_u_H1"][-1] == pytest.approx(2.0, abs=0.15)
    assert table.rates["err_u_L2"][-1] == pytest.approx(3.0, abs=0.2)


def test_main_log_directory(tmp_path, capsys):
    rc = main(["--single", "1", "--log", str(tmp_path)])
    capsys.readouterr()
    assert rc == EXIT_OK
    logs = list(tmp_path.glob("convergence_study_*.log"))
    assert len(logs) == 1
    assert "[SOLVE]" in logs[0].read_text(encoding="utf-8")


def test_main_single_output_in_new_directory(tmp_path, capsys):
    target = tmp_path / "new" / "deeper" / "table.csv"
    rc = main(["--single", "1", "--output", str(target)])
    out, _ = capsys.readouterr()
    assert rc == EXIT_OK
    assert target.read_text(encoding="utf-8") == out


def test_project_env_file_feeds_config(tmp_path):
    (tmp_path / ".env").write_text("P2F_LEVELS=3\nP2F_DEGREE=2\nOTHER=1\n", encoding="utf-8")
    assert build_config().levels == 3
    assert build_config().degree == 2
    # flags still win
    assert build_config({"levels": 5}).levels == 5


def test_project_env_file_under_real_environment(tmp_path, monkeypatch):
    env_file = tmp_path / "study.env"
    env_file.write_text("P2F_LEVELS=3\nP2F_NX=2\n", encoding="utf-8")
    monkeypatch.setenv("P2F_ENV_FILE", str(env_file))
    monkeypatch.setenv("P2F_LEVELS", "4")
    cfg = build_config()
    assert (cfg.levels, cfg.nx) == (4, 2)


def test_main_reads_project_env(tmp_path, capsys):
    (tmp_path / ".env").write_text("P2F_LEVELS=0\n", encoding="utf-8")
    assert main([]) == EXIT_BAD_ARGS


def test_main_missing_env_file(monkeypatch, tmp_path, capsys):
    monkeypatch.setenv("P2F_ENV_FILE", str(tmp_path / "absent.env"))
    assert main(["--levels", "1"]) == EXIT_BAD_ARGS


def test_matrix_dump(tmp_path, capsys):
    rc = main(["--single", "1", "--matrix-dir", str(tmp_path / "mtx")])
    capsys.readouterr()
    assert rc == EXIT_OK
    dumps = list((tmp_path / "mtx").glob("*.mtx"))
    assert [p.name for p in dumps] == ["paper_gaussian_two_field_k1_level1.mtx"]
    A = scipy.io.mmread(str(dumps[0])).tocsr()
    assert A.shape == (59, 59)
    assert is_symmetric(A)
