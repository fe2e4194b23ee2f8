# tests/test_cli.py
# -*- coding: utf-8 -*-
import hashlib
import io
import json
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from fracporo.core.analysis import ConvergenceReport, IterationRecord, RateFit, SolverReport
from fracporo.core.mesh_io import read_mesh
from fracporo.core.models import load_run_config
from fracporo.main import EXIT_CONFIG, EXIT_IO, EXIT_OK, main
from fracporo.services import export_service as export
from fracporo.services.run_service import run_solve, subdivide_polyline

BENCHMARK = Path(__file__).resolve().parent.parent / "configs" / "benchmark.toml"

# cas test ramené à un carré d'un mètre, deux itérations
SMALL = {
    'width = "1 km"': 'width = "1 m"',
    'height = "1 km"': 'height = "1 m"',
    'max_area = "6800 m2"': 'max_area = "0.02 m2"',
    'unit = "km"': 'unit = "m"',
    'tol = 1e-8': 'tol = "inf"',
    'max_iterations = 20': 'max_iterations = 2',
    'reference_iterations = 20': 'reference_iterations = 2',
    'enrichment_radius = "0.125 km"': 'enrichment_radius = "0.125 m"',
}


def _write_config(tmp_path: Path, replacements) -> Path:
    text = BENCHMARK.read_text(encoding="utf-8")
    for old, new in replacements.items():
        assert old in text
        text = text.replace(old, new)
    path = tmp_path / "run.toml"
    path.write_text(text, encoding="utf-8")
    return path


def _report(level: int = 0) -> SolverReport:
    history = [
        IterationRecord(k, 10.0 ** -k, {"displacement": 10.0 ** -k, "bulk_pressure": 0.0, "fracture_pressure": 0.0}, 1e-3, 2e-2)
        for k in (1, 2, 3)
    ]
    return SolverReport(level, 0.1, 0.05, history, True, 2, 0.1)


# --- ligne de commande ---

def test_check_benchmark(capsys):
    assert main(["check", str(BENCHMARK)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "✅ Configuration valide" in out
    assert "boundary.tag.natural" in out


def test_check_bare_number(tmp_path, capsys):
    path = _write_config(tmp_path, {'width = "1 km"': "width = 1000"})
    assert main(["check", str(path)]) == EXIT_CONFIG
    assert "mesh.width" in capsys.readouterr().out


def test_check_inconsistent_reference(tmp_path, capsys):
    path = _write_config(tmp_path, {"levels = [0, 1, 2, 3, 4]": "levels = [0, 1, 2, 3, 4]\nreference_level = 9"})
    assert main(["check", str(path)]) == EXIT_CONFIG
    assert "study.reference.unknown" in capsys.readouterr().out


def test_solve_refuses_inconsistent_config(tmp_path):
    path = _write_config(tmp_path, {"levels = [0, 1, 2, 3, 4]": "levels = [0, 1, 2, 3, 4]\nreference_level = 9"})
    assert main(["solve", str(path), "--output", str(tmp_path / "out")]) == EXIT_CONFIG
    assert not (tmp_path / "out").exists()


def test_missing_file(tmp_path):
    assert main(["check", str(tmp_path / "absent.toml")]) == EXIT_IO


def test_solve_writes_hashed_artifacts(tmp_path, capsys):
    path = _write_config(tmp_path, SMALL)
    assert main(["solve", str(path), "--output", str(tmp_path / "out")]) == EXIT_OK
    assert "converged=true" in capsys.readouterr().out
    root = tmp_path / "out" / "benchmark"
    summary = json.loads((root / "summary.json").read_text(encoding="utf-8"))
    names = {f["path"] for f in summary["files"]}
    assert names == {"level0_bulk.vtk", "level0_fracture.vtk", "level0_history.csv", "level0_history.json"}
    for f in summary["files"]:
        data = (root / f["path"]).read_bytes()
        assert f["sha256"] == hashlib.sha256(data).hexdigest()
        assert f["bytes"] == len(data)
    assert summary["error_combination"] == "rss"
    assert summary["solver"]["tol"] == "inf"
    assert summary["levels"][0]["iterations"] == 1
    history = pd.read_csv(root / "level0_history.csv", comment="#")
    assert history["k"].tolist() == [1]


def test_run_solve_state(tmp_path):
    cfg = load_run_config(_write_config(tmp_path, SMALL))
    res = run_solve(cfg, level=0, output=str(tmp_path / "out"))
    assert res.report.converged
    assert [r.k for r in res.report.history] == [1, 2]
    assert res.state.k == 1
    space = res.setup.assembler.space
    assert res.state.u.shape == (space.dof_counts()["displacement"],)
    # p^Σ imposée à l'entrée
    assert res.state.p_frac[space.frac.end_tags["inlet"]] == pytest.approx(5e5)
    # ouverture positive le long de Σ
    s = np.linspace(0.0, 0.45, 10)
    assert np.all(res.state.width.values(s) > 0)


# --- exports ---

def test_subdivide_polyline():
    pts = subdivide_polyline(np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 0.5]]), 0.3)
    np.testing.assert_allclose(pts[:, 0], [0.0, 0.25, 0.5, 0.75, 1.0, 1.0, 1.0])
    np.testing.assert_allclose(pts[-1], [1.0, 0.5])
    with pytest.raises(ValueError):
        subdivide_polyline(pts, 0.0)


def test_history_table():
    df = export.df_from_history(_report(), upto=2)
    assert df["k"].tolist() == [1, 2]
    np.testing.assert_allclose(df["err_displacement"], [0.1, 0.01])
    assert list(df.columns)[:3] == ["level", "k", "err_k"]
    assert len(export.df_from_history(_report())) == 3


def test_csv_header_and_reload():
    df = export.df_from_history(_report())
    data = export.to_csv_bytes(df)
    first = data.decode("utf-8").splitlines()[0]
    assert first.startswith("# columns: level [-], k [-], err_k [-]")
    assert "b_min [m]" in first
    back = pd.read_csv(io.BytesIO(data), comment="#")
    assert list(back.columns) == list(df.columns)
    np.testing.assert_allclose(back["err_k"], df["err_k"])


def test_write_table_hashes(tmp_path):
    df = export.df_contraction({0: _report(0), 1: _report(1)})
    artifacts = export.write_table(tmp_path, "solver_contraction", df, ["csv", "json"])
    assert [a.path.name for a in artifacts] == ["solver_contraction.csv", "solver_contraction.json"]
    for a in artifacts:
        assert a.sha256 == hashlib.sha256(a.path.read_bytes()).hexdigest()
    assert a.as_dict(tmp_path)["path"] == "solver_contraction.json"
    records = json.loads(artifacts[1].path.read_text(encoding="utf-8"))
    assert [r["level"] for r in records] == [0, 1]


def test_convergence_tables():
    report = ConvergenceReport(reference_level=2, levels=[0, 1, 2], h_bulk=[0.2, 0.1, 0.05], h_fracture=[0.1, 0.05, 0.025])
    report.errors[0] = {"displacement": {"L2": 0.04, "H1": 0.2}}
    report.errors[1] = {"displacement": {"L2": 0.01, "H1": 0.1}}
    report.slopes["displacement"] = {"L2": RateFit(2.0, 0.0, 0.0, 2)}
    df = export.df_from_convergence(report)
    assert len(df) == 4
    assert set(df["reference_level"]) == {2}
    slopes = export.df_from_slopes(report)
    assert slopes.loc[0, "slope"] == 2.0


def test_summary_keeps_non_finite_values(tmp_path):
    path = export.write_summary(tmp_path / "summary.json", {"b": float("nan"), "a": np.float64(1.5), "n": np.int64(3)})
    text = path.read_text(encoding="utf-8")
    assert text.index('"a"') < text.index('"b"')
    assert json.loads(text) == {"a": 1.5, "b": "nan", "n": 3}


# --- script de maillage ---

def test_make_benchmark_mesh(tmp_path, capsys):
    from scripts.make_benchmark_mesh import main as make_mesh

    out = tmp_path / "benchmark.mesh"
    args = ["--out", str(out), "--width", "1 m", "--height", "1 m", "--max-area", "0.02 m2"]
    assert make_mesh(args) == 0
    assert "✅" in capsys.readouterr().out
    mesh = read_mesh(out)
    assert set(mesh.tag_names) == {"bottom", "right", "top", "left"}
    assert mesh.areas.sum() == pytest.approx(1.0)
    assert make_mesh(["--out", str(out), "--width", "1 furlong"]) == 2
