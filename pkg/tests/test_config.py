# tests/test_config.py
# -*- coding: utf-8 -*-
import copy
from pathlib import Path

import numpy as np
import pytest

from fracporo.core import config as app_config
from fracporo.core.errors import ConfigError
from fracporo.core.models import load_run_config, parse_run_config, tomllib
from fracporo.core.solver import InitialWidth
from fracporo.core.units import DARCY, length_factor, parse_quantity
from fracporo.core.validators import (
    ValidationIssue,
    summarize_result,
    validate_run_config,
)
from fracporo.services.run_service import output_directory

BENCHMARK = Path(__file__).resolve().parent.parent / "configs" / "benchmark.toml"


@pytest.fixture
def raw():
    with BENCHMARK.open("rb") as fh:
        return tomllib.load(fh)


def _codes(issues):
    return {i.code for i in issues}


# --- unités ---

@pytest.mark.parametrize("text, dimension, expected", [
    ("0.1 mD", "permeability", 0.1e-3 * DARCY),
    ("100 D", "permeability", 100 * DARCY),
    ("1 GPa", "pressure", 1e9),
    ("0.5 MPa", "pressure", 5e5),
    ("0.125 km", "length", 125.0),
    ("1e-2 m", "length", 1e-2),
    ("1 mPa*s", "viscosity", 1e-3),
    ("6800 m2", "area", 6800.0),
])
def test_parse_quantity(text, dimension, expected):
    assert parse_quantity(text, dimension) == pytest.approx(expected)


@pytest.mark.parametrize("value, dimension", [
    (5, "length"),
    (True, "length"),
    ("3 furlongs", "length"),
    ("1 MPa", "length"),
    ("abc m", "length"),
    ("1 m", "temperature"),
])
def test_parse_quantity_rejects(value, dimension):
    with pytest.raises(ValueError):
        parse_quantity(value, dimension)


def test_length_factor():
    assert length_factor("km") == 1000.0
    with pytest.raises(ValueError):
        length_factor("mile")


# --- schéma ---

def test_benchmark_is_converted_to_si():
    cfg = load_run_config(BENCHMARK)
    assert cfg.name == "benchmark"
    assert cfg.mesh.width == pytest.approx(1000.0)
    assert cfg.mesh.max_area == pytest.approx(6800.0)
    assert cfg.material.bulk_permeability == pytest.approx(9.869233e-17)
    assert cfg.material.normal_permeability == pytest.approx(100 * DARCY)
    np.testing.assert_allclose(cfg.fracture.points_m, [[0.0, 0.0], [500.0, 0.0]])
    assert cfg.fracture.end_tags == {"first": "inlet", "last": "tip"}
    assert cfg.study.enrichment_radius == pytest.approx(125.0)
    assert cfg.study.reference == 4
    assert cfg.numerics.b_min == pytest.approx(1e-12)

    params = cfg.material.to_params()
    assert params.lame_mu == pytest.approx(1e9 / 2.6)
    assert params.viscosity == pytest.approx(1e-3)

    solver = cfg.solver.to_config()
    assert solver.tol == pytest.approx(1e-8)
    assert solver.reference_iterations == 20
    assert solver.initial_width == InitialWidth(1e-2, 1.0)


def test_problem_data_from_benchmark():
    data = load_run_config(BENCHMARK).problem_data()
    assert [(c.tag, c.kind) for c in data.elasticity] == [("bottom", "dirichlet")]
    assert data.elasticity[0].value == (0.0, 0.0)
    inlet = [c for c in data.fracture_flow if c.tag == "inlet"][0]
    assert inlet.value == pytest.approx(5e5)


def test_bare_number_names_the_key(raw):
    raw["mesh"]["width"] = 1000
    with pytest.raises(ConfigError, match="mesh.width"):
        parse_run_config(raw)


def test_unknown_key_is_refused(raw):
    raw["solver"]["omega"] = 0.5
    with pytest.raises(ConfigError, match="solver.omega"):
        parse_run_config(raw)


def test_infinite_tolerance(raw):
    raw["solver"]["tol"] = "inf"
    assert parse_run_config(raw).solver.tol == float("inf")
    raw["solver"]["tol"] = 0.0
    with pytest.raises(ConfigError):
        parse_run_config(raw)


def test_output_directory_comes_from_the_run_file(raw, monkeypatch):
    monkeypatch.setenv("FRACPORO_OUTPUT_DIR", "/ailleurs")
    del raw["output"]
    cfg = parse_run_config(raw)
    assert cfg.output.directory == "results"
    assert output_directory(cfg) == Path("results") / cfg.name
    assert output_directory(cfg, "out") == Path("out") / cfg.name
    assert not hasattr(app_config, "OUTPUT_DIR")


def test_elastic_constants_are_exclusive(raw):
    raw["material"]["lame_mu"] = "1 GPa"
    raw["material"]["lame_lambda"] = "1 GPa"
    with pytest.raises(ConfigError, match="material"):
        parse_run_config(raw)
    del raw["material"]["young_modulus"], raw["material"]["poisson_ratio"]
    params = parse_run_config(raw).material.to_params()
    assert params.lame_mu == pytest.approx(1e9)


def test_mesh_source_is_exclusive(raw):
    raw["mesh"]["file"] = "grid.msh"
    with pytest.raises(ConfigError):
        parse_run_config(raw)


def test_elasticity_dirichlet_needs_a_vector(raw):
    raw["boundary"]["elasticity"][0]["value"] = "0 m"
    with pytest.raises(ConfigError, match="boundary.elasticity"):
        parse_run_config(raw)


def test_levels_must_increase(raw):
    raw["study"]["levels"] = [0, 2, 1]
    with pytest.raises(ConfigError, match="study.levels"):
        parse_run_config(raw)


def test_invalid_toml(tmp_path):
    path = tmp_path / "bad.toml"
    path.write_text("name = \n", encoding="utf-8")
    with pytest.raises(ConfigError, match="TOML"):
        load_run_config(path)


# --- règles de cohérence ---

def test_benchmark_passes_validation():
    ok, errors, warnings = validate_run_config(load_run_config(BENCHMARK))
    assert ok and errors == []
    # gauche/droite/haut en Neumann homogène
    assert "boundary.tag.natural" in _codes(warnings)
    assert summarize_result(ok, errors, warnings).startswith("✅")


@pytest.mark.parametrize("mutate, code", [
    (lambda d: d["study"].update(reference_level=7), "study.reference.unknown"),
    (lambda d: d["fracture"].update(points=[[0.0, 0.0], [1.5, 0.0]]), "fracture.outside"),
    (lambda d: d["boundary"]["elasticity"].append(copy.deepcopy(d["boundary"]["elasticity"][0])), "boundary.tag.duplicate"),
    (lambda d: d["boundary"]["bulk_flow"][0].update(tag="nowhere"), "boundary.tag.unknown"),
    (lambda d: d["boundary"]["fracture_flow"][0].update(tag="outlet"), "boundary.tag.unknown"),
    (lambda d: d["boundary"]["elasticity"][0].update(type="neumann", value=["0 Pa", "0 Pa"]), "boundary.elasticity.no_dirichlet"),
    (lambda d: d["material"].update(xi=0.5), "material.xi.range"),
    (lambda d: d["material"].update(poisson_ratio=0.5), "material.poisson.range"),
])
def test_validation_errors(raw, mutate, code):
    mutate(raw)
    ok, errors, _ = validate_run_config(parse_run_config(raw))
    assert not ok
    assert code in _codes(errors)


@pytest.mark.parametrize("mutate, code", [
    (lambda d: d["boundary"]["fracture_flow"][1].update(type="dirichlet", value="0 Pa"), "fracture.tip.dirichlet"),
    (lambda d: d["study"].update(enrichment_radius="1 m"), "study.radius.small"),
    (lambda d: d["study"].update(levels=[0, 1, 2]), "study.levels.few"),
    (lambda d: d["solver"].update(reference_iterations=5), "solver.max_iterations.reference"),
    (lambda d: d["study"].update(reference_level=3), "study.reference.not_finest"),
])
def test_validation_warnings(raw, mutate, code):
    mutate(raw)
    ok, errors, warnings = validate_run_config(parse_run_config(raw))
    assert ok, [str(e) for e in errors]
    assert code in _codes(warnings)


def test_issue_formatting():
    err = ValidationIssue("x.code", "message", field_name="mesh.width")
    warn = ValidationIssue("y.code", "attention", severity="warning")
    assert str(err) == "❌ [x.code] mesh.width: message"
    assert str(warn) == "⚠️ [y.code] attention"
    assert summarize_result(True, [], []) == "✅ Configuration valide."
    assert summarize_result(True, [], [warn]) == "✅ Configuration valide avec 1 avertissement(s)."
    assert summarize_result(False, [err], [warn]) == "⛔ 1 erreur(s), 1 avertissement(s)."
