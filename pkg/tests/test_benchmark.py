# tests/test_benchmark.py
# -*- coding: utf-8 -*-
"""
Cas test complet (plusieurs minutes). Lancer avec: pytest -m slow
"""
from pathlib import Path

import pytest

from fracporo.core.models import load_run_config
from fracporo.services.run_service import run_solver_study
from fracporo.services.study_service import run_convergence_study

BENCHMARK = Path(__file__).resolve().parent.parent / "configs" / "benchmark.toml"

pytestmark = pytest.mark.slow


def test_substructuring_converges_at_every_level(tmp_path):
    cfg = load_run_config(BENCHMARK)
    reports, _ = run_solver_study(cfg, output=str(tmp_path))
    assert sorted(reports) == [0, 1, 2, 3, 4]
    for r in reports.values():
        assert r.converged
        assert r.iterations <= 6
        assert r.errors[r.iterations - 1] < 1e-8
    rates = [r.contraction for r in reports.values()]
    assert max(rates) / min(rates) < 2.0


def test_discretization_rates(tmp_path):
    cfg = load_run_config(BENCHMARK)
    report, summary = run_convergence_study(cfg, output=str(tmp_path))
    assert summary.exists()
    s = {name: {norm: fit.slope for norm, fit in fits.items()} for name, fits in report.slopes.items()}
    assert 1.7 <= s["displacement"]["L2"] <= 2.5
    assert 0.8 <= s["displacement"]["H1"] <= 1.3
    assert 2.5 <= s["bulk_pressure"]["L2"] <= 3.5
    assert 1.2 <= s["bulk_pressure"]["H1"] <= 1.8
    assert 1.7 <= s["fracture_pressure"]["L2"] <= 2.5
    assert s["fracture_pressure"]["H1"] >= 0.8
