# tests/test_analysis.py
# -*- coding: utf-8 -*-
import numpy as np
import pytest

from fracporo.core.analysis import (
    ConvergenceReport,
    error_between,
    field_norms,
    fit_rates,
    von_mises,
    von_mises_values,
)
from fracporo.core.assembly import BoundaryCondition, ProblemData, build_assembler
from fracporo.core.enrichment import build_space, width_from_closure
from fracporo.core.geometry import FractureMesh, refine_uniform
from fracporo.core.solver import CoupledState


def test_fit_rates_recovers_slope():
    h = np.array([0.4, 0.2, 0.1, 0.05])
    fit = fit_rates(h, 3.0 * h ** 2)
    assert fit.slope == pytest.approx(2.0)
    assert fit.intercept == pytest.approx(np.log(3.0))
    assert fit.used == 4
    assert fit.residual == pytest.approx(0.0, abs=1e-10)


def test_fit_rates_drops_zero_errors():
    h = np.array([0.4, 0.2, 0.1, 0.05])
    fit = fit_rates(h, np.array([0.16, 0.04, 0.01, 0.0]))
    assert fit.used == 3
    assert fit.slope == pytest.approx(2.0)


def test_fit_rates_needs_three_points():
    with pytest.raises(ValueError):
        fit_rates([0.2, 0.1], [0.04, 0.01])
    with pytest.raises(ValueError):
        fit_rates([0.4, 0.2, 0.1], [0.1, 0.0, 0.0])


def test_convergence_report_fit_skips_reference():
    report = ConvergenceReport(reference_level=3, levels=[0, 1, 2, 3],
                               h_bulk=[0.4, 0.2, 0.1, 0.05], h_fracture=[0.2, 0.1, 0.05, 0.025])
    for lvl, h in zip([0, 1, 2], [0.4, 0.2, 0.1]):
        report.errors[lvl] = {"bulk_pressure": {"L2": h ** 2, "H1": h}}
    report.fit(3)
    assert report.slopes["bulk_pressure"]["L2"].slope == pytest.approx(2.0)
    assert report.slopes["bulk_pressure"]["H1"].slope == pytest.approx(1.0)
    assert "displacement" not in report.slopes


def test_von_mises_values():
    lam, mu, nu = 1.0, 1.0, 0.25
    grad = np.zeros((2, 2, 2))
    grad[0, 0, 0] = 1e-3
    grad[1, 0, 1] = grad[1, 1, 0] = 1e-3
    vm = von_mises_values(grad, lam, mu, nu)
    # uniaxial en déformation: σxx = 3e-3, σyy = 1e-3, σzz = ν(σxx + σyy) = 1e-3
    assert vm[0] == pytest.approx(2e-3)
    # cisaillement pur: √3 · 2μ · ε_xy
    assert vm[1] == pytest.approx(np.sqrt(3.0) * 2e-3)


def test_von_mises_of_rigid_motion(tip_assembler):
    u = np.zeros(tip_assembler.n_u)
    nv = tip_assembler.space.bulk.n_vertices
    u[:nv] = 0.3
    field = von_mises(tip_assembler, u)
    np.testing.assert_allclose(field.nodal, 0.0, atol=1e-12)
    # un centre par côté dans chaque triangle découpé
    assert (21, 1) in field.cell_values and (21, -1) in field.cell_values


def test_von_mises_of_uniform_strain(tip_assembler):
    # ε_xx = 1e-3, λ = μ = 1 (ν = 1/4): σ_vm = 2e-3 partout, y compris dans les triangles découpés
    u = np.zeros(tip_assembler.n_u)
    bulk = tip_assembler.space.bulk
    u[:bulk.n_vertices] = 1e-3 * bulk.vertices[:, 0]
    field = von_mises(tip_assembler, u)
    np.testing.assert_allclose(list(field.cell_values.values()), 2e-3, rtol=1e-10)
    np.testing.assert_allclose(field.nodal, 2e-3, rtol=1e-10)


def test_field_norms(tip_assembler):
    asm = tip_assembler
    p = np.zeros(asm.n_p)
    p[:asm.space.bulk.n_vertices] = 2.0
    assert field_norms(asm, "bulk_pressure", p, "L2") == pytest.approx(2.0)
    assert field_norms(asm, "bulk_pressure", p, "H1_semi") == pytest.approx(0.0, abs=1e-10)
    ps = np.ones(asm.n_s)
    assert field_norms(asm, "fracture_pressure", ps, "H1") == pytest.approx(np.sqrt(0.6))
    width = width_from_closure(asm.space, lambda r: 0.5 * np.ones_like(r))
    assert field_norms(asm, "fracture_pressure", ps, "weighted", width) == pytest.approx(np.sqrt(0.6 / 0.5))
    with pytest.raises(ValueError):
        field_norms(asm, "bulk_pressure", p, "weighted", width)
    with pytest.raises(ValueError):
        field_norms(asm, "fracture_pressure", ps, "weighted", width_from_closure(asm.space, lambda r: 0.0 * r))


def _affine_state(asm):
    """u = (x, 0), p = y, pΣ = x aux sommets: interpolants exacts sur tout niveau."""
    bulk, frac = asm.space.bulk, asm.space.frac
    u = np.zeros(asm.n_u)
    u[:bulk.n_vertices] = bulk.vertices[:, 0]
    p = np.zeros(asm.n_p)
    p[:bulk.n_vertices] = bulk.vertices[:, 1]
    return CoupledState(u, p, frac.vertices[:, 0].copy(), None)


@pytest.fixture
def nested(grid, unit_params):
    # Σ hors des arêtes du maillage raffiné (y = 0.05)
    frac = FractureMesh.from_points([(0.0, 0.05), (0.6, 0.05)], tip="last")
    data = ProblemData(elasticity=[BoundaryCondition("bottom", "dirichlet", (0.0, 0.0))])
    coarse = build_assembler(build_space(grid, frac, 0.0), unit_params, data)
    fine = build_assembler(build_space(refine_uniform(grid), refine_uniform(frac), 0.0), unit_params, data)
    return coarse, fine


def test_error_between_nested_levels(nested):
    coarse, fine = nested
    errors = error_between(coarse, _affine_state(coarse), fine, _affine_state(fine))
    for name in ("displacement", "bulk_pressure", "fracture_pressure"):
        assert errors[name]["L2"] == pytest.approx(0.0, abs=1e-12)
        assert errors[name]["H1"] == pytest.approx(0.0, abs=1e-12)


def test_error_between_detects_a_difference(nested):
    coarse, fine = nested
    state = _affine_state(fine)
    p = state.p_bulk.copy()
    p[:fine.space.bulk.n_vertices] += 1.0
    shifted = CoupledState(state.u, p, state.p_frac, None)
    errors = error_between(coarse, _affine_state(coarse), fine, shifted)
    assert errors["bulk_pressure"]["L2_abs"] == pytest.approx(1.0, rel=1e-10)
    assert errors["displacement"]["H1"] == pytest.approx(0.0, abs=1e-12)


def test_error_between_rejects_non_nested(nested):
    coarse, fine = nested
    with pytest.raises(ValueError):
        error_between(fine, _affine_state(fine), coarse, _affine_state(coarse))
