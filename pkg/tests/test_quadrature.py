# tests/test_quadrature.py
# -*- coding: utf-8 -*-
import math

import numpy as np
import pytest

from fracporo.core.geometry import MINUS, PLUS, cut_topology
from fracporo.core.quadrature import (
    Orders,
    boundary_quadrature,
    graded_tip_rule,
    interface_quadrature,
    split_element,
    triangle_rule,
    volume_points,
    volume_rule,
)


def _monomial(a: int, b: int) -> float:
    """∫ ξ^a η^b sur le triangle de référence."""
    return math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)


@pytest.mark.parametrize("order", [1, 2, 4, 5, 6, 8])
def test_triangle_rule_is_exact(order):
    rule = triangle_rule(order)
    assert rule.weights.sum() == pytest.approx(0.5)
    for deg in range(order + 1):
        for a in range(deg + 1):
            b = deg - a
            got = float(np.sum(rule.weights * rule.points[:, 0] ** a * rule.points[:, 1] ** b))
            assert got == pytest.approx(_monomial(a, b), rel=1e-10, abs=1e-14)


def test_triangle_rule_negative_order():
    with pytest.raises(ValueError):
        triangle_rule(-1)


def test_graded_tip_rule_area_and_singular_integrand():
    tip, a, b = np.array([0.0, 0.0]), np.array([1.0, 0.0]), np.array([0.0, 1.0])
    x3, w3 = graded_tip_rule(tip, a, b, order=4, levels=3)
    x6, w6 = graded_tip_rule(tip, a, b, order=6, levels=6)
    assert w3.sum() == pytest.approx(0.5, rel=1e-12)
    assert w6.sum() == pytest.approx(0.5, rel=1e-12)
    # ∫ r^(-1/2) = (2/3) ∫_0^(π/2) (cos θ + sin θ)^(-3/2) dθ
    t, wt = np.polynomial.legendre.leggauss(60)
    theta = 0.25 * np.pi * (t + 1.0)
    exact = float(2.0 / 3.0 * 0.25 * np.pi * np.sum(wt * (np.cos(theta) + np.sin(theta)) ** -1.5))
    i3 = float(np.sum(w3 / np.sqrt(np.linalg.norm(x3, axis=1))))
    i6 = float(np.sum(w6 / np.sqrt(np.linalg.norm(x6, axis=1))))
    assert i3 == pytest.approx(exact, rel=2e-2)
    assert i6 == pytest.approx(exact, rel=2e-3)


def test_split_element_conforms_to_chord(grid, tip_fracture):
    cut = cut_topology(grid, tip_fracture)
    for e in cut.split_elements:
        sub = split_element(grid, cut, int(e))
        c = sub.vertices[sub.triangles]
        areas = 0.5 * ((c[:, 1, 0] - c[:, 0, 0]) * (c[:, 2, 1] - c[:, 0, 1]) - (c[:, 1, 1] - c[:, 0, 1]) * (c[:, 2, 0] - c[:, 0, 0]))
        assert np.all(areas > 0)
        assert areas.sum() == pytest.approx(grid.areas[e], rel=1e-12)
        assert set(sub.sides.tolist()) == {PLUS, MINUS}
    tip_sub = split_element(grid, cut, 21)
    np.testing.assert_allclose(tip_sub.vertices[tip_sub.tip_vertex], [0.6, 0.0])


def test_volume_rule_sides(grid, tip_fracture):
    cut = cut_topology(grid, tip_fracture)
    rule = volume_rule(grid, cut, 21, order=4)
    assert rule.weights.sum() == pytest.approx(grid.areas[21], rel=1e-12)
    above = rule.points[:, 1] > 0
    assert np.all(rule.sides[above] == PLUS)
    assert np.all(rule.sides[~above] == MINUS)


def test_volume_points_split_the_domain_in_halves(grid, tip_fracture):
    cut = cut_topology(grid, tip_fracture)
    vp = volume_points(grid, cut, Orders())
    assert vp.weights.sum() == pytest.approx(1.0, rel=1e-12)
    assert vp.weights[vp.sides == PLUS].sum() == pytest.approx(0.5, rel=1e-12)
    assert vp.weights[vp.sides == MINUS].sum() == pytest.approx(0.5, rel=1e-12)
    for e in (0, 21, 39):
        assert vp.weights[vp.elements == e].sum() == pytest.approx(grid.areas[e], rel=1e-12)


def test_split_through_a_mesh_vertex(square_grid, slanted_fracture):
    cut = cut_topology(square_grid, slanted_fracture)
    assert cut.perturbations
    for e in cut.split_elements:
        sub = split_element(square_grid, cut, int(e))
        assert sub.vertices[sub.triangles].shape[0] >= 2
        rule = volume_rule(square_grid, cut, int(e), order=2, sub=sub)
        assert rule.weights.sum() == pytest.approx(square_grid.areas[e], rel=1e-12)
    vp = volume_points(square_grid, cut, Orders())
    # Σ: y = 0.4 x − 0.1, côté plus au-dessus
    assert vp.weights[vp.sides == PLUS].sum() == pytest.approx(0.4, rel=1e-12)
    assert vp.weights[vp.sides == MINUS].sum() == pytest.approx(0.6, rel=1e-12)


def test_interface_quadrature(grid, tip_fracture):
    cut = cut_topology(grid, tip_fracture)
    iq = interface_quadrature(cut, tip_fracture)
    assert iq.weights.sum() == pytest.approx(0.6, rel=1e-12)
    np.testing.assert_allclose(iq.points[:, 1], 0.0, atol=1e-15)
    np.testing.assert_allclose(iq.r, 0.6 - iq.s, atol=1e-14)
    np.testing.assert_allclose(iq.normals, np.tile([0.0, 1.0], (iq.n, 1)))
    np.testing.assert_allclose(iq.kappa, 0.0)
    # ∫_Σ √r ds = (2/3) |Σ|^(3/2)
    assert float(np.sum(iq.weights * np.sqrt(iq.r))) == pytest.approx(2.0 / 3.0 * 0.6 ** 1.5, rel=2e-4)


def test_fracture_basis_reproduces_linears(grid, through_fracture):
    cut = cut_topology(grid, through_fracture)
    iq = interface_quadrature(cut, through_fracture)
    f_val, f_dtau = iq.fracture_basis()
    x = through_fracture.vertices[:, 0]
    np.testing.assert_allclose(f_val @ x, iq.points[:, 0], atol=1e-14)
    np.testing.assert_allclose(f_dtau @ x, 1.0, rtol=1e-12)


def test_boundary_quadrature(grid, tip_fracture):
    cut = cut_topology(grid, tip_fracture)
    bq = boundary_quadrature(grid, cut)
    for tag in ("bottom", "right", "top", "left"):
        assert bq.weights[bq.tags == tag].sum() == pytest.approx(1.0, rel=1e-12)
    left = bq.tags == "left"
    # l'entrée de Σ coupe l'arête du bord gauche: côtés opposés de part et d'autre
    assert np.all(bq.sides[left & (bq.points[:, 1] > 0)] == PLUS)
    assert np.all(bq.sides[left & (bq.points[:, 1] < 0)] == MINUS)
    bottom = bq.tags == "bottom"
    np.testing.assert_allclose(bq.normals[bottom], np.tile([0.0, -1.0], (int(bottom.sum()), 1)))
