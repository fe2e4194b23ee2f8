# tests/test_geometry.py
# -*- coding: utf-8 -*-
import math

import numpy as np
import pytest

from fracporo.core.errors import GeometryError
from fracporo.core.geometry import (
    MINUS,
    ON_EXTENSION,
    PLUS,
    BulkMesh,
    FractureMesh,
    TipFrame,
    classify_side,
    cut_topology,
    refine_uniform,
    tip_coordinates,
)
from fracporo.core.mesh_io import read_mesh, rectangle_mesh, write_mesh


# --- maillages ---

def test_grid_sizes_and_tags(grid):
    assert grid.n_vertices == 30
    assert grid.n_triangles == 40
    assert grid.tag_names == ["bottom", "left", "right", "top"]
    assert grid.areas.sum() == pytest.approx(1.0)
    assert np.all(grid.areas > 0)


def test_build_tags_untagged_edges_with_default():
    mesh = BulkMesh.build(np.array([[0, 0], [1, 0], [0, 1]]), np.array([[0, 2, 1]]))
    assert list(mesh.boundary_tags) == ["boundary"] * 3
    # orientation directe imposée
    assert mesh.areas[0] == pytest.approx(0.5)


def test_build_rejects_degenerate_triangle():
    with pytest.raises(GeometryError):
        BulkMesh.build(np.array([[0, 0], [1, 0], [2, 0]]), np.array([[0, 1, 2]]))


def test_refine_uniform_bulk(grid):
    fine = refine_uniform(grid)
    assert fine.level == 1
    assert fine.n_triangles == 4 * grid.n_triangles
    assert fine.h == pytest.approx(0.5 * grid.h)
    assert fine.areas.sum() == pytest.approx(1.0)
    for tag in grid.tag_names:
        assert len(fine.tagged_edges(tag)) == 2 * len(grid.tagged_edges(tag))
    # enfants 4t..4t+3 contenus dans le parent t
    parents = np.arange(fine.n_triangles) // 4
    lam = grid.barycentric(parents, fine.centroids)
    assert np.all(lam >= -1e-12)


def test_refine_uniform_fracture(tip_fracture):
    fine = refine_uniform(tip_fracture)
    assert fine.n_segments == 2 * tip_fracture.n_segments
    assert fine.end_tags == {"inlet": 0, "tip": 2}
    assert fine.has_tip
    assert fine.length == pytest.approx(tip_fracture.length)


def test_fracture_tip_first_is_reversed():
    frac = FractureMesh.from_points([(0.6, 0.0), (0.0, 0.0)], tip="first", end_tags={"first": "tip", "last": "inlet"})
    np.testing.assert_allclose(frac.tip, [0.6, 0.0])
    assert frac.end_tags == {"tip": 1, "inlet": 0}
    np.testing.assert_allclose(frac.normals[0], [0.0, 1.0])


def test_fracture_curvature():
    straight = FractureMesh.from_points([(0, 0), (0.5, 0), (1.0, 0)], tip="none")
    np.testing.assert_allclose(straight.curvature, 0.0)
    bent = FractureMesh.from_points([(0, 0), (1, 0), (1, 1)], tip="none")
    assert abs(bent.curvature[1]) == pytest.approx(math.sqrt(2.0))
    assert bent.curvature[0] == 0.0 and bent.curvature[-1] == 0.0


def test_fracture_rejects_self_intersection():
    with pytest.raises(GeometryError):
        FractureMesh.from_points([(0, 0), (1, 0), (1, 1), (0.5, -1)], tip="none")


# --- découpe ---

def test_cut_topology_with_tip(grid, tip_fracture):
    cut = cut_topology(grid, tip_fracture)
    np.testing.assert_allclose(cut.path.points[-1], [1.0, 0.0])
    assert cut.path.fracture_length == pytest.approx(0.6)
    assert cut.chord_length == pytest.approx(0.6)
    # rangée centrale: triangles 16..23, colonne de la pointe: 20 (a,b,c) et 21 (a,c,d)
    assert cut.tip_elements.tolist() == [21]
    assert cut.status(21) == "tip"
    assert cut.status(16) == "cut"
    assert cut.status(20) == "extension"
    assert cut.status(0) == "uncut"
    assert cut.fracture_elements.tolist() == [16, 17, 18, 19, 21]
    assert cut.split_elements.tolist() == [16, 17, 18, 19, 20, 21, 22, 23]
    assert cut.element_side[0] == MINUS
    assert cut.element_side[39] == PLUS


def test_fracture_pieces_partition_sigma(grid, through_fracture):
    cut = cut_topology(grid, through_fracture)
    pieces = cut.fracture_pieces()
    assert pieces[0][2] == pytest.approx(0.0)
    assert pieces[-1][3] == pytest.approx(1.0)
    for prev, nxt in zip(pieces[:-1], pieces[1:]):
        assert nxt[2] == pytest.approx(prev[3])
    assert len(cut.tip_elements) == 0
    assert cut.frame is None


def test_crossing_a_mesh_vertex_is_perturbed(square_grid, slanted_fracture):
    mesh, frac = square_grid, slanted_fracture
    cut = cut_topology(mesh, frac)
    vertex = int(np.argmin(np.linalg.norm(mesh.vertices - [0.25, 0.0], axis=1)))
    assert len(cut.perturbations) == 1
    assert f"sommet {vertex}" in cut.perturbations[0]
    # le point de passage est avancé de ε le long de Σ
    ends = np.vstack([c.points[[0, -1]] for c in cut.chords.values()])
    dist = np.linalg.norm(ends - mesh.vertices[vertex], axis=1)
    assert dist.min() == pytest.approx(mesh.eps, rel=1e-4)
    assert cut.chord_length == pytest.approx(frac.length, rel=1e-12)
    pieces = cut.fracture_pieces()
    for prev, nxt in zip(pieces[:-1], pieces[1:]):
        assert nxt[2] == pytest.approx(prev[3], abs=1e-12)


def test_crossing_away_from_vertices_is_not_perturbed(grid, through_fracture):
    assert cut_topology(grid, through_fracture).perturbations == []


def test_split_and_tip_sets_are_cached(grid, tip_fracture):
    cut = cut_topology(grid, tip_fracture)
    assert cut.split_set is cut.split_set
    assert sorted(cut.split_set) == cut.split_elements.tolist()
    assert cut.tip_set == {21}


def test_cut_without_fracture(grid):
    cut = cut_topology(grid, None)
    assert len(cut.split_elements) == 0
    assert np.all(cut.element_side == PLUS)
    assert {cut.status(e) for e in range(grid.n_triangles)} == {"uncut"}


def test_tip_outside_domain_is_rejected(grid):
    frac = FractureMesh.from_points([(0.0, 0.0), (1.5, 0.0)], tip="last")
    with pytest.raises(GeometryError, match="aucun point d'impact"):
        cut_topology(grid, frac)


def test_interior_start_is_rejected(grid):
    frac = FractureMesh.from_points([(0.3, 0.0), (0.6, 0.0)], tip="last")
    with pytest.raises(GeometryError):
        cut_topology(grid, frac)


def test_classify_side(grid, tip_fracture):
    path = cut_topology(grid, tip_fracture).path
    pts = np.array([[0.3, 0.05], [0.3, -0.05], [0.8, 0.0], [0.3, 0.0]])
    assert classify_side(pts, path).tolist() == [PLUS, MINUS, ON_EXTENSION, ON_EXTENSION]


def test_classify_side_swaps_under_reflection(square_grid, slanted_fracture):
    path = cut_topology(square_grid, slanted_fracture).path
    a, d = path.points[0], path.directions[0]
    n = path.normals[0]
    rng = np.random.default_rng(7)
    pts = rng.uniform([0.0, -0.5], [1.0, 0.5], size=(200, 2))
    t = (pts - a) @ d / (d @ d)
    off = (pts - a) @ n
    keep = (t > 0.05) & (t < 0.95) & (np.abs(off) > 1e-6)
    pts, off = pts[keep], off[keep]
    mirrored = pts - 2.0 * off[:, None] * n[None, :]
    sides = classify_side(pts, path)
    assert set(sides.tolist()) == {PLUS, MINUS}
    np.testing.assert_array_equal(classify_side(mirrored, path), -sides)


def test_tip_coordinates():
    frame = TipFrame(np.array([0.6, 0.0]), np.array([1.0, 0.0]))
    r, theta = tip_coordinates(frame, np.array([[0.85, 0.0], [0.6, 0.1], [0.6, 0.0]]))
    np.testing.assert_allclose(r, [0.25, 0.1, 0.0])
    np.testing.assert_allclose(theta, [0.0, math.pi / 2, 0.0])

    behind = np.array([[0.4, 0.0], [0.4, 0.0]])
    r, theta = tip_coordinates(frame, behind, np.array([PLUS, MINUS]))
    np.testing.assert_allclose(r, [0.2, 0.2])
    np.testing.assert_allclose(theta, [math.pi, -math.pi])


# --- entrées/sorties ---

def test_native_mesh_file(tmp_path, grid):
    path = write_mesh(tmp_path / "grid.mesh", grid, length_scale=1000.0)
    back = read_mesh(path, length_scale=1000.0)
    np.testing.assert_allclose(back.vertices, grid.vertices, rtol=0, atol=1e-12)
    assert back.n_triangles == grid.n_triangles
    assert sorted(back.boundary_tags) == sorted(grid.boundary_tags)


def test_read_missing_mesh(tmp_path):
    with pytest.raises(FileNotFoundError):
        read_mesh(tmp_path / "absent.mesh")


def test_rectangle_mesh():
    mesh = rectangle_mesh(1000.0, 1000.0, 6800.0)
    assert set(mesh.tag_names) == {"bottom", "right", "top", "left"}
    assert mesh.areas.sum() == pytest.approx(1e6)
    assert mesh.areas.max() <= 6800.0 * (1 + 1e-9)
    assert mesh.vertices[:, 1].min() == pytest.approx(-500.0)
    # aucun sommet du bord gauche sur l'axe de la fracture
    left = mesh.vertices[np.isclose(mesh.vertices[:, 0], 0.0)]
    assert np.all(np.abs(left[:, 1]) > 1.0)
