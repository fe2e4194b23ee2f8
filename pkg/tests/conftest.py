# tests/conftest.py
# -*- coding: utf-8 -*-
from __future__ import annotations

import numpy as np
import pytest

from fracporo.core.assembly import BoundaryCondition, MaterialParams, ProblemData, build_assembler
from fracporo.core.enrichment import build_space
from fracporo.core.geometry import BulkMesh, FractureMesh


def structured_mesh(nx: int, ny: int, x0: float = 0.0, x1: float = 1.0, y0: float = -0.5, y1: float = 0.5) -> BulkMesh:
    """Grille (nx × ny) de cellules coupées en deux triangles, bords bottom/right/top/left."""
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    xx, yy = np.meshgrid(xs, ys, indexing="xy")
    vertices = np.column_stack([xx.ravel(), yy.ravel()])

    def node(i: int, j: int) -> int:
        return j * (nx + 1) + i

    tris = []
    for j in range(ny):
        for i in range(nx):
            a, b, c, d = node(i, j), node(i + 1, j), node(i + 1, j + 1), node(i, j + 1)
            tris += [(a, b, c), (a, c, d)]
    edges, tags = [], []
    for i in range(nx):
        edges += [(node(i, 0), node(i + 1, 0)), (node(i, ny), node(i + 1, ny))]
        tags += ["bottom", "top"]
    for j in range(ny):
        edges += [(node(0, j), node(0, j + 1)), (node(nx, j), node(nx, j + 1))]
        tags += ["left", "right"]
    return BulkMesh.build(vertices, np.array(tris), np.array(edges), tags)


@pytest.fixture
def grid() -> BulkMesh:
    # lignes en y = ±0.1, ±0.3, ±0.5: l'axe y = 0 traverse la rangée centrale
    return structured_mesh(4, 5)


@pytest.fixture
def tip_fracture() -> FractureMesh:
    # pointe strictement à l'intérieur d'un triangle
    return FractureMesh.from_points([(0.0, 0.0), (0.6, 0.0)], tip="last", end_tags={"first": "inlet", "last": "tip"})


@pytest.fixture
def through_fracture() -> FractureMesh:
    pts = [(0.0, 0.0), (0.25, 0.0), (0.5, 0.0), (0.75, 0.0), (1.0, 0.0)]
    return FractureMesh.from_points(pts, tip="none", end_tags={"first": "inlet", "last": "outlet"})


@pytest.fixture
def tip_space(grid, tip_fracture):
    return build_space(grid, tip_fracture, radius=0.0)


@pytest.fixture
def through_space(grid, through_fracture):
    return build_space(grid, through_fracture, radius=0.0)


@pytest.fixture
def unit_params() -> MaterialParams:
    return MaterialParams(
        permeability=1e-2,
        normal_permeability=1.0,
        tangential_permeability=1.0,
        lame_lambda=1.0,
        lame_mu=1.0,
        viscosity=1.0,
        xi=0.75,
    )


@pytest.fixture
def clamped_bottom() -> ProblemData:
    return ProblemData(
        elasticity=[BoundaryCondition("bottom", "dirichlet", (0.0, 0.0))],
        bulk_flow=[BoundaryCondition("bottom", "dirichlet", 0.0)],
        fracture_flow=[BoundaryCondition("inlet", "dirichlet", 1.0), BoundaryCondition("tip", "neumann", 0.0)],
    )


@pytest.fixture
def tip_assembler(tip_space, unit_params, clamped_bottom):
    return build_assembler(tip_space, unit_params, clamped_bottom)


@pytest.fixture
def square_grid() -> BulkMesh:
    return structured_mesh(4, 4)


@pytest.fixture
def slanted_fracture() -> FractureMesh:
    # y = 0.4 x − 0.1: passe par le sommet (0.25, 0) de square_grid
    return FractureMesh.from_points([(0.0, -0.1), (1.0, 0.3)], tip="none", end_tags={"first": "inlet", "last": "outlet"})
