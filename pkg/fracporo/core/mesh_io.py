# fracporo/core/mesh_io.py
# -*- coding: utf-8 -*-
"""
Lecture/écriture de maillages:
- format ASCII minimal (sommets / triangles / arêtes de bord étiquetées);
- import "msh v2" (gmsh ASCII) via meshio, étiquettes = noms physiques;
- générateur du maillage grossier du cas test (rectangle, triangle).
"""
from __future__ import annotations

import logging
import math
from pathlib import Path
from typing import Dict, List, Optional, Union

import meshio
import numpy as np
import triangle

from fracporo.core.errors import GeometryError
from fracporo.core.geometry import BulkMesh

logger = logging.getLogger(__name__)

HEADER = "# fracporo mesh v1"

# Amplitude de la perturbation des sommets des bords verticaux (en fraction du pas)
SIDE_JITTER = 0.15


# ============================================================
# Format ASCII natif
# ============================================================

def write_mesh(path: Union[str, Path], mesh: BulkMesh, length_scale: float = 1.0) -> Path:
    """Écrit le maillage (coordonnées divisées par length_scale)."""
    path = Path(path)
    lines: List[str] = [HEADER, f"vertices {mesh.n_vertices}"]
    lines += [f"{x / length_scale:.17g} {y / length_scale:.17g}" for x, y in mesh.vertices]
    lines.append(f"triangles {mesh.n_triangles}")
    lines += [f"{a} {b} {c}" for a, b, c in mesh.triangles]
    lines.append(f"boundary {len(mesh.boundary_edges)}")
    lines += [f"{a} {b} {tag}" for (a, b), tag in zip(mesh.boundary_edges, mesh.boundary_tags)]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def _read_native(path: Path, length_scale: float) -> BulkMesh:
    rows = [ln.strip() for ln in path.read_text(encoding="utf-8").splitlines()]
    rows = [ln for ln in rows if ln and not ln.startswith("#")]
    pos = 0

    def block(name: str) -> List[List[str]]:
        nonlocal pos
        head = rows[pos].split() if pos < len(rows) else []
        if len(head) != 2 or head[0] != name:
            raise GeometryError(f"{path}: section '{name}' attendue, trouvé {rows[pos] if pos < len(rows) else 'EOF'!r}")
        n = int(head[1])
        out = [r.split() for r in rows[pos + 1:pos + 1 + n]]
        if len(out) != n:
            raise GeometryError(f"{path}: section '{name}' tronquée")
        pos += n + 1
        return out

    verts = np.array([[float(x), float(y)] for x, y, *_ in block("vertices")]) * length_scale
    tris = np.array([[int(a), int(b), int(c)] for a, b, c in block("triangles")], dtype=np.int64)
    bnd = block("boundary") if pos < len(rows) else []
    edges = np.array([[int(r[0]), int(r[1])] for r in bnd], dtype=np.int64).reshape(-1, 2)
    tags = [r[2] if len(r) > 2 else "boundary" for r in bnd]
    return BulkMesh.build(verts, tris, edges, tags)


def _read_msh(path: Path, length_scale: float) -> BulkMesh:
    m = meshio.read(path, file_format="gmsh")
    cells = m.cells_dict
    if "triangle" not in cells:
        raise GeometryError(f"{path}: aucun triangle")
    names: Dict[int, str] = {}
    for name, data in (m.field_data or {}).items():
        if len(data) >= 2 and int(data[1]) == 1:
            names[int(data[0])] = str(name)
    edges = cells.get("line", np.zeros((0, 2), dtype=np.int64))
    tags: List[str] = []
    if len(edges):
        phys = m.cell_data_dict.get("gmsh:physical", {}).get("line")
        if phys is None:
            tags = ["boundary"] * len(edges)
        else:
            tags = [names.get(int(p), f"tag{int(p)}") for p in phys]
    # les points non utilisés (centres de géométrie gmsh) ne gênent pas
    return BulkMesh.build(m.points[:, :2] * length_scale, cells["triangle"], edges, tags)


def read_mesh(path: Union[str, Path], length_scale: float = 1.0) -> BulkMesh:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    if path.suffix.lower() == ".msh":
        mesh = _read_msh(path, length_scale)
    else:
        mesh = _read_native(path, length_scale)
    logger.info("maillage lu: %s (%d sommets, %d triangles)", path.name, mesh.n_vertices, mesh.n_triangles)
    return mesh


# ============================================================
# Générateur du cas test
# ============================================================

def _side_fractions(n: int) -> np.ndarray:
    """Fractions dans [0,1] des sommets d'un bord vertical: n impair, asymétrique, jamais 1/2."""
    i = np.arange(n + 1)
    return i / n + SIDE_JITTER * np.sin(np.pi * i / n) / n


def rectangle_mesh(
    width: float,
    height: float,
    max_area: float,
    x0: float = 0.0,
    y0: Optional[float] = None,
    min_angle: float = 30.0,
) -> BulkMesh:
    """
    Maillage triangulaire non structuré de [x0, x0+width] × [y0, y0+height]
    (y0 par défaut: -height/2). Bords étiquetés bottom/right/top/left.
    Les sommets des bords verticaux évitent l'axe y = y0 + height/2.
    """
    if width <= 0 or height <= 0 or max_area <= 0:
        raise GeometryError("rectangle_mesh: dimensions et aire maximale strictement positives")
    y0 = -0.5 * height if y0 is None else y0
    h = math.sqrt(2.3 * max_area)
    nx = max(2, int(math.ceil(width / h)))
    ny = max(3, int(math.ceil(height / h)))
    if ny % 2 == 0:
        ny += 1

    xs = x0 + width * np.arange(nx + 1) / nx
    ys = y0 + height * _side_fractions(ny)
    bottom = np.column_stack([xs, np.full_like(xs, y0)])
    right = np.column_stack([np.full(ny + 1, x0 + width), ys])
    top = np.column_stack([xs[::-1], np.full_like(xs, y0 + height)])
    left = np.column_stack([np.full(ny + 1, x0), ys[::-1]])
    loop = np.vstack([bottom[:-1], right[:-1], top[:-1], left[:-1]])
    n = len(loop)
    segments = np.column_stack([np.arange(n), (np.arange(n) + 1) % n])

    out = triangle.triangulate({"vertices": loop, "segments": segments}, f"pq{min_angle:g}Ya{max_area:.12g}")
    verts, tris = out["vertices"], out["triangles"]

    mesh = BulkMesh.build(verts, tris)
    mid = 0.5 * (mesh.vertices[mesh.boundary_edges[:, 0]] + mesh.vertices[mesh.boundary_edges[:, 1]])
    tol = 1e-9 * max(width, height)
    tags = np.full(len(mid), "boundary", dtype=object)
    tags[np.abs(mid[:, 1] - y0) < tol] = "bottom"
    tags[np.abs(mid[:, 1] - (y0 + height)) < tol] = "top"
    tags[np.abs(mid[:, 0] - x0) < tol] = "left"
    tags[np.abs(mid[:, 0] - (x0 + width)) < tol] = "right"
    mesh = BulkMesh(mesh.vertices, mesh.triangles, mesh.boundary_edges, tags, 0)
    logger.info("maillage généré: %d sommets, %d triangles, h=%.4g", mesh.n_vertices, mesh.n_triangles, mesh.h)
    return mesh
