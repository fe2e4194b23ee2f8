# fracporo/core/enrichment.py
# -*- coding: utf-8 -*-
"""
Enrichissement XFEM.

Numérotation scalaire (famille "déplacement" à 4 fonctions de pointe, "pression" à 2):
  [0, N)                   DOF standard du nœud i
  [N, N+|K|)               DOF Heaviside des nœuds de K_R (ordre croissant)
  [N+|K|, N+|K|+m|J|)      m DOF de pointe par nœud de J_R (ordre croissant, fonctions contiguës)
Champ vectoriel: composante α décalée de α·n_scalaire.
"""
from __future__ import annotations

import logging
import weakref
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Callable, Dict, Optional, Tuple

import numpy as np
import scipy.sparse as sp

from fracporo.core.geometry import (
    ON_EXTENSION,
    BulkMesh,
    CutInfo,
    FractureMesh,
    classify_side,
    cut_topology,
    tip_coordinates,
)
from fracporo.core.quadrature import InterfaceQuad

logger = logging.getLogger(__name__)

# Plancher de b_h dans les dénominateurs (m)
B_MIN = 1e-12


# -----------------------------------------------------------------------------
# NodeSets
# -----------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class NodeSets:
    tip: np.ndarray         # J_R
    heaviside: np.ndarray   # K_R
    radius: float

    def __repr__(self) -> str:
        return f"<NodeSets |J_R|={len(self.tip)} |K_R|={len(self.heaviside)} R={self.radius:g}>"


def classify_nodes(bulk: BulkMesh, frac: Optional[FractureMesh], cut: CutInfo, radius: float) -> NodeSets:
    """J_R: nœuds à distance ≤ R de la pointe ou des éléments de pointe; K_R: nœuds des éléments coupés par Σ, hors J_R."""
    if radius < 0:
        raise ValueError("rayon d'enrichissement négatif")
    empty = np.zeros(0, dtype=np.int64)
    if frac is None or cut.path is None:
        return NodeSets(empty, empty, float(radius))
    tip_nodes = empty
    if frac.has_tip:
        near = np.linalg.norm(bulk.vertices - frac.vertices[-1], axis=1) <= radius
        tip_nodes = np.union1d(np.nonzero(near)[0], bulk.triangles[cut.tip_elements].ravel()).astype(np.int64)
    cut_nodes = np.unique(bulk.triangles[cut.fracture_elements].ravel()) if len(cut.fracture_elements) else empty
    heaviside = np.setdiff1d(cut_nodes, tip_nodes).astype(np.int64)
    return NodeSets(tip_nodes, heaviside, float(radius))


# -----------------------------------------------------------------------------
# Fonctions de pointe
# -----------------------------------------------------------------------------
def _tip_functions(r: np.ndarray, theta: np.ndarray, count: int, angle: float = 0.0) -> Tuple[np.ndarray, np.ndarray]:
    r = np.asarray(r, dtype=float)
    theta = np.asarray(theta, dtype=float)
    sr = np.sqrt(r)
    s2, c2 = np.sin(0.5 * theta), np.cos(0.5 * theta)
    st, ct = np.sin(theta), np.cos(theta)
    vals = np.stack([sr * s2, sr * c2, sr * s2 * st, sr * c2 * st])[:count]

    with np.errstate(divide="ignore", invalid="ignore"):
        inv = np.where(r > 0, 0.5 / sr, np.nan)
        dr = np.stack([s2 * inv, c2 * inv, s2 * st * inv, c2 * st * inv])[:count]
        dth = np.stack([
            0.5 * sr * c2,
            -0.5 * sr * s2,
            sr * (0.5 * c2 * st + s2 * ct),
            sr * (-0.5 * s2 * st + c2 * ct),
        ])[:count]
        over_r = np.where(r > 0, 1.0 / np.where(r > 0, r, 1.0), np.nan)
    phi = theta + angle
    er = np.stack([np.cos(phi), np.sin(phi)], axis=-1)
    et = np.stack([-np.sin(phi), np.cos(phi)], axis=-1)
    grads = dr[..., None] * er[None] + (dth * over_r)[..., None] * et[None]
    return vals, grads


def eval_tip_functions(r: np.ndarray, theta: np.ndarray, angle: float = 0.0) -> Tuple[np.ndarray, np.ndarray]:
    """
    F1..F4 = √r {sin(Θ/2), cos(Θ/2), sin(Θ/2) sinΘ, cos(Θ/2) sinΘ} et leurs gradients cartésiens.
    `angle` oriente le repère local (direction du prolongement). En r = 0: valeurs nulles, gradients NaN.
    Retour: valeurs (4, n), gradients (4, n, 2).
    """
    return _tip_functions(r, theta, 4, angle)


def eval_pressure_tip_functions(r: np.ndarray, theta: np.ndarray, angle: float = 0.0) -> Tuple[np.ndarray, np.ndarray]:
    """G1 = F1, G2 = F2."""
    return _tip_functions(r, theta, 2, angle)


# -----------------------------------------------------------------------------
# Espaces
# -----------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class ScalarSpace:
    mesh: BulkMesh
    cut: CutInfo
    nodes: NodeSets
    n_tip: int

    @cached_property
    def heaviside_dof(self) -> np.ndarray:
        dof = np.full(self.mesh.n_vertices, -1, dtype=np.int64)
        dof[self.nodes.heaviside] = self.mesh.n_vertices + np.arange(len(self.nodes.heaviside))
        return dof

    @cached_property
    def tip_dof(self) -> np.ndarray:
        """Premier DOF de pointe du nœud (les suivants sont contigus), -1 sinon."""
        dof = np.full(self.mesh.n_vertices, -1, dtype=np.int64)
        start = self.mesh.n_vertices + len(self.nodes.heaviside)
        dof[self.nodes.tip] = start + self.n_tip * np.arange(len(self.nodes.tip))
        return dof

    @property
    def n_dofs(self) -> int:
        return self.mesh.n_vertices + len(self.nodes.heaviside) + self.n_tip * len(self.nodes.tip)

    def node_dofs(self, nodes: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """(DOF standard, DOF d'enrichissement) attachés aux nœuds donnés."""
        nodes = np.asarray(nodes, dtype=np.int64)
        enr = [self.heaviside_dof[nodes][self.heaviside_dof[nodes] >= 0]]
        t0 = self.tip_dof[nodes][self.tip_dof[nodes] >= 0]
        enr += [t0 + j for j in range(self.n_tip)]
        return nodes.copy(), np.sort(np.concatenate(enr)).astype(np.int64)

    @cached_property
    def enriched_elements(self) -> np.ndarray:
        tri = self.mesh.triangles
        mask = np.any((self.heaviside_dof[tri] >= 0) | (self.tip_dof[tri] >= 0), axis=1)
        return np.nonzero(mask)[0]


@dataclass(frozen=True, eq=False)
class FieldSpace:
    scalar: ScalarSpace
    components: int
    name: str

    @property
    def n_dofs(self) -> int:
        return self.components * self.scalar.n_dofs

    def component_slice(self, alpha: int) -> slice:
        n = self.scalar.n_dofs
        return slice(alpha * n, (alpha + 1) * n)


@dataclass(frozen=True, eq=False)
class EnrichedSpace:
    bulk: BulkMesh
    frac: Optional[FractureMesh]
    cut: CutInfo
    nodes: NodeSets
    displacement: FieldSpace
    pressure: FieldSpace

    @property
    def n_fracture_dofs(self) -> int:
        return 0 if self.frac is None else self.frac.n_vertices

    def dof_counts(self) -> Dict[str, int]:
        return {
            "displacement": self.displacement.n_dofs,
            "bulk_pressure": self.pressure.n_dofs,
            "fracture_pressure": self.n_fracture_dofs,
        }

    def __repr__(self) -> str:
        c = self.dof_counts()
        return f"<EnrichedSpace u={c['displacement']} p={c['bulk_pressure']} pΣ={c['fracture_pressure']} {self.nodes!r}>"


def build_space(bulk: BulkMesh, frac: Optional[FractureMesh], radius: float, cut: Optional[CutInfo] = None) -> EnrichedSpace:
    cut = cut if cut is not None else cut_topology(bulk, frac)
    nodes = classify_nodes(bulk, frac, cut, radius)
    u = FieldSpace(ScalarSpace(bulk, cut, nodes, 4), 2, "displacement")
    p = FieldSpace(ScalarSpace(bulk, cut, nodes, 2), 1, "bulk_pressure")
    space = EnrichedSpace(bulk, frac, cut, nodes, u, p)
    logger.info("espace XFEM: %r", space)
    return space


# -----------------------------------------------------------------------------
# Évaluation
# -----------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class EvalMatrices:
    """Matrices (points × DOF scalaires) des valeurs et dérivées des fonctions de base."""

    values: sp.csr_matrix
    dx: Optional[sp.csr_matrix]
    dy: Optional[sp.csr_matrix]


def evaluation_matrices(
    space: ScalarSpace,
    points: np.ndarray,
    elements: np.ndarray,
    sides: np.ndarray,
    gradients: bool = True,
) -> EvalMatrices:
    """
    Valeurs (et gradients) des fonctions de base aux points donnés, chaque point étant
    rattaché à un triangle et à un côté (±1) de Σ̃. Vectorisé sur tous les points.
    """
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    elements = np.asarray(elements, dtype=np.int64)
    sides = np.asarray(sides, dtype=np.int8)
    n = len(points)
    mesh = space.mesh
    tri = mesh.triangles[elements]
    lam = mesh.barycentric(elements, points)
    glam = mesh.basis_gradients[elements]

    rows, cols, vals, gxs, gys = [], [], [], [], []

    def push(r, c, v, gx=None, gy=None):
        rows.append(r)
        cols.append(c)
        vals.append(v)
        if gradients:
            gxs.append(gx)
            gys.append(gy)

    pid = np.repeat(np.arange(n), 3)
    push(pid, tri.ravel(), lam.ravel(), glam[:, :, 0].ravel(), glam[:, :, 1].ravel())

    hd = space.heaviside_dof[tri]
    pi, ki = np.nonzero(hd >= 0)
    if len(pi):
        if np.any(sides[pi] == ON_EXTENSION):
            raise ValueError("évaluation Heaviside sur Σ̃ sans indication de côté")
        s = sides[pi].astype(float)
        push(pi, hd[pi, ki], s * lam[pi, ki], s * glam[pi, ki, 0], s * glam[pi, ki, 1])

    td = space.tip_dof[tri]
    pi, ki = np.nonzero(td >= 0)
    if len(pi):
        frame = space.cut.frame
        need = np.unique(pi)
        r, theta = tip_coordinates(frame, points[need], sides[need])
        fv, fg = _tip_functions(r, theta, space.n_tip, frame.angle)
        where = np.searchsorted(need, pi)
        for j in range(space.n_tip):
            f = fv[j, where]
            g = fg[j, where]
            l = lam[pi, ki]
            push(
                pi,
                td[pi, ki] + j,
                f * l,
                g[:, 0] * l + f * glam[pi, ki, 0],
                g[:, 1] * l + f * glam[pi, ki, 1],
            )

    r_all = np.concatenate(rows)
    c_all = np.concatenate(cols)
    shape = (n, space.n_dofs)
    values = sp.csr_matrix((np.concatenate(vals), (r_all, c_all)), shape=shape)
    if not gradients:
        return EvalMatrices(values, None, None)
    dx = sp.csr_matrix((np.concatenate(gxs), (r_all, c_all)), shape=shape)
    dy = sp.csr_matrix((np.concatenate(gys), (r_all, c_all)), shape=shape)
    return EvalMatrices(values, dx, dy)


def eval_field(
    field_space: FieldSpace,
    coeffs: np.ndarray,
    element: int,
    local_point: Tuple[float, float],
    side: Optional[int] = None,
) -> Tuple[Any, np.ndarray]:
    """
    Valeur et gradient d'un champ enrichi en un point de référence (ξ, η) du triangle.
    Déplacement: (2,), (2, 2) avec grad[α, j] = ∂_j u_α. Pression: scalaire, (2,).
    """
    scalar = field_space.scalar
    mesh = scalar.mesh
    xi, eta = float(local_point[0]), float(local_point[1])
    c = mesh.corners[element]
    x = c[0] + xi * (c[1] - c[0]) + eta * (c[2] - c[0])
    if side is None:
        side = int(classify_side(x[None, :], scalar.cut.path)[0]) if scalar.cut.path is not None else 1
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape != (field_space.n_dofs,):
        raise ValueError(f"coefficients: taille {coeffs.shape} ≠ ({field_space.n_dofs},)")
    m = evaluation_matrices(scalar, x[None, :], np.array([element]), np.array([side], dtype=np.int8))
    blocks = coeffs.reshape(field_space.components, scalar.n_dofs)
    val = np.array([(m.values @ b)[0] for b in blocks])
    grad = np.array([[(m.dx @ b)[0], (m.dy @ b)[0]] for b in blocks])
    if field_space.components == 1:
        return float(val[0]), grad[0]
    return val, grad


# -----------------------------------------------------------------------------
# Sauts et moyennes sur Σ
# -----------------------------------------------------------------------------
def trace_matrices(space: ScalarSpace, elements: np.ndarray, points: np.ndarray, r: np.ndarray) -> Tuple[sp.csr_matrix, sp.csr_matrix]:
    """
    Formules fermées sur Σ: ⟦·⟧ = Σ_K 2 v_i φ_i + Σ_J 2 c_i^(1) √r φ_i ; ⟨·⟩ = Σ u_i φ_i.
    Retour: (saut, moyenne), matrices (points × DOF scalaires).
    """
    elements = np.asarray(elements, dtype=np.int64)
    n = len(elements)
    tri = space.mesh.triangles[elements]
    lam = space.mesh.barycentric(elements, points)
    pid = np.repeat(np.arange(n), 3)
    avg = sp.csr_matrix((lam.ravel(), (pid, tri.ravel())), shape=(n, space.n_dofs))

    rows, cols, vals = [], [], []
    hd = space.heaviside_dof[tri]
    pi, ki = np.nonzero(hd >= 0)
    rows.append(pi)
    cols.append(hd[pi, ki])
    vals.append(2.0 * lam[pi, ki])
    td = space.tip_dof[tri]
    pi, ki = np.nonzero(td >= 0)
    rows.append(pi)
    cols.append(td[pi, ki])
    vals.append(2.0 * np.sqrt(np.asarray(r)[pi]) * lam[pi, ki])
    jump = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, space.n_dofs))
    return jump, avg


def normal_jump_matrix(field_space: FieldSpace, elements: np.ndarray, points: np.ndarray, r: np.ndarray, normals: np.ndarray) -> sp.csr_matrix:
    """Matrice de b = ⟦u⟧·ν aux points de Σ (points × DOF de déplacement)."""
    jump, _ = trace_matrices(field_space.scalar, elements, points, r)
    blocks = [sp.diags(normals[:, a]) @ jump for a in range(field_space.components)]
    return sp.hstack(blocks, format="csr")


def locate_on_fracture(cut: CutInfo, s: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """(triangle, point) pour des abscisses s sur Σ; hors de [0, |Σ|] -> erreur."""
    pieces = cut.fracture_pieces()
    if not pieces:
        raise ValueError("pas de fracture dans ce maillage")
    s = np.atleast_1d(np.asarray(s, dtype=float))
    starts = np.array([p[2] for p in pieces])
    ends = np.array([p[3] for p in pieces])
    path = cut.path
    tol = 10 * path.eps
    if np.any(s < -tol) or np.any(s > path.fracture_length + tol):
        raise ValueError("abscisse hors de Σ (au-delà de la pointe ou avant le début)")
    k = np.clip(np.searchsorted(starts, s, side="right") - 1, 0, len(pieces) - 1)
    k = np.where(s > ends[k] + tol, np.minimum(k + 1, len(pieces) - 1), k)
    elements = np.array([pieces[i][0] for i in k], dtype=np.int64)
    seg = np.clip(np.searchsorted(path.arc, s, side="right") - 1, 0, path.n_fracture_segments - 1)
    tau = (s - path.arc[seg]) / path.lengths[seg]
    pts = path.points[seg] + tau[:, None] * path.directions[seg]
    return elements, pts


def eval_jump_average(field_space: FieldSpace, coeffs: np.ndarray, s: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Saut et moyenne en des abscisses s ∈ Σ (formules fermées). Vectoriel: (n, 2)."""
    scalar = field_space.scalar
    elements, pts = locate_on_fracture(scalar.cut, s)
    tip = scalar.cut.frame.tip if scalar.cut.frame is not None else None
    r = np.linalg.norm(pts - tip, axis=1) if tip is not None else np.zeros(len(pts))
    jump, avg = trace_matrices(scalar, elements, pts, r)
    blocks = np.asarray(coeffs, dtype=float).reshape(field_space.components, scalar.n_dofs)
    j = np.column_stack([jump @ b for b in blocks])
    a = np.column_stack([avg @ b for b in blocks])
    if field_space.components == 1:
        return j[:, 0], a[:, 0]
    return j, a


# -----------------------------------------------------------------------------
# CrackWidthField
# -----------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class CrackWidthField:
    """
    b_h sur Σ, soit issu des coefficients de déplacement (b = ⟦u⟧·ν),
    soit donné par une fermeture analytique de r (ouverture initiale).
    """

    space: EnrichedSpace
    u: Optional[np.ndarray] = None
    closure: Optional[Callable[[np.ndarray], np.ndarray]] = None
    b_min: float = B_MIN
    _cache: "weakref.WeakKeyDictionary[InterfaceQuad, np.ndarray]" = field(default_factory=weakref.WeakKeyDictionary, repr=False)

    def values(self, s: np.ndarray) -> np.ndarray:
        """b_h brut aux abscisses s."""
        elements, pts = locate_on_fracture(self.space.cut, s)
        frame = self.space.cut.frame
        r = np.linalg.norm(pts - frame.tip, axis=1) if frame is not None else self._distance_to_end(pts)
        normals = self._normals_at(np.atleast_1d(s))
        return self._evaluate(elements, pts, r, normals)

    def on_interface(self, iq: InterfaceQuad) -> np.ndarray:
        """b_h brut aux points de quadrature d'interface (mis en cache par quadrature)."""
        if iq not in self._cache:
            self._cache[iq] = self._evaluate(iq.elements, iq.points, iq.r, iq.normals, iq)
        return self._cache[iq]

    def floored(self, iq: InterfaceQuad) -> np.ndarray:
        return np.maximum(self.on_interface(iq), self.b_min)

    def extrema(self, iq: InterfaceQuad) -> Tuple[float, float]:
        b = self.on_interface(iq)
        if len(b) == 0:
            return 0.0, 0.0
        return float(b.min()), float(b.max())

    def _evaluate(self, elements, pts, r, normals, iq: Optional[InterfaceQuad] = None) -> np.ndarray:
        if self.u is not None:
            if iq is not None:
                mat = iq.cached(("normal_jump", self.space.displacement), lambda: normal_jump_matrix(self.space.displacement, elements, pts, r, normals))
            else:
                mat = normal_jump_matrix(self.space.displacement, elements, pts, r, normals)
            return mat @ self.u
        if self.closure is not None:
            return np.asarray(self.closure(np.asarray(r)), dtype=float) * np.ones(len(pts))
        return np.zeros(len(pts))

    def _normals_at(self, s: np.ndarray) -> np.ndarray:
        path = self.space.cut.path
        seg = np.clip(np.searchsorted(path.arc, s, side="right") - 1, 0, path.n_fracture_segments - 1)
        return path.normals[seg]

    def _distance_to_end(self, pts: np.ndarray) -> np.ndarray:
        return np.linalg.norm(pts - self.space.frac.vertices[-1], axis=1)


def crack_width(space: EnrichedSpace, u_coeffs: np.ndarray, b_min: float = B_MIN) -> CrackWidthField:
    u = np.asarray(u_coeffs, dtype=float)
    if u.shape != (space.displacement.n_dofs,):
        raise ValueError(f"coefficients de déplacement: taille {u.shape} ≠ ({space.displacement.n_dofs},)")
    return CrackWidthField(space, u=u, b_min=b_min)


def width_from_closure(space: EnrichedSpace, closure: Callable[[np.ndarray], np.ndarray], b_min: float = B_MIN) -> CrackWidthField:
    """Ouverture donnée en fonction de la distance r à la pointe (ex.: b_{h,0} = c·√r)."""
    return CrackWidthField(space, closure=closure, b_min=b_min)
