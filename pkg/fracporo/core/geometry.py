# fracporo/core/geometry.py
# -*- coding: utf-8 -*-
"""
Géométrie: maillage volumique indépendant de la fracture, polyligne de fracture,
repère polaire de pointe, classification de côté par rapport à Σ̃ = Σ ∪ Σ_e,
raffinement uniforme et topologie de découpe (cordes par triangle).

Conventions:
- la pointe (si elle existe) est toujours le dernier sommet de la polyligne;
- ν est la normale gauche de la direction début -> pointe: le côté "plus" est à gauche;
- κ = div_τ ν (cercle parcouru dans le sens trigonométrique: κ = -1/rayon).
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple, Union

import numpy as np

from fracporo.core.errors import GeometryError

logger = logging.getLogger(__name__)

PLUS = 1
MINUS = -1
ON_EXTENSION = 0

# ε_geom = GEOM_EPS_FACTOR × diamètre du domaine
GEOM_EPS_FACTOR = 1e-10

# Taille des paquets de points pour les calculs point/segment vectorisés
_CHUNK = 4096


def _cross(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


# -----------------------------------------------------------------------------
# BulkMesh
# -----------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class BulkMesh:
    """Triangulation conforme de Ω̃ (coordonnées en mètres)."""

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    boundary_tags: np.ndarray
    level: int = 0

    @classmethod
    def build(
        cls,
        vertices: np.ndarray,
        triangles: np.ndarray,
        boundary_edges: Optional[np.ndarray] = None,
        boundary_tags: Optional[Sequence[str]] = None,
        level: int = 0,
        default_tag: str = "boundary",
    ) -> "BulkMesh":
        """
        Oriente les triangles, vérifie la conformité et complète les étiquettes:
        toute arête de bord non étiquetée reçoit `default_tag`.
        """
        v = np.ascontiguousarray(vertices, dtype=float)[:, :2]
        t = np.ascontiguousarray(triangles, dtype=np.int64).copy()
        if t.ndim != 2 or t.shape[1] != 3 or len(t) == 0:
            raise GeometryError("triangles: tableau (T, 3) non vide attendu")
        if t.min() < 0 or t.max() >= len(v):
            raise GeometryError("triangles: indice de sommet hors bornes")

        e1 = v[t[:, 1]] - v[t[:, 0]]
        e2 = v[t[:, 2]] - v[t[:, 0]]
        signed = 0.5 * _cross(e1, e2)
        scale = float(np.ptp(v, axis=0).max()) or 1.0
        if np.any(np.abs(signed) <= (GEOM_EPS_FACTOR * scale) ** 2):
            bad = int(np.argmin(np.abs(signed)))
            raise GeometryError(f"triangle {bad} d'aire nulle")
        flip = signed < 0
        t[flip] = t[flip][:, [0, 2, 1]]

        keys, counts = _edge_keys_counts(t, len(v))
        if np.any(counts > 2):
            raise GeometryError("maillage non conforme: arête partagée par plus de 2 triangles")
        boundary_keys = keys[counts == 1]

        tag_of: Dict[int, str] = {}
        if boundary_edges is not None and len(boundary_edges):
            be = np.sort(np.asarray(boundary_edges, dtype=np.int64), axis=1)
            tags = list(boundary_tags) if boundary_tags is not None else [default_tag] * len(be)
            if len(tags) != len(be):
                raise GeometryError("boundary_tags: une étiquette par arête de bord attendue")
            bkeys = be[:, 0] * len(v) + be[:, 1]
            known = np.isin(bkeys, boundary_keys)
            if not np.all(known):
                raise GeometryError("arête étiquetée qui n'est pas une arête de bord")
            tag_of = {int(k): str(tg) for k, tg in zip(bkeys, tags)}

        edges = np.stack([boundary_keys // len(v), boundary_keys % len(v)], axis=1)
        tags_out = np.array([tag_of.get(int(k), default_tag) for k in boundary_keys], dtype=object)
        return cls(v, t, edges, tags_out, int(level))

    # ----- tailles -----
    @property
    def n_vertices(self) -> int:
        return int(len(self.vertices))

    @property
    def n_triangles(self) -> int:
        return int(len(self.triangles))

    @cached_property
    def corners(self) -> np.ndarray:
        return self.vertices[self.triangles]

    @cached_property
    def areas(self) -> np.ndarray:
        c = self.corners
        return 0.5 * _cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.corners.mean(axis=1)

    @cached_property
    def diameters(self) -> np.ndarray:
        c = self.corners
        d = np.stack([np.linalg.norm(c[:, i] - c[:, (i + 1) % 3], axis=1) for i in range(3)], axis=1)
        return d.max(axis=1)

    @property
    def h(self) -> float:
        return float(self.diameters.max())

    @cached_property
    def diameter(self) -> float:
        lo, hi = self.vertices.min(axis=0), self.vertices.max(axis=0)
        return float(np.linalg.norm(hi - lo))

    @property
    def eps(self) -> float:
        return GEOM_EPS_FACTOR * self.diameter

    @cached_property
    def inverse_jacobians(self) -> np.ndarray:
        """(T, 2, 2): ξ = J⁻¹ (x − a) sur le triangle de référence."""
        c = self.corners
        jac = np.stack([c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]], axis=2)
        return np.linalg.inv(jac)

    @cached_property
    def basis_gradients(self) -> np.ndarray:
        """(T, 3, 2): gradients constants des fonctions P1 (coordonnées barycentriques)."""
        inv = self.inverse_jacobians
        g = np.empty((self.n_triangles, 3, 2))
        g[:, 1] = inv[:, 0, :]
        g[:, 2] = inv[:, 1, :]
        g[:, 0] = -g[:, 1] - g[:, 2]
        return g

    def barycentric(self, elements: np.ndarray, points: np.ndarray) -> np.ndarray:
        """Coordonnées barycentriques (n, 3) des points dans les triangles donnés."""
        elements = np.asarray(elements, dtype=np.int64)
        a = self.vertices[self.triangles[elements, 0]]
        xi = np.einsum("nij,nj->ni", self.inverse_jacobians[elements], np.asarray(points) - a)
        return np.column_stack([1.0 - xi[:, 0] - xi[:, 1], xi[:, 0], xi[:, 1]])

    # ----- arêtes -----
    @cached_property
    def edges(self) -> np.ndarray:
        keys, _ = _edge_keys_counts(self.triangles, self.n_vertices)
        return np.stack([keys // self.n_vertices, keys % self.n_vertices], axis=1)

    @cached_property
    def boundary_edge_elements(self) -> np.ndarray:
        """Triangle propriétaire de chaque arête de bord."""
        n = self.n_vertices
        tri = self.triangles
        local = np.concatenate([np.sort(tri[:, [0, 1]], axis=1), np.sort(tri[:, [1, 2]], axis=1), np.sort(tri[:, [2, 0]], axis=1)])
        keys = local[:, 0] * n + local[:, 1]
        owner = np.tile(np.arange(self.n_triangles), 3)
        order = np.argsort(keys, kind="stable")
        be = np.sort(self.boundary_edges, axis=1)
        bkeys = be[:, 0] * n + be[:, 1]
        pos = np.searchsorted(keys[order], bkeys)
        return owner[order][pos]

    @property
    def tag_names(self) -> List[str]:
        return sorted(set(str(t) for t in self.boundary_tags))

    def tagged_edges(self, tag: str) -> np.ndarray:
        return self.boundary_edges[self.boundary_tags == tag]

    def tagged_nodes(self, tag: str) -> np.ndarray:
        return np.unique(self.tagged_edges(tag))

    def __repr__(self) -> str:
        return f"<BulkMesh level={self.level} N={self.n_vertices} T={self.n_triangles} h={self.h:.4g}>"


def _edge_keys_counts(triangles: np.ndarray, n_vertices: int) -> Tuple[np.ndarray, np.ndarray]:
    e = np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]])
    e = np.sort(e, axis=1)
    keys = e[:, 0] * n_vertices + e[:, 1]
    return np.unique(keys, return_counts=True)


# -----------------------------------------------------------------------------
# FractureMesh
# -----------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class FractureMesh:
    """Polyligne ordonnée sur Σ; la pointe éventuelle est le dernier sommet."""

    vertices: np.ndarray
    has_tip: bool = True
    end_tags: Dict[str, int] = field(default_factory=dict)
    level: int = 0

    @classmethod
    def from_points(
        cls,
        points: Sequence[Sequence[float]],
        tip: str = "last",
        end_tags: Optional[Dict[str, str]] = None,
        level: int = 0,
    ) -> "FractureMesh":
        """
        tip: 'first' | 'last' | 'none'. Une pointe en premier sommet est ramenée à la fin
        (polyligne renversée). end_tags: {'first': nom, 'last': nom} dans l'ordre d'entrée.
        """
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
            raise GeometryError("fracture: au moins deux sommets (x, y) attendus")
        if tip not in ("first", "last", "none"):
            raise GeometryError(f"fracture: tip={tip!r} invalide")
        tags_in = dict(end_tags or {})
        index = {"first": 0, "last": len(pts) - 1}
        tags = {}
        for end, name in tags_in.items():
            if end not in index:
                raise GeometryError(f"fracture: extrémité inconnue {end!r}")
            tags[str(name)] = index[end]
        if tip == "first":
            pts = pts[::-1].copy()
            tags = {k: len(pts) - 1 - i for k, i in tags.items()}
        frac = cls(pts, tip != "none", tags, int(level))
        frac._check()
        return frac

    def _check(self) -> None:
        seg = self.vertices[1:] - self.vertices[:-1]
        lengths = np.linalg.norm(seg, axis=1)
        scale = float(np.ptp(self.vertices, axis=0).max()) or 1.0
        if np.any(lengths <= GEOM_EPS_FACTOR * scale):
            raise GeometryError("fracture: segment de longueur nulle")
        # simplicité: segments non adjacents disjoints
        s = len(seg)
        if s >= 3:
            a, b = self.vertices[:-1], self.vertices[1:]
            i, j = np.triu_indices(s, k=2)
            p, r = a[i], b[i] - a[i]
            q, u = a[j], b[j] - a[j]
            den = _cross(r, u)
            ok = np.abs(den) > 0
            t = np.where(ok, _cross(q - p, u) / np.where(ok, den, 1.0), -1.0)
            w = np.where(ok, _cross(q - p, r) / np.where(ok, den, 1.0), -1.0)
            hit = ok & (t >= 0) & (t <= 1) & (w >= 0) & (w <= 1)
            if np.any(hit):
                raise GeometryError("fracture: polyligne auto-intersectante")

    @property
    def n_vertices(self) -> int:
        return int(len(self.vertices))

    @property
    def n_segments(self) -> int:
        return self.n_vertices - 1

    @property
    def tip(self) -> Optional[np.ndarray]:
        return self.vertices[-1] if self.has_tip else None

    @property
    def tip_index(self) -> Optional[int]:
        return self.n_vertices - 1 if self.has_tip else None

    @cached_property
    def lengths(self) -> np.ndarray:
        return np.linalg.norm(self.vertices[1:] - self.vertices[:-1], axis=1)

    @cached_property
    def arc(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.lengths)])

    @property
    def length(self) -> float:
        return float(self.arc[-1])

    @property
    def h(self) -> float:
        return float(self.lengths.max())

    @cached_property
    def tangents(self) -> np.ndarray:
        return (self.vertices[1:] - self.vertices[:-1]) / self.lengths[:, None]

    @cached_property
    def normals(self) -> np.ndarray:
        t = self.tangents
        return np.column_stack([-t[:, 1], t[:, 0]])

    @cached_property
    def curvature(self) -> np.ndarray:
        """κ aux sommets (cercle circonscrit); 0 aux extrémités et pour des voisins alignés."""
        kappa = np.zeros(self.n_vertices)
        if self.n_vertices < 3:
            return kappa
        p0, p1, p2 = self.vertices[:-2], self.vertices[1:-1], self.vertices[2:]
        turn = _cross(p1 - p0, p2 - p1)
        denom = (np.linalg.norm(p1 - p0, axis=1) * np.linalg.norm(p2 - p1, axis=1) * np.linalg.norm(p2 - p0, axis=1))
        kappa[1:-1] = -2.0 * turn / denom
        return kappa

    def point_at(self, s: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Position et indice de segment pour des abscisses curvilignes s ∈ [0, |Σ|]."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        seg = np.clip(np.searchsorted(self.arc, s, side="right") - 1, 0, self.n_segments - 1)
        tau = (s - self.arc[seg]) / self.lengths[seg]
        pts = self.vertices[seg] + tau[:, None] * (self.vertices[seg + 1] - self.vertices[seg])
        return pts, seg

    def __repr__(self) -> str:
        return f"<FractureMesh level={self.level} vertices={self.n_vertices} tip={self.has_tip} |Σ|={self.length:.4g}>"


# -----------------------------------------------------------------------------
# Raffinement uniforme
# -----------------------------------------------------------------------------
def refine_uniform(mesh: Union[BulkMesh, FractureMesh]) -> Union[BulkMesh, FractureMesh]:
    """
    Triangle -> 4 enfants par les milieux d'arêtes (enfants 4t..4t+3 du parent t);
    segment de fracture -> 2 moitiés. Étiquettes héritées.
    """
    if isinstance(mesh, FractureMesh):
        v = mesh.vertices
        mids = 0.5 * (v[1:] + v[:-1])
        out = np.empty((2 * len(v) - 1, 2))
        out[0::2] = v
        out[1::2] = mids
        tags = {k: 2 * i for k, i in mesh.end_tags.items()}
        return FractureMesh(out, mesh.has_tip, tags, mesh.level + 1)

    n = mesh.n_vertices
    edges = mesh.edges
    keys = edges[:, 0] * n + edges[:, 1]
    mids = 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])
    vertices = np.vstack([mesh.vertices, mids])

    def mid(a: np.ndarray, b: np.ndarray) -> np.ndarray:
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        return n + np.searchsorted(keys, lo * n + hi)

    t = mesh.triangles
    a, b, c = t[:, 0], t[:, 1], t[:, 2]
    mab, mbc, mca = mid(a, b), mid(b, c), mid(c, a)
    children = np.stack(
        [
            np.stack([a, mab, mca], axis=1),
            np.stack([mab, b, mbc], axis=1),
            np.stack([mca, mbc, c], axis=1),
            np.stack([mab, mbc, mca], axis=1),
        ],
        axis=1,
    ).reshape(-1, 3)

    be = mesh.boundary_edges
    m = mid(be[:, 0], be[:, 1])
    new_edges = np.concatenate([np.stack([be[:, 0], m], axis=1), np.stack([m, be[:, 1]], axis=1)])
    new_tags = np.concatenate([mesh.boundary_tags, mesh.boundary_tags])
    refined = BulkMesh(vertices, children, new_edges, new_tags, mesh.level + 1)
    logger.debug("raffinement uniforme: %d -> %d triangles", mesh.n_triangles, refined.n_triangles)
    return refined


# -----------------------------------------------------------------------------
# Σ̃ = Σ ∪ Σ_e
# -----------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class CrackPath:
    """Polyligne Σ̃: sommets de Σ puis, si pointe, l'extrémité du prolongement Σ_e sur ∂Ω̃."""

    points: np.ndarray
    n_fracture_segments: int
    eps: float

    @property
    def n_segments(self) -> int:
        return int(len(self.points) - 1)

    @cached_property
    def directions(self) -> np.ndarray:
        return self.points[1:] - self.points[:-1]

    @cached_property
    def lengths(self) -> np.ndarray:
        return np.linalg.norm(self.directions, axis=1)

    @cached_property
    def arc(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.lengths)])

    @cached_property
    def normals(self) -> np.ndarray:
        t = self.directions / self.lengths[:, None]
        return np.column_stack([-t[:, 1], t[:, 0]])

    @cached_property
    def vertex_normals(self) -> np.ndarray:
        n = self.normals
        vn = np.empty((len(self.points), 2))
        vn[0], vn[-1] = n[0], n[-1]
        if len(n) > 1:
            s = n[:-1] + n[1:]
            vn[1:-1] = s / np.maximum(np.linalg.norm(s, axis=1), 1e-300)[:, None]
        return vn

    @property
    def fracture_length(self) -> float:
        return float(self.arc[self.n_fracture_segments])


def extension_path(bulk: BulkMesh, frac: FractureMesh) -> CrackPath:
    """Prolonge la fracture en ligne droite depuis la pointe jusqu'au bord (premier impact)."""
    eps = bulk.eps
    pts = frac.vertices
    if not frac.has_tip:
        return CrackPath(pts.copy(), frac.n_segments, eps)
    tip = frac.vertices[-1]
    d = frac.tangents[-1]
    a = bulk.vertices[bulk.boundary_edges[:, 0]]
    e = bulk.vertices[bulk.boundary_edges[:, 1]] - a
    den = _cross(d[None, :], e)
    ok = np.abs(den) > 1e-14 * np.linalg.norm(e, axis=1)
    safe = np.where(ok, den, 1.0)
    t = _cross(a - tip, e) / safe
    s = _cross(a - tip, d[None, :]) / safe
    tol = 1e-12
    hit = ok & (t > eps) & (s >= -tol) & (s <= 1 + tol)
    if not np.any(hit):
        raise GeometryError("prolongement de la fracture: aucun point d'impact sur le bord (pointe hors du domaine ?)")
    tmin = float(t[hit].min())
    end = tip + tmin * d
    return CrackPath(np.vstack([pts, end]), frac.n_segments, eps)


# -----------------------------------------------------------------------------
# classify_side
# -----------------------------------------------------------------------------
def classify_side(points: np.ndarray, path: CrackPath) -> np.ndarray:
    """
    Côté de Σ̃ de chaque point: PLUS (gauche), MINUS, ou ON_EXTENSION si |dist| ≤ ε.
    Segment le plus proche; pseudo-normale aux sommets de la polyligne.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    out = np.empty(len(pts), dtype=np.int8)
    a = path.points[:-1]
    d = path.directions
    dd = np.einsum("ij,ij->i", d, d)
    for start in range(0, len(pts), _CHUNK):
        x = pts[start:start + _CHUNK]
        rel = x[:, None, :] - a[None, :, :]
        t = np.clip(np.einsum("nsj,sj->ns", rel, d) / dd[None, :], 0.0, 1.0)
        proj = a[None, :, :] + t[..., None] * d[None, :, :]
        dist2 = np.einsum("nsj,nsj->ns", x[:, None, :] - proj, x[:, None, :] - proj)
        j = np.argmin(dist2, axis=1)
        rows = np.arange(len(x))
        tj = t[rows, j]
        diff = x - proj[rows, j]
        normal = path.normals[j].copy()
        at_start = tj <= 0.0
        at_end = tj >= 1.0
        normal[at_start] = path.vertex_normals[j[at_start]]
        normal[at_end] = path.vertex_normals[j[at_end] + 1]
        signed = np.einsum("ij,ij->i", diff, normal)
        dist = np.sqrt(dist2[rows, j])
        side = np.where(signed > 0, PLUS, MINUS).astype(np.int8)
        side[dist <= path.eps] = ON_EXTENSION
        out[start:start + _CHUNK] = side
    return out


# -----------------------------------------------------------------------------
# TipFrame
# -----------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class TipFrame:
    """Repère polaire en pointe: Θ = 0 le long du prolongement, coupure le long de Σ."""

    tip: np.ndarray
    direction: np.ndarray
    path: Optional[CrackPath] = None

    @property
    def angle(self) -> float:
        return float(np.arctan2(self.direction[1], self.direction[0]))


def tip_coordinates(frame: TipFrame, points: np.ndarray, side: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    (r, Θ) avec Θ ∈ [-π, π]. Un indice de côté (±1) fixe la branche sur les faces de Σ.
    Derrière la pointe, un point dont le signe de Θ contredit son côté (Σ courbe)
    reçoit Θ = côté·π. Point confondu avec la pointe: r = 0, Θ = 0.
    """
    x = np.atleast_2d(np.asarray(points, dtype=float))
    v = x - frame.tip[None, :]
    r = np.linalg.norm(v, axis=1)
    d = frame.direction
    theta = np.arctan2(d[0] * v[:, 1] - d[1] * v[:, 0], v @ d)
    if side is None and frame.path is not None:
        side = classify_side(x, frame.path)
    if side is not None:
        side = np.broadcast_to(np.asarray(side), r.shape)
        behind = (v @ d) < 0
        wrong = behind & (side != 0) & (np.sign(theta) != side)
        theta = np.where(wrong, side * np.pi, theta)
    theta = np.where(r == 0.0, 0.0, theta)
    return r, theta


# -----------------------------------------------------------------------------
# Topologie de découpe
# -----------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class Chord:
    """Portion de Σ̃ contenue dans un triangle, ordonnée le long de Σ̃."""

    element: int
    points: np.ndarray          # (k+1, 2)
    arc: np.ndarray             # (k+1,) abscisse le long de Σ̃
    segments: np.ndarray        # (k,) indice de segment de Σ̃
    on_fracture: np.ndarray     # (k,) morceau sur Σ (sinon sur Σ_e)
    contains_tip: bool = False


@dataclass(frozen=True, eq=False)
class CutInfo:
    path: Optional[CrackPath]
    frame: Optional[TipFrame]
    chords: Dict[int, Chord]
    tip_elements: np.ndarray
    element_side: np.ndarray
    n_triangles: int
    perturbations: List[str] = field(default_factory=list)

    @cached_property
    def split_elements(self) -> np.ndarray:
        """Triangles à sous-découper: traversés par Σ̃ ou contenant la pointe."""
        return np.union1d(np.fromiter(self.chords.keys(), dtype=np.int64, count=len(self.chords)), self.tip_elements)

    @cached_property
    def split_set(self) -> FrozenSet[int]:
        return frozenset(self.split_elements.tolist())

    @cached_property
    def tip_set(self) -> FrozenSet[int]:
        return frozenset(self.tip_elements.tolist())

    @cached_property
    def fracture_elements(self) -> np.ndarray:
        """Triangles traversés par Σ elle-même."""
        ids = [e for e, c in self.chords.items() if bool(np.any(c.on_fracture))]
        return np.array(sorted(ids), dtype=np.int64)

    def status(self, element: int) -> str:
        if int(element) in self.tip_set:
            return "tip"
        chord = self.chords.get(int(element))
        if chord is None:
            return "uncut"
        return "cut" if bool(np.any(chord.on_fracture)) else "extension"

    def fracture_pieces(self) -> List[Tuple[int, int, float, float]]:
        """(élément, segment de Σ, s0, s1) triés par abscisse: partition de Σ."""
        pieces: List[Tuple[int, int, float, float]] = []
        for e, c in self.chords.items():
            for k in range(len(c.segments)):
                if c.on_fracture[k]:
                    pieces.append((e, int(c.segments[k]), float(c.arc[k]), float(c.arc[k + 1])))
        pieces.sort(key=lambda p: (p[2], p[3]))
        return pieces

    @property
    def chord_length(self) -> float:
        return float(sum(s1 - s0 for _, _, s0, s1 in self.fracture_pieces()))


def _clip_segment(corners: np.ndarray, p0: np.ndarray, dvec: np.ndarray, eps: float) -> Tuple[np.ndarray, np.ndarray]:
    """Découpage de Cyrus–Beck du segment p0 + t·dvec (t ∈ [0,1]) par des triangles CCW."""
    lo = np.zeros(len(corners))
    hi = np.ones(len(corners))
    for k in range(3):
        v0 = corners[:, k]
        e = corners[:, (k + 1) % 3] - v0
        elen = np.linalg.norm(e, axis=1)
        num = _cross(e, p0[None, :] - v0) / elen
        den = _cross(e, np.broadcast_to(dvec, e.shape)) / elen
        par = np.abs(den) <= 1e-300
        with np.errstate(divide="ignore", invalid="ignore"):
            tk = -num / den
        enter = ~par & (den > 0)
        leave = ~par & (den < 0)
        lo = np.where(enter, np.maximum(lo, tk), lo)
        hi = np.where(leave, np.minimum(hi, tk), hi)
        outside = par & (num < -eps)
        hi = np.where(outside, -1.0, hi)
    return lo, hi


def _locate_tip_elements(bulk: BulkMesh, tip: np.ndarray) -> np.ndarray:
    c = bulk.corners
    lo = c.min(axis=1) - bulk.eps
    hi = c.max(axis=1) + bulk.eps
    cand = np.nonzero(np.all((tip >= lo) & (tip <= hi), axis=1))[0]
    if len(cand) == 0:
        return cand
    lam = bulk.barycentric(cand, np.repeat(tip[None, :], len(cand), axis=0))
    # tolérance relative à la taille de l'élément
    tol = bulk.eps / np.maximum(bulk.diameters[cand], 1e-300)
    return cand[np.all(lam >= -tol[:, None], axis=1)]


def cut_topology(bulk: BulkMesh, frac: Optional[FractureMesh]) -> CutInfo:
    """
    Intersecte Σ̃ avec chaque triangle. Les morceaux de longueur ≤ ε sont ignorés;
    un morceau posé sur une arête commune n'est gardé que dans le triangle d'indice le plus petit.
    Toute portion de Σ non couverte par le maillage est une erreur.
    """
    t0 = time.perf_counter()
    if frac is None:
        side = np.full(bulk.n_triangles, PLUS, dtype=np.int8)
        return CutInfo(None, None, {}, np.zeros(0, dtype=np.int64), side, bulk.n_triangles)

    eps = bulk.eps
    path = extension_path(bulk, frac)
    perturbations: List[str] = []

    # le bout non-pointe doit être sur le bord
    ends = [frac.vertices[0]] + ([] if frac.has_tip else [frac.vertices[-1]])
    for p in ends:
        if _distance_to_boundary(bulk, p) > max(eps, 1e-9 * bulk.diameter):
            raise GeometryError(f"extrémité de fracture ({p[0]:.6g}, {p[1]:.6g}) hors du bord: seule la pointe peut être intérieure")

    corners = bulk.corners
    bb_lo = corners.min(axis=1) - eps
    bb_hi = corners.max(axis=1) + eps
    raw: Dict[int, List[Tuple[int, float, float]]] = {}
    for j in range(path.n_segments):
        p0, p1 = path.points[j], path.points[j + 1]
        slo, shi = np.minimum(p0, p1), np.maximum(p0, p1)
        cand = np.nonzero(np.all((bb_hi >= slo) & (bb_lo <= shi), axis=1))[0]
        lo, hi = _clip_segment(corners[cand], p0, p1 - p0, eps)
        length = path.lengths[j]
        keep = (hi - lo) * length > eps
        pieces = sorted(zip(lo[keep], hi[keep], cand[keep]), key=lambda x: (x[0], x[2]))
        covered = 0.0
        accepted: List[Tuple[float, float, int]] = []
        for a, b, e in pieces:
            a, b = max(a, 0.0), min(b, 1.0)
            if accepted and (a < covered - eps / length):
                prev = accepted[-1]
                if b <= covered + eps / length:
                    msg = f"segment {j}: morceau [{a:.6f}, {b:.6f}] du triangle {e} confondu avec le triangle {prev[2]}"
                    perturbations.append(msg)
                    logger.warning("découpe dégénérée (Σ̃ le long d'une arête): %s", msg)
                    continue
                a = covered
            if accepted and a > covered + eps / length and j < path.n_fracture_segments:
                raise GeometryError(f"fracture hors du maillage entre s={covered:.6g} et s={a:.6g} (segment {j})")
            if not accepted and a > eps / length and j < path.n_fracture_segments:
                raise GeometryError(f"fracture hors du maillage au début du segment {j}")
            accepted.append((a, b, int(e)))
            covered = max(covered, b)
        if j < path.n_fracture_segments and covered < 1.0 - eps / length:
            raise GeometryError(f"fracture hors du maillage à la fin du segment {j}")
        for a, b, e in accepted:
            a, b = _perturb_vertex_hits(bulk, e, path, j, a, b, perturbations)
            raw.setdefault(e, []).append((j, a, b))

    tip_elements = np.zeros(0, dtype=np.int64)
    frame = None
    if frac.has_tip:
        tip_elements = _locate_tip_elements(bulk, frac.vertices[-1])
        if len(tip_elements) == 0:
            raise GeometryError("pointe de fracture hors du maillage")
        frame = TipFrame(frac.vertices[-1].copy(), frac.tangents[-1].copy(), path)

    chords: Dict[int, Chord] = {}
    tip_set = set(tip_elements.tolist())
    for e, items in raw.items():
        items.sort(key=lambda x: path.arc[x[0]] + x[1] * path.lengths[x[0]])
        pts = [path.points[items[0][0]] + items[0][1] * path.directions[items[0][0]]]
        arc = [path.arc[items[0][0]] + items[0][1] * path.lengths[items[0][0]]]
        segs, onf = [], []
        for j, a, b in items:
            start = path.arc[j] + a * path.lengths[j]
            if abs(start - arc[-1]) > 10 * eps:
                raise GeometryError(f"Σ̃ ressort puis rentre dans le triangle {e}: non pris en charge")
            pts.append(path.points[j] + b * path.directions[j])
            arc.append(path.arc[j] + b * path.lengths[j])
            segs.append(j)
            onf.append(j < path.n_fracture_segments)
        chords[e] = Chord(e, np.array(pts), np.array(arc), np.array(segs, dtype=np.int64), np.array(onf, dtype=bool), e in tip_set)

    side = classify_side(bulk.centroids, path)
    degenerate = side == ON_EXTENSION
    if np.any(degenerate):
        c = corners[degenerate]
        alt = classify_side(0.6 * c[:, 0] + 0.3 * c[:, 1] + 0.1 * c[:, 2], path)
        side[degenerate] = np.where(alt == ON_EXTENSION, PLUS, alt)

    cut = CutInfo(path, frame, chords, tip_elements, side, bulk.n_triangles, perturbations)
    logger.debug(
        "découpe: %d triangles traversés (%d par Σ), %d en pointe, %.3fs",
        len(chords), len(cut.fracture_elements), len(tip_elements), time.perf_counter() - t0,
    )
    return cut


def _distance_to_boundary(bulk: BulkMesh, p: np.ndarray) -> float:
    a = bulk.vertices[bulk.boundary_edges[:, 0]]
    e = bulk.vertices[bulk.boundary_edges[:, 1]] - a
    t = np.clip(np.einsum("ij,ij->i", p - a, e) / np.einsum("ij,ij->i", e, e), 0.0, 1.0)
    return float(np.linalg.norm(a + t[:, None] * e - p, axis=1).min())


def _perturb_vertex_hits(bulk: BulkMesh, e: int, path: CrackPath, j: int, a: float, b: float,
                         log: List[str]) -> Tuple[float, float]:
    """
    Point d'entrée/sortie à ≤ ε d'un sommet du maillage: t avancé de ε le long du segment
    (borné à [0, 1]) et consigné. Les extrémités de Σ̃ sont ignorées; un sommet intérieur
    de la polyligne est consigné sans être déplacé.
    """
    corners = bulk.corners[e]
    shift = bulk.eps / float(path.lengths[j])
    out: List[float] = []
    for t in (a, b):
        if (j == 0 and t <= 0.0) or (j == path.n_segments - 1 and t >= 1.0):
            out.append(t)
            continue
        x = path.points[j] + t * path.directions[j]
        dist = np.linalg.norm(corners - x, axis=1)
        k = int(np.argmin(dist))
        if dist[k] > bulk.eps:
            out.append(t)
            continue
        vertex = int(bulk.triangles[e, k])
        if 0.0 < t < 1.0:
            msg = f"segment {j}: Σ̃ passe par le sommet {vertex}, t décalé de {shift:.2e}"
            t = min(t + shift, 1.0)
        else:
            msg = f"segment {j}: sommet de Σ̃ confondu avec le sommet {vertex}"
        if msg not in log:
            log.append(msg)
            logger.warning("intersection dégénérée: %s", msg)
        out.append(t)
    return out[0], out[1]
