# fracporo/core/quadrature.py
# -*- coding: utf-8 -*-
"""
Quadratures adaptées à la découpe:
- triangles non coupés: règle symétrique (ordre 2 ou 4 selon l'enrichissement);
- triangles coupés: sous-triangulation conforme à Σ̃ (triangle, PSLG), règle par sous-triangle;
- sous-triangles adjacents à la pointe: subdivision dyadique + transformation dégénérée;
- interface: Gauss par morceau de Σ, gradué près de la pointe;
- bord: Gauss par arête, coupée aux extrémités de Σ̃.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Any, Callable, Dict, Hashable, List, Optional, Tuple

import numpy as np
import scipy.sparse as sp
import triangle

from fracporo.core.geometry import ON_EXTENSION, BulkMesh, CutInfo, FractureMesh, classify_side

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Orders:
    uncut: int = 2
    enriched: int = 4
    cut: int = 4
    interface: int = 4
    tip_levels: int = 3


# -----------------------------------------------------------------------------
# Règles de référence
# -----------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class QuadRule:
    """
    Règle de quadrature. Sur le triangle de référence {ξ, η ≥ 0, ξ + η ≤ 1} les poids somment à 1/2;
    une règle physique (volume_rule) porte en plus le côté de Σ̃ de chaque point.
    """

    points: np.ndarray
    weights: np.ndarray
    order: int
    sides: Optional[np.ndarray] = None


def _symmetric(groups: List[Tuple[float, float]]) -> Tuple[np.ndarray, np.ndarray]:
    pts, wts = [], []
    for a, w in groups:
        if a == 1.0 / 3.0:
            pts.append((a, a))
            wts.append(w)
            continue
        b = 1.0 - 2.0 * a
        pts += [(a, a), (b, a), (a, b)]
        wts += [w, w, w]
    return np.array(pts), 0.5 * np.array(wts)


@lru_cache(maxsize=None)
def gauss_legendre(n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss–Legendre à n points sur [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def triangle_rule(order: int) -> QuadRule:
    """Règle exacte pour les polynômes de degré ≤ order."""
    if order < 0:
        raise ValueError("ordre de quadrature négatif")
    if order <= 1:
        pts, wts = np.array([[1.0 / 3.0, 1.0 / 3.0]]), np.array([0.5])
    elif order == 2:
        pts, wts = _symmetric([(1.0 / 6.0, 1.0 / 3.0)])
    elif order <= 4:
        pts, wts = _symmetric([(0.445948490915965, 0.223381589678011), (0.091576213509771, 0.109951743655322)])
    elif order == 5:
        pts, wts = _symmetric([
            (1.0 / 3.0, 0.225),
            (0.470142064105115, 0.132394152788506),
            (0.101286507323456, 0.125939180544827),
        ])
    else:
        # produit conique
        n = int(math.ceil((order + 2) / 2))
        u, wu = gauss_legendre(n)
        v, wv = gauss_legendre(n)
        uu, vv = np.meshgrid(u, v, indexing="ij")
        pts = np.column_stack([uu.ravel(), ((1.0 - uu) * vv).ravel()])
        wts = (np.outer(wu, wv) * (1.0 - uu)).ravel()
    return QuadRule(pts, wts, order)


def map_rule(rule: QuadRule, corners: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Points physiques (T·n, 2) et poids pour des triangles (T, 3, 2)."""
    c = np.asarray(corners, dtype=float).reshape(-1, 3, 2)
    e1 = c[:, 1] - c[:, 0]
    e2 = c[:, 2] - c[:, 0]
    det = np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    x = c[:, None, 0] + rule.points[None, :, 0, None] * e1[:, None] + rule.points[None, :, 1, None] * e2[:, None]
    w = det[:, None] * rule.weights[None, :]
    return x.reshape(-1, 2), w.ravel()


def graded_tip_rule(tip: np.ndarray, a: np.ndarray, b: np.ndarray, order: int, levels: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Triangle (tip, a, b): `levels` couronnes dyadiques vers la pointe; les couronnes sont des
    trapèzes coupés en deux triangles réguliers, le triangle central utilise
    x = tip + t²[(1−η)a + ηb − tip] (jacobien 4·aire·t³), qui régularise les gradients en r^(-1/2).
    """
    levels = max(int(levels), 1)
    rule = triangle_rule(order)
    pts: List[np.ndarray] = []
    wts: List[np.ndarray] = []
    da, db = a - tip, b - tip
    scale = 1.0
    for _ in range(levels - 1):
        outer_a, outer_b = tip + scale * da, tip + scale * db
        inner_a, inner_b = tip + 0.5 * scale * da, tip + 0.5 * scale * db
        x, w = map_rule(rule, np.array([[inner_a, outer_a, outer_b], [inner_a, outer_b, inner_b]]))
        pts.append(x)
        wts.append(w)
        scale *= 0.5
    ca, cb = tip + scale * da, tip + scale * db
    area = 0.5 * abs((ca - tip)[0] * (cb - tip)[1] - (ca - tip)[1] * (cb - tip)[0])
    t, wt = gauss_legendre(order + 2)
    eta, we = gauss_legendre(order // 2 + 2)
    tt, ee = np.meshgrid(t, eta, indexing="ij")
    edge = (1.0 - ee)[..., None] * ca + ee[..., None] * cb
    x = tip + (tt ** 2)[..., None] * (edge - tip)
    w = 4.0 * area * tt ** 3 * np.outer(wt, we)
    pts.append(x.reshape(-1, 2))
    wts.append(w.ravel())
    return np.vstack(pts), np.concatenate(wts)


# -----------------------------------------------------------------------------
# Cache attaché aux jeux de points
# -----------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class _PointSet:
    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "_store", {})

    @property
    def n(self) -> int:
        return int(len(self.weights))

    def cached(self, key: Hashable, build: Callable[[], Any]) -> Any:
        """Matrices d'évaluation réutilisées entre itérations et assemblages."""
        store: Dict[Hashable, Any] = self._store  # type: ignore[attr-defined]
        if key not in store:
            store[key] = build()
        return store[key]


# -----------------------------------------------------------------------------
# Sous-triangulation des éléments coupés
# -----------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class SubTriangulation:
    element: int
    vertices: np.ndarray
    triangles: np.ndarray
    sides: np.ndarray
    tip_vertex: int = -1


def _merge_points(points: List[np.ndarray], eps: float) -> Tuple[np.ndarray, np.ndarray]:
    uniq: List[np.ndarray] = []
    index = np.empty(len(points), dtype=np.int64)
    for i, p in enumerate(points):
        for k, q in enumerate(uniq):
            if np.linalg.norm(p - q) <= eps:
                index[i] = k
                break
        else:
            index[i] = len(uniq)
            uniq.append(p)
    return np.array(uniq), index


def split_element(bulk: BulkMesh, cut: CutInfo, element: int) -> SubTriangulation:
    """Triangulation de Delaunay contrainte du triangle, conforme à la corde et au sommet de pointe."""
    e = int(element)
    corners = bulk.corners[e]
    eps = bulk.eps
    chord = cut.chords.get(e)
    chord_pts = list(chord.points) if chord is not None else []
    extra: List[np.ndarray] = []
    is_tip = cut.frame is not None and e in cut.tip_set
    if is_tip:
        extra.append(cut.frame.tip)

    raw = [corners[0], corners[1], corners[2]] + chord_pts + extra
    # 2ε: un point de corde décalé de ε depuis un sommet retombe sur ce sommet
    verts, idx = _merge_points(raw, 2 * eps)
    lam = bulk.barycentric(np.full(len(verts), e), verts)
    tol = eps / max(float(bulk.diameters[e]), 1e-300)

    # boucle extérieure: sommets, puis points posés sur chaque arête (k -> k+1)
    loop: List[int] = []
    for k in range(3):
        loop.append(int(idx[k]))
        opposite = (k + 2) % 3
        on_edge = [i for i in range(len(verts)) if i not in idx[:3] and abs(lam[i, opposite]) <= tol]
        on_edge.sort(key=lambda i: lam[i, (k + 1) % 3])
        loop += on_edge
    seen: List[int] = []
    for i in loop:
        if i not in seen:
            seen.append(i)
    loop = seen
    segments = [(loop[i], loop[(i + 1) % len(loop)]) for i in range(len(loop))]
    chord_idx = idx[3:3 + len(chord_pts)]
    segments += [(int(a), int(b)) for a, b in zip(chord_idx[:-1], chord_idx[1:]) if a != b]
    segments = sorted({(min(a, b), max(a, b)) for a, b in segments})

    out = triangle.triangulate({"vertices": verts, "segments": np.array(segments, dtype=np.int32)}, "p")
    sv = np.asarray(out["vertices"], dtype=float)
    st = np.asarray(out["triangles"], dtype=np.int64)

    c = sv[st]
    area = 0.5 * ((c[:, 1, 0] - c[:, 0, 0]) * (c[:, 2, 1] - c[:, 0, 1]) - (c[:, 1, 1] - c[:, 0, 1]) * (c[:, 2, 0] - c[:, 0, 0]))
    flip = area < 0
    st[flip] = st[flip][:, [0, 2, 1]]
    small = np.abs(area) <= eps ** 2
    if np.any(small):
        logger.warning("triangle %d: %d sous-triangle(s) d'aire ≤ ε² ignoré(s)", e, int(small.sum()))
        st = st[~small]

    if cut.path is not None:
        sides = classify_side(sv[st].mean(axis=1), cut.path)
        sides = np.where(sides == ON_EXTENSION, cut.element_side[e], sides).astype(np.int8)
    else:
        sides = np.full(len(st), cut.element_side[e], dtype=np.int8)

    tip_vertex = -1
    if is_tip:
        d = np.linalg.norm(sv - cut.frame.tip, axis=1)
        tip_vertex = int(np.argmin(d)) if d.min() <= eps else -1
    return SubTriangulation(e, sv, st, sides, tip_vertex)


def volume_rule(
    bulk: BulkMesh,
    cut: CutInfo,
    element: int,
    order: int,
    levels: int = 3,
    sub: Optional[SubTriangulation] = None,
) -> QuadRule:
    """
    Règle physique sur un triangle: règle symétrique s'il n'est pas découpé, sinon règle
    par sous-triangle (graduée vers la pointe pour ceux qui la touchent). Poids de somme = aire.
    """
    e = int(element)
    if e not in cut.split_set:
        x, w = map_rule(triangle_rule(order), bulk.corners[e][None])
        return QuadRule(x, w, order, np.full(len(w), cut.element_side[e], dtype=np.int8))
    sub = sub if sub is not None else split_element(bulk, cut, e)
    rule = triangle_rule(order)
    pts: List[np.ndarray] = []
    wts: List[np.ndarray] = []
    sds: List[np.ndarray] = []
    for tri, side in zip(sub.triangles, sub.sides):
        if sub.tip_vertex >= 0 and sub.tip_vertex in tri:
            k = int(np.nonzero(tri == sub.tip_vertex)[0][0])
            t, a, b = sub.vertices[tri[k]], sub.vertices[tri[(k + 1) % 3]], sub.vertices[tri[(k + 2) % 3]]
            x, w = graded_tip_rule(t, a, b, order, levels)
        else:
            x, w = map_rule(rule, sub.vertices[tri][None])
        pts.append(x)
        wts.append(w)
        sds.append(np.full(len(w), side, dtype=np.int8))
    return QuadRule(np.vstack(pts), np.concatenate(wts), order, np.concatenate(sds))


# -----------------------------------------------------------------------------
# Points de volume
# -----------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class VolumePoints(_PointSet):
    elements: np.ndarray
    sides: np.ndarray


def volume_points(
    bulk: BulkMesh,
    cut: CutInfo,
    orders: Orders = Orders(),
    enriched: Optional[np.ndarray] = None,
    subdivisions: Optional[Dict[int, SubTriangulation]] = None,
) -> VolumePoints:
    """Tous les points de quadrature de Ω̃ avec triangle et côté de rattachement."""
    split = cut.split_set
    enriched_mask = np.zeros(bulk.n_triangles, dtype=bool)
    if enriched is not None:
        enriched_mask[np.asarray(enriched, dtype=np.int64)] = True
    regular = np.array([e for e in range(bulk.n_triangles) if e not in split], dtype=np.int64)

    pts: List[np.ndarray] = []
    wts: List[np.ndarray] = []
    els: List[np.ndarray] = []
    sds: List[np.ndarray] = []
    for flag, order in ((False, orders.uncut), (True, orders.enriched)):
        group = regular[enriched_mask[regular] == flag]
        if len(group) == 0:
            continue
        rule = triangle_rule(order)
        x, w = map_rule(rule, bulk.corners[group])
        pts.append(x)
        wts.append(w)
        els.append(np.repeat(group, len(rule.weights)))
        sds.append(np.repeat(cut.element_side[group], len(rule.weights)))

    subs = subdivisions if subdivisions is not None else {}
    for e in sorted(split):
        rule = volume_rule(bulk, cut, e, orders.cut, orders.tip_levels, subs.get(e))
        pts.append(rule.points)
        wts.append(rule.weights)
        els.append(np.full(len(rule.weights), e, dtype=np.int64))
        sds.append(rule.sides)

    vp = VolumePoints(np.vstack(pts), np.concatenate(wts), np.concatenate(els), np.concatenate(sds).astype(np.int8))
    logger.debug("quadrature volumique: %d points (%d triangles découpés)", vp.n, len(split))
    return vp


# -----------------------------------------------------------------------------
# Interface Σ
# -----------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class InterfaceQuad(_PointSet):
    s: np.ndarray
    elements: np.ndarray
    segments: np.ndarray
    tau: np.ndarray
    normals: np.ndarray
    kappa: np.ndarray
    r: np.ndarray
    n_fracture_dofs: int
    segment_lengths: np.ndarray

    def fracture_basis(self) -> Tuple[sp.csr_matrix, sp.csr_matrix]:
        """(valeurs, dérivées tangentielles) des fonctions P1 de Σ_h aux points."""
        def build():
            rows = np.repeat(np.arange(self.n), 2)
            cols = np.column_stack([self.segments, self.segments + 1]).ravel()
            vals = np.column_stack([1.0 - self.tau, self.tau]).ravel()
            inv = 1.0 / self.segment_lengths[self.segments]
            ders = np.column_stack([-inv, inv]).ravel()
            shape = (self.n, self.n_fracture_dofs)
            return sp.csr_matrix((vals, (rows, cols)), shape=shape), sp.csr_matrix((ders, (rows, cols)), shape=shape)

        return self.cached("fracture_basis", build)


def interface_quadrature(cut: CutInfo, frac: FractureMesh, order: int = 4, levels: int = 3) -> InterfaceQuad:
    path = cut.path
    n_gauss = int(math.ceil((order + 1) / 2))
    g, gw = gauss_legendre(n_gauss)
    t_in, w_in = gauss_legendre(order + 2)
    end = path.fracture_length

    s_list: List[np.ndarray] = []
    w_list: List[np.ndarray] = []
    e_list: List[np.ndarray] = []
    j_list: List[np.ndarray] = []
    for e, j, s0, s1 in cut.fracture_pieces():
        length = s1 - s0
        if frac.has_tip and abs(s1 - end) <= 10 * path.eps:
            # distance d = s1 - s à la pointe, couronnes dyadiques
            d_pts, d_wts = [], []
            scale = length
            for _ in range(max(levels, 1) - 1):
                d_pts.append(0.5 * scale + 0.5 * scale * g)
                d_wts.append(0.5 * scale * gw)
                scale *= 0.5
            d_pts.append(scale * t_in ** 2)
            d_wts.append(2.0 * scale * t_in * w_in)
            s = s1 - np.concatenate(d_pts)
            w = np.concatenate(d_wts)
        else:
            s = s0 + length * g
            w = length * gw
        s_list.append(s)
        w_list.append(w)
        e_list.append(np.full(len(s), e, dtype=np.int64))
        j_list.append(np.full(len(s), j, dtype=np.int64))

    if s_list:
        s = np.concatenate(s_list)
        w = np.concatenate(w_list)
        els = np.concatenate(e_list)
        seg = np.concatenate(j_list)
    else:
        s = w = np.zeros(0)
        els = seg = np.zeros(0, dtype=np.int64)
    tau = (s - frac.arc[seg]) / frac.lengths[seg]
    pts = frac.vertices[seg] + tau[:, None] * (frac.vertices[seg + 1] - frac.vertices[seg])
    kappa = (1.0 - tau) * frac.curvature[seg] + tau * frac.curvature[seg + 1]
    ref = frac.vertices[-1]
    r = np.linalg.norm(pts - ref, axis=1)
    iq = InterfaceQuad(pts, w, s, els, seg, tau, frac.normals[seg], kappa, r, frac.n_vertices, frac.lengths)
    logger.debug("quadrature d'interface: %d points, somme des poids %.6g (|Σ| = %.6g)", iq.n, float(w.sum()), frac.length)
    return iq


# -----------------------------------------------------------------------------
# Bord ∂Ω̃
# -----------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class BoundaryQuad(_PointSet):
    elements: np.ndarray
    sides: np.ndarray
    tags: np.ndarray
    normals: np.ndarray


def boundary_quadrature(bulk: BulkMesh, cut: CutInfo, order: int = 4) -> BoundaryQuad:
    """Gauss par arête de bord; une arête touchée par une extrémité de Σ̃ est coupée en deux."""
    g, gw = gauss_legendre(int(math.ceil((order + 1) / 2)))
    be = bulk.boundary_edges
    a = bulk.vertices[be[:, 0]]
    b = bulk.vertices[be[:, 1]]
    owner = bulk.boundary_edge_elements
    ends = [] if cut.path is None else [cut.path.points[0], cut.path.points[-1]]

    pts: List[np.ndarray] = []
    wts: List[np.ndarray] = []
    els: List[np.ndarray] = []
    sds: List[np.ndarray] = []
    tgs: List[np.ndarray] = []
    nrm: List[np.ndarray] = []
    for i in range(len(be)):
        d = b[i] - a[i]
        length = float(np.linalg.norm(d))
        cuts = [0.0, 1.0]
        for p in ends:
            t = float(np.dot(p - a[i], d) / length ** 2)
            if 0.0 < t < 1.0 and np.linalg.norm(a[i] + t * d - p) <= max(bulk.eps, 1e-9 * bulk.diameter):
                cuts.append(t)
        cuts.sort()
        # normale sortante: le triangle propriétaire est à gauche de a -> b ou à droite
        n = np.array([d[1], -d[0]]) / length
        if np.dot(bulk.centroids[owner[i]] - a[i], n) > 0:
            n = -n
        for t0, t1 in zip(cuts[:-1], cuts[1:]):
            x = a[i] + (t0 + (t1 - t0) * g)[:, None] * d
            pts.append(x)
            wts.append((t1 - t0) * length * gw)
            els.append(np.full(len(g), owner[i], dtype=np.int64))
            if cut.path is not None:
                mid = a[i] + 0.5 * (t0 + t1) * d
                side = int(classify_side(mid[None, :], cut.path)[0])
                side = side if side != ON_EXTENSION else int(cut.element_side[owner[i]])
            else:
                side = int(cut.element_side[owner[i]])
            sds.append(np.full(len(g), side, dtype=np.int8))
            tgs.append(np.full(len(g), bulk.boundary_tags[i], dtype=object))
            nrm.append(np.repeat(n[None, :], len(g), axis=0))

    return BoundaryQuad(
        np.vstack(pts), np.concatenate(wts), np.concatenate(els), np.concatenate(sds),
        np.concatenate(tgs), np.vstack(nrm),
    )
