# fracporo/core/analysis.py
# -*- coding: utf-8 -*-
"""
Post-traitement:
- normes brisées (L², H¹ par côté de Σ̃) et normes à poids sur Σ;
- erreurs relatives entre niveaux emboîtés, pentes log-log;
- contrainte de von Mises (déformations planes) aux centres, moyennée aux nœuds;
- rapports d'itération et d'étude de convergence.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from fracporo.core.enrichment import CrackWidthField, evaluation_matrices
from fracporo.core.geometry import ON_EXTENSION, classify_side

if TYPE_CHECKING:
    from fracporo.core.assembly import Assembler

logger = logging.getLogger(__name__)

FIELDS = ("displacement", "bulk_pressure", "fracture_pressure")
NORMS = ("L2", "H1", "H1_semi", "weighted")


# =========================
# Rapports
# =========================

@dataclass(frozen=True)
class IterationRecord:
    k: int
    error: float
    field_errors: Dict[str, float]
    width_min: float
    width_max: float


@dataclass
class SolverReport:
    """Historique d'une itération de sous-structuration sur un niveau."""

    level: int
    h_bulk: float
    h_fracture: float
    history: List[IterationRecord]
    converged: bool
    iterations: int
    contraction: float
    combination: str = "rss"
    reference_mode: bool = True
    elapsed: float = 0.0

    @property
    def errors(self) -> List[float]:
        return [r.error for r in self.history]


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    residual: float
    used: int


@dataclass
class ConvergenceReport:
    """Étude de convergence: tailles de maille, erreurs par champ/norme, pentes, historiques."""

    reference_level: int
    levels: List[int] = field(default_factory=list)
    h_bulk: List[float] = field(default_factory=list)
    h_fracture: List[float] = field(default_factory=list)
    errors: Dict[int, Dict[str, Dict[str, float]]] = field(default_factory=dict)
    slopes: Dict[str, Dict[str, RateFit]] = field(default_factory=dict)
    solver_reports: Dict[int, SolverReport] = field(default_factory=dict)

    def fit(self, min_levels: int = 3) -> None:
        """Pentes sur les niveaux hors référence (≥ min_levels valeurs non nulles)."""
        self.slopes = {}
        hs = {lvl: (hb, hf) for lvl, hb, hf in zip(self.levels, self.h_bulk, self.h_fracture)}
        used = [lvl for lvl in self.levels if lvl != self.reference_level and lvl in self.errors]
        for name in FIELDS:
            for norm in ("L2", "H1"):
                pairs = [
                    (hs[lvl][1] if name == "fracture_pressure" else hs[lvl][0], self.errors[lvl][name][norm])
                    for lvl in used if name in self.errors[lvl] and norm in self.errors[lvl][name]
                ]
                if len(pairs) < min_levels:
                    continue
                try:
                    rate = fit_rates([p[0] for p in pairs], [p[1] for p in pairs])
                except ValueError as exc:
                    logger.warning("pente %s/%s non calculée: %s", name, norm, exc)
                    continue
                self.slopes.setdefault(name, {})[norm] = rate


# =========================
# Normes
# =========================

def _gram(assembler: "Assembler", name: str) -> Tuple[sp.csr_matrix, sp.csr_matrix]:
    """(masse, raideur) du champ scalaire sous-jacent; pour la fracture, quadrature d'interface."""
    if name == "fracture_pressure":
        iq = assembler.iq

        def build():
            f_val, f_dtau = iq.fracture_basis()
            w = sp.diags(iq.weights)
            return (f_val.T @ w @ f_val).tocsr(), (f_dtau.T @ w @ f_dtau).tocsr()

        return iq.cached(("gram",), build)

    ev = assembler.u_eval if name == "displacement" else assembler.p_eval

    def build():
        w = sp.diags(assembler.vp.weights)
        mass = ev.values.T @ w @ ev.values
        stiff = ev.dx.T @ w @ ev.dx + ev.dy.T @ w @ ev.dy
        return mass.tocsr(), stiff.tocsr()

    return assembler.vp.cached(("gram", name), build)


def _components(assembler: "Assembler", name: str, coeffs: np.ndarray) -> List[np.ndarray]:
    coeffs = np.asarray(coeffs, dtype=float)
    if name == "displacement":
        n = assembler.space.displacement.scalar.n_dofs
        if coeffs.shape != (2 * n,):
            raise ValueError(f"déplacement: taille {coeffs.shape} ≠ ({2 * n},)")
        return [coeffs[:n], coeffs[n:]]
    expected = assembler.n_p if name == "bulk_pressure" else assembler.n_s
    if coeffs.shape != (expected,):
        raise ValueError(f"{name}: taille {coeffs.shape} ≠ ({expected},)")
    return [coeffs]


def field_norms(
    assembler: "Assembler",
    name: str,
    coeffs: np.ndarray,
    which: str = "H1",
    width: Optional[CrackWidthField] = None,
) -> float:
    """
    Norme d'un champ: 'L2', 'H1' (brisée), 'H1_semi', ou 'weighted' (fracture seulement:
    ‖v‖²_{0,b⁻¹} + ‖∇_τ v‖²_{0,b} avec b brut).
    """
    if name not in FIELDS:
        raise ValueError(f"champ inconnu: {name}")
    if which not in NORMS:
        raise ValueError(f"norme inconnue: {which}")
    parts = _components(assembler, name, coeffs)
    if name == "fracture_pressure" and assembler.iq is None:
        return 0.0

    if which == "weighted":
        if name != "fracture_pressure":
            raise ValueError("norme à poids définie sur Σ seulement")
        if width is None:
            raise ValueError("norme à poids: ouverture b_h requise")
        iq = assembler.iq
        b = width.on_interface(iq)
        if not np.any(b > 0):
            raise ValueError("norme à poids: b_h ≡ 0 sur Σ")
        if np.any(b <= 0):
            raise ValueError(f"norme à poids: b_h ≤ 0 en {int(np.sum(b <= 0))} points de Σ")
        f_val, f_dtau = iq.fracture_basis()
        v, dv = f_val @ parts[0], f_dtau @ parts[0]
        return float(np.sqrt(np.sum(iq.weights * (v ** 2 / b + b * dv ** 2))))

    mass, stiff = _gram(assembler, name)
    l2 = sum(float(c @ (mass @ c)) for c in parts)
    semi = sum(float(c @ (stiff @ c)) for c in parts)
    value = {"L2": l2, "H1_semi": semi, "H1": l2 + semi}[which]
    return float(np.sqrt(max(value, 0.0)))


def state_norm(assembler: "Assembler", state) -> Dict[str, float]:
    """Normes H¹ brisées des trois champs d'un état couplé."""
    return {name: field_norms(assembler, name, coeffs, "H1") for name, coeffs in state.fields().items()}


def state_distance(assembler: "Assembler", state, other, other_norms: Dict[str, float]) -> Tuple[float, Dict[str, float]]:
    """
    err = √(Σ ‖x_f − y_f‖²) / √(Σ ‖y_f‖²) (somme quadratique des normes H¹ absolues)
    et erreurs relatives par champ.
    """
    mine, theirs = state.fields(), other.fields()
    diff = {name: field_norms(assembler, name, mine[name] - theirs[name], "H1") for name in mine}
    per_field = {
        name: (diff[name] / other_norms[name] if other_norms[name] > 0 else (0.0 if diff[name] == 0 else float("inf")))
        for name in diff
    }
    denom = float(np.sqrt(sum(v ** 2 for v in other_norms.values())))
    num = float(np.sqrt(sum(v ** 2 for v in diff.values())))
    if denom == 0.0:
        return (0.0 if num == 0.0 else float("inf")), per_field
    return num / denom, per_field


# =========================
# Erreurs entre niveaux
# =========================

def _generation_gap(coarse: "Assembler", fine: "Assembler") -> int:
    nc, nf = coarse.space.bulk.n_triangles, fine.space.bulk.n_triangles
    gap = fine.space.bulk.level - coarse.space.bulk.level
    if gap < 0 or nf != nc * 4 ** gap:
        raise ValueError(
            f"niveaux non emboîtés: {nc} triangles (niveau {coarse.space.bulk.level}) "
            f"vs {nf} (niveau {fine.space.bulk.level})"
        )
    return gap


def error_between(coarse: "Assembler", coarse_state, reference: "Assembler", reference_state) -> Dict[str, Dict[str, float]]:
    """
    Erreurs relatives L²/H¹ par champ, intégrées sur le maillage de référence; la solution
    grossière est évaluée aux points de référence (triangle parent = enfant // 4^écart).
    """
    gap = _generation_gap(coarse, reference)
    vp = reference.vp
    parents = vp.elements // (4 ** gap)
    out: Dict[str, Dict[str, float]] = {}

    for name, ref_ev, space in (
        ("displacement", reference.u_eval, coarse.space.displacement),
        ("bulk_pressure", reference.p_eval, coarse.space.pressure),
    ):
        coarse_ev = vp.cached(
            ("coarse", name, coarse),
            lambda s=space: evaluation_matrices(s.scalar, vp.points, parents, vp.sides),
        )
        c_parts = _components(coarse, name, getattr(coarse_state, _ATTR[name]))
        r_parts = _components(reference, name, getattr(reference_state, _ATTR[name]))
        err_l2 = err_semi = ref_l2 = ref_semi = 0.0
        for cc, rc in zip(c_parts, r_parts):
            for mat_c, mat_r, kind in (
                (coarse_ev.values, ref_ev.values, "l2"),
                (coarse_ev.dx, ref_ev.dx, "semi"),
                (coarse_ev.dy, ref_ev.dy, "semi"),
            ):
                r = mat_r @ rc
                d = mat_c @ cc - r
                e2, n2 = float(np.sum(vp.weights * d ** 2)), float(np.sum(vp.weights * r ** 2))
                if kind == "l2":
                    err_l2 += e2
                    ref_l2 += n2
                else:
                    err_semi += e2
                    ref_semi += n2
        out[name] = _relative(err_l2, err_semi, ref_l2, ref_semi)

    if reference.iq is not None and coarse.space.frac is not None:
        iq = reference.iq
        cf = coarse.space.frac
        pc = np.asarray(coarse_state.p_frac, dtype=float)
        seg = np.clip(np.searchsorted(cf.arc, iq.s, side="right") - 1, 0, cf.n_segments - 1)
        val_c = np.interp(iq.s, cf.arc, pc)
        der_c = (pc[seg + 1] - pc[seg]) / cf.lengths[seg]
        f_val, f_dtau = iq.fracture_basis()
        pr = np.asarray(reference_state.p_frac, dtype=float)
        val_r, der_r = f_val @ pr, f_dtau @ pr
        w = iq.weights
        out["fracture_pressure"] = _relative(
            float(np.sum(w * (val_c - val_r) ** 2)), float(np.sum(w * (der_c - der_r) ** 2)),
            float(np.sum(w * val_r ** 2)), float(np.sum(w * der_r ** 2)),
        )
    return out


_ATTR = {"displacement": "u", "bulk_pressure": "p_bulk", "fracture_pressure": "p_frac"}


def _relative(err_l2: float, err_semi: float, ref_l2: float, ref_semi: float) -> Dict[str, float]:
    def ratio(a: float, b: float) -> float:
        if b <= 0.0:
            return 0.0 if a == 0.0 else float("inf")
        return float(np.sqrt(a / b))

    return {
        "L2": ratio(err_l2, ref_l2),
        "H1": ratio(err_l2 + err_semi, ref_l2 + ref_semi),
        "L2_abs": float(np.sqrt(err_l2)),
        "H1_abs": float(np.sqrt(err_l2 + err_semi)),
    }


def fit_rates(hs: Sequence[float], errors: Sequence[float]) -> RateFit:
    """Pente des moindres carrés de log e en fonction de log h; les erreurs nulles sont écartées."""
    h = np.asarray(hs, dtype=float)
    e = np.asarray(errors, dtype=float)
    if h.shape != e.shape:
        raise ValueError("hs et errors de tailles différentes")
    keep = (e > 0) & (h > 0) & np.isfinite(e)
    if np.any(~keep):
        logger.warning("fit_rates: %d valeur(s) nulle(s) ou invalide(s) écartée(s)", int(np.sum(~keep)))
    if int(keep.sum()) < 3:
        raise ValueError(f"au moins 3 couples (h, e) > 0 nécessaires, {int(keep.sum())} disponibles")
    x, y = np.log(h[keep]), np.log(e[keep])
    coef, residuals, *_ = np.polyfit(x, y, 1, full=True)
    res = float(np.sqrt(residuals[0])) if len(residuals) else 0.0
    return RateFit(float(coef[0]), float(coef[1]), res, int(keep.sum()))


# =========================
# Von Mises
# =========================

@dataclass(frozen=True, eq=False)
class VonMisesField:
    nodal: np.ndarray
    cell_values: Dict[Tuple[int, int], float]


def _center_points(assembler: "Assembler") -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Un point par triangle non découpé, un par côté pour les triangles découpés."""
    bulk, cut = assembler.space.bulk, assembler.space.cut
    pts: List[np.ndarray] = []
    els: List[int] = []
    sds: List[int] = []
    split = assembler.subdivisions
    for e in range(bulk.n_triangles):
        sub = split.get(e)
        if sub is None:
            pts.append(bulk.centroids[e])
            els.append(e)
            sds.append(int(cut.element_side[e]))
            continue
        c = sub.vertices[sub.triangles]
        area = 0.5 * np.abs((c[:, 1, 0] - c[:, 0, 0]) * (c[:, 2, 1] - c[:, 0, 1]) - (c[:, 1, 1] - c[:, 0, 1]) * (c[:, 2, 0] - c[:, 0, 0]))
        for side in np.unique(sub.sides):
            idx = np.nonzero(sub.sides == side)[0]
            best = idx[np.argmax(area[idx])]
            pts.append(c[best].mean(axis=0))
            els.append(e)
            sds.append(int(side))
    return np.array(pts), np.array(els, dtype=np.int64), np.array(sds, dtype=np.int8)


def von_mises_values(grad: np.ndarray, lam: float, mu: float, poisson: float) -> np.ndarray:
    """grad: (n, 2, 2) avec grad[:, α, j] = ∂_j u_α. Déformations planes: σ_zz = ν(σ_xx + σ_yy)."""
    exx, eyy = grad[:, 0, 0], grad[:, 1, 1]
    exy = 0.5 * (grad[:, 0, 1] + grad[:, 1, 0])
    tr = exx + eyy
    sxx = lam * tr + 2 * mu * exx
    syy = lam * tr + 2 * mu * eyy
    sxy = 2 * mu * exy
    szz = poisson * (sxx + syy)
    return np.sqrt(0.5 * ((sxx - syy) ** 2 + (syy - szz) ** 2 + (szz - sxx) ** 2) + 3.0 * sxy ** 2)


def von_mises(assembler: "Assembler", u_coeffs: np.ndarray) -> VonMisesField:
    """Contrainte aux centres (par côté dans les triangles découpés), moyenne arithmétique aux nœuds."""
    space = assembler.space
    scalar = space.displacement.scalar
    u = _components(assembler, "displacement", u_coeffs)
    pts, els, sds = _center_points(assembler)
    ev = evaluation_matrices(scalar, pts, els, sds)
    grad = np.stack([
        np.stack([ev.dx @ u[0], ev.dy @ u[0]], axis=1),
        np.stack([ev.dx @ u[1], ev.dy @ u[1]], axis=1),
    ], axis=1)
    p = assembler.params
    values = von_mises_values(grad, p.lame_lambda, p.lame_mu, p.poisson)
    cells = {(int(e), int(s)): float(v) for e, s, v in zip(els, sds, values)}
    by_element: Dict[int, List[float]] = {}
    for (e, _), v in cells.items():
        by_element.setdefault(e, []).append(v)

    bulk = space.bulk
    node_side = (
        classify_side(bulk.vertices, space.cut.path) if space.cut.path is not None
        else np.ones(bulk.n_vertices, dtype=np.int8)
    )
    total = np.zeros(bulk.n_vertices)
    count = np.zeros(bulk.n_vertices)
    for e in range(bulk.n_triangles):
        for node in bulk.triangles[e]:
            s = int(node_side[node])
            if s == ON_EXTENSION:
                vals = by_element[e] if e in assembler.subdivisions else [cells[(e, int(space.cut.element_side[e]))]]
            else:
                key = (e, s) if (e, s) in cells else (e, int(space.cut.element_side[e]))
                vals = [cells[key]] if key in cells else by_element[e]
            total[node] += sum(vals)
            count[node] += len(vals)
    nodal = np.divide(total, count, out=np.zeros_like(total), where=count > 0)
    return VonMisesField(nodal, cells)
