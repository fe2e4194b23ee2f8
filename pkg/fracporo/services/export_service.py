# Export des résultats: tableaux (CSV/JSON), maillages VTK, empreintes
# fracporo/services/export_service.py
# -*- coding: utf-8 -*-
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Tuple, Union

import meshio
import numpy as np
import pandas as pd

from fracporo.core.analysis import FIELDS, ConvergenceReport, SolverReport, von_mises
from fracporo.core.assembly import Assembler
from fracporo.core.enrichment import evaluation_matrices

logger = logging.getLogger(__name__)

# Unités des colonnes (ligne d'en-tête "# columns:" des CSV)
COLUMN_UNITS: Dict[str, str] = {
    "level": "-",
    "k": "-",
    "err_k": "-",
    "err_displacement": "-",
    "err_bulk_pressure": "-",
    "err_fracture_pressure": "-",
    "b_min": "m",
    "b_max": "m",
    "contraction": "-",
    "iterations": "-",
    "converged": "-",
    "h_bulk": "m",
    "h_fracture": "m",
    "field": "-",
    "norm": "-",
    "error": "-",
    "reference_level": "-",
    "slope": "-",
    "intercept": "-",
    "residual": "-",
    "used": "-",
}


@dataclass(frozen=True)
class Artifact:
    path: Path
    sha256: str
    size: int

    def as_dict(self, root: Optional[Path] = None) -> Dict[str, Any]:
        name = self.path.relative_to(root).as_posix() if root is not None else self.path.as_posix()
        return {"path": name, "sha256": self.sha256, "bytes": self.size}


# ============================================================
# DataFrames standardisés
# ============================================================

def df_from_history(report: SolverReport, upto: Optional[int] = None) -> pd.DataFrame:
    """
    Historique d'itération d'un niveau (itérations k ≤ upto si donné):
    ['level','k','err_k','err_displacement','err_bulk_pressure','err_fracture_pressure','b_min','b_max','contraction']
    """
    rows: List[Dict[str, Any]] = []
    for rec in report.history:
        if upto is not None and rec.k > upto:
            break
        row: Dict[str, Any] = {"level": report.level, "k": rec.k, "err_k": rec.error}
        for name in FIELDS:
            row[f"err_{name}"] = rec.field_errors.get(name, float("nan"))
        row["b_min"] = rec.width_min
        row["b_max"] = rec.width_max
        row["contraction"] = report.contraction
        rows.append(row)
    return pd.DataFrame(rows, columns=[
        "level", "k", "err_k", "err_displacement", "err_bulk_pressure", "err_fracture_pressure",
        "b_min", "b_max", "contraction",
    ])


def df_from_solver_study(reports: Mapping[int, SolverReport]) -> pd.DataFrame:
    frames = [df_from_history(reports[lvl]) for lvl in sorted(reports)]
    if not frames:
        return df_from_history(SolverReport(0, float("nan"), float("nan"), [], False, 0, float("nan")))
    return pd.concat(frames, ignore_index=True)


def df_contraction(reports: Mapping[int, SolverReport]) -> pd.DataFrame:
    """Une ligne par niveau: h, itérations, convergence, facteur de contraction (moyenne géométrique)."""
    rows = [
        {
            "level": r.level,
            "h_bulk": r.h_bulk,
            "h_fracture": r.h_fracture,
            "iterations": r.iterations,
            "converged": bool(r.converged),
            "contraction": r.contraction,
        }
        for r in (reports[lvl] for lvl in sorted(reports))
    ]
    return pd.DataFrame(rows, columns=["level", "h_bulk", "h_fracture", "iterations", "converged", "contraction"])


def df_from_convergence(report: ConvergenceReport) -> pd.DataFrame:
    """
    Table d'erreurs au format long:
    ['level','h_bulk','h_fracture','field','norm','error','reference_level']
    """
    rows: List[Dict[str, Any]] = []
    for lvl, hb, hf in zip(report.levels, report.h_bulk, report.h_fracture):
        per_field = report.errors.get(lvl)
        if per_field is None:
            continue
        for name in FIELDS:
            for norm in ("L2", "H1"):
                if name in per_field and norm in per_field[name]:
                    rows.append({
                        "level": lvl,
                        "h_bulk": hb,
                        "h_fracture": hf,
                        "field": name,
                        "norm": norm,
                        "error": per_field[name][norm],
                        "reference_level": report.reference_level,
                    })
    return pd.DataFrame(rows, columns=["level", "h_bulk", "h_fracture", "field", "norm", "error", "reference_level"])


def df_from_slopes(report: ConvergenceReport) -> pd.DataFrame:
    rows = [
        {"field": name, "norm": norm, "slope": fit.slope, "intercept": fit.intercept,
         "residual": fit.residual, "used": fit.used, "reference_level": report.reference_level}
        for name in FIELDS
        for norm, fit in sorted(report.slopes.get(name, {}).items())
    ]
    return pd.DataFrame(rows, columns=["field", "norm", "slope", "intercept", "residual", "used", "reference_level"])


# ============================================================
# Exports binaires
# ============================================================

def columns_header(df: pd.DataFrame) -> str:
    cols = ", ".join(f"{c} [{COLUMN_UNITS.get(str(c), '-')}]" for c in df.columns)
    return f"# columns: {cols}\n"


def to_csv_bytes(
    df: pd.DataFrame,
    sep: str = ",",
    index: bool = False,
    encoding: str = "utf-8",
    lineterminator: str = "\n",
    header_comment: bool = True,
) -> bytes:
    """
    Encode un DataFrame en CSV (bytes), précédé d'une ligne '# columns: nom [unité], ...'.
    Relire avec pd.read_csv(..., comment='#').
    """
    csv_str = df.to_csv(index=index, sep=sep, lineterminator=lineterminator, float_format="%.17g")
    if header_comment:
        csv_str = columns_header(df) + csv_str
    return csv_str.encode(encoding)


def to_json_bytes(df: pd.DataFrame, orient: str = "records", force_ascii: bool = False) -> bytes:
    """Encode un DataFrame en JSON (bytes)."""
    return df.to_json(orient=orient, force_ascii=force_ascii, double_precision=15).encode("utf-8")


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def write_bytes(path: Union[str, Path], data: bytes) -> Artifact:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(data)
    logger.debug("écrit: %s (%d octets)", path, len(data))
    return Artifact(path, sha256_bytes(data), len(data))


def write_table(directory: Path, stem: str, df: pd.DataFrame, formats: Iterable[str]) -> List[Artifact]:
    """Écrit <stem>.csv et/ou <stem>.json selon les formats demandés."""
    out: List[Artifact] = []
    formats = set(formats)
    if "csv" in formats:
        out.append(write_bytes(directory / f"{stem}.csv", to_csv_bytes(df)))
    if "json" in formats:
        out.append(write_bytes(directory / f"{stem}.json", to_json_bytes(df)))
    return out


def write_summary(path: Union[str, Path], summary: Dict[str, Any]) -> Path:
    """Résumé lisible par machine (non listé parmi ses propres empreintes)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(_jsonable(summary), indent=2, sort_keys=True, ensure_ascii=False)
    path.write_text(text + "\n", encoding="utf-8")
    return path


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, Path):
        return obj.as_posix()
    return obj


# ============================================================
# VTK
# ============================================================

def _pad3(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    return np.column_stack([a, np.zeros(len(a))]) if a.shape[1] == 2 else a


def bulk_vtk_mesh(assembler: Assembler, state) -> meshio.Mesh:
    """
    Grille non structurée des champs volumiques. Les triangles non découpés partagent
    un sommet par couple (nœud, côté); les triangles découpés par Σ̃ sont remplacés par
    leurs sous-triangles à sommets privés (nœuds dédoublés le long de Σ).
    """
    space = assembler.space
    bulk, cut = space.bulk, space.cut
    points: List[np.ndarray] = []
    elements: List[int] = []
    sides: List[int] = []
    triangles: List[Tuple[int, int, int]] = []
    cell_side: List[int] = []
    cell_parent: List[int] = []
    shared: Dict[Tuple[int, int], int] = {}
    private: List[bool] = []

    def add(p: np.ndarray, e: int, s: int, is_private: bool) -> int:
        points.append(p)
        elements.append(e)
        sides.append(s)
        private.append(is_private)
        return len(points) - 1

    for e in range(bulk.n_triangles):
        sub = assembler.subdivisions.get(e)
        if sub is None:
            s = int(cut.element_side[e]) or 1
            ids = []
            for node in bulk.triangles[e]:
                key = (int(node), s)
                if key not in shared:
                    shared[key] = add(bulk.vertices[node], e, s, False)
                ids.append(shared[key])
            triangles.append(tuple(ids))
            cell_side.append(s)
            cell_parent.append(e)
            continue
        for tri, s in zip(sub.triangles, sub.sides):
            ids = [add(sub.vertices[v], e, int(s), True) for v in tri]
            triangles.append(tuple(ids))
            cell_side.append(int(s))
            cell_parent.append(e)

    pts = np.array(points)
    els = np.array(elements, dtype=np.int64)
    sds = np.array(sides, dtype=np.int8)
    u_ev = evaluation_matrices(space.displacement.scalar, pts, els, sds, gradients=False).values
    p_ev = evaluation_matrices(space.pressure.scalar, pts, els, sds, gradients=False).values
    n = space.displacement.scalar.n_dofs
    u = np.asarray(state.u, dtype=float)
    disp = np.column_stack([u_ev @ u[:n], u_ev @ u[n:]])
    pressure = p_ev @ np.asarray(state.p_bulk, dtype=float)

    vm = von_mises(assembler, u)
    node_of = {idx: node for (node, _), idx in shared.items()}
    stress = np.array([
        vm.cell_values.get((int(e), int(s)), 0.0) if priv else vm.nodal[node_of[i]]
        for i, (e, s, priv) in enumerate(zip(els, sds, private))
    ])

    return meshio.Mesh(
        _pad3(pts),
        [("triangle", np.array(triangles, dtype=np.int64))],
        point_data={"displacement": _pad3(disp), "pressure": pressure, "von_mises": stress},
        cell_data={"side": [np.array(cell_side, dtype=np.int32)], "parent": [np.array(cell_parent, dtype=np.int32)]},
    )


def fracture_vtk_mesh(assembler: Assembler, state) -> Optional[meshio.Mesh]:
    """Polyligne de Σ avec p^Σ (P1 nodal) et b_h aux sommets."""
    frac = assembler.space.frac
    if frac is None:
        return None
    segs = np.column_stack([np.arange(frac.n_segments), np.arange(1, frac.n_vertices)])
    width = state.width.values(frac.arc) if state.width is not None else np.zeros(frac.n_vertices)
    return meshio.Mesh(
        _pad3(frac.vertices),
        [("line", segs.astype(np.int64))],
        point_data={"fracture_pressure": np.asarray(state.p_frac, dtype=float), "crack_width": np.asarray(width, dtype=float)},
    )


def write_vtk(path: Union[str, Path], mesh: meshio.Mesh) -> Artifact:
    """VTK hérité en ASCII (octets reproductibles d'une exécution à l'autre)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meshio.write(path, mesh, file_format="vtk", binary=False)
    data = path.read_bytes()
    return Artifact(path, sha256_bytes(data), len(data))


def write_state_vtk(directory: Path, stem: str, assembler: Assembler, state) -> List[Artifact]:
    out = [write_vtk(directory / f"{stem}_bulk.vtk", bulk_vtk_mesh(assembler, state))]
    frac_mesh = fracture_vtk_mesh(assembler, state)
    if frac_mesh is not None:
        out.append(write_vtk(directory / f"{stem}_fracture.vtk", frac_mesh))
    return out
