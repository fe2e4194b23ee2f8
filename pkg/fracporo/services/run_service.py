# Orchestration d'un calcul: maillages -> espace XFEM -> itération couplée -> artefacts
# fracporo/services/run_service.py
# -*- coding: utf-8 -*-
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from fracporo.core.analysis import SolverReport
from fracporo.core.assembly import Assembler, build_assembler
from fracporo.core.enrichment import build_space
from fracporo.core.errors import ConfigError
from fracporo.core.geometry import BulkMesh, FractureMesh, refine_uniform
from fracporo.core.mesh_io import read_mesh, rectangle_mesh
from fracporo.core.models import RunConfig
from fracporo.core.solver import CoupledState, DirectSolver, run_fixed_point
from fracporo.core.units import length_factor
from fracporo.core.validators import issues_as_strings, validate_run_config
from fracporo.services import export_service as export

logger = logging.getLogger(__name__)


@dataclass
class LevelSetup:
    level: int
    bulk: BulkMesh
    frac: Optional[FractureMesh]
    assembler: Assembler

    @property
    def h_bulk(self) -> float:
        return self.bulk.h

    @property
    def h_fracture(self) -> float:
        return self.frac.h if self.frac is not None else float("nan")


@dataclass
class RunResult:
    state: CoupledState
    report: SolverReport
    setup: LevelSetup
    artifacts: List[export.Artifact] = field(default_factory=list)
    summary_path: Optional[Path] = None


# =========================
# Maillages
# =========================

def subdivide_polyline(points: np.ndarray, max_segment: float) -> np.ndarray:
    """Coupe chaque segment en ceil(longueur / max_segment) morceaux égaux (sommets d'origine conservés)."""
    pts = np.asarray(points, dtype=float)
    if max_segment <= 0:
        raise ValueError("longueur de segment strictement positive attendue")
    out = [pts[:1]]
    for a, b in zip(pts[:-1], pts[1:]):
        n = max(1, int(math.ceil(np.linalg.norm(b - a) / max_segment - 1e-9)))
        t = np.arange(1, n + 1) / n
        out.append(a + t[:, None] * (b - a))
    return np.vstack(out)


def coarse_meshes(cfg: RunConfig) -> Tuple[BulkMesh, Optional[FractureMesh]]:
    """Maillages du niveau 0: volumique (généré ou lu, puis `refinements` raffinements) et fracture."""
    m = cfg.mesh
    if m.generator == "benchmark":
        bulk = rectangle_mesh(m.width, m.height, m.max_area, min_angle=m.min_angle)
    else:
        bulk = read_mesh(m.file, length_factor(m.length_unit))
    for _ in range(m.refinements):
        bulk = refine_uniform(bulk)
    frac = None
    if cfg.fracture is not None:
        f = cfg.fracture
        pts = subdivide_polyline(f.points_m, f.max_segment if f.max_segment is not None else bulk.h)
        frac = FractureMesh.from_points(pts, f.tip, dict(f.end_tags))
    return bulk, frac


def mesh_hierarchy(cfg: RunConfig, levels: Sequence[int]) -> Iterator[Tuple[int, BulkMesh, Optional[FractureMesh]]]:
    """Maillages emboîtés des niveaux demandés (raffinements uniformes successifs)."""
    wanted = sorted(set(int(l) for l in levels))
    bulk, frac = coarse_meshes(cfg)
    current = 0
    for lvl in wanted:
        while current < lvl:
            bulk = refine_uniform(bulk)
            frac = refine_uniform(frac) if frac is not None else None
            current += 1
        yield lvl, bulk, frac


def build_level(cfg: RunConfig, level: int, bulk: BulkMesh, frac: Optional[FractureMesh]) -> LevelSetup:
    t0 = time.perf_counter()
    space = build_space(bulk, frac, cfg.study.enrichment_radius)
    assembler = build_assembler(
        space, cfg.material.to_params(), cfg.problem_data(), cfg.numerics.orders(),
        cfg.numerics.b_min, cfg.numerics.eps_b,
    )
    logger.info("niveau %d prêt: %r (%.2fs)", level, assembler, time.perf_counter() - t0)
    return LevelSetup(level, bulk, frac, assembler)


def setup_level(cfg: RunConfig, level: int) -> LevelSetup:
    for lvl, bulk, frac in mesh_hierarchy(cfg, [level]):
        return build_level(cfg, lvl, bulk, frac)
    raise ConfigError(f"niveau invalide: {level}")


# =========================
# Validation
# =========================

def check_config(cfg: RunConfig) -> None:
    """Règles de cohérence; ConfigError si au moins une erreur, avertissements journalisés."""
    ok, errors, warnings = validate_run_config(cfg)
    for w in issues_as_strings(warnings):
        logger.warning(w)
    if not ok:
        raise ConfigError("; ".join(issues_as_strings(errors)))


def output_directory(cfg: RunConfig, override: Optional[str] = None) -> Path:
    base = Path(override or cfg.output.directory)
    return base / cfg.name


# =========================
# Résumé
# =========================

def level_summary(setup: LevelSetup, report: SolverReport) -> Dict[str, Any]:
    space = setup.assembler.space
    return {
        "level": setup.level,
        "h_bulk": setup.h_bulk,
        "h_fracture": setup.h_fracture,
        "dofs": space.dof_counts(),
        "node_sets": {"tip": int(len(space.nodes.tip)), "heaviside": int(len(space.nodes.heaviside)),
                      "radius": space.nodes.radius},
        "geometric_perturbations": len(space.cut.perturbations),
        "converged": report.converged,
        "iterations": report.iterations,
        "contraction": report.contraction,
        "final_error": report.errors[-1] if report.history else float("nan"),
        "elapsed_s": report.elapsed,
    }


def run_summary(cfg: RunConfig, command: str, root: Path, artifacts: Sequence[export.Artifact],
                levels: Sequence[Dict[str, Any]], extra: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    summary: Dict[str, Any] = {
        "name": cfg.name,
        "command": command,
        "error_combination": "rss",
        "initial_width": {
            "formula": "c * sqrt(r / r_unit)",
            "coefficient_m": cfg.solver.initial_width,
            "r_unit": cfg.solver.r_unit,
        },
        "solver": {
            "beta": cfg.solver.beta,
            "tol": cfg.solver.tol,
            "max_iterations": cfg.solver.max_iterations,
            "reference_mode": cfg.solver.reference_mode,
            "reference_iterations": cfg.solver.reference_iterations,
        },
        "levels": list(levels),
        "files": [a.as_dict(root) for a in artifacts],
    }
    if extra:
        summary.update(extra)
    return summary


# =========================
# Commandes
# =========================

def run_solve(cfg: RunConfig, level: int = 0, output: Optional[str] = None) -> RunResult:
    """
    Un niveau: itération de sous-structuration puis écriture des champs (VTK),
    de l'historique (CSV/JSON) et du résumé JSON avec empreintes SHA-256.
    """
    check_config(cfg)
    root = output_directory(cfg, output)
    setup = setup_level(cfg, level)
    state, report = run_fixed_point(setup.assembler, cfg.solver.to_config(), solver=DirectSolver())

    formats = cfg.output.formats
    artifacts: List[export.Artifact] = []
    stem = f"level{level}"
    if "vtk" in formats:
        artifacts += export.write_state_vtk(root, stem, setup.assembler, state)
    artifacts += export.write_table(root, f"{stem}_history", export.df_from_history(report, upto=report.iterations), formats)

    summary = run_summary(cfg, "solve", root, artifacts, [level_summary(setup, report)])
    path = export.write_summary(root / "summary.json", summary)
    logger.info("résultats écrits dans %s (%d fichiers)", root, len(artifacts) + 1)
    return RunResult(state, report, setup, artifacts, path)


def run_solver_study(cfg: RunConfig, levels: Optional[Sequence[int]] = None,
                     output: Optional[str] = None) -> Tuple[Dict[int, SolverReport], Path]:
    """
    Pour chaque niveau: err_k contre la référence à `reference_iterations` itérations,
    puis table des historiques et des facteurs de contraction.
    """
    check_config(cfg)
    root = output_directory(cfg, output)
    levels = list(levels) if levels is not None else list(cfg.study.levels)
    solver_cfg = cfg.solver.to_config()
    if not solver_cfg.reference_mode:
        solver_cfg = replace(solver_cfg, reference_mode=True)
    reports: Dict[int, SolverReport] = {}
    level_info: List[Dict[str, Any]] = []
    for lvl, bulk, frac in mesh_hierarchy(cfg, levels):
        setup = build_level(cfg, lvl, bulk, frac)
        _, report = run_fixed_point(setup.assembler, solver_cfg, solver=DirectSolver())
        reports[lvl] = report
        level_info.append(level_summary(setup, report))
        logger.info("étude solveur: niveau %d, %d itérations, contraction %.3g", lvl, report.iterations, report.contraction)

    formats = cfg.output.formats
    artifacts = export.write_table(root, "solver_study", export.df_from_solver_study(reports), formats)
    artifacts += export.write_table(root, "solver_contraction", export.df_contraction(reports), formats)
    contractions = [r.contraction for r in reports.values() if np.isfinite(r.contraction) and r.contraction > 0]
    spread = max(contractions) / min(contractions) if contractions else float("nan")
    summary = run_summary(cfg, "solver-study", root, artifacts, level_info, {"contraction_spread": spread})
    path = export.write_summary(root / "summary.json", summary)
    return reports, path
