# Étude de convergence en maillage: niveaux emboîtés, erreurs contre le niveau le plus fin, pentes
# fracporo/services/study_service.py
# -*- coding: utf-8 -*-
from __future__ import annotations

import logging
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from fracporo.core.analysis import ConvergenceReport, error_between
from fracporo.core.models import RunConfig
from fracporo.core.solver import CoupledState, DirectSolver, solve_to_tolerance
from fracporo.core.validators import MIN_LEVELS_FOR_RATES
from fracporo.services import export_service as export
from fracporo.services.run_service import (
    LevelSetup,
    build_level,
    check_config,
    level_summary,
    mesh_hierarchy,
    output_directory,
    run_summary,
)

logger = logging.getLogger(__name__)


def _write_tables(root: Path, report: ConvergenceReport, formats) -> List[export.Artifact]:
    artifacts = export.write_table(root, "convergence", export.df_from_convergence(report), formats)
    if report.slopes:
        artifacts += export.write_table(root, "slopes", export.df_from_slopes(report), formats)
    return artifacts


def run_convergence_study(cfg: RunConfig, output: Optional[str] = None) -> Tuple[ConvergenceReport, Path]:
    """
    Résout chaque niveau à la tolérance algébrique, puis mesure les erreurs relatives L²/H¹
    de chaque niveau contre la référence (niveau le plus fin par défaut).
    En cas d'échec à un niveau, les tables des niveaux terminés sont écrites avant de relancer l'erreur.
    """
    check_config(cfg)
    root = output_directory(cfg, output)
    study = cfg.study
    levels = list(study.levels)
    ref_level = study.reference
    solver_cfg = cfg.solver.to_config()

    report = ConvergenceReport(reference_level=ref_level)
    solved: Dict[int, Tuple[LevelSetup, CoupledState]] = {}
    level_info = []

    try:
        for lvl, bulk, frac in mesh_hierarchy(cfg, sorted(set(levels) | {ref_level})):
            setup = build_level(cfg, lvl, bulk, frac)
            state, sreport = solve_to_tolerance(setup.assembler, solver_cfg, study.algebraic_tolerance, DirectSolver())
            solved[lvl] = (setup, state)
            report.solver_reports[lvl] = sreport
            report.levels.append(lvl)
            report.h_bulk.append(setup.h_bulk)
            report.h_fracture.append(setup.h_fracture)
            level_info.append(level_summary(setup, sreport))
            logger.info("étude: niveau %d résolu (%d itérations)", lvl, sreport.iterations)

        ref_setup, ref_state = solved[ref_level]
        for lvl in report.levels:
            if lvl == ref_level:
                continue
            setup, state = solved[lvl]
            report.errors[lvl] = error_between(setup.assembler, state, ref_setup.assembler, ref_state)
            logger.info("étude: erreurs niveau %d vs %d: %s", lvl, ref_level,
                        {k: round(v["H1"], 6) for k, v in report.errors[lvl].items()})
    except Exception:
        if report.errors or report.levels:
            partial = _write_tables(root, report, ["csv"])
            logger.error("étude interrompue: résultats partiels écrits (%s)", ", ".join(a.path.name for a in partial))
        raise

    if len(report.errors) >= MIN_LEVELS_FOR_RATES:
        report.fit(MIN_LEVELS_FOR_RATES)
    else:
        logger.warning("étude: %d niveau(x) hors référence, pentes non calculées", len(report.errors))

    artifacts = _write_tables(root, report, cfg.output.formats)
    slopes = {name: {norm: fit.slope for norm, fit in fits.items()} for name, fits in report.slopes.items()}
    summary = run_summary(cfg, "convergence-study", root, artifacts, level_info,
                          {"reference_level": ref_level, "slopes": slopes})
    path = export.write_summary(root / "summary.json", summary)
    return report, path
