# Règles de cohérence de la configuration (après validation du schéma)
# fracporo/core/validators.py
# -*- coding: utf-8 -*-
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field as dc_field
from typing import Any, Dict, Iterable, List, Literal, Optional, Sequence, Tuple

import numpy as np

from fracporo.core.models import BENCHMARK_TAGS, RunConfig

Severity = Literal["error", "warning"]

# =========================
# Configuration (ajustable)
# =========================

# Niveaux minimum pour une pente
MIN_LEVELS_FOR_RATES = 3

# Un rayon d'enrichissement plus petit que ce facteur × h grossier ne couvre que les éléments de pointe
WARN_RADIUS_OVER_H = 0.5


# =========================
# Modèle d'issue
# =========================

@dataclass
class ValidationIssue:
    code: str
    message: str
    severity: Severity = "error"
    field_name: Optional[str] = None
    context: Dict[str, Any] = dc_field(default_factory=dict)

    def __str__(self) -> str:
        prefix = "⚠️" if self.severity == "warning" else "❌"
        if self.field_name:
            return f"{prefix} [{self.code}] {self.field_name}: {self.message}"
        return f"{prefix} [{self.code}] {self.message}"


# =========================
# Matériau
# =========================

def validate_material(cfg: RunConfig) -> List[ValidationIssue]:
    issues: List[ValidationIssue] = []
    m = cfg.material
    k = np.asarray(m.bulk_permeability, dtype=float)
    k = k * np.eye(2) if k.ndim == 0 else k
    if not np.allclose(k, k.T, rtol=1e-12, atol=0.0) or np.any(np.linalg.eigvalsh(0.5 * (k + k.T)) <= 0):
        issues.append(ValidationIssue("material.permeability.spd", "Le tenseur de perméabilité doit être symétrique défini positif.", "error", "material.bulk_permeability"))
    for name in ("normal_permeability", "tangential_permeability", "viscosity"):
        if getattr(m, name) <= 0:
            issues.append(ValidationIssue(f"material.{name}.positive", "Valeur strictement positive attendue.", "error", f"material.{name}"))
    if not (0.5 < m.xi <= 1.0):
        issues.append(ValidationIssue("material.xi.range", f"ξ = {m.xi} hors de ]1/2, 1].", "error", "material.xi"))
    if m.poisson_ratio is not None and not (-1.0 < m.poisson_ratio < 0.5):
        issues.append(ValidationIssue("material.poisson.range", f"ν = {m.poisson_ratio} hors de ]-1, 1/2[.", "error", "material.poisson_ratio"))
    if m.young_modulus is not None and m.young_modulus <= 0:
        issues.append(ValidationIssue("material.young.positive", "Module d'Young strictement positif attendu.", "error", "material.young_modulus"))
    if m.lame_mu is not None and m.lame_lambda is not None:
        if m.lame_mu <= 0 or m.lame_lambda + 2 * m.lame_mu <= 0:
            issues.append(ValidationIssue("material.lame.range", "μ > 0 et λ + 2μ > 0 attendus.", "error", "material.lame_mu"))
    return issues


# =========================
# Conditions aux limites
# =========================

def _mesh_tags(cfg: RunConfig) -> Optional[Sequence[str]]:
    """Étiquettes connues avant lecture du maillage (None pour un fichier)."""
    return BENCHMARK_TAGS if cfg.mesh.generator == "benchmark" else None


def validate_boundary(cfg: RunConfig) -> List[ValidationIssue]:
    issues: List[ValidationIssue] = []
    tags = _mesh_tags(cfg)
    frac_tags = set(cfg.fracture.end_tags.values()) if cfg.fracture is not None else set()
    for family in ("elasticity", "bulk_flow", "fracture_flow"):
        items = getattr(cfg.boundary, family)
        counts = Counter(c.tag for c in items)
        for tag, n in counts.items():
            if n > 1:
                issues.append(ValidationIssue("boundary.tag.duplicate", f"{n} conditions sur '{tag}'.", "error", f"boundary.{family}", {"tag": tag}))
        known = frac_tags if family == "fracture_flow" else (set(tags) if tags is not None else None)
        for c in items:
            if known is not None and c.tag not in known:
                issues.append(ValidationIssue("boundary.tag.unknown", f"Étiquette inconnue '{c.tag}' (connues: {sorted(known)}).", "error", f"boundary.{family}", {"tag": c.tag}))
        if tags is not None and family != "fracture_flow":
            missing = set(tags) - set(counts)
            if missing:
                issues.append(ValidationIssue("boundary.tag.natural", f"Sans condition (Neumann homogène): {sorted(missing)}.", "warning", f"boundary.{family}"))
    if not any(c.type == "dirichlet" for c in cfg.boundary.elasticity):
        issues.append(ValidationIssue("boundary.elasticity.no_dirichlet", "Au moins une condition de Dirichlet est requise en élasticité.", "error", "boundary.elasticity"))
    if cfg.fracture is not None and not cfg.boundary.fracture_flow:
        issues.append(ValidationIssue("boundary.fracture_flow.empty", "Aucune condition sur la fracture: pression définie à une constante près si pas de couplage.", "warning", "boundary.fracture_flow"))
    return issues


# =========================
# Géométrie
# =========================

def validate_fracture(cfg: RunConfig) -> List[ValidationIssue]:
    issues: List[ValidationIssue] = []
    f = cfg.fracture
    if f is None:
        return issues
    pts = f.points_m
    if cfg.mesh.generator == "benchmark":
        x0, y0 = 0.0, -0.5 * cfg.mesh.height
        tol = 1e-9 * max(cfg.mesh.width, cfg.mesh.height)
        inside = (pts[:, 0] >= x0 - tol) & (pts[:, 0] <= x0 + cfg.mesh.width + tol) & (pts[:, 1] >= y0 - tol) & (pts[:, 1] <= y0 + cfg.mesh.height + tol)
        if not np.all(inside):
            issues.append(ValidationIssue("fracture.outside", "Sommet(s) de fracture hors du domaine.", "error", "fracture.points", {"count": int((~inside).sum())}))
    if f.tip != "none" and f.tip not in f.end_tags:
        issues.append(ValidationIssue("fracture.tip.untagged", f"La pointe ('{f.tip}') n'a pas d'étiquette: aucune condition possible en pointe.", "warning", "fracture.end_tags"))
    tip_tag = f.end_tags.get(f.tip) if f.tip != "none" else None
    for c in cfg.boundary.fracture_flow:
        if tip_tag is not None and c.tag == tip_tag and c.type == "dirichlet":
            issues.append(ValidationIssue("fracture.tip.dirichlet", "Condition de Dirichlet en pointe de fracture.", "warning", "boundary.fracture_flow", {"tag": c.tag}))
    if f.tip == "none" and cfg.study.enrichment_radius > 0:
        issues.append(ValidationIssue("fracture.radius.unused", "Fracture sans pointe: le rayon d'enrichissement est sans effet.", "warning", "study.enrichment_radius"))
    return issues


# =========================
# Étude et solveur
# =========================

def validate_study(cfg: RunConfig) -> List[ValidationIssue]:
    issues: List[ValidationIssue] = []
    s = cfg.study
    if s.reference not in s.levels:
        issues.append(ValidationIssue("study.reference.unknown", f"Niveau de référence {s.reference} absent de {s.levels}.", "error", "study.reference_level"))
    elif s.reference != max(s.levels):
        issues.append(ValidationIssue("study.reference.not_finest", "La référence n'est pas le niveau le plus fin.", "warning", "study.reference_level"))
    if len([lvl for lvl in s.levels if lvl != s.reference]) < MIN_LEVELS_FOR_RATES:
        issues.append(ValidationIssue("study.levels.few", f"Moins de {MIN_LEVELS_FOR_RATES} niveaux hors référence: pas de pente.", "warning", "study.levels"))
    if cfg.mesh.generator == "benchmark" and s.enrichment_radius < WARN_RADIUS_OVER_H * np.sqrt(2.3 * cfg.mesh.max_area):
        issues.append(ValidationIssue("study.radius.small", "Rayon d'enrichissement petit devant le pas du maillage grossier.", "warning", "study.enrichment_radius"))
    if cfg.solver.initial_width <= 0 and cfg.fracture is not None:
        issues.append(ValidationIssue("solver.initial_width.positive", "Ouverture initiale strictement positive attendue.", "error", "solver.initial_width"))
    if cfg.solver.reference_mode and cfg.solver.max_iterations > cfg.solver.reference_iterations:
        issues.append(ValidationIssue("solver.max_iterations.reference", "max_iterations dépasse le nombre d'itérations de référence.", "warning", "solver.max_iterations"))
    if cfg.numerics.b_min <= 0 or cfg.numerics.eps_b < 0:
        issues.append(ValidationIssue("numerics.floors", "b_min > 0 et ε_b ≥ 0 attendus.", "error", "numerics"))
    return issues


# =========================
# Agrégateur principal
# =========================

def validate_run_config(cfg: RunConfig) -> Tuple[bool, List[ValidationIssue], List[ValidationIssue]]:
    """
    Valide une configuration complète.
    Retourne: (ok, errors, warnings)
    """
    errors: List[ValidationIssue] = []
    warnings: List[ValidationIssue] = []
    for check in (validate_material, validate_boundary, validate_fracture, validate_study):
        _split_issues(check(cfg), errors, warnings)
    ok = len(errors) == 0
    return ok, errors, warnings


def _split_issues(issues: Iterable[ValidationIssue], errors_out: List[ValidationIssue], warnings_out: List[ValidationIssue]) -> None:
    for it in issues or []:
        if it.severity == "warning":
            warnings_out.append(it)
        else:
            errors_out.append(it)


def issues_as_strings(issues: Iterable[ValidationIssue]) -> List[str]:
    return [str(i) for i in issues or []]


def summarize_result(ok: bool, errors: List[ValidationIssue], warnings: List[ValidationIssue]) -> str:
    if ok and not warnings:
        return "✅ Configuration valide."
    if ok and warnings:
        return f"✅ Configuration valide avec {len(warnings)} avertissement(s)."
    return f"⛔ {len(errors)} erreur(s), {len(warnings)} avertissement(s)."
