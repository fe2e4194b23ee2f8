# fracporo/core/models.py
# -*- coding: utf-8 -*-
"""
Schéma du fichier de configuration TOML (pydantic v2, clés inconnues refusées).
Toute grandeur dimensionnée s'écrit "<nombre> <unité>" et est convertie en SI.
"""
from __future__ import annotations

import sys
from pathlib import Path
from typing import Any, ClassVar, Dict, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from fracporo.core.errors import ConfigError
from fracporo.core.units import length_factor, parse_quantity

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

# Étiquettes des bords du maillage généré
BENCHMARK_TAGS = ("bottom", "right", "top", "left")


class _Block(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


def _optional(v: Any, dimension: str) -> Optional[float]:
    return None if v is None else parse_quantity(v, dimension)


# =========================
# [mesh]
# =========================

class MeshConfig(_Block):
    generator: Optional[Literal["benchmark"]] = "benchmark"
    file: Optional[str] = None
    length_unit: str = "km"
    width: float = 1000.0
    height: float = 1000.0
    max_area: float = 1e4
    min_angle: float = Field(30.0, gt=0, lt=34)
    refinements: int = Field(0, ge=0)

    @field_validator("width", "height", mode="before")
    @classmethod
    def parse_length(cls, v: Any) -> float:
        return parse_quantity(v, "length")

    @field_validator("max_area", mode="before")
    @classmethod
    def parse_area(cls, v: Any) -> float:
        return parse_quantity(v, "area")

    @field_validator("length_unit")
    @classmethod
    def parse_unit(cls, v: str) -> str:
        length_factor(v)
        return v

    @model_validator(mode="after")
    def check_source(self) -> "MeshConfig":
        if (self.generator is None) == (self.file is None):
            raise ValueError("indiquer soit generator = 'benchmark', soit file = '<chemin>'")
        return self


# =========================
# [fracture]
# =========================

class FractureConfig(_Block):
    points: List[Tuple[float, float]]
    unit: str = "km"
    tip: Literal["first", "last", "none"] = "last"
    end_tags: Dict[Literal["first", "last"], str] = Field(default_factory=lambda: {"first": "inlet", "last": "tip"})
    # longueur max des segments au niveau 0 (défaut: h du maillage volumique grossier)
    max_segment: Optional[float] = None

    @field_validator("max_segment", mode="before")
    @classmethod
    def parse_segment(cls, v: Any) -> Optional[float]:
        return _optional(v, "length")

    @field_validator("points")
    @classmethod
    def check_points(cls, v: List[Tuple[float, float]]) -> List[Tuple[float, float]]:
        if len(v) < 2:
            raise ValueError("au moins deux sommets")
        return v

    @field_validator("unit")
    @classmethod
    def parse_unit(cls, v: str) -> str:
        length_factor(v)
        return v

    @property
    def points_m(self) -> np.ndarray:
        return np.asarray(self.points, dtype=float) * length_factor(self.unit)


# =========================
# [material]
# =========================

class MaterialConfig(_Block):
    bulk_permeability: Union[float, List[List[float]]]
    normal_permeability: float
    tangential_permeability: float
    viscosity: float = 1e-3
    young_modulus: Optional[float] = None
    poisson_ratio: Optional[float] = None
    lame_lambda: Optional[float] = None
    lame_mu: Optional[float] = None
    xi: float = 0.75

    @field_validator("bulk_permeability", mode="before")
    @classmethod
    def parse_tensor(cls, v: Any) -> Any:
        if isinstance(v, list):
            rows = [[parse_quantity(x, "permeability") for x in row] for row in v]
            if len(rows) != 2 or any(len(r) != 2 for r in rows):
                raise ValueError("tenseur 2×2 attendu")
            return rows
        return parse_quantity(v, "permeability")

    @field_validator("normal_permeability", "tangential_permeability", mode="before")
    @classmethod
    def parse_perm(cls, v: Any) -> float:
        return parse_quantity(v, "permeability")

    @field_validator("viscosity", mode="before")
    @classmethod
    def parse_visc(cls, v: Any) -> float:
        return parse_quantity(v, "viscosity")

    @field_validator("young_modulus", "lame_lambda", "lame_mu", mode="before")
    @classmethod
    def parse_stress(cls, v: Any) -> Optional[float]:
        return _optional(v, "pressure")

    @model_validator(mode="after")
    def check_elastic(self) -> "MaterialConfig":
        young = self.young_modulus is not None and self.poisson_ratio is not None
        lame = self.lame_lambda is not None and self.lame_mu is not None
        if young == lame:
            raise ValueError("donner soit (young_modulus, poisson_ratio), soit (lame_lambda, lame_mu)")
        return self

    def to_params(self):
        from fracporo.core.assembly import MaterialParams

        if self.young_modulus is not None:
            return MaterialParams.from_young(
                self.young_modulus, self.poisson_ratio, self.bulk_permeability,
                self.normal_permeability, self.tangential_permeability, self.viscosity, self.xi,
            )
        return MaterialParams(
            np.asarray(self.bulk_permeability, dtype=float), self.normal_permeability, self.tangential_permeability,
            self.lame_lambda, self.lame_mu, self.viscosity, self.xi,
        )


# =========================
# [boundary]
# =========================

# dimension de la valeur selon (famille, type)
_BC_DIMENSION = {
    ("elasticity", "dirichlet"): ("length", 2),
    ("elasticity", "neumann"): ("pressure", 2),
    ("bulk_flow", "dirichlet"): ("pressure", 1),
    ("bulk_flow", "neumann"): ("velocity", 1),
    ("fracture_flow", "dirichlet"): ("pressure", 1),
    ("fracture_flow", "neumann"): ("velocity", 1),
}


class _Condition(_Block):
    family: ClassVar[str] = ""

    tag: str
    type: Literal["dirichlet", "neumann"]
    value: Union[float, Tuple[float, float]]

    @field_validator("value", mode="before")
    @classmethod
    def parse_value(cls, v: Any, info) -> Any:
        kind = info.data.get("type")
        if kind is None:
            return v
        dimension, n = _BC_DIMENSION[(cls.family, kind)]
        if n == 2:
            if not isinstance(v, (list, tuple)) or len(v) != 2:
                raise ValueError(f"vecteur de deux grandeurs ({dimension}) attendu")
            return tuple(parse_quantity(x, dimension) for x in v)
        return parse_quantity(v, dimension)


class ElasticityCondition(_Condition):
    family: ClassVar[str] = "elasticity"


class BulkFlowCondition(_Condition):
    family: ClassVar[str] = "bulk_flow"


class FractureFlowCondition(_Condition):
    family: ClassVar[str] = "fracture_flow"


class BoundaryConfig(_Block):
    elasticity: List[ElasticityCondition] = Field(default_factory=list)
    bulk_flow: List[BulkFlowCondition] = Field(default_factory=list)
    fracture_flow: List[FractureFlowCondition] = Field(default_factory=list)


# =========================
# [sources]
# =========================

class SourcesConfig(_Block):
    body_force: Tuple[float, float] = (0.0, 0.0)
    bulk: float = 0.0
    fracture: float = 0.0

    @field_validator("body_force", mode="before")
    @classmethod
    def parse_force(cls, v: Any) -> Any:
        if isinstance(v, (list, tuple)) and len(v) == 2:
            return tuple(parse_quantity(x, "force_density") for x in v)
        raise ValueError("vecteur de deux grandeurs (N/m3) attendu")

    @field_validator("bulk", "fracture", mode="before")
    @classmethod
    def parse_rate(cls, v: Any) -> float:
        return parse_quantity(v, "rate")


# =========================
# [solver], [study], [numerics], [output]
# =========================

class SolverBlock(_Block):
    beta: float = Field(1.0, gt=0.0, le=1.0)
    tol: float = 1e-8
    max_iterations: int = Field(20, ge=1)
    initial_width: float = 1e-2
    r_unit: str = "m"
    reference_mode: bool = True
    reference_iterations: int = Field(20, ge=1)

    @field_validator("tol", mode="before")
    @classmethod
    def parse_tol(cls, v: Any) -> float:
        if isinstance(v, str) and v.strip().lower() in ("inf", "infinity"):
            return float("inf")
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not v > 0:
            raise ValueError("tolérance > 0 (nombre ou 'inf') attendue")
        return float(v)

    @field_validator("initial_width", mode="before")
    @classmethod
    def parse_width(cls, v: Any) -> float:
        return parse_quantity(v, "length")

    @field_validator("r_unit")
    @classmethod
    def parse_r_unit(cls, v: str) -> str:
        length_factor(v)
        return v

    def to_config(self):
        from fracporo.core.solver import InitialWidth, SolverConfig

        return SolverConfig(
            beta=self.beta, tol=self.tol, max_iterations=self.max_iterations,
            initial_width=InitialWidth(self.initial_width, length_factor(self.r_unit)),
            reference_mode=self.reference_mode, reference_iterations=self.reference_iterations,
        )


class StudyConfig(_Block):
    levels: List[int] = Field(default_factory=lambda: [0, 1, 2, 3, 4])
    reference_level: Optional[int] = None
    enrichment_radius: float = 125.0
    algebraic_tolerance: float = Field(1e-9, gt=0)

    @field_validator("enrichment_radius", mode="before")
    @classmethod
    def parse_radius(cls, v: Any) -> float:
        return parse_quantity(v, "length")

    @field_validator("levels")
    @classmethod
    def parse_levels(cls, v: List[int]) -> List[int]:
        if not v or any(x < 0 for x in v) or sorted(set(v)) != list(v):
            raise ValueError("liste croissante de niveaux ≥ 0 attendue")
        return v

    @property
    def reference(self) -> int:
        return self.reference_level if self.reference_level is not None else self.levels[-1]


class NumericsConfig(_Block):
    uncut_order: int = Field(2, ge=1)
    enriched_order: int = Field(4, ge=1)
    cut_order: int = Field(4, ge=1)
    interface_order: int = Field(4, ge=1)
    tip_levels: int = Field(3, ge=1)
    b_min: float = 1e-12
    eps_b: float = 1e-9

    @field_validator("b_min", "eps_b", mode="before")
    @classmethod
    def parse_floor(cls, v: Any) -> float:
        return parse_quantity(v, "length")

    def orders(self):
        from fracporo.core.quadrature import Orders

        return Orders(self.uncut_order, self.enriched_order, self.cut_order, self.interface_order, self.tip_levels)


class OutputConfig(_Block):
    directory: str = "results"
    formats: List[Literal["vtk", "csv", "json"]] = Field(default_factory=lambda: ["vtk", "csv", "json"])


# =========================
# Racine
# =========================

class RunConfig(_Block):
    name: str = "run"
    mesh: MeshConfig = Field(default_factory=MeshConfig)
    fracture: Optional[FractureConfig] = None
    material: MaterialConfig
    boundary: BoundaryConfig = Field(default_factory=BoundaryConfig)
    sources: SourcesConfig = Field(default_factory=SourcesConfig)
    solver: SolverBlock = Field(default_factory=SolverBlock)
    study: StudyConfig = Field(default_factory=StudyConfig)
    numerics: NumericsConfig = Field(default_factory=NumericsConfig)
    output: OutputConfig = Field(default_factory=OutputConfig)

    def problem_data(self):
        from fracporo.core.assembly import BoundaryCondition, ProblemData

        def conds(items):
            return [BoundaryCondition(c.tag, c.type, c.value) for c in items]

        return ProblemData(
            body_force=self.sources.body_force,
            bulk_source=self.sources.bulk,
            fracture_source=self.sources.fracture,
            elasticity=conds(self.boundary.elasticity),
            bulk_flow=conds(self.boundary.bulk_flow),
            fracture_flow=conds(self.boundary.fracture_flow),
        )


def _format_errors(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        key = ".".join(str(p) for p in err.get("loc", ()))
        lines.append(f"{key or '<racine>'}: {err.get('msg', '')}")
    return "; ".join(lines)


def parse_run_config(data: Dict[str, Any]) -> RunConfig:
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(f"configuration invalide: {_format_errors(exc)}") from exc


def load_run_config(path: Union[str, Path]) -> RunConfig:
    """Lit et valide un fichier TOML (OSError si illisible, ConfigError sinon)."""
    path = Path(path)
    with path.open("rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: TOML invalide: {exc}") from exc
    return parse_run_config(data)
