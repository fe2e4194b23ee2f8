# fracporo/core/assembly.py
# -*- coding: utf-8 -*-
"""
Assemblage creux des formes bilinéaires et des seconds membres.

Toutes les formes sont écrites comme des produits de matrices d'évaluation
(points de quadrature × DOF) pondérées: A = Bᵀ diag(w·c) B. Les matrices
d'évaluation sont construites une fois par Assembler; seules les pondérations
dépendant de b_h changent d'une itération à l'autre.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Dict, Hashable, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sp

from fracporo.core.enrichment import (
    B_MIN,
    CrackWidthField,
    EnrichedSpace,
    EvalMatrices,
    FieldSpace,
    evaluation_matrices,
    normal_jump_matrix,
    trace_matrices,
)
from fracporo.core.errors import ConfigError, CrackClosedError
from fracporo.core.quadrature import (
    BoundaryQuad,
    InterfaceQuad,
    Orders,
    SubTriangulation,
    VolumePoints,
    boundary_quadrature,
    interface_quadrature,
    split_element,
    volume_points,
)

logger = logging.getLogger(__name__)

# Tolérance d'ouverture négative (m)
EPS_B = 1e-9

Value = Union[float, Sequence[float], Callable[[np.ndarray], np.ndarray]]


# =========================
# Paramètres et données
# =========================

@dataclass(frozen=True, eq=False)
class MaterialParams:
    """Paramètres physiques en SI (m², Pa, Pa·s)."""

    permeability: np.ndarray
    normal_permeability: float
    tangential_permeability: float
    lame_lambda: float
    lame_mu: float
    viscosity: float = 1e-3
    xi: float = 0.75

    @classmethod
    def from_young(cls, young: float, poisson: float, permeability, normal_permeability: float,
                   tangential_permeability: float, viscosity: float = 1e-3, xi: float = 0.75) -> "MaterialParams":
        """Déformations planes: λ = Eν/((1+ν)(1−2ν)), μ = E/(2(1+ν))."""
        if not (-1.0 < poisson < 0.5):
            raise ConfigError(f"coefficient de Poisson hors de ]-1, 1/2[: {poisson}")
        lam = young * poisson / ((1.0 + poisson) * (1.0 - 2.0 * poisson))
        mu = young / (2.0 * (1.0 + poisson))
        return cls(_as_tensor(permeability), float(normal_permeability), float(tangential_permeability),
                   float(lam), float(mu), float(viscosity), float(xi))

    def __post_init__(self) -> None:
        object.__setattr__(self, "permeability", _as_tensor(self.permeability))

    @property
    def poisson(self) -> float:
        return self.lame_lambda / (2.0 * (self.lame_lambda + self.lame_mu))

    @property
    def mobility(self) -> np.ndarray:
        return self.permeability / self.viscosity

    def check(self) -> None:
        k = self.permeability
        if not np.allclose(k, k.T, rtol=1e-12, atol=0.0) or np.any(np.linalg.eigvalsh(k) <= 0):
            raise ConfigError("tenseur de perméabilité non symétrique défini positif")
        if self.normal_permeability <= 0 or self.tangential_permeability <= 0:
            raise ConfigError("perméabilités de fracture K^ν, K^τ strictement positives attendues")
        if self.viscosity <= 0:
            raise ConfigError("viscosité strictement positive attendue")
        if self.lame_mu <= 0 or self.lame_lambda + 2.0 * self.lame_mu <= 0:
            raise ConfigError("paramètres de Lamé: μ > 0 et λ + 2μ > 0 attendus")
        if not (0.5 < self.xi <= 1.0):
            raise ConfigError(f"ξ hors de ]1/2, 1]: {self.xi}")


def _as_tensor(k) -> np.ndarray:
    arr = np.asarray(k, dtype=float)
    if arr.ndim == 0:
        return float(arr) * np.eye(2)
    return arr.reshape(2, 2)


@dataclass(frozen=True)
class BoundaryCondition:
    """Condition sur une étiquette: kind 'dirichlet' ou 'neumann'; valeur constante ou fonction des points."""

    tag: str
    kind: str
    value: Value = 0.0

    def values(self, points: np.ndarray, components: int = 1) -> np.ndarray:
        return _evaluate(self.value, points, components)


def _evaluate(value: Value, points: np.ndarray, components: int) -> np.ndarray:
    points = np.atleast_2d(points)
    if callable(value):
        out = np.asarray(value(points), dtype=float)
    else:
        out = np.broadcast_to(np.asarray(value, dtype=float), (len(points), components) if components > 1 else (len(points),))
    shape = (len(points), components) if components > 1 else (len(points),)
    return np.array(out, dtype=float).reshape(shape)


@dataclass
class ProblemData:
    body_force: Value = (0.0, 0.0)
    bulk_source: Value = 0.0
    fracture_source: Value = 0.0
    elasticity: List[BoundaryCondition] = field(default_factory=list)
    bulk_flow: List[BoundaryCondition] = field(default_factory=list)
    fracture_flow: List[BoundaryCondition] = field(default_factory=list)

    def check(self, bulk_tags: Iterable[str], fracture_tags: Iterable[str]) -> None:
        """Étiquettes connues, une condition au plus par étiquette et par champ."""
        known = {"elasticity": set(bulk_tags), "bulk_flow": set(bulk_tags), "fracture_flow": set(fracture_tags)}
        for name in ("elasticity", "bulk_flow", "fracture_flow"):
            seen = set()
            for bc in getattr(self, name):
                if bc.kind not in ("dirichlet", "neumann"):
                    raise ConfigError(f"{name}: type de condition inconnu {bc.kind!r}")
                if bc.tag not in known[name]:
                    raise ConfigError(f"{name}: étiquette inconnue {bc.tag!r} (connues: {sorted(known[name])})")
                if bc.tag in seen:
                    raise ConfigError(f"{name}: plusieurs conditions sur {bc.tag!r}")
                seen.add(bc.tag)
        if not any(bc.kind == "dirichlet" for bc in self.elasticity):
            raise ConfigError("élasticité: aucune condition de Dirichlet (modes rigides)")


# =========================
# Systèmes creux
# =========================

@dataclass(frozen=True, eq=False)
class SparseSystem:
    """Système (éventuellement réduit) et trace de l'élimination de Dirichlet."""

    matrix: sp.csr_matrix
    rhs: np.ndarray
    free: np.ndarray
    fixed: np.ndarray
    fixed_values: np.ndarray
    n_full: int
    symmetric: bool = False
    cache_key: Optional[Hashable] = None

    @classmethod
    def full(cls, matrix, rhs: np.ndarray, symmetric: bool = False, cache_key: Optional[Hashable] = None) -> "SparseSystem":
        n = matrix.shape[0]
        if matrix.shape != (n, n) or rhs.shape != (n,):
            raise ValueError(f"système incohérent: matrice {matrix.shape}, second membre {rhs.shape}")
        empty = np.zeros(0, dtype=np.int64)
        return cls(sp.csr_matrix(matrix), np.asarray(rhs, dtype=float), np.arange(n), empty, np.zeros(0), n, symmetric, cache_key)

    @property
    def size(self) -> int:
        return int(self.matrix.shape[0])

    def expand(self, x_free: np.ndarray) -> np.ndarray:
        """Vecteur complet à partir des inconnues libres et des valeurs imposées."""
        x = np.zeros(self.n_full)
        x[self.free] = x_free
        x[self.fixed] = self.fixed_values
        return x


class DirichletConstraints:
    """DOF imposés (numérotation complète du système)."""

    def __init__(self) -> None:
        self._values: Dict[int, float] = {}

    def add(self, dofs: Iterable[int], values: Union[float, Iterable[float]], label: str = "") -> None:
        dofs = np.asarray(list(dofs), dtype=np.int64)
        vals = np.broadcast_to(np.asarray(values, dtype=float), dofs.shape)
        if not np.all(np.isfinite(vals)):
            raise ConfigError(f"valeur de Dirichlet non finie ({label})")
        for d, v in zip(dofs.tolist(), vals.tolist()):
            old = self._values.get(d)
            if old is not None and abs(old - v) > 1e-12 * max(1.0, abs(old), abs(v)):
                raise ConfigError(f"DOF {d}: valeurs de Dirichlet contradictoires {old:g} et {v:g} ({label})")
            self._values[d] = v

    def shifted(self, offset: int) -> "DirichletConstraints":
        out = DirichletConstraints()
        out._values = {d + offset: v for d, v in self._values.items()}
        return out

    def merged(self, other: "DirichletConstraints") -> "DirichletConstraints":
        out = DirichletConstraints()
        out.add(self.dofs, self.values)
        out.add(other.dofs, other.values)
        return out

    @property
    def dofs(self) -> np.ndarray:
        return np.array(sorted(self._values), dtype=np.int64)

    @property
    def values(self) -> np.ndarray:
        return np.array([self._values[d] for d in sorted(self._values)], dtype=float)

    def __len__(self) -> int:
        return len(self._values)


def apply_dirichlet(system: SparseSystem, constraints: DirichletConstraints) -> SparseSystem:
    """Élimination symétrique: A_ff x_f = b_f − A_fc x_c (indices complets)."""
    if len(constraints) == 0:
        return system
    dofs, vals = constraints.dofs, constraints.values
    if dofs.min() < 0 or dofs.max() >= system.n_full:
        raise ValueError("DOF de Dirichlet hors du système")
    local = np.full(system.n_full, -1, dtype=np.int64)
    local[system.free] = np.arange(len(system.free))
    if np.any(local[dofs] < 0):
        raise ValueError("DOF déjà éliminé")
    loc_c = local[dofs]
    keep = np.ones(len(system.free), dtype=bool)
    keep[loc_c] = False
    loc_f = np.nonzero(keep)[0]
    a = system.matrix
    a_fc = a[loc_f][:, loc_c]
    rhs = system.rhs[loc_f] - a_fc @ vals
    return SparseSystem(
        a[loc_f][:, loc_f].tocsr(),
        rhs,
        system.free[loc_f],
        np.concatenate([system.fixed, dofs]),
        np.concatenate([system.fixed_values, vals]),
        system.n_full,
        system.symmetric,
        system.cache_key,
    )


# =========================
# Assembler
# =========================

def _check_enriched_dirichlet(space: EnrichedSpace, data: ProblemData) -> None:
    """Les DOF d'enrichissement ne sont jamais contraints: aucun nœud enrichi sur Γ_D."""
    enriched = np.union1d(space.nodes.tip, space.nodes.heaviside)
    if len(enriched) == 0:
        return
    for family, conds in (("élasticité", data.elasticity), ("écoulement", data.bulk_flow)):
        for bc in conds:
            if bc.kind != "dirichlet":
                continue
            hit = np.intersect1d(space.bulk.tagged_nodes(bc.tag), enriched)
            if len(hit):
                raise ConfigError(
                    f"Dirichlet ({family}) sur '{bc.tag}': {len(hit)} nœud(s) enrichi(s) sur Γ_D "
                    f"(ex. sommet {int(hit[0])}); éloigner la fracture ou l'étiquette"
                )


class Assembler:
    """Quadratures, matrices d'évaluation et contraintes d'un niveau de maillage."""

    def __init__(
        self,
        space: EnrichedSpace,
        params: MaterialParams,
        data: ProblemData,
        orders: Orders = Orders(),
        b_min: float = B_MIN,
        eps_b: float = EPS_B,
    ) -> None:
        params.check()
        frac_tags = list(space.frac.end_tags) if space.frac is not None else []
        data.check(space.bulk.tag_names, frac_tags)
        _check_enriched_dirichlet(space, data)
        self.space = space
        self.params = params
        self.data = data
        self.orders = orders
        self.b_min = float(b_min)
        self.eps_b = float(eps_b)
        t0 = time.perf_counter()
        self.subdivisions: Dict[int, SubTriangulation] = {
            int(e): split_element(space.bulk, space.cut, int(e)) for e in space.cut.split_elements
        }
        self.vp: VolumePoints = volume_points(
            space.bulk, space.cut, orders, space.displacement.scalar.enriched_elements, self.subdivisions
        )
        self.iq: Optional[InterfaceQuad] = (
            interface_quadrature(space.cut, space.frac, orders.interface, orders.tip_levels) if space.frac is not None else None
        )
        self.bq: BoundaryQuad = boundary_quadrature(space.bulk, space.cut, orders.interface)
        logger.debug("quadratures: %d pts volume, %d pts interface, %d pts bord (%.3fs)",
                     self.vp.n, 0 if self.iq is None else self.iq.n, self.bq.n, time.perf_counter() - t0)

    # ----- tailles -----
    @property
    def n_u(self) -> int:
        return self.space.displacement.n_dofs

    @property
    def n_p(self) -> int:
        return self.space.pressure.n_dofs

    @property
    def n_s(self) -> int:
        return self.space.n_fracture_dofs

    # ----- évaluations -----
    @cached_property
    def u_eval(self) -> EvalMatrices:
        return evaluation_matrices(self.space.displacement.scalar, self.vp.points, self.vp.elements, self.vp.sides)

    @cached_property
    def p_eval(self) -> EvalMatrices:
        return evaluation_matrices(self.space.pressure.scalar, self.vp.points, self.vp.elements, self.vp.sides)

    def boundary_eval(self, field_space: FieldSpace, tag: str) -> Tuple[sp.csr_matrix, np.ndarray]:
        """(valeurs des fonctions de base, masque des points) sur l'étiquette donnée."""
        mask = self.bq.tags == tag
        key = ("boundary", field_space.name, tag)
        mat = self.bq.cached(key, lambda: evaluation_matrices(
            field_space.scalar, self.bq.points[mask], self.bq.elements[mask], self.bq.sides[mask], gradients=False
        ).values)
        return mat, mask

    @cached_property
    def pressure_traces(self) -> Tuple[sp.csr_matrix, sp.csr_matrix]:
        iq = self.iq
        return trace_matrices(self.space.pressure.scalar, iq.elements, iq.points, iq.r)

    @cached_property
    def displacement_normal_jump(self) -> sp.csr_matrix:
        iq = self.iq
        return iq.cached(("normal_jump", self.space.displacement), lambda: normal_jump_matrix(
            self.space.displacement, iq.elements, iq.points, iq.r, iq.normals))

    # ----- contraintes -----
    @cached_property
    def elasticity_constraints(self) -> DirichletConstraints:
        bulk = self.space.bulk
        scalar = self.space.displacement.scalar
        cons = DirichletConstraints()
        for bc in self.data.elasticity:
            if bc.kind != "dirichlet":
                continue
            nodes = bulk.tagged_nodes(bc.tag)
            vals = bc.values(bulk.vertices[nodes], 2)
            for a in range(2):
                cons.add(a * scalar.n_dofs + nodes, vals[:, a], f"u[{a}] sur {bc.tag}")
        return cons

    @cached_property
    def fluid_constraints(self) -> DirichletConstraints:
        bulk = self.space.bulk
        cons = DirichletConstraints()
        for bc in self.data.bulk_flow:
            if bc.kind != "dirichlet":
                continue
            nodes = bulk.tagged_nodes(bc.tag)
            cons.add(nodes, bc.values(bulk.vertices[nodes]), f"p sur {bc.tag}")
        frac = self.space.frac
        for bc in self.data.fracture_flow:
            if bc.kind != "dirichlet":
                continue
            v = frac.end_tags[bc.tag]
            cons.add([self.n_p + v], bc.values(frac.vertices[v][None, :]), f"pΣ sur {bc.tag}")
        return cons

    # ----- élasticité -----
    @cached_property
    def elasticity_matrix(self) -> sp.csr_matrix:
        t0 = time.perf_counter()
        lam, mu = self.params.lame_lambda, self.params.lame_mu
        ev = self.u_eval
        w = sp.diags(self.vp.weights)
        gx, gy = ev.dx, ev.dy
        kxx = gx.T @ w @ gx
        kyy = gy.T @ w @ gy
        kxy = gx.T @ w @ gy
        kyx = kxy.T
        a = sp.bmat([
            [(lam + 2 * mu) * kxx + mu * kyy, lam * kxy + mu * kyx],
            [lam * kyx + mu * kxy, (lam + 2 * mu) * kyy + mu * kxx],
        ], format="csr")
        a = (0.5 * (a + a.T)).tocsr()
        logger.debug("matrice d'élasticité: %d DOF, %d non-nuls (%.3fs)", a.shape[0], a.nnz, time.perf_counter() - t0)
        return a

    @cached_property
    def pressure_gradient_coupling(self) -> sp.csr_matrix:
        """G: (n_u × n_p), (G p)·v = ∫_Ω ∇p·v."""
        w = sp.diags(self.vp.weights)
        vu = self.u_eval.values
        return sp.vstack([vu.T @ w @ self.p_eval.dx, vu.T @ w @ self.p_eval.dy], format="csr")

    @cached_property
    def fracture_pressure_load(self) -> sp.csr_matrix:
        """J: (n_u × n_s), (J pΣ)·v = ∫_Σ pΣ ⟦v⟧·ν."""
        if self.iq is None:
            return sp.csr_matrix((self.n_u, 0))
        f_val, _ = self.iq.fracture_basis()
        return (self.displacement_normal_jump.T @ sp.diags(self.iq.weights) @ f_val).tocsr()

    @cached_property
    def elasticity_load(self) -> np.ndarray:
        """l_E: forces de volume et tractions de Neumann."""
        n = self.space.displacement.scalar.n_dofs
        rhs = np.zeros(self.n_u)
        f = _evaluate(self.data.body_force, self.vp.points, 2)
        vu = self.u_eval.values
        for a in range(2):
            rhs[a * n:(a + 1) * n] += vu.T @ (self.vp.weights * f[:, a])
        for bc in self.data.elasticity:
            if bc.kind != "neumann":
                continue
            mat, mask = self.boundary_eval(self.space.displacement, bc.tag)
            t = bc.values(self.bq.points[mask], 2)
            w = self.bq.weights[mask]
            for a in range(2):
                rhs[a * n:(a + 1) * n] += mat.T @ (w * t[:, a])
        return rhs

    def assemble_elasticity(self, p_bulk: np.ndarray, p_frac: np.ndarray) -> SparseSystem:
        p_bulk = np.asarray(p_bulk, dtype=float)
        p_frac = np.asarray(p_frac, dtype=float)
        if p_bulk.shape != (self.n_p,) or p_frac.shape != (self.n_s,):
            raise ValueError(f"pressions: tailles {p_bulk.shape}, {p_frac.shape} ≠ ({self.n_p},), ({self.n_s},)")
        rhs = self.elasticity_load - self.pressure_gradient_coupling @ p_bulk
        if self.n_s:
            rhs = rhs + self.fracture_pressure_load @ p_frac
        system = SparseSystem.full(self.elasticity_matrix, rhs, symmetric=True, cache_key=("elasticity", self))
        return apply_dirichlet(system, self.elasticity_constraints)

    # ----- fluide couplé -----
    @cached_property
    def bulk_stiffness(self) -> sp.csr_matrix:
        m = self.params.mobility
        w = sp.diags(self.vp.weights)
        g = (self.p_eval.dx, self.p_eval.dy)
        a = sp.csr_matrix((self.n_p, self.n_p))
        for i in range(2):
            for j in range(2):
                if m[i, j] != 0.0:
                    a = a + m[i, j] * (g[i].T @ w @ g[j])
        return (0.5 * (a + a.T)).tocsr()

    @cached_property
    def bulk_flow_load(self) -> np.ndarray:
        f = _evaluate(self.data.bulk_source, self.vp.points, 1)
        rhs = self.p_eval.values.T @ (self.vp.weights * f)
        for bc in self.data.bulk_flow:
            if bc.kind != "neumann":
                continue
            mat, mask = self.boundary_eval(self.space.pressure, bc.tag)
            rhs = rhs - mat.T @ (self.bq.weights[mask] * bc.values(self.bq.points[mask]))
        return rhs

    def check_open(self, width: CrackWidthField) -> np.ndarray:
        """b_h brut aux points d'interface; ouverture < −ε_b -> CrackClosedError."""
        b = width.on_interface(self.iq)
        if len(b) and b.min() < -self.eps_b:
            i = int(np.argmin(b))
            raise CrackClosedError(tuple(self.iq.points[i]), float(b[i]), self.eps_b)
        return b

    def assemble_coupled_fluid(self, width: Optional[CrackWidthField]) -> SparseSystem:
        """Système bloc en (p^Ω, p^Σ); b plancher au dénominateur, brut en facteur."""
        t0 = time.perf_counter()
        if self.iq is None:
            system = SparseSystem.full(self.bulk_stiffness, self.bulk_flow_load, symmetric=True)
            return apply_dirichlet(system, self.fluid_constraints)
        if width is None:
            raise ValueError("ouverture b_h requise en présence d'une fracture")

        p = self.params
        iq = self.iq
        b = self.check_open(width)
        b_floor = np.maximum(b, self.b_min)
        kn = p.normal_permeability / p.viscosity
        kt = p.tangential_permeability / p.viscosity
        c_avg = 4.0 * kn / ((2.0 * p.xi - 1.0) * b_floor)
        c_jump = kn / b_floor

        p_jump, p_avg = self.pressure_traces
        f_val, f_dtau = iq.fracture_basis()
        w = iq.weights

        a_pp = self.bulk_stiffness + p_avg.T @ sp.diags(w * c_avg) @ p_avg + p_jump.T @ sp.diags(w * c_jump) @ p_jump
        a_ss = f_dtau.T @ sp.diags(w * b * kt) @ f_dtau + f_val.T @ sp.diags(w * c_avg) @ f_val
        c = f_val.T @ sp.diags(w * c_avg) @ p_avg
        c_kappa = f_val.T @ sp.diags(w * iq.kappa * kn) @ p_jump
        matrix = sp.bmat([[a_pp, -c.T], [-c - c_kappa, a_ss]], format="csr")

        f_s = _evaluate(self.data.fracture_source, iq.points, 1)
        rhs_s = f_val.T @ (w * b * f_s)
        frac = self.space.frac
        for bc in self.data.fracture_flow:
            if bc.kind != "neumann":
                continue
            v = frac.end_tags[bc.tag]
            b_end = float(width.values(np.array([frac.arc[v]]))[0])
            rhs_s[v] -= b_end * float(bc.values(frac.vertices[v][None, :])[0])
        rhs = np.concatenate([self.bulk_flow_load, rhs_s])

        symmetric = not np.any(iq.kappa != 0.0)
        system = SparseSystem.full(matrix, rhs, symmetric=symmetric)
        logger.debug("système fluide: %d DOF, %d non-nuls (%.3fs)", matrix.shape[0], matrix.nnz, time.perf_counter() - t0)
        return apply_dirichlet(system, self.fluid_constraints)

    def __repr__(self) -> str:
        return f"<Assembler u={self.n_u} p={self.n_p} pΣ={self.n_s} vp={self.vp.n}>"


def build_assembler(space: EnrichedSpace, params: MaterialParams, data: ProblemData, orders: Orders = Orders(),
                    b_min: float = B_MIN, eps_b: float = EPS_B) -> Assembler:
    return Assembler(space, params, data, orders, b_min, eps_b)


def assemble_elasticity(params: MaterialParams, data: ProblemData, space: EnrichedSpace,
                        p_bulk: np.ndarray, p_frac: np.ndarray, assembler: Optional[Assembler] = None) -> SparseSystem:
    """Système d'élasticité réduit; un Assembler existant peut être réutilisé."""
    asm = assembler if assembler is not None else Assembler(space, params, data)
    return asm.assemble_elasticity(p_bulk, p_frac)


def assemble_coupled_fluid(params: MaterialParams, data: ProblemData, space: EnrichedSpace,
                           width: Optional[CrackWidthField], assembler: Optional[Assembler] = None) -> SparseSystem:
    asm = assembler if assembler is not None else Assembler(space, params, data)
    return asm.assemble_coupled_fluid(width)
