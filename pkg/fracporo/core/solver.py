# fracporo/core/solver.py
# -*- coding: utf-8 -*-
"""
Résolutions directes creuses (SuperLU) et itération de sous-structuration amortie:
fluide couplé (b_{k-1}) -> élasticité -> amortissement -> nouvelle ouverture.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Dict, Hashable, List, Optional, Tuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from fracporo.core.analysis import IterationRecord, SolverReport, state_distance, state_norm
from fracporo.core.assembly import Assembler, SparseSystem
from fracporo.core.enrichment import CrackWidthField, crack_width, width_from_closure
from fracporo.core.errors import DivergenceError, SolverError

logger = logging.getLogger(__name__)

# Seuil relatif du résidu après résolution directe
RESIDUAL_TOL = 1e-10

# Nombre d'augmentations consécutives de err_k avant de déclarer la divergence
DIVERGENCE_STREAK = 3

# Sous ce seuil, les variations de err_k sont du bruit d'arrondi
ROUNDOFF_ERROR = 1e-13

# Pivot négatif relatif (au plus grand pivot) toléré sur un système symétrique
PIVOT_ROUNDOFF = 1e-13


# =========================
# Résolution directe
# =========================

def _residual_ok(a: sp.csr_matrix, x: np.ndarray, b: np.ndarray) -> Tuple[bool, float, float]:
    res = float(np.abs(a @ x - b).max()) if len(b) else 0.0
    norm_a = float(abs(a).sum(axis=1).max()) if a.nnz else 0.0
    bound = RESIDUAL_TOL * (norm_a * float(np.abs(x).max(initial=0.0)) + float(np.abs(b).max(initial=0.0)))
    return res <= bound, res, bound


class DirectSolver:
    """Factorisations LU réutilisées pour les systèmes de matrice constante (cache_key)."""

    def __init__(self) -> None:
        self._factors: Dict[Hashable, spla.SuperLU] = {}
        self.n_factorizations = 0

    def factorize(self, matrix: sp.csr_matrix, symmetric: bool = False) -> spla.SuperLU:
        """
        LU creuse. Système symétrique: permutation symétrique et pivots diagonaux, un pivot
        négatif signale une matrice indéfinie (SolverError).
        """
        t0 = time.perf_counter()
        options = dict(permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0, options={"SymmetricMode": True}) if symmetric else {}
        try:
            lu = spla.splu(sp.csc_matrix(matrix), **options)
        except RuntimeError as exc:
            raise SolverError(f"factorisation impossible ({matrix.shape[0]} inconnues, {matrix.nnz} non-nuls): {exc}") from exc
        self.n_factorizations += 1
        pivots = lu.U.diagonal()
        diag = np.abs(pivots)
        if len(diag) and (not np.all(np.isfinite(diag)) or diag.min() == 0.0):
            raise SolverError(
                f"matrice singulière: pivot min {diag.min():.3e}, max {diag.max():.3e} ({matrix.shape[0]} inconnues)"
            )
        negative = pivots < -PIVOT_ROUNDOFF * diag.max(initial=0.0)
        if symmetric and np.any(negative):
            raise SolverError(
                f"matrice symétrique indéfinie: {int(np.count_nonzero(negative))} pivot(s) négatif(s), "
                f"min {pivots.min():.3e} ({matrix.shape[0]} inconnues)"
            )
        logger.debug("factorisation LU: %d inconnues, %.3fs", matrix.shape[0], time.perf_counter() - t0)
        return lu

    def solve(self, system: SparseSystem) -> np.ndarray:
        """Coefficients complets (DOF libres résolus, DOF imposés recopiés)."""
        if system.size == 0:
            return system.expand(np.zeros(0))
        key = system.cache_key
        lu = self._factors.get(key) if key is not None else None
        if lu is None:
            lu = self.factorize(system.matrix, system.symmetric)
            if key is not None:
                self._factors[key] = lu
        a, b = system.matrix, system.rhs
        x = lu.solve(b)
        ok, res, bound = _residual_ok(a, x, b)
        if not ok:
            x = x + lu.solve(b - a @ x)
            ok, res, bound = _residual_ok(a, x, b)
            if not ok:
                raise SolverError(f"résidu {res:.3e} > {bound:.3e} après raffinement itératif")
        return system.expand(x)

    def clear(self) -> None:
        self._factors.clear()


def solve_sparse(system: SparseSystem, solver: Optional[DirectSolver] = None) -> np.ndarray:
    return (solver or DirectSolver()).solve(system)


# =========================
# Sous-structuration
# =========================

@dataclass(frozen=True)
class InitialWidth:
    """b_{h,0}(r) = coefficient · √(r / r_unit) (m); r_unit = 1 m: r lu en mètres."""

    coefficient: float = 1e-2
    r_unit: float = 1.0

    def __call__(self, r: np.ndarray) -> np.ndarray:
        return self.coefficient * np.sqrt(np.asarray(r, dtype=float) / self.r_unit)


@dataclass(frozen=True)
class SolverConfig:
    beta: float = 1.0
    tol: float = 1e-8
    max_iterations: int = 20
    initial_width: InitialWidth = field(default_factory=InitialWidth)
    reference_mode: bool = True
    reference_iterations: int = 20

    def __post_init__(self) -> None:
        if not (0.0 < self.beta <= 1.0):
            raise ValueError(f"β hors de ]0, 1]: {self.beta}")
        if not self.tol > 0:
            raise ValueError("tolérance strictement positive attendue")
        if self.max_iterations < 1 or self.reference_iterations < 1:
            raise ValueError("nombre d'itérations ≥ 1 attendu")


@dataclass(frozen=True, eq=False)
class CoupledState:
    u: np.ndarray
    p_bulk: np.ndarray
    p_frac: np.ndarray
    width: Optional[CrackWidthField]
    k: int = 0

    def fields(self) -> Dict[str, np.ndarray]:
        return {"displacement": self.u, "bulk_pressure": self.p_bulk, "fracture_pressure": self.p_frac}


def initial_state(assembler: Assembler, config: SolverConfig) -> CoupledState:
    space = assembler.space
    width = width_from_closure(space, config.initial_width, assembler.b_min) if space.frac is not None else None
    return CoupledState(np.zeros(assembler.n_u), np.zeros(assembler.n_p), np.zeros(assembler.n_s), width, 0)


def substructuring_step(state: CoupledState, assembler: Assembler, beta: float = 1.0,
                        solver: Optional[DirectSolver] = None) -> CoupledState:
    """Une itération: (1) fluide avec b_{k-1}; (2) élasticité; (3) u_k = (1−β)u_{k-1} + βũ_k; (4) b_k = ⟦u_k⟧·ν."""
    solver = solver or DirectSolver()
    fluid = solver.solve(assembler.assemble_coupled_fluid(state.width))
    p_bulk, p_frac = fluid[:assembler.n_p], fluid[assembler.n_p:]
    u_tilde = solver.solve(assembler.assemble_elasticity(p_bulk, p_frac))
    u = u_tilde if beta == 1.0 else (1.0 - beta) * state.u + beta * u_tilde
    width = crack_width(assembler.space, u, assembler.b_min) if assembler.space.frac is not None else None
    return CoupledState(u, p_bulk, p_frac, width, state.k + 1)


def _iterate(assembler: Assembler, config: SolverConfig, n: int, solver: DirectSolver,
             start: Optional[CoupledState] = None) -> List[CoupledState]:
    state = start if start is not None else initial_state(assembler, config)
    states: List[CoupledState] = []
    for _ in range(n):
        state = substructuring_step(state, assembler, config.beta, solver)
        states.append(state)
    return states


def _width_range(assembler: Assembler, state: CoupledState) -> Tuple[float, float]:
    if state.width is None or assembler.iq is None:
        return 0.0, 0.0
    return state.width.extrema(assembler.iq)


def _contraction(errors: List[float], upto: int) -> float:
    ratios = [errors[i + 1] / errors[i] for i in range(min(upto, len(errors) - 1))
              if errors[i] > 1e-14 and errors[i + 1] > 1e-14]
    if not ratios:
        return float("nan")
    return float(math.exp(np.mean(np.log(ratios))))


def run_fixed_point(
    assembler: Assembler,
    config: SolverConfig,
    reference: Optional[CoupledState] = None,
    solver: Optional[DirectSolver] = None,
) -> Tuple[CoupledState, SolverReport]:
    """
    Mode référence: `reference_iterations` itérations, err_k mesuré contre la dernière
    (ou contre `reference` si fournie); l'itéré retourné est le premier sous la tolérance.
    Sinon: arrêt sur l'incrément relatif ‖x_k − x_{k−1}‖ / ‖x_k‖.
    """
    solver = solver or DirectSolver()
    t0 = time.perf_counter()
    level = assembler.space.bulk.level
    history: List[IterationRecord] = []
    errors: List[float] = []
    increasing = 0
    converged_at: Optional[int] = None

    if config.reference_mode or reference is not None:
        if reference is None:
            states = _iterate(assembler, config, config.reference_iterations, solver)
            reference = states[-1]
            candidates = states
        else:
            candidates = []
        ref_norms = state_norm(assembler, reference)
        limit = config.max_iterations if candidates == [] else len(candidates)
        state = None
        for k in range(limit):
            if candidates:
                state = candidates[k]
            else:
                state = substructuring_step(state or initial_state(assembler, config), assembler, config.beta, solver)
            total, per_field = state_distance(assembler, state, reference, ref_norms)
            history.append(IterationRecord(state.k, total, per_field, *_width_range(assembler, state)))
            errors.append(total)
            logger.info("niveau %d, itération %d: err_k = %.3e, b ∈ [%.3e, %.3e] m",
                        level, state.k, total, history[-1].width_min, history[-1].width_max)
            if converged_at is None and total < config.tol and state.k <= config.max_iterations:
                converged_at = state.k
                if not candidates:
                    break
            if converged_at is None and len(errors) > 1 and errors[-1] > errors[-2] > ROUNDOFF_ERROR:
                increasing += 1
                if increasing >= DIVERGENCE_STREAK:
                    raise DivergenceError(f"itération divergente au niveau {level}", errors)
            else:
                increasing = 0
        final = candidates[converged_at - 1] if (candidates and converged_at is not None) else state
        if final is None:
            raise SolverError("aucune itération effectuée")
    else:
        state = initial_state(assembler, config)
        prev = state
        final = state
        for _ in range(config.max_iterations):
            state = substructuring_step(prev, assembler, config.beta, solver)
            norms = state_norm(assembler, state)
            total, per_field = state_distance(assembler, state, prev, norms)
            history.append(IterationRecord(state.k, total, per_field, *_width_range(assembler, state)))
            errors.append(total)
            logger.info("niveau %d, itération %d: incrément relatif = %.3e", level, state.k, total)
            final = state
            if total < config.tol:
                converged_at = state.k
                break
            if len(errors) > 1 and errors[-1] > errors[-2] > ROUNDOFF_ERROR:
                increasing += 1
                if increasing >= DIVERGENCE_STREAK:
                    raise DivergenceError(f"itération divergente au niveau {level}", errors)
            else:
                increasing = 0
            prev = state

    upto = converged_at if converged_at is not None else len(errors)
    report = SolverReport(
        level=level,
        h_bulk=assembler.space.bulk.h,
        h_fracture=assembler.space.frac.h if assembler.space.frac is not None else float("nan"),
        history=history,
        converged=converged_at is not None,
        iterations=converged_at if converged_at is not None else len(history),
        contraction=_contraction(errors, upto - 1),
        combination="rss",
        reference_mode=config.reference_mode,
        elapsed=time.perf_counter() - t0,
    )
    if report.converged:
        logger.info("niveau %d: convergence en %d itérations (contraction %.3g)", level, report.iterations, report.contraction)
    else:
        logger.warning("niveau %d: pas de convergence en %d itérations (err = %.3e)", level, len(history), errors[-1])
    return final, report


def solve_to_tolerance(assembler: Assembler, config: SolverConfig, algebraic_tolerance: float = 1e-9,
                       solver: Optional[DirectSolver] = None) -> Tuple[CoupledState, SolverReport]:
    """Itère sans référence jusqu'à un incrément relatif < algebraic_tolerance (études de convergence)."""
    cfg = replace(config, tol=algebraic_tolerance, reference_mode=False)
    state, report = run_fixed_point(assembler, cfg, solver=solver)
    if not report.converged:
        raise SolverError(
            f"niveau {report.level}: tolérance algébrique {algebraic_tolerance:g} non atteinte en {cfg.max_iterations} itérations"
        )
    return state, report
