# fracporo/core/errors.py
# -*- coding: utf-8 -*-
from __future__ import annotations
from typing import Any, List, Optional, Sequence


class FracporoError(Exception):
    """Racine des erreurs métier (code de sortie CLI associé)."""
    exit_code: int = 1


class ConfigError(FracporoError, ValueError):
    exit_code = 2


class GeometryError(FracporoError, ValueError):
    exit_code = 2


class SolverError(FracporoError, RuntimeError):
    exit_code = 3


class CrackClosedError(SolverError):
    """Ouverture négative au-delà de la tolérance: le modèle ne gère pas le contact."""

    def __init__(self, location: Sequence[float], width: float, tolerance: float):
        self.location = tuple(float(v) for v in location)
        self.width = float(width)
        self.tolerance = float(tolerance)
        super().__init__(
            f"fracture fermée: b_h = {self.width:.3e} m < -{self.tolerance:.1e} m "
            f"au point ({self.location[0]:.6g}, {self.location[1]:.6g})"
        )


class DivergenceError(SolverError):
    def __init__(self, message: str, history: Optional[List[float]] = None):
        self.history: List[float] = list(history or [])
        super().__init__(f"{message} (err_k = {', '.join(f'{e:.3e}' for e in self.history)})")


def exit_code_for(exc: BaseException, default: int = 1) -> int:
    code: Any = getattr(exc, "exit_code", None)
    return int(code) if isinstance(code, int) else default
