# fracporo/core/units.py
# -*- coding: utf-8 -*-
"""
Conversion des grandeurs "<nombre> <unité>" du fichier de configuration vers le SI.
Les unités de terrain (km, mD, D, GPa, MPa) sont converties au chargement.
"""
from __future__ import annotations
import re
from typing import Dict, Union

# 1 darcy en m²
DARCY = 9.869233e-13

# =========================
# Tables par dimension
# =========================

UNITS: Dict[str, Dict[str, float]] = {
    "length": {"m": 1.0, "cm": 1e-2, "mm": 1e-3, "km": 1e3},
    "area": {"m2": 1.0, "km2": 1e6, "cm2": 1e-4},
    "permeability": {"m2": 1.0, "D": DARCY, "mD": 1e-3 * DARCY},
    "pressure": {"Pa": 1.0, "kPa": 1e3, "MPa": 1e6, "GPa": 1e9},
    "viscosity": {"Pa*s": 1.0, "Pa.s": 1.0, "mPa*s": 1e-3, "mPa.s": 1e-3, "cP": 1e-3},
    "velocity": {"m/s": 1.0},
    "rate": {"1/s": 1.0},
    "force_density": {"N/m3": 1.0, "kN/m3": 1e3},
}

_QUANTITY = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*([A-Za-z0-9*/.]+)\s*$")


def parse_quantity(value: Union[str, float, int], dimension: str) -> float:
    """
    '0.1 mD' -> 9.869233e-17 ; '1 GPa' -> 1e9.
    Un nombre nu est refusé: toute grandeur dimensionnée porte son unité.
    """
    if dimension not in UNITS:
        raise ValueError(f"dimension inconnue: {dimension}")
    if isinstance(value, bool) or not isinstance(value, str):
        raise ValueError(f"unité manquante pour {value!r} (attendu: '<nombre> <unité>', dimension {dimension})")
    m = _QUANTITY.match(value)
    if not m:
        raise ValueError(f"grandeur illisible: {value!r}")
    number, unit = float(m.group(1)), m.group(2)
    table = UNITS[dimension]
    if unit not in table:
        raise ValueError(f"unité '{unit}' invalide pour {dimension} (unités admises: {', '.join(table)})")
    return number * table[unit]


def length_factor(unit: str) -> float:
    """Facteur vers le mètre d'une unité de longueur seule ('km' -> 1000)."""
    try:
        return UNITS["length"][unit]
    except KeyError:
        raise ValueError(f"unité de longueur invalide: {unit!r}") from None
