# scripts/make_benchmark_mesh.py
# -*- coding: utf-8 -*-
"""
Écrit le maillage grossier du cas test (rectangle étiqueté bottom/right/top/left) au format ASCII.

Usage :
    python -m scripts.make_benchmark_mesh --out meshes/benchmark.mesh
    python -m scripts.make_benchmark_mesh --config configs/benchmark.toml --refine 1 --unit km

Le fichier produit se relit avec [mesh] file = "...", length_unit = "<unité>".
"""

from __future__ import annotations
import argparse
import sys
from pathlib import Path

# --- Imports robustes selon l'emplacement d'exécution ---
try:
    from fracporo.core.geometry import refine_uniform
    from fracporo.core.mesh_io import rectangle_mesh, write_mesh
    from fracporo.core.models import load_run_config
    from fracporo.core.units import length_factor, parse_quantity
except ModuleNotFoundError:
    import os
    sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))
    from fracporo.core.geometry import refine_uniform
    from fracporo.core.mesh_io import rectangle_mesh, write_mesh
    from fracporo.core.models import load_run_config
    from fracporo.core.units import length_factor, parse_quantity


# --- Valeurs par défaut (cas test) ---
DEFAULT_WIDTH = "1 km"
DEFAULT_HEIGHT = "1 km"
DEFAULT_MAX_AREA = "6800 m2"


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description="Maillage grossier du cas test fracporo.")
    parser.add_argument("--out", default="meshes/benchmark.mesh", help="Fichier de sortie.")
    parser.add_argument("--config", help="Lire largeur/hauteur/aire depuis un fichier TOML ([mesh]).")
    parser.add_argument("--width", default=DEFAULT_WIDTH)
    parser.add_argument("--height", default=DEFAULT_HEIGHT)
    parser.add_argument("--max-area", default=DEFAULT_MAX_AREA)
    parser.add_argument("--refine", type=int, default=0, help="Raffinements uniformes supplémentaires.")
    parser.add_argument("--unit", default="m", help="Unité des coordonnées écrites (m, km, ...).")
    args = parser.parse_args(argv)

    try:
        if args.config:
            m = load_run_config(args.config).mesh
            if m.generator != "benchmark":
                print(f"❌ {args.config}: [mesh] ne décrit pas le maillage généré.")
                return 2
            width, height, max_area, min_angle = m.width, m.height, m.max_area, m.min_angle
        else:
            width = parse_quantity(args.width, "length")
            height = parse_quantity(args.height, "length")
            max_area = parse_quantity(args.max_area, "area")
            min_angle = 30.0
        scale = length_factor(args.unit)
    except ValueError as e:
        print(f"❌ Paramètres invalides: {e}")
        return 2
    except OSError as e:
        print(f"❌ Erreur lecture fichier {args.config}: {e}")
        return 4

    mesh = rectangle_mesh(width, height, max_area, min_angle=min_angle)
    for _ in range(max(0, args.refine)):
        mesh = refine_uniform(mesh)

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_mesh(out, mesh, length_scale=scale)
    print(f"✅ {mesh.n_triangles} triangles, {mesh.n_vertices} sommets, h = {mesh.h:.4g} m écrits dans « {out} ».")
    return 0


if __name__ == "__main__":
    sys.exit(main())
