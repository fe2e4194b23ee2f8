# fracporo/main.py
# -*- coding: utf-8 -*-
"""
Point d'entrée en ligne de commande.

Usage :
    python -m fracporo.main check configs/benchmark.toml
    python -m fracporo.main solve configs/benchmark.toml --level 2
    python -m fracporo.main solver-study configs/benchmark.toml --levels 0 1 2 3 4
    python -m fracporo.main convergence-study configs/benchmark.toml --output results

Codes de sortie: 0 succès, 2 configuration, 3 échec du solveur, 4 entrée/sortie.
"""
from __future__ import annotations

import argparse
import logging
import sys
from typing import List, Optional

from pydantic import ValidationError

from fracporo.core.config import configure_logging
from fracporo.core.errors import ConfigError, FracporoError, GeometryError, SolverError, exit_code_for
from fracporo.core.models import load_run_config
from fracporo.core.validators import issues_as_strings, summarize_result, validate_run_config

logger = logging.getLogger("fracporo.main")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_IO = 4


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fracporo", description="Milieu poroélastique fracturé (XFEM, sous-structuration).")
    parser.add_argument("--log-level", default="", help="Niveau de journalisation (sinon FRACPORO_LOG_LEVEL).")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", help="Valide la configuration sans calculer.")
    p.add_argument("config")

    p = sub.add_parser("solve", help="Un niveau de maillage: itération couplée et sorties.")
    p.add_argument("config")
    p.add_argument("--level", type=int, default=0, help="Niveau de raffinement (défaut: 0).")
    p.add_argument("--output", help="Répertoire de sortie (sinon [output] directory, 'results' par défaut).")

    p = sub.add_parser("solver-study", help="err_k par itération sur plusieurs niveaux.")
    p.add_argument("config")
    p.add_argument("--levels", type=int, nargs="+", help="Niveaux (défaut: [study].levels).")
    p.add_argument("--output")

    p = sub.add_parser("convergence-study", help="Erreurs de discrétisation et pentes.")
    p.add_argument("config")
    p.add_argument("--output")
    return parser


def _check(path: str) -> int:
    cfg = load_run_config(path)
    ok, errors, warnings = validate_run_config(cfg)
    for line in issues_as_strings(errors) + issues_as_strings(warnings):
        print(line)
    print(summarize_result(ok, errors, warnings))
    return EXIT_OK if ok else EXIT_CONFIG


def _dispatch(args: argparse.Namespace) -> int:
    if args.command == "check":
        return _check(args.config)

    # imports différés: `check` ne charge pas la chaîne de calcul
    from fracporo.services.run_service import run_solve, run_solver_study
    from fracporo.services.study_service import run_convergence_study

    cfg = load_run_config(args.config)
    if args.command == "solve":
        res = run_solve(cfg, level=args.level, output=args.output)
        r = res.report
        flag = "✅" if r.converged else "⚠️"
        print(f"{flag} niveau {args.level}: converged={str(r.converged).lower()}, itérations={r.iterations}, "
              f"contraction={r.contraction:.3g}")
        print(f"📁 Résumé: {res.summary_path}")
        return EXIT_OK
    if args.command == "solver-study":
        reports, path = run_solver_study(cfg, levels=args.levels, output=args.output)
        for lvl, r in sorted(reports.items()):
            flag = "✅" if r.converged else "⚠️"
            print(f"{flag} niveau {lvl}: {r.iterations} itérations, contraction {r.contraction:.3g}")
        print(f"📁 Résumé: {path}")
        return EXIT_OK
    if args.command == "convergence-study":
        report, path = run_convergence_study(cfg, output=args.output)
        for name, fits in report.slopes.items():
            rates = ", ".join(f"{norm} {fit.slope:.2f}" for norm, fit in sorted(fits.items()))
            print(f"📈 {name}: {rates}")
        print(f"✅ Étude terminée (référence: niveau {report.reference_level}). 📁 {path}")
        return EXIT_OK
    raise ConfigError(f"commande inconnue: {args.command}")


def main(argv: Optional[List[str]] = None) -> int:
    args = _parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        return _dispatch(args)
    except (ValidationError, ConfigError, GeometryError) as e:
        print(f"❌ Configuration invalide: {e}")
        return EXIT_CONFIG
    except SolverError as e:
        print(f"❌ Échec du solveur: {e}")
        return EXIT_SOLVER
    except OSError as e:
        print(f"❌ Erreur d'entrée/sortie: {e}")
        return EXIT_IO
    except FracporoError as e:
        print(f"❌ {e}")
        return exit_code_for(e)


if __name__ == "__main__":
    sys.exit(main())
