# fracporo/core/config.py
# -*- coding: utf-8 -*-
import logging
import os
from pathlib import Path

from dotenv import load_dotenv

BASE_DIR = Path(__file__).resolve().parent.parent.parent
ENV_PATH = BASE_DIR / ".env"
load_dotenv(ENV_PATH, override=True)

# Journalisation: seule variable d'environnement lue ([output] et --output pour les sorties)
LOG_LEVEL = os.getenv("FRACPORO_LOG_LEVEL", "INFO").upper()
LOG_FORMAT = "%(asctime)s %(levelname)-7s %(name)s: %(message)s"


def configure_logging(level: str = "") -> logging.Logger:
    """Installe un handler unique sur le logger 'fracporo' (idempotent)."""
    logger = logging.getLogger("fracporo")
    wanted = (level or LOG_LEVEL).upper()
    logger.setLevel(getattr(logging, wanted, logging.INFO))
    if not any(getattr(h, "_fracporo", False) for h in logger.handlers):
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        handler._fracporo = True  # type: ignore[attr-defined]
        logger.addHandler(handler)
    return logger


def print_config_summary():
    print("=== ⚙️ CONFIG FRACPORO ===")
    print(f".env .............: {ENV_PATH} ({'présent' if ENV_PATH.exists() else 'absent'})")
    print(f"LOG_LEVEL ........: {LOG_LEVEL}")
    print("==========================")


if __name__ == "__main__":
    print_config_summary()
