# fracporo/__init__.py
# -*- coding: utf-8 -*-
"""Écoulement et déformation stationnaires d'un milieu poroélastique fracturé (XFEM 2D)."""

__version__ = "0.1.0"
