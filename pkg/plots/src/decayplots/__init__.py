"""Decay figures from midpop trajectory artifacts."""

from .figures import PANEL_KINDS, FigureSpec, SchemaError, fit_slope, read_csv, render

__version__ = "0.1.0"

__all__ = ["FigureSpec", "PANEL_KINDS", "SchemaError", "fit_slope", "read_csv", "render"]
