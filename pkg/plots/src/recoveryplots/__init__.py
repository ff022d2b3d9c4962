"""Read-only figure rendering over recoverysim CSV outputs."""

from .figures import FIGURE_KINDS, FigureError, FigureSpec, render

__version__ = "0.1.0"

__all__ = ["FIGURE_KINDS", "FigureError", "FigureSpec", "render"]
