"""Render figures from nfa-lab artifact directories.

This package is a pure consumer: it parses the CSV/JSON files an nfa-lab run
emitted and lays them out as matplotlib figures.  It never recomputes a
metric; every plotted number comes verbatim from an artifact column.
"""

from .figures import FIGURES, render

__version__ = "0.1.0"

__all__ = ["FIGURES", "render", "__version__"]
