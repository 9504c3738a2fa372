"""Figure generation from solver sweep CSVs.

Consumes only the documented CSV schemas (the sweep table written by the
solver CLI and the j,lambda spectrum dump); no solver import.
"""

from .io import FigureDataError, read_spectrum, read_sweep
from .plots import FigureSpec, plot_convergence, plot_spectrum, render

__all__ = [
    "FigureDataError",
    "FigureSpec",
    "plot_convergence",
    "plot_spectrum",
    "read_spectrum",
    "read_sweep",
    "render",
]
