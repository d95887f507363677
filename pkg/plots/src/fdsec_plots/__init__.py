"""Batch figure rendering for fdsec Monte Carlo CSV outputs.

Consumes only the harness CSV files (and the optional .traces.csv sidecar);
no optimization code is imported or recomputed here.
"""

from fdsec_plots.figures import FIGURES, FigureSpec, render

__all__ = ["FIGURES", "FigureSpec", "render"]
