"""Convergence-figure rendering from experiment CSV outputs."""

from .render import FigureError, PlotSpec, render_convergence

__all__ = ["FigureError", "PlotSpec", "render_convergence"]
