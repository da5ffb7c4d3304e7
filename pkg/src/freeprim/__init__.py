"""Pseudo-spectral simulator for the free-surface primitive equations."""

from freeprim.grid import Grid, GridSpec

__all__ = ["Grid", "GridSpec"]
