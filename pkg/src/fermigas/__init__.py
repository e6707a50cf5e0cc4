"""Numerical laboratory for trapped Fermi gases with attractive short-range
interactions: Thomas-Fermi and phase-space energy functionals and their
minimizers, squeezed-coherent-state semiclassics, a small-N exact ground-state
oracle, and an exchangeable-measure toolbox."""

__version__ = "0.1.0"
