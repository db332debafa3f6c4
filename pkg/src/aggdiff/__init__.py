"""Numerical lab for du/dt = Lap[(a - b u) u] + (c - d u) u.

Modules: core (coefficients, grids, fields), eigen, exact (Barenblatt
solutions), pde (local and nonlocal solvers), diagnostics, regimes,
particles, and the cli front end.
"""
from .core import BoundaryKind, Field, Grid, Params, from_v, to_v

__all__ = ["BoundaryKind", "Field", "Grid", "Params", "from_v", "to_v"]
__version__ = "0.1.0"
