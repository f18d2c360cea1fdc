"""Numerical defaults shared across the library.

Grid resolutions and tolerances are deliberately centralized: every
invariant that is "checked on a grid" states its resolution here, and
callers can tighten them per construction.
"""
from dataclasses import dataclass


@dataclass(frozen=True)
class Config:
    # angular grids
    invariant_grid: int = 4096      # curvature / nesting / schedule checks
    distance_grid: int = 720        # Hausdorff and support-gap scans
    # strict positivity threshold for curvature radius h + h''
    curvature_margin: float = 1e-10
    # Bernstein degree search cap for the concave segment construction
    segment_degree_cap: int = 10000
    # preconditioning
    eps_max: float = 0.9
    eps_safety: float = 0.5
    # Newton / inversion tolerances
    invert_rtol: float = 1e-11
    dual_newton_tol: float = 1e-9
    # arclength quadrature tolerance for edge curves
    arclength_tol: float = 1e-10
    # support fit tolerance (round-trip of boundary samples)
    fit_tol: float = 1e-8


DEFAULTS = Config()
