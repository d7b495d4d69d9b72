"""Extremal norm fields on sphere grids: value iteration, duals and diagnostics."""
from .bellman import (BellmanOperator, CollapseError, DivergenceError, HorizonPolicy,
                      InconclusiveError, ReducibleSystemError, RhoEstimate,
                      approximate_barabanov_norm, bellman_step, default_step, estimate_rho)
from .diagnostics import (ConvexityReport, GapReport, NormFlowRun, UniquenessReport, VmEstimate,
                          convexity_audit, follow_extremal, seminorm_vm, spread_starts,
                          sup_vs_max_gap, uniqueness_diagnostic)
from .dual import (SubdifferentialEstimate, convexify_field, dual_field, polar_residual,
                   subdifferential)
from .field import NormField, euclidean_field, field_from_dict, field_from_function, load_field
from .grid import SphereGrid, circle_grid, default_grid, icosphere_grid

__all__ = [
    "BellmanOperator", "CollapseError", "DivergenceError", "HorizonPolicy", "InconclusiveError",
    "ReducibleSystemError", "RhoEstimate", "approximate_barabanov_norm", "bellman_step",
    "default_step", "estimate_rho",
    "ConvexityReport", "GapReport", "NormFlowRun", "UniquenessReport", "VmEstimate",
    "convexity_audit", "follow_extremal", "seminorm_vm", "spread_starts", "sup_vs_max_gap",
    "uniqueness_diagnostic",
    "SubdifferentialEstimate", "convexify_field", "dual_field", "polar_residual", "subdifferential",
    "NormField", "euclidean_field", "field_from_dict", "field_from_function", "load_field",
    "SphereGrid", "circle_grid", "default_grid", "icosphere_grid",
]
