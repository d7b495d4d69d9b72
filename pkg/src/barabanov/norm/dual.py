"""Polar fields, subdifferentials and the bidual convexification."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .field import NormField

__all__ = ["dual_field", "convexify_field", "polar_residual", "subdifferential",
           "SubdifferentialEstimate"]


def _support_max(dirs, points, chunk=2048):
    """max_j dirs_i . points_j for every row of ``dirs``."""
    out = np.empty(len(dirs))
    for s in range(0, len(dirs), chunk):
        out[s:s + chunk] = (dirs[s:s + chunk] @ points.T).max(axis=1)
    return out


def dual_field(field):
    """``v*(l) = max over the unit level set of l^T y``, sampled on the same grid."""
    grid = field.grid
    pts = field.unit_sphere_points()
    vals = _support_max(grid.nodes[grid.reps], pts)
    prov = dict(field.provenance, polar_of="dual" if field.is_dual else "primal")
    return NormField(grid, vals, not field.is_dual, field.residual, prov)


def convexify_field(field):
    """Support-function regularization: the bidual of the field."""
    out = dual_field(dual_field(field))
    return out.with_values(out.class_values, provenance=dict(field.provenance, convexified=True))


def polar_residual(field):
    """Nodewise max |v** - v|."""
    bidual = dual_field(dual_field(field))
    return float(np.abs(bidual.class_values - field.class_values).max())


@dataclass(frozen=True)
class SubdifferentialEstimate:
    point: np.ndarray
    supports: np.ndarray
    is_singleton: bool
    spread: float

    @property
    def best(self):
        return self.supports[0]


def subdifferential(field, x, tol=None, dual=None, angular_tol=None):
    """Unit-dual-sphere functionals that nearly attain ``v(x)``.

    Each returned ``l`` has ``v*(l) = 1`` on the grid, so ``l^T y <= v(y)`` at
    every node, and ``l^T x >= v(x) - tol ||x||``.
    """
    x = np.asarray(x, dtype=float)
    if not np.any(x):
        raise ValueError("subdifferential needs a nonzero point")
    if dual is None:
        dual = dual_field(field)
    if tol is None:
        tol = 2 * field.grid_error
    grid = field.grid
    L = grid.nodes / dual.values[:, None]
    vx = field.query(x)
    score = L @ x
    keep = np.nonzero(score >= vx - tol * np.linalg.norm(x))[0]
    if keep.size == 0:
        keep = np.array([int(score.argmax())])
    keep = keep[np.argsort(-score[keep], kind="stable")]
    sup = L[keep]
    u = sup / np.linalg.norm(sup, axis=1)[:, None]
    spread = float(np.arccos(np.clip(u @ u[0], -1, 1)).max())
    if angular_tol is None:
        angular_tol = 3 * grid.spacing
    return SubdifferentialEstimate(x.copy(), sup, spread <= angular_tol, spread)
