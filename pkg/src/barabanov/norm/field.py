"""Homogeneous norm fields stored on antipodal classes of a sphere grid."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ..io import dumps_json
from .grid import SphereGrid, default_grid, grid_from_descriptor

__all__ = ["NormField", "field_from_function", "euclidean_field", "load_field"]


@dataclass(frozen=True)
class NormField:
    grid: SphereGrid
    class_values: np.ndarray
    is_dual: bool = False
    residual: float = float("nan")
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.array(self.class_values, dtype=float)
        if v.shape != (len(self.grid.reps),):
            raise ValueError("one value per antipodal class is required")
        if not np.all(np.isfinite(v)) or np.any(v <= 0):
            raise ValueError("norm field values must be finite and positive")
        v.setflags(write=False)
        object.__setattr__(self, "class_values", v)

    @property
    def n(self):
        return self.grid.n

    @property
    def nodes(self):
        return self.grid.nodes

    @property
    def values(self):
        return self.class_values[self.grid.classes]

    @property
    def kappa(self):
        return float(self.class_values.max() / self.class_values.min())

    @property
    def grid_error(self):
        """Absolute interpolation error scale on the unit Euclidean sphere."""
        return self.grid.interpolation_error * self.kappa * float(self.class_values.max())

    def query(self, x):
        """Interpolated value; positively homogeneous and even in ``x``."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        P = np.atleast_2d(x)
        f, w = self.grid.locate(P)
        vals = self.class_values[self.grid.classes[self.grid.faces[f]]]
        out = np.einsum("pi,pi->p", w, vals)
        return float(out[0]) if single else out

    def __call__(self, x):
        return self.query(x)

    def with_values(self, class_values, **changes):
        kw = dict(is_dual=self.is_dual, residual=self.residual, provenance=dict(self.provenance))
        kw.update(changes)
        return NormField(self.grid, class_values, **kw)

    def unit_sphere_points(self):
        """Grid nodes rescaled onto the unit level set."""
        return self.nodes / self.values[:, None]

    def to_dict(self):
        return {
            "n": self.n,
            "nodes": self.nodes.tolist(),
            "values": self.values.tolist(),
            "is_dual": bool(self.is_dual),
            "residual": float(self.residual),
            "provenance": dict(self.provenance, grid=self.grid.descriptor),
        }

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(dumps_json(self.to_dict()))

    def write_obj(self, path):
        """Level-set mesh: nodes scaled by 1/value, grid faces (n = 3) or segments (n = 2)."""
        pts = self.unit_sphere_points()
        lines = []
        for p in pts:
            lines.append("v " + " ".join(f"{c:.17g}" for c in (list(p) + [0.0] * (3 - self.n))))
        tag = "f" if self.n == 3 else "l"
        for face in self.grid.faces:
            lines.append(tag + " " + " ".join(str(int(i) + 1) for i in face))
        with open(path, "w", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")


def field_from_function(func, grid, **kwargs):
    """Sample ``func`` (vectorized over rows) at class representatives."""
    reps = grid.nodes[grid.reps]
    return NormField(grid, np.asarray(func(reps), dtype=float), **kwargs)


def euclidean_field(n, resolution=None):
    grid = default_grid(n, resolution)
    return NormField(grid, np.ones(len(grid.reps)), provenance={"start": "euclidean"})


def field_from_dict(data):
    prov = dict(data.get("provenance", {}))
    desc = prov.pop("grid", None)
    if desc is None:
        raise ValueError("provenance.grid: missing grid descriptor")
    grid = grid_from_descriptor(desc)
    nodes = np.asarray(data["nodes"], dtype=float)
    if nodes.shape != grid.nodes.shape or np.abs(nodes - grid.nodes).max() > 1e-12:
        raise ValueError("nodes: do not match the described grid")
    values = np.asarray(data["values"], dtype=float)
    # JSON has no NaN; an unknown residual is written as null
    residual = data.get("residual")
    return NormField(grid, values[grid.reps], bool(data.get("is_dual", False)),
                     float("nan") if residual is None else float(residual), prov)


def load_field(path):
    with open(path) as fh:
        return field_from_dict(json.load(fh))
