"""Switched linear systems, rank-one pairs and their structural checks."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .matnum import rank_of_columns, solve_linear, spectrum

__all__ = [
    "PairGeometry",
    "BarabanovPairData",
    "SwitchedSystem",
    "ValidationReport",
    "Irreducibility",
    "SystemFormatError",
    "DegenerateGeometryError",
    "validate_pair",
    "irreducibility_check",
    "spectral_shift",
    "compute_pair_geometry",
    "load_system",
    "system_to_dict",
    "system_from_dict",
]


class SystemFormatError(ValueError):
    """Bad system definition; ``field`` names the offending entry."""

    def __init__(self, field_name, message):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


class DegenerateGeometryError(ValueError):
    pass


def _frozen(a, ndim=None):
    a = np.array(a, dtype=float)
    if ndim is not None and a.ndim != ndim:
        raise ValueError(f"expected a {ndim}-d array, got shape {a.shape}")
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class PairGeometry:
    x_star: np.ndarray
    l_star: np.ndarray


def _orth_direction(u, v):
    """Unit vector orthogonal to u and v in R^3."""
    w = np.cross(u, v)
    nw = np.linalg.norm(w)
    if nw <= 1e-12 * max(1.0, np.linalg.norm(u) * np.linalg.norm(v)):
        raise DegenerateGeometryError("vectors are collinear")
    return w / nw


def _geometry(A, b, c):
    x = _orth_direction(c, A.T @ c)
    if c @ (A @ (A @ x)) < 0:
        x = -x
    l = _orth_direction(b, A @ b)
    if l @ (A @ (A @ b)) < 0:
        l = -l
    return PairGeometry(_frozen(x), _frozen(l))


@dataclass(frozen=True)
class BarabanovPairData:
    """Rank-one pair ``{A, A + b c^T}`` in dimension 3."""

    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    geometry: PairGeometry = field(init=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "A", _frozen(self.A, 2))
        object.__setattr__(self, "b", _frozen(self.b, 1))
        object.__setattr__(self, "c", _frozen(self.c, 1))
        if self.A.shape != (3, 3) or self.b.shape != (3,) or self.c.shape != (3,):
            raise ValueError("pair data must be a 3x3 matrix and two 3-vectors")
        try:
            geom = _geometry(self.A, self.b, self.c)
        except DegenerateGeometryError:
            geom = None
        object.__setattr__(self, "geometry", geom)

    @property
    def B(self):
        return self.A + np.outer(self.b, self.c)

    def matrix(self, u):
        return self.A + u * np.outer(self.b, self.c)


@dataclass(frozen=True)
class SwitchedSystem:
    n: int
    generators: tuple
    pair: BarabanovPairData | None = None

    def __post_init__(self):
        gens = tuple(_frozen(g, 2) for g in self.generators)
        if not gens:
            raise ValueError("at least one generator is required")
        for g in gens:
            if g.shape != (self.n, self.n):
                raise ValueError(f"generator of shape {g.shape} in a system of dimension {self.n}")
        if self.pair is not None:
            if self.n != 3 or len(gens) != 2:
                raise ValueError("pair systems carry exactly two 3x3 generators")
            if (np.abs(gens[0] - self.pair.A).max() > 1e-14
                    or np.abs(gens[1] - self.pair.B).max() > 1e-14):
                raise ValueError("generators disagree with pair data")
        object.__setattr__(self, "generators", gens)

    @classmethod
    def from_generators(cls, generators):
        gens = [np.asarray(g, dtype=float) for g in generators]
        return cls(gens[0].shape[0], tuple(gens))

    @classmethod
    def from_pair(cls, A, b, c):
        pair = BarabanovPairData(A, b, c)
        return cls(3, (pair.A, pair.B), pair)

    @property
    def m(self):
        return len(self.generators)

    def matrix(self, control):
        """Generator for a vertex index, or ``A + u b c^T`` for a float ``u`` on pairs."""
        if isinstance(control, (int, np.integer)):
            return self.generators[int(control)]
        if self.pair is None:
            raise ValueError("fractional controls need pair data")
        u = float(control)
        if not 0.0 <= u <= 1.0:
            raise ValueError(f"control u={u} outside [0, 1]")
        return self.pair.matrix(u)

    def max_norm(self):
        return max(np.linalg.norm(g, 2) for g in self.generators)


@dataclass(frozen=True)
class ValidationReport:
    hurwitz_vertices: tuple
    controllable_b: bool
    controllable_c: bool
    detB_value: float
    irreducible: "Irreducibility"
    hull_abscissa_profile: tuple
    delta_profile: tuple

    @property
    def detB_ok(self):
        return self.detB_value > 0

    @property
    def passed(self):
        return (all(self.hurwitz_vertices) and self.controllable_b
                and self.controllable_c and self.detB_ok)

    def delta_affinity_error(self):
        u = np.array([p[0] for p in self.delta_profile])
        d = np.array([p[1] for p in self.delta_profile])
        line = (1 - u) * d[0] + u * d[-1]
        return float(np.abs(d - line).max())


@dataclass(frozen=True)
class Irreducibility:
    irreducible: bool
    conclusive: bool
    span_dimension: int
    witness: np.ndarray | None = None

    def __bool__(self):
        return self.irreducible


def _krylov(M, v):
    return np.column_stack([v, M @ v, M @ (M @ v)])


def validate_pair(A, b, c, u_grid_size=101):
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    if A.shape != (3, 3):
        raise ValueError(f"A must be 3x3, got {A.shape}")
    if b.shape != (3,) or c.shape != (3,):
        raise ValueError("b and c must be 3-vectors")
    if not np.any(b) or not np.any(c):
        raise ValueError("b and c must be nonzero")
    bc = np.outer(b, c)
    hurwitz = (spectrum(A).abscissa < 0, spectrum(A + bc).abscissa < 0)
    ctrl_b = rank_of_columns(_krylov(A, b)) == 3
    ctrl_c = rank_of_columns(_krylov(A.T, c)) == 3
    detB = 1.0 + float(b @ solve_linear(A.T, c))
    us = np.linspace(0.0, 1.0, u_grid_size)
    hull = tuple((float(u), spectrum(A + u * bc).abscissa) for u in us)
    delta = tuple((float(u), float(np.linalg.det(A + u * bc))) for u in us)
    sys = SwitchedSystem(3, (A, A + bc))
    return ValidationReport(hurwitz, ctrl_b, ctrl_c, detB,
                            irreducibility_check(sys), hull, delta)


def _algebra_basis(gens, max_word_length, tol=1e-10):
    """Orthonormal basis (rows) of the span of all words up to the given length."""
    n = gens[0].shape[0]
    basis = []
    mats = []

    def add(M):
        v = M.ravel()
        scale = np.linalg.norm(v)
        if scale == 0.0:
            return False
        w = v / scale
        for _ in range(2):
            for q in basis:
                w = w - (q @ w) * q
        nw = np.linalg.norm(w)
        if nw <= tol:
            return False
        basis.append(w / nw)
        mats.append(M / scale)
        return True

    add(np.eye(n))
    frontier = list(mats)
    for _ in range(max_word_length):
        new = []
        for W in frontier:
            for G in gens:
                if add(G @ W):
                    new.append(mats[-1])
            if len(basis) == n * n:
                break
        frontier = new
        if not frontier or len(basis) == n * n:
            break
    return mats


def _orth_columns(V, tol=1e-9):
    U, s, _ = np.linalg.svd(V, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return U[:, :0]
    return U[:, s > tol * s[0]]


def _invariant_under(Q, gens, tol=1e-9):
    P = Q @ Q.T
    for G in gens:
        R = G @ Q
        if np.linalg.norm(R - P @ R) > tol * max(1.0, np.linalg.norm(G)):
            return False
    return True


def _find_witness(gens, mats, rng):
    n = gens[0].shape[0]
    coeffs = rng.standard_normal(len(mats))
    M = sum(a * W for a, W in zip(coeffs, mats))
    ev, vecs = np.linalg.eig(M)
    total = sum(gens)
    best, best_key = None, None
    for k in range(n):
        v = vecs[:, k]
        seeds = [v.real] if abs(ev[k].imag) <= 1e-12 else [v.real, v.imag]
        K = np.column_stack([W @ s for W in mats for s in seeds])
        Q = _orth_columns(K)
        if 0 < Q.shape[1] < n and _invariant_under(Q, gens):
            # smallest dimension first, then the most dominant subspace of the generator sum
            key = (Q.shape[1], -round(float(np.trace(Q.T @ total @ Q)) / Q.shape[1], 9))
            if best_key is None or key < best_key:
                best, best_key = Q, key
    return best


def irreducibility_check(sys, max_word_length=None, seed=0):
    gens = list(sys.generators)
    n = sys.n
    if max_word_length is None:
        max_word_length = 2 * n * n
    mats = _algebra_basis(gens, max_word_length)
    dim = len(mats)
    if dim == n * n:
        return Irreducibility(True, True, dim)
    rng = np.random.default_rng(seed)
    for _ in range(4):
        Q = _find_witness(gens, mats, rng)
        if Q is not None:
            return Irreducibility(False, True, dim, _frozen(Q))
        # invariant subspaces of the transposed algebra give complements
        Qt = _find_witness([G.T for G in gens], [W.T for W in mats], rng)
        if Qt is not None:
            full = np.linalg.svd(Qt, full_matrices=True)[0]
            Q = full[:, Qt.shape[1]:]
            if _invariant_under(Q, gens):
                return Irreducibility(False, True, dim, _frozen(Q))
    return Irreducibility(True, False, dim)


def spectral_shift(sys, mu):
    mu = float(mu)
    shift = mu * np.eye(sys.n)
    if sys.pair is not None:
        return SwitchedSystem.from_pair(sys.pair.A - shift, sys.pair.b, sys.pair.c)
    return SwitchedSystem(sys.n, tuple(g - shift for g in sys.generators))


def compute_pair_geometry(pair):
    return _geometry(np.asarray(pair.A), np.asarray(pair.b), np.asarray(pair.c))


def _matrix_field(obj, name, n):
    try:
        M = np.array(obj, dtype=float)
    except (TypeError, ValueError) as exc:
        raise SystemFormatError(name, "not a numeric matrix") from exc
    if M.shape != (n, n):
        raise SystemFormatError(name, f"expected shape ({n}, {n}), got {M.shape}")
    if not np.all(np.isfinite(M)):
        raise SystemFormatError(name, "non-finite entries")
    return M


def _vector_field(obj, name, n):
    try:
        v = np.array(obj, dtype=float)
    except (TypeError, ValueError) as exc:
        raise SystemFormatError(name, "not a numeric vector") from exc
    if v.shape != (n,):
        raise SystemFormatError(name, f"expected length {n}, got shape {v.shape}")
    return v


def system_from_dict(data):
    if not isinstance(data, dict):
        raise SystemFormatError("<root>", "expected an object")
    if "n" not in data:
        raise SystemFormatError("n", "missing")
    n = data["n"]
    if not isinstance(n, int) or isinstance(n, bool) or n < 1:
        raise SystemFormatError("n", "must be a positive integer")
    pair = data.get("pair")
    if pair is not None:
        if not isinstance(pair, dict):
            raise SystemFormatError("pair", "expected an object with A, b, c")
        if n != 3:
            raise SystemFormatError("pair", "pair systems need n = 3")
        for key in ("A", "b", "c"):
            if key not in pair:
                raise SystemFormatError(f"pair.{key}", "missing")
        A = _matrix_field(pair["A"], "pair.A", 3)
        b = _vector_field(pair["b"], "pair.b", 3)
        c = _vector_field(pair["c"], "pair.c", 3)
        sys = SwitchedSystem.from_pair(A, b, c)
        if "generators" in data:
            gens = data["generators"]
            if not isinstance(gens, list) or len(gens) != 2:
                raise SystemFormatError("generators", "pair systems list exactly two generators")
            for k, g in enumerate(gens):
                G = _matrix_field(g, f"generators[{k}]", 3)
                if np.abs(G - sys.generators[k]).max() > 1e-14:
                    raise SystemFormatError(f"generators[{k}]", "disagrees with pair data")
        return sys
    if "generators" not in data:
        raise SystemFormatError("generators", "missing")
    gens = data["generators"]
    if not isinstance(gens, list) or not gens:
        raise SystemFormatError("generators", "must be a nonempty list")
    mats = [_matrix_field(g, f"generators[{k}]", n) for k, g in enumerate(gens)]
    return SwitchedSystem(n, tuple(mats))


def system_to_dict(sys):
    out = {"n": sys.n, "generators": [g.tolist() for g in sys.generators]}
    if sys.pair is not None:
        out["pair"] = {"A": sys.pair.A.tolist(), "b": sys.pair.b.tolist(),
                       "c": sys.pair.c.tolist()}
    return out


def load_system(path):
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SystemFormatError("<root>", f"invalid JSON ({exc.msg} at line {exc.lineno})") from exc
    return system_from_dict(data)
