"""Discrete-time value iteration for extremal norms and growth-rate estimation."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ..matnum import expm, log_norm, spectrum
from ..model import irreducibility_check
from .field import NormField
from .grid import default_grid

__all__ = [
    "BellmanOperator",
    "bellman_step",
    "approximate_barabanov_norm",
    "estimate_rho",
    "RhoEstimate",
    "HorizonPolicy",
    "DivergenceError",
    "CollapseError",
    "InconclusiveError",
    "ReducibleSystemError",
    "default_step",
]


class DivergenceError(ArithmeticError):
    """Iterates grew past 1e6: the system was not shifted to zero growth."""


class CollapseError(ArithmeticError):
    """Iterates fell below 1e-6: the system was over-shifted."""


class InconclusiveError(RuntimeError):
    def __init__(self, message, band):
        super().__init__(message)
        self.band = band


class ReducibleSystemError(ValueError):
    pass


def default_step(sys):
    """Switching step with h * max ||A_i|| = 0.2.

    Singletons have no switching error, so they use a longer step that keeps the
    per-step interpolation bias small relative to the step.
    """
    norm = max(sys.max_norm(), 1e-12)
    if sys.m == 1:
        return float(min(80.0, 160.0 / norm))
    return 0.2 / norm


class BellmanOperator:
    """``(T v)(x) = max_i v(e^{h A_i} x)`` on a fixed grid, as sparse matrices."""

    def __init__(self, sys, grid, h):
        self.sys = sys
        self.grid = grid
        self.h = float(h)
        reps = grid.nodes[grid.reps]
        R = len(grid.reps)
        rows = np.repeat(np.arange(R), grid.n)
        self.propagators = []
        self.images = []
        self.matrices = []
        for G in sys.generators:
            E = expm(G, self.h)
            img = reps @ E.T
            f, w = grid.locate(img)
            cols = grid.classes[grid.faces[f]].ravel()
            W = sp.csr_matrix((w.ravel(), (rows, cols)), shape=(R, R))
            W.sum_duplicates()
            self.propagators.append(E)
            self.images.append(img)
            self.matrices.append(W)

    def apply(self, class_values, return_argmax=False):
        stack = np.vstack([W @ class_values for W in self.matrices])
        out = stack.max(axis=0)
        if return_argmax:
            return out, stack.argmax(axis=0)
        return out

    def apply_exact(self, func):
        """One step applied to an analytic start function evaluated at the images."""
        return np.vstack([func(img) for img in self.images]).max(axis=0)


def bellman_step(sys, field, h, operator=None):
    """One value-iteration step; ``operator`` may be reused across calls."""
    if h * sys.max_norm() > 0.2 + 1e-12 and sys.m > 1:
        raise ValueError("h * max generator norm must not exceed 0.2")
    op = operator if operator is not None else BellmanOperator(sys, field.grid, h)
    return field.with_values(op.apply(field.class_values))


def _euclid(P):
    return np.linalg.norm(P, axis=1)


def approximate_barabanov_norm(sys, grid_resolution=None, h=None, tol=1e-10, max_iters=20000,
                               convexify=False, check_irreducible=True, start=None,
                               operator=None):
    """Limit of normalized value iteration started from the Euclidean norm.

    Each iterate is divided by its growth of the maximum; the returned values
    are rescaled by the accumulated excess of those growth factors over the
    final rate, so the result sits at the scale of the unnormalized limit.

    Raises
    ------
    ReducibleSystemError
        If ``check_irreducible`` and a common invariant subspace is found.
    DivergenceError, CollapseError
        If the unnormalized iterates leave ``[1e-6, 1e6]``.
    """
    if check_irreducible:
        irr = irreducibility_check(sys)
        if not irr.irreducible:
            raise ReducibleSystemError("generators share an invariant subspace")
    grid = operator.grid if operator is not None else default_grid(sys.n, grid_resolution)
    if h is None:
        h = operator.h if operator is not None else default_step(sys)
    op = operator if operator is not None else BellmanOperator(sys, grid, h)
    start = _euclid if start is None else start
    v = np.asarray(start(grid.nodes[grid.reps]), dtype=float)
    vmax0 = v.max()
    logs = []
    cum = 0.0
    residual = np.inf
    it = 0
    for it in range(1, max_iters + 1):
        w = op.apply_exact(start) if it == 1 else op.apply(v)
        g = w.max() / v.max()
        if not np.isfinite(g) or g <= 0:
            raise CollapseError("value iteration produced a nonpositive maximum")
        logs.append(np.log(g))
        cum += logs[-1]
        if cum > np.log(1e6):
            raise DivergenceError("values exceeded 1e6; shift the system by its growth rate first")
        if cum < np.log(1e-6):
            raise CollapseError("values fell below 1e-6; the system is over-shifted")
        w = w / g
        residual = float(np.abs(w - v).max() / vmax0)
        v = w
        if residual < tol:
            break
    rate = logs[-1]
    log_scale = float(np.sum(np.asarray(logs) - rate))
    if v.min() <= 0:
        raise CollapseError("value iteration produced nonpositive values")
    values = v * np.exp(log_scale)
    prov = {"start": "euclidean", "h": float(h), "step_angle": float(h * sys.max_norm()), "iterations": it,
            "rate": float(rate / h), "log_scale": log_scale, "converged": bool(residual < tol)}
    out = NormField(grid, values, False, residual, prov)
    if convexify:
        from .dual import convexify_field

        out = convexify_field(out)
    return out


@dataclass(frozen=True)
class HorizonPolicy:
    """Power-iteration horizon for the growth test, in steps."""

    h: float | None = None
    burn_in: int = 1000
    window: int = 2000
    max_steps: int = 64000
    grid_resolution: int | None = None


@dataclass(frozen=True)
class RhoEstimate:
    value: float
    bracket: tuple
    iterations: int
    method_trace: list = field(default_factory=list)


class _GrowthRecord:
    """Lazily extended log-growth sequence of the normalized iteration."""

    def __init__(self, op, n_classes):
        self.op = op
        self.v = np.ones(n_classes)
        self.logs = []

    def extend_to(self, steps):
        while len(self.logs) < steps:
            w = self.op.apply(self.v)
            m = w.max()
            if not np.isfinite(m) or m <= 0:
                raise CollapseError("iteration collapsed to zero")
            self.logs.append(np.log(m / self.v.max()))
            self.v = w / m
        return np.asarray(self.logs[:steps])

    def mean_rate(self, lo, hi):
        logs = self.extend_to(hi)
        return float(logs[lo:hi].sum() / ((hi - lo) * self.op.h))


def estimate_rho(sys, tol=1e-3, horizon_policy=None, operator=None):
    """Bisection on a shift mu with a hysteresis growth test.

    The shifted operator is ``e^{-mu h}`` times the unshifted one, so a single
    normalized iteration serves every test point.
    """
    pol = horizon_policy or HorizonPolicy()
    h = pol.h if pol.h is not None else default_step(sys)
    grid = operator.grid if operator is not None else default_grid(sys.n, pol.grid_resolution)
    op = operator if operator is not None else BellmanOperator(sys, grid, h)
    rec = _GrowthRecord(op, len(grid.reps))
    lo = max(spectrum(G).abscissa for G in sys.generators)
    hi = max(log_norm(G) for G in sys.generators)
    trace = [f"initial bracket [{lo:.6g}, {hi:.6g}] from vertex abscissa and log-norm"]
    band = tol / 4

    def growth(mu):
        burn, win = pol.burn_in, pol.window
        while True:
            r1 = rec.mean_rate(burn, burn + win)
            r2 = rec.mean_rate(burn + win, burn + 2 * win)
            stable = abs(r1 - r2) <= band
            if stable or burn + 4 * win > pol.max_steps:
                return r2 - mu, stable, burn + 2 * win
            burn, win = burn + win, 2 * win

    iters = 0
    while hi - lo > tol:
        iters += 1
        mu = 0.5 * (lo + hi)
        g, stable, steps = growth(mu)
        if not stable and abs(g) <= band:
            raise InconclusiveError(
                f"growth rate did not settle within +-{band:.3g} after {steps} steps", (mu - band, mu + band))
        if g > band:
            lo = mu
            verdict = "growing"
        elif g < -band:
            hi = mu
            verdict = "decaying"
        else:
            lo, hi = max(lo, mu - band), min(hi, mu + band)
            verdict = "neutral"
        trace.append(f"mu={mu:.9g} growth={g:+.3e} steps={steps} -> {verdict}")
        if iters > 200:
            break
    value = 0.5 * (lo + hi)
    return RhoEstimate(float(value), (float(lo), float(hi)), iters, trace)
