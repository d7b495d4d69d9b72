"""Exact propagation under piecewise-constant switching, sections, omega limits."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, linprog

from .matnum import expm

__all__ = [
    "SwitchingSignal",
    "Trajectory",
    "Section",
    "OmegaReport",
    "StationaryPointError",
    "propagate",
    "adjoint_propagate",
    "build_section",
    "section_crossings",
    "omega_estimate",
    "write_trajectory_csv",
]


class StationaryPointError(ValueError):
    """0 lies in the convex hull of the generator velocities at z."""


@dataclass(frozen=True)
class SwitchingSignal:
    """Segments of ``(duration, control)``.

    A control is a vertex index (int) or, for pair systems, a float u in [0, 1].
    """

    segments: tuple

    def __post_init__(self):
        segs = []
        for dur, ctrl in self.segments:
            dur = float(dur)
            if not np.isfinite(dur) or dur <= 0:
                raise ValueError(f"segment duration must be positive and finite, got {dur}")
            if isinstance(ctrl, (int, np.integer)) and not isinstance(ctrl, bool):
                ctrl = int(ctrl)
                if ctrl < 0:
                    raise ValueError("vertex index must be nonnegative")
            else:
                ctrl = float(ctrl)
                if not 0.0 <= ctrl <= 1.0:
                    raise ValueError(f"control u={ctrl} outside [0, 1]")
            segs.append((dur, ctrl))
        if not segs:
            raise ValueError("signal needs at least one segment")
        object.__setattr__(self, "segments", tuple(segs))

    @property
    def duration(self):
        return float(sum(d for d, _ in self.segments))

    def boundaries(self):
        return np.concatenate([[0.0], np.cumsum([d for d, _ in self.segments])])

    def __add__(self, other):
        return SwitchingSignal(self.segments + other.segments)

    def control_at(self, t):
        """Control active on ``[t_k, t_{k+1})``; the last segment owns the end point."""
        bnd = self.boundaries()
        k = int(np.searchsorted(bnd, t, side="right")) - 1
        k = min(max(k, 0), len(self.segments) - 1)
        return self.segments[k][1]

    @staticmethod
    def constant(control, duration):
        return SwitchingSignal(((duration, control),))


def _check_controls(sys, signal):
    for _, ctrl in signal.segments:
        if isinstance(ctrl, int):
            if ctrl >= sys.m:
                raise ValueError(f"vertex index {ctrl} out of range for {sys.m} generators")
        elif sys.pair is None:
            raise ValueError("fractional controls need a pair system")


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    signal: SwitchingSignal
    fundamental: np.ndarray | None = None
    adjoint: bool = False
    segment_starts: np.ndarray = field(default=None, repr=False, compare=False)
    generators: tuple = field(default=(), repr=False, compare=False)

    def state_at(self, t):
        """State at an arbitrary time, from the exact segment exponential."""
        bnd = self.signal.boundaries()
        k = int(np.searchsorted(bnd, t, side="right")) - 1
        k = min(max(k, 0), len(self.signal.segments) - 1)
        M = self.generators[k]
        return expm(M, t - bnd[k]) @ self.segment_starts[k]

    def controls(self):
        return [self.signal.control_at(t) for t in self.times]


def _segment_matrices(sys, signal, adjoint):
    mats = []
    for _, ctrl in signal.segments:
        M = sys.matrix(ctrl)
        mats.append(-M.T if adjoint else M)
    return mats


def _run(sys, signal, v0, sample_step, adjoint, record_fundamental):
    v0 = np.asarray(v0, dtype=float)
    if v0.shape != (sys.n,):
        raise ValueError(f"initial vector must have length {sys.n}")
    if not sample_step > 0:
        raise ValueError("sample_step must be positive")
    _check_controls(sys, signal)
    mats = _segment_matrices(sys, signal, adjoint)
    bnd = signal.boundaries()
    times = [0.0]
    states = [v0.copy()]
    fund = [np.eye(sys.n)] if record_fundamental else None
    starts = []
    x = v0.copy()
    R = np.eye(sys.n)
    eps = 1e-12 * max(1.0, sample_step)
    for k, M in enumerate(mats):
        t0, t1 = bnd[k], bnd[k + 1]
        starts.append(x.copy())
        j0 = int(np.floor(t0 / sample_step)) + 1
        grid = sample_step * np.arange(j0, int(np.ceil(t1 / sample_step)) + 1)
        grid = grid[(grid > t0 + eps) & (grid < t1 - eps)]
        if grid.size:
            E = expm(M, grid[0] - t0)
            step = expm(M, sample_step)
            for t in grid:
                times.append(float(t))
                states.append(E @ x)
                if record_fundamental:
                    fund.append(E @ R)
                E = step @ E
        E1 = expm(M, t1 - t0)
        times.append(float(t1))
        states.append(None)
        if record_fundamental:
            fund.append(None)
        x = E1 @ x
        if record_fundamental:
            R = E1 @ R
        states[-1] = x.copy()
        if record_fundamental:
            fund[-1] = R.copy()
    return Trajectory(
        np.array(times),
        np.array(states),
        signal,
        np.array(fund) if record_fundamental else None,
        adjoint,
        np.array(starts),
        tuple(mats),
    )


def propagate(sys, signal, x0, sample_step=0.01, record_fundamental=False):
    """Trajectory of ``x' = A(t) x`` for a piecewise-constant signal."""
    return _run(sys, signal, x0, sample_step, False, record_fundamental)


def adjoint_propagate(sys, signal, l0, sample_step=0.01, record_fundamental=False):
    """Trajectory of ``l' = -A(t)^T l`` for the same signal convention."""
    return _run(sys, signal, l0, sample_step, True, record_fundamental)


@dataclass(frozen=True)
class Section:
    normal: np.ndarray
    offset: float
    patch_center: np.ndarray
    patch_radius: float
    margin: float = 0.0

    def signed(self, x):
        return np.asarray(x) @ self.normal - self.offset

    def in_patch(self, x):
        return np.linalg.norm(np.asarray(x) - self.patch_center) <= self.patch_radius


def _separating_normal(velocities):
    """Max-margin w in the unit box with w.v >= s for every velocity v."""
    V = np.asarray(velocities)
    n = V.shape[1]
    # variables (w, s); maximize s
    cost = np.zeros(n + 1)
    cost[-1] = -1.0
    A_ub = np.hstack([-V, np.ones((V.shape[0], 1))])
    b_ub = np.zeros(V.shape[0])
    bounds = [(-1.0, 1.0)] * n + [(None, None)]
    res = linprog(cost, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs")
    if res.status != 0:
        return None, 0.0
    return res.x[:n], float(res.x[-1])


def _patch_directions(w, count, rng):
    n = w.size
    dirs = rng.standard_normal((count, n))
    dirs -= np.outer(dirs @ w, w)
    norms = np.linalg.norm(dirs, axis=1)
    keep = norms > 1e-12
    return dirs[keep] / norms[keep, None]


def build_section(sys, z, patch_radius=0.1, samples=64, seed=0):
    z = np.asarray(z, dtype=float)
    vel = np.array([G @ z for G in sys.generators])
    scale = max(1.0, np.abs(vel).max(), np.linalg.norm(z))
    w, margin = _separating_normal(vel) if np.any(vel) else (None, 0.0)
    if w is None or margin <= 1e-12 * scale:
        raise StationaryPointError("0 is in the velocity hull at z; no transverse section")
    nw = np.linalg.norm(w)
    w = w / nw
    margin = margin / nw
    rng = np.random.default_rng(seed)
    dirs = _patch_directions(w, samples, rng)
    r = float(patch_radius)
    while r > 1e-12:
        pts = z + r * dirs
        worst = min(float((pts @ G.T @ w).min()) for G in sys.generators)
        if worst > 0:
            break
        r *= 0.5
    return Section(w, float(w @ z), z.copy(), r, margin)


@dataclass(frozen=True)
class OmegaReport:
    kind: str
    representative_points: np.ndarray
    period_estimate: float | None
    residual: float
    crossing_times: np.ndarray
    monotone: bool
    max_inversion: float
    diagnostic_only: bool = False


def section_crossings(traj, section, time_tol=1e-10):
    """Times and points where the trajectory crosses the section upward inside its patch."""
    s = traj.states @ section.normal - section.offset
    times, points = [], []
    for k in np.nonzero((s[:-1] < 0) & (s[1:] >= 0))[0]:
        t0, t1 = traj.times[k], traj.times[k + 1]
        f = lambda t: float(traj.state_at(t) @ section.normal - section.offset)
        if s[k + 1] == 0.0:
            tc = t1
        else:
            tc = brentq(f, t0, t1, xtol=time_tol, rtol=4 * np.finfo(float).eps)
        p = traj.state_at(tc)
        if section.in_patch(p):
            times.append(tc)
            points.append(p)
    return np.array(times), np.array(points).reshape(-1, traj.states.shape[1])


def _monotonicity(points, center, normal):
    if len(points) < 3:
        return True, 0.0
    d = points - center
    d = d - np.outer(d @ normal, normal)
    # ordering coordinate: principal direction of the crossing cloud
    _, _, vt = np.linalg.svd(d - d.mean(axis=0), full_matrices=False)
    s = d @ vt[0]
    ds = np.diff(s)
    sign = np.sign(s[-1] - s[0]) or 1.0
    inv = np.maximum(0.0, -sign * ds)
    worst = float(inv.max()) if inv.size else 0.0
    return worst <= 1e-8, worst


def omega_estimate(sys, path_stream, horizon, section, point_tol=1e-6, extremal=True):
    """Classify the limit behaviour of a trajectory through section recurrence.

    ``path_stream`` is a Trajectory or a callable ``horizon -> Trajectory``.
    """
    traj = path_stream(horizon) if callable(path_stream) else path_stream
    norms = np.linalg.norm(traj.states, axis=1)
    times, pts = section_crossings(traj, section)
    mono, worst = _monotonicity(pts, section.patch_center, section.normal)
    diag = not extremal
    if norms[-1] <= 1e-8 * max(norms.max(), 1e-300):
        return OmegaReport("fixed-point-zero", traj.states[-1:].copy(), None,
                           float(norms[-1]), times, mono, worst, diag)
    if len(pts) >= 3:
        steps = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        gaps = np.diff(times)
        if steps[-1] <= point_tol and (len(gaps) < 2 or abs(gaps[-1] - gaps[-2]) <= max(point_tol, 1e-6 * gaps[-1])):
            return OmegaReport("periodic", pts[-3:].copy(), float(gaps[-1]),
                               float(steps[-1]), times, mono, worst, diag)
        tail = pts[len(pts) // 2:]
        spread = float(np.linalg.norm(tail.max(axis=0) - tail.min(axis=0)))
        if spread > 10 * point_tol:
            return OmegaReport("family-band", tail.copy(), None, float(steps[-1]),
                               times, mono, worst, diag)
        return OmegaReport("unresolved", pts[-3:].copy(), None, float(steps[-1]),
                           times, mono, worst, diag)
    return OmegaReport("unresolved", pts.copy(), None, np.inf, times, mono, worst, diag)


def _fmt(v):
    return f"{float(v):.17g}"


def write_trajectory_csv(path, traj, adjoint=None):
    """CSV with time, x_1..x_n, optional l_1..l_n (from a matching adjoint run), u."""
    n = traj.states.shape[1]
    header = ["time"] + [f"x_{i + 1}" for i in range(n)]
    if adjoint is not None:
        header += [f"l_{i + 1}" for i in range(n)]
    header.append("u")
    lines = [",".join(header)]
    ctrls = traj.controls()
    for k, t in enumerate(traj.times):
        row = [_fmt(t)] + [_fmt(v) for v in traj.states[k]]
        if adjoint is not None:
            row += [_fmt(v) for v in adjoint.states[k]]
        c = ctrls[k]
        row.append(str(c) if isinstance(c, int) else _fmt(c))
        lines.append(",".join(row))
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
